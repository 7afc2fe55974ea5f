#include "tracemind/skills.hpp"

#include <algorithm>

#include "tracemind/cluster.hpp"

namespace tracemind {

SignatureDistance d_sig(const VerbSignature& a, const VerbSignature& b) {
    for (const auto& v : a)
        if (v.empty()) fail(ErrorClass::unresolved_verb, "d_sig: unresolved verb in signature");
    for (const auto& v : b)
        if (v.empty()) fail(ErrorClass::unresolved_verb, "d_sig: unresolved verb in signature");
    size_t n = a.size(), m = b.size();
    if (n == 0 && m == 0) return {0.0, 0};
    std::vector<int> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j) {
            int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    int raw = prev[m];
    return {static_cast<double>(raw) / static_cast<double>(std::max(n, m)), raw};
}

std::string medoid(const std::vector<std::pair<std::string, VerbSignature>>& candidates) {
    if (candidates.empty()) fail(ErrorClass::precondition, "medoid of an empty candidate set");
    struct Score {
        double total_norm;
        long total_raw;
        const std::string* id;
    };
    std::optional<Score> best;
    for (const auto& [id, sig] : candidates) {
        double tn = 0;
        long tr = 0;
        for (const auto& [_, other] : candidates) {
            auto d = d_sig(sig, other);
            tn += d.normalized;
            tr += d.raw;
        }
        bool better = false;
        if (!best)
            better = true;
        else if (tn != best->total_norm)
            better = tn < best->total_norm;
        else if (tr != best->total_raw)
            better = tr < best->total_raw;
        else
            better = id < *best->id;
        if (better) best = Score{tn, tr, &id};
    }
    return *best->id;
}

json skill_hint_to_json(const SkillHint& h) {
    json steps = json::array();
    for (const auto& s : h.steps) {
        json step;
        step["raw"] = s.raw_label;
        step["verb"] = s.verb;
        if (!s.args.empty()) step["args"] = s.args;
        if (!s.object.empty()) step["object"] = s.object;
        steps.push_back(std::move(step));
    }
    json schema = json::array();
    for (const auto& p : h.arg_schema)
        schema.push_back({{"token", p.token}, {"type", to_string(p.type)}});
    json j;
    j["sg_id"] = h.sg_id;
    j["verbs"] = h.verbs;
    j["arg_schema"] = std::move(schema);
    j["steps"] = std::move(steps);
    j["support"] = h.support;
    j["sources"] = h.source_trace_ids;
    j["rank"] = h.rank;
    return j;
}

SkillHint skill_hint_from_json(const json& j) {
    SkillHint h;
    h.sg_id = j.at("sg_id").get<int>();
    h.verbs = j.at("verbs").get<std::vector<std::string>>();
    for (const auto& p : j.at("arg_schema"))
        h.arg_schema.push_back(
            {p.at("token").get<std::string>(), field_type_from(p.at("type").get<std::string>())});
    for (const auto& s : j.at("steps")) {
        ActionStep step;
        step.raw_label = s.value("raw", "");
        step.verb = s.at("verb").get<std::string>();
        if (s.contains("args"))
            for (const auto& [k, v] : s.at("args").items()) step.args[k] = v.get<std::string>();
        step.object = s.value("object", "");
        h.steps.push_back(std::move(step));
    }
    h.support = j.at("support").get<int>();
    h.source_trace_ids = j.at("sources").get<std::vector<std::string>>();
    h.rank = j.at("rank").get<int>();
    return h;
}

SkillConfig skill_config_from_json(const json& j) {
    SkillConfig cfg;
    cfg.tau_support = j.value("tau_support", cfg.tau_support);
    cfg.rep_k = j.value("rep_k", cfg.rep_k);
    cfg.min_schema_support = j.value("min_schema_support", cfg.min_schema_support);
    if (j.contains("prune_verbs")) {
        cfg.prune_verbs.clear();
        for (const auto& v : j.at("prune_verbs")) cfg.prune_verbs.insert(v.get<std::string>());
    }
    return cfg;
}

bool is_placeholder(const std::string& value) {
    if (value.size() < 3 || value.front() != '<' || value.back() != '>') return false;
    return value.find_first_of(" \t") == std::string::npos;
}

namespace {

// Literal values in parameterizable fields become typed placeholders; the
// placeholder type is refined from the value for url/path shapes.
FieldType sniff_type(FieldType declared, const std::string& value) {
    if (declared == FieldType::component_ref || declared == FieldType::app_name) return declared;
    if (value.rfind("http://", 0) == 0 || value.rfind("https://", 0) == 0 ||
        value.rfind("www.", 0) == 0)
        return FieldType::url;
    auto dot = value.find_last_of('.');
    if (value.find('/') != std::string::npos || value.find('\\') != std::string::npos ||
        (dot != std::string::npos && dot + 1 < value.size() && dot > 0 &&
         value.size() - dot <= 5 && value.find(' ') == std::string::npos))
        return FieldType::file_path;
    return declared;
}

bool parameterizable(FieldType t) {
    return t == FieldType::url || t == FieldType::query || t == FieldType::file_path ||
           t == FieldType::text;
}

}  // namespace

SkillHint parameterize(const std::vector<ActionStep>& prototype_trace, const AliasMap& phi,
                       const SkillConfig& cfg) {
    SkillHint hint;
    for (const auto& raw_step : prototype_trace) {
        if (raw_step.verb.empty())
            fail(ErrorClass::unresolved_verb,
                 "parameterize: step '" + raw_step.raw_label + "' is not canonicalized");
        if (raw_step.recovery || cfg.prune_verbs.count(raw_step.verb)) continue;
        ActionStep step = raw_step;
        for (auto& [field, value] : step.args) {
            if (value.empty() || is_placeholder(value)) {
                if (is_placeholder(value)) {
                    // Keep the existing slot in the schema.
                    std::string token = value;
                    FieldType t = FieldType::text;
                    for (const char* name : {"url", "query", "file_path", "text"})
                        if (token == std::string("<") + name + ">") t = field_type_from(name);
                    if (std::none_of(hint.arg_schema.begin(), hint.arg_schema.end(),
                                     [&](const ParamSlot& s) { return s.token == token; }))
                        hint.arg_schema.push_back({token, t});
                }
                continue;
            }
            auto declared = phi.field_type(step.verb, field);
            if (!declared || !parameterizable(*declared)) continue;
            FieldType t = sniff_type(*declared, value);
            if (!parameterizable(t)) continue;
            std::string token = std::string("<") + to_string(t) + ">";
            value = token;
            if (std::none_of(hint.arg_schema.begin(), hint.arg_schema.end(),
                             [&](const ParamSlot& s) { return s.token == token; }))
                hint.arg_schema.push_back({token, t});
        }
        hint.steps.push_back(std::move(step));
    }
    if (hint.steps.empty())
        fail(ErrorClass::degenerate, "degenerate skill: every step was pruned");
    hint.verbs = signature_of(hint.steps);
    return hint;
}

std::vector<SkillHint> support_and_rank(const std::vector<VerbSignature>& sg_members,
                                        std::vector<SkillHint> schemas, double tau_support,
                                        int medoid_schema_index) {
    for (size_t s = 0; s < schemas.size(); ++s) {
        int support = 0;
        for (const auto& m : sg_members)
            if (1.0 - d_sig(m, schemas[s].verbs).normalized >= tau_support) ++support;
        schemas[s].support = support;
    }
    std::vector<size_t> order(schemas.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (schemas[a].support != schemas[b].support)
            return schemas[a].support > schemas[b].support;
        return (a == static_cast<size_t>(medoid_schema_index)) >
               (b == static_cast<size_t>(medoid_schema_index));
    });
    std::vector<SkillHint> out;
    out.reserve(schemas.size());
    for (size_t i = 0; i < order.size(); ++i) {
        SkillHint h = std::move(schemas[order[i]]);
        h.rank = static_cast<int>(i) + 1;
        out.push_back(std::move(h));
    }
    return out;
}

std::vector<std::string> representative_traces(
    const std::vector<std::pair<std::string, VerbSignature>>& sg_members,
    const VerbSignature& prototype, int k) {
    std::vector<std::pair<double, std::string>> order;
    order.reserve(sg_members.size());
    for (const auto& [id, sig] : sg_members)
        order.emplace_back(d_sig(sig, prototype).normalized, id);
    std::sort(order.begin(), order.end());
    std::vector<std::string> out;
    for (int i = 0; i < std::min<int>(k, static_cast<int>(order.size())); ++i)
        out.push_back(order[i].second);
    return out;
}

void attach_skills(IntentHierarchy& hierarchy, const UnitStore& units, const AliasMap& phi,
                   const SkillConfig& cfg) {
    for (auto& group : hierarchy.groups) {
        for (auto& sg : group.subgroups) {
            sg.hints.clear();
            std::vector<std::pair<std::string, VerbSignature>> candidates;
            std::vector<VerbSignature> member_sigs;
            std::map<std::string, const IntentUnit*> by_id;
            for (const auto& id : sg.member_ids) {
                auto it = units.find(id);
                if (it == units.end()) fail(ErrorClass::not_found, "no unit stored for " + id);
                by_id[id] = &it->second;
                if (it->second.actions.empty()) continue;
                std::vector<ActionStep> canon;
                for (const auto& a : it->second.actions)
                    canon.push_back(canonicalize_action(a, phi));
                candidates.emplace_back(id, signature_of(canon));
                member_sigs.push_back(candidates.back().second);
            }
            if (candidates.empty()) continue;

            std::string proto_id = medoid(candidates);
            auto canon_steps = [&](const std::string& id) {
                std::vector<ActionStep> canon;
                for (const auto& a : by_id[id]->actions)
                    canon.push_back(canonicalize_action(a, phi));
                return canon;
            };

            // One schema per distinct signature; the medoid's schema first.
            std::vector<SkillHint> schemas;
            std::vector<VerbSignature> seen;
            auto schema_for = [&](const std::string& id) -> std::optional<SkillHint> {
                try {
                    SkillHint h = parameterize(canon_steps(id), phi, cfg);
                    h.sg_id = sg.id;
                    return h;
                } catch (const Error& e) {
                    if (e.cls() == ErrorClass::degenerate) return std::nullopt;
                    throw;
                }
            };
            auto add_schema = [&](const std::string& id, const VerbSignature& sig) {
                for (const auto& s : seen)
                    if (s == sig) return;
                if (auto h = schema_for(id)) {
                    seen.push_back(sig);
                    schemas.push_back(std::move(*h));
                }
            };
            VerbSignature proto_sig;
            for (const auto& [id, sig] : candidates)
                if (id == proto_id) proto_sig = sig;
            add_schema(proto_id, proto_sig);
            // Remaining signatures in lexicographic carrier-id order.
            std::vector<std::pair<std::string, VerbSignature>> rest = candidates;
            std::sort(rest.begin(), rest.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (const auto& [id, sig] : rest) add_schema(id, sig);
            if (schemas.empty()) continue;

            auto ranked = support_and_rank(member_sigs, std::move(schemas), cfg.tau_support, 0);
            // Drop weakly supported extras; the top schema always stays.
            std::vector<SkillHint> kept;
            for (auto& h : ranked)
                if (kept.empty() || h.support >= cfg.min_schema_support) kept.push_back(std::move(h));
            for (size_t i = 0; i < kept.size(); ++i) {
                kept[i].rank = static_cast<int>(i) + 1;
                kept[i].source_trace_ids =
                    representative_traces(candidates, kept[i].verbs, cfg.rep_k);
            }
            sg.hints = std::move(kept);
            sg.support = sg.hints.empty() ? static_cast<int>(sg.member_ids.size())
                                          : sg.hints.front().support;
        }
    }
}

}  // namespace tracemind
