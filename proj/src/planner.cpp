#include "tracemind/planner.hpp"

#include <algorithm>
#include <regex>

#include <httplib.h>

namespace tracemind {

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string orelse(const std::string& s, const std::string& fallback) {
    return s.empty() ? fallback : s;
}

std::vector<std::string> dedupe(const std::vector<std::string>& in) {
    std::vector<std::string> out;
    for (const auto& s : in)
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    return out;
}

std::string expand_capture(std::string text, const std::smatch& m) {
    for (size_t g = 1; g < m.size(); ++g) {
        std::string token = "{" + std::to_string(g) + "}";
        size_t pos;
        while ((pos = text.find(token)) != std::string::npos)
            text.replace(pos, token.size(), m[g].str());
    }
    return text;
}

PlanStep plan_step_from_json(const json& j) {
    PlanStep s;
    s.verb = j.at("verb").get<std::string>();
    s.object = j.value("object", "");
    s.text = j.value("text", "");
    s.placeholder = j.value("placeholder", "");
    if (s.placeholder.empty() && is_placeholder(s.text))
        s.placeholder = s.text.substr(1, s.text.size() - 2);
    return s;
}

}  // namespace

std::string CommandLabeling::render() const {
    return "ENV[" + join(dedupe(all_envs()), ", ") + "], ACT[" + join(all_acts(), ", ") + "]";
}

std::vector<std::string> CommandLabeling::all_acts() const {
    std::vector<std::string> acts;
    for (const auto& u : units)
        for (const auto& a : u.act_labels) acts.push_back(a);
    return dedupe(acts);
}

std::vector<std::string> CommandLabeling::all_envs() const {
    std::vector<std::string> envs;
    for (const auto& u : units)
        for (const auto& e : u.env_labels) envs.push_back(e);
    return envs;
}

// --- rule labeler ---------------------------------------------------------------

RuleLabeler RuleLabeler::load(const std::filesystem::path& path) {
    return from_json(load_document(path, "tracemind_labeler_rules", 1));
}

RuleLabeler RuleLabeler::from_json(const json& doc) {
    RuleLabeler lab;
    for (const auto& jr : doc.at("acts")) {
        Rule r;
        r.id = jr.value("id", "rule" + std::to_string(lab.rules_.size()));
        r.trigger = jr.at("trigger").get<std::string>();
        r.act = jr.at("act").get<std::string>();
        r.env = jr.value("env", "local/Windows");
        r.desc = jr.value("desc", r.act);
        for (const auto& imp : jr.value("implies", json::array())) r.implies.push_back(imp);
        lab.rules_.push_back(std::move(r));
    }
    return lab;
}

CommandLabeling RuleLabeler::label(const std::string& command) {
    if (command.empty()) fail(ErrorClass::precondition, "empty command");
    CommandLabeling out;
    out.raw_command = command;
    struct Positioned {
        double pos;
        TaskUnit unit;
    };
    std::vector<Positioned> found;
    for (const auto& r : rules_) {
        std::regex re(r.trigger, std::regex::ECMAScript | std::regex::icase);
        std::smatch m;
        if (!std::regex_search(command, m, re)) continue;
        double pos = static_cast<double>(m.position(0));
        double offset = 0.001;
        for (const auto& imp : r.implies) {
            TaskUnit u;
            u.act_labels = {imp.at("act").get<std::string>()};
            u.env_labels = {imp.value("env", "local/Windows")};
            u.desc = imp.value("desc", u.act_labels[0]);
            found.push_back({pos - 0.5 + offset, std::move(u)});
            offset += 0.001;
        }
        TaskUnit u;
        u.act_labels = {expand_capture(r.act, m)};
        u.env_labels = {r.env};
        u.desc = expand_capture(r.desc, m);
        found.push_back({pos, std::move(u)});
    }
    std::stable_sort(found.begin(), found.end(),
                     [](const Positioned& a, const Positioned& b) { return a.pos < b.pos; });
    std::vector<std::string> seen;
    for (auto& f : found) {
        const std::string& act = f.unit.act_labels[0];
        if (std::find(seen.begin(), seen.end(), act) != seen.end()) continue;
        seen.push_back(act);
        out.units.push_back(std::move(f.unit));
    }
    if (out.units.empty())
        fail(ErrorClass::validation, "labeler produced zero task units for: " + command);
    return out;
}

CommandLabeling NoisyLabeler::label(const std::string& command) {
    CommandLabeling base = inner_.label(command);
    auto rng = seeded_rng(seed_, command);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    static const char* kNoiseWords[] = {"promptly", "carefully", "perhaps", "again",
                                        "somewhere", "quickly", "meanwhile", "eventually"};
    for (auto& unit : base.units) {
        if (coin(rng) < noise_) {
            // Perturb the slot description; downstream step text drifts with it.
            size_t w = static_cast<size_t>(rng() % 8);
            unit.desc = std::string(kNoiseWords[w]) + " " + unit.desc + " " +
                        kNoiseWords[(w + 3) % 8] + std::to_string(rng() % 97);
            if (coin(rng) < 0.5 && !unit.act_labels.empty())
                unit.act_labels[0] = unit.act_labels[0] + " " + kNoiseWords[(w + 5) % 8];
        }
    }
    return base;
}

CommandLabeling HttpLabeler::label(const std::string& command) {
    if (command.empty()) fail(ErrorClass::precondition, "empty command");
    auto split = endpoint_.find('/', endpoint_.find("//") == std::string::npos
                                        ? 0
                                        : endpoint_.find("//") + 2);
    std::string host = split == std::string::npos ? endpoint_ : endpoint_.substr(0, split);
    std::string path = split == std::string::npos ? "/" : endpoint_.substr(split);
    httplib::Client client(host);
    auto res = client.Post(path, json{{"command", command}}.dump(), "application/json");
    if (!res || res->status != 200)
        fail(ErrorClass::provider, "labeler endpoint failed: " + endpoint_);
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) fail(ErrorClass::provider, "malformed labeler response");
    CommandLabeling out;
    out.raw_command = command;
    for (const auto& ju : doc.at("units")) {
        TaskUnit u;
        u.env_labels = ju.at("env").get<std::vector<std::string>>();
        u.act_labels = ju.at("act").get<std::vector<std::string>>();
        u.desc = ju.value("desc", "");
        out.units.push_back(std::move(u));
    }
    if (out.units.empty()) fail(ErrorClass::validation, "labeler produced zero task units");
    return out;
}

// --- cache decision ---------------------------------------------------------------

const char* to_string(CacheCase c) {
    switch (c) {
        case CacheCase::miss: return "miss";
        case CacheCase::hit: return "hit";
        case CacheCase::partial: return "partial";
    }
    return "?";
}

json cache_decision_to_json(const CacheDecision& d) {
    json j;
    j["case"] = to_string(d.decision);
    if (d.decision != CacheCase::miss) {
        j["plan_id"] = d.plan_id;
        j["score"] = d.score;
    }
    if (!d.missing_acts.empty()) j["missing_acts"] = d.missing_acts;
    return j;
}

// --- binding rules ------------------------------------------------------------------

BindingRules BindingRules::defaults() {
    BindingRules b;
    b.patterns["query"] = {R"#("([^"]+)")#",
                           R"(search(?:\s+for)?\s+(.+?)(?:\s+(?:at|in|on|using|with)\s+\S.*)?$)"};
    b.patterns["url"] = {R"((https?://[^\s"]+))", R"((www\.[^\s"]+))"};
    b.patterns["file_path"] = {R"#("([^"]+\.[A-Za-z0-9]{1,4})")#",
                               R"(\b(?:as|to|into|named)\s+(\S+\.[A-Za-z0-9]{1,4})\b)",
                               R"((\S+\.[A-Za-z0-9]{1,4})\b)"};
    b.patterns["text"] = {R"#("([^"]+)")#",
                          R"((?:type|write|enter|input)\s+(.+?)(?:\s+(?:in|into|at|to)\s+\S.*|\s+(?:and|then)\b.*)?$)",
                          R"(search(?:\s+for)?\s+(.+?)(?:\s+(?:at|in|on|using|with)\s+\S.*)?$)",
                          R"((?:saying|about)\s+(.+?)(?:\s+and.*)?$)"};
    return b;
}

BindingRules BindingRules::from_json(const json& j) {
    BindingRules b = defaults();
    for (const auto& [type, pats] : j.items()) {
        b.patterns[type].clear();
        for (const auto& p : pats) b.patterns[type].push_back(p.get<std::string>());
    }
    return b;
}

std::optional<std::string> BindingRules::extract(FieldType type, const std::string& command) const {
    auto it = patterns.find(to_string(type));
    if (it == patterns.end()) return std::nullopt;
    for (const auto& pat : it->second) {
        std::regex re(pat, std::regex::ECMAScript | std::regex::icase);
        std::smatch m;
        if (std::regex_search(command, m, re) && m.size() > 1) return m[1].str();
    }
    return std::nullopt;
}

// --- template library ----------------------------------------------------------------

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& path) {
    return from_json(load_document(path, "tracemind_templates", 1));
}

TemplateLibrary TemplateLibrary::from_json(const json& doc) {
    TemplateLibrary lib;
    for (const auto& ja : doc.value("acts", json::array())) {
        ActTemplate t;
        t.pattern = ja.at("pattern").get<std::string>();
        for (const auto& js : ja.at("steps")) t.steps.push_back(plan_step_from_json(js));
        lib.acts.push_back(std::move(t));
    }
    json verbs = doc.value("verbs", json::object());
    for (const auto& [verb, variants] : verbs.items()) {
        for (const auto& variant : variants) {
            std::vector<PlanStep> steps;
            for (const auto& js : variant) steps.push_back(plan_step_from_json(js));
            lib.verb_variants[verb].push_back(std::move(steps));
        }
    }
    return lib;
}

std::optional<std::vector<PlanStep>> TemplateLibrary::steps_for_act(
    const std::string& act_label) const {
    for (const auto& t : acts) {
        std::regex re(t.pattern, std::regex::ECMAScript | std::regex::icase);
        std::smatch m;
        if (!std::regex_match(act_label, m, re)) continue;
        std::vector<PlanStep> steps;
        for (PlanStep s : t.steps) {
            s.object = expand_capture(s.object, m);
            s.text = expand_capture(s.text, m);
            steps.push_back(std::move(s));
        }
        return steps;
    }
    return std::nullopt;
}

const std::vector<std::vector<PlanStep>>* TemplateLibrary::variants_for_verb(
    const std::string& verb) const {
    auto it = verb_variants.find(verb);
    return it == verb_variants.end() ? nullptr : &it->second;
}

// --- generators ----------------------------------------------------------------------

namespace {

// Action steps from traces/skills carry (verb, args, object); plan steps are
// (verb, object, text). The first parameterizable argument becomes the text.
PlanStep to_plan_step(const ActionStep& a, const AliasMap& phi) {
    PlanStep s;
    s.verb = a.verb;
    s.object = a.object;
    for (const auto& [field, value] : a.args) {
        if (field == "target" || field == "source" || field == "dest") {
            if (s.object.empty()) s.object = value;
            continue;
        }
        auto t = phi.field_type(a.verb, field);
        if (t && s.text.empty()) {
            s.text = value;
            if (is_placeholder(value)) s.placeholder = value.substr(1, value.size() - 2);
        }
    }
    return s;
}

}  // namespace

std::vector<PlanStep> HintGenerator::generate(const SlotContext& ctx,
                                              const std::vector<IntentUnit>& retrieved,
                                              const SkillHint* hint) {
    ++calls_;
    std::vector<PlanStep> steps;
    if (hint) {
        for (const auto& a : hint->steps) steps.push_back(to_plan_step(a, phi_));
    } else if (!retrieved.empty() && !retrieved[0].actions.empty()) {
        for (const auto& a : retrieved[0].actions)
            steps.push_back(to_plan_step(canonicalize_action(a, phi_), phi_));
    } else if (auto tpl = templates_.steps_for_act(ctx.slot_label)) {
        steps = *tpl;
    } else {
        fail(ErrorClass::validation,
             "slot '" + ctx.slot_label + "': no skill hint, exemplar, or act template");
    }
    // Bind typed placeholders from the command.
    for (auto& s : steps) {
        if (s.placeholder.empty() && is_placeholder(s.text))
            s.placeholder = s.text.substr(1, s.text.size() - 2);
        if (!s.placeholder.empty()) {
            auto bound = bindings_.extract(field_type_from(s.placeholder), ctx.command);
            if (bound) s.text = *bound;
        }
    }
    return steps;
}

std::vector<PlanStep> HttpGenerator::generate(const SlotContext& ctx,
                                              const std::vector<IntentUnit>& retrieved,
                                              const SkillHint* hint) {
    ++calls_;
    auto split = endpoint_.find('/', endpoint_.find("//") == std::string::npos
                                        ? 0
                                        : endpoint_.find("//") + 2);
    std::string host = split == std::string::npos ? endpoint_ : endpoint_.substr(0, split);
    std::string path = split == std::string::npos ? "/" : endpoint_.substr(split);
    json body;
    body["slot"] = ctx.slot_label;
    body["desc"] = ctx.desc;
    body["command"] = ctx.command;
    json exemplars = json::array();
    for (const auto& u : retrieved) exemplars.push_back(unit_to_json(u));
    body["exemplars"] = std::move(exemplars);
    if (hint) body["hint"] = skill_hint_to_json(*hint);
    httplib::Client client(host);
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res || res->status != 200)
        fail(ErrorClass::provider, "generator endpoint failed for slot '" + ctx.slot_label + "'");
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("steps"))
        fail(ErrorClass::provider, "malformed generator response for slot '" + ctx.slot_label + "'");
    std::vector<PlanStep> steps;
    for (const auto& js : doc.at("steps")) steps.push_back(plan_step_from_json(js));
    if (steps.empty())
        fail(ErrorClass::provider, "generator returned no steps for slot '" + ctx.slot_label + "'");
    return steps;
}

PlannerConfig planner_config_from_json(const json& j) {
    PlannerConfig c;
    c.hit_threshold = j.value("hit_threshold", c.hit_threshold);
    c.partial_threshold = j.value("partial_threshold", c.partial_threshold);
    c.max_missing_acts = j.value("max_missing_acts", c.max_missing_acts);
    c.top_k_units = j.value("top_k_units", c.top_k_units);
    c.use_skill_hints = j.value("use_skill_hints", c.use_skill_hints);
    c.gate_by_ig = j.value("gate_by_ig", c.gate_by_ig);
    return c;
}

Vec RawMeanEmbedder::embed(const IntentUnit& unit) {
    auto views = embed_views(unit, provider_);
    Vec sum = Vec::Zero(provider_.dimension());
    for (const auto& [key, emb] : views) sum += emb.vector;
    return sum / static_cast<double>(views.size());
}

// --- planner --------------------------------------------------------------------------

Planner::Planner(const IntentIndex* index, PlanMemory* memory, Labeler& labeler,
                 StepGenerator& generator, UnitEmbedder& embedder, const AliasMap& phi,
                 const TemplateLibrary& templates, const BindingRules& bindings, PlannerConfig cfg)
    : index_(index),
      memory_(memory),
      labeler_(labeler),
      generator_(generator),
      embedder_(embedder),
      phi_(phi),
      templates_(templates),
      bindings_(bindings),
      cfg_(cfg) {}

CommandLabeling Planner::label_command(const std::string& command) {
    if (command.empty()) fail(ErrorClass::precondition, "empty command");
    return labeler_.label(command);
}

Vec Planner::embed_pseudo_unit(const std::string& env, const std::string& act,
                               const std::string& desc) {
    IntentUnit u;
    u.id = "query";
    u.env = orelse(env, act);
    u.act_or_key = act;
    u.desc = orelse(desc, act);
    u.kind = TraceKind::control;
    return embedder_.embed(u);
}

IntentPrototype Planner::build_prototype(const CommandLabeling& labeling) {
    IntentPrototype proto;
    proto.z = embed_pseudo_unit(join(dedupe(labeling.all_envs()), "; "),
                                join(labeling.all_acts(), "; "), labeling.raw_command);
    for (const auto& unit : labeling.units) {
        proto.slot_z.push_back(embed_pseudo_unit(join(unit.env_labels, "; "),
                                                 join(unit.act_labels, "; "), unit.desc));
        proto.slot_labels.push_back(unit.act_labels.empty() ? "" : unit.act_labels[0]);
        proto.slot_descs.push_back(unit.desc);
    }
    return proto;
}

CacheDecision Planner::classify_case(const IntentPrototype& proto,
                                     const CommandLabeling& labeling,
                                     std::optional<int> active_ig) const {
    CacheDecision d;
    if (!memory_ || memory_->size() == 0) return d;
    auto best = memory_->query_plan(proto.z, cfg_.gate_by_ig ? active_ig : std::nullopt);
    if (!best) return d;
    const PlanMemoryEntry* entry = memory_->find(best->plan_id);
    std::vector<std::string> missing;
    for (const auto& act : labeling.all_acts())
        if (std::find(entry->act_labels.begin(), entry->act_labels.end(), act) ==
            entry->act_labels.end())
            missing.push_back(act);
    if (best->score >= cfg_.hit_threshold && missing.empty()) {
        d.decision = CacheCase::hit;
        d.plan_id = best->plan_id;
        d.score = best->score;
    } else if (best->score >= cfg_.partial_threshold && !missing.empty() &&
               static_cast<int>(missing.size()) <= cfg_.max_missing_acts) {
        d.decision = CacheCase::partial;
        d.plan_id = best->plan_id;
        d.score = best->score;
        d.missing_acts = missing;
    }
    return d;
}

std::vector<PlanStep> Planner::bind_placeholders(std::vector<PlanStep> steps,
                                                 const std::string& command) const {
    for (auto& s : steps) {
        if (s.placeholder.empty()) continue;
        auto bound = bindings_.extract(field_type_from(s.placeholder), command);
        if (bound) s.text = *bound;
    }
    return steps;
}

GlobalPlan Planner::synthesize_plan(const IntentPrototype& proto, const CommandLabeling& labeling,
                                    std::optional<int> active_ig) {
    (void)active_ig;  // plans are tagged with it in memory; slots gate themselves
    GlobalPlan plan;
    for (size_t i = 0; i < labeling.units.size(); ++i) {
        const TaskUnit& task = labeling.units[i];
        PlanUnit unit;
        unit.slot_label = proto.slot_labels[i];
        unit.desc = task.desc;
        unit.provenance = Provenance::synthesized;
        unit.source = "template";
        StepGenerator::SlotContext ctx{unit.slot_label, task.desc, labeling.raw_command};
        std::vector<IntentUnit> retrieved;
        const SkillHint* hint = nullptr;
        if (index_ && !index_->empty()) {
            // Gating routes each slot through its own nearest intent group;
            // the command-level group tags the plan in memory.
            std::optional<int> slot_ig =
                cfg_.gate_by_ig ? index_->active_ig(proto.slot_z[i]) : std::nullopt;
            auto ranked = index_->query_sg(slot_ig, proto.slot_z[i], 1);
            if (!ranked.empty()) {
                const SubGroup* sg = index_->find_sg(ranked[0].sg_id);
                retrieved = index_->top_units(ranked[0].sg_id, proto.slot_z[i], cfg_.top_k_units);
                if (cfg_.use_skill_hints && sg && !sg->hints.empty()) hint = &sg->hints.front();
                unit.source = "sg:" + std::to_string(ranked[0].sg_id);
            }
        }
        try {
            unit.steps = generator_.generate(ctx, retrieved, hint);
        } catch (const Error& e) {
            fail(e.cls(), "slot '" + unit.slot_label + "': " + e.what());
        }
        if (unit.steps.empty())
            fail(ErrorClass::validation, "slot '" + unit.slot_label + "': generator returned no steps");
        plan.units.push_back(std::move(unit));
    }
    plan.finalize_id();
    plan.validate(phi_);
    return plan;
}

GlobalPlan Planner::reuse_plan(const std::string& plan_id, const std::string& command) const {
    if (!memory_) fail(ErrorClass::precondition, "no plan memory attached");
    const PlanMemoryEntry* entry = memory_->find(plan_id);
    if (!entry) fail(ErrorClass::not_found, "no stored plan '" + plan_id + "'");
    GlobalPlan plan = entry->plan;
    for (auto& unit : plan.units) unit.steps = bind_placeholders(std::move(unit.steps), command);
    plan.finalize_id();
    return plan;
}

PlanUnit Planner::fill_unit_from_sg(int sg_id, const std::string& act, const std::string& desc,
                                    const std::string& command) {
    PlanUnit unit;
    unit.slot_label = act;
    unit.desc = desc;
    const SubGroup* sg = sg_id >= 0 && index_ ? index_->find_sg(sg_id) : nullptr;
    if (cfg_.use_skill_hints && sg && !sg->hints.empty()) {
        // The most frequently observed (highest-support) skill template.
        const SkillHint& hint = sg->hints.front();
        std::vector<PlanStep> steps;
        for (const auto& a : hint.steps) steps.push_back(to_plan_step(a, phi_));
        unit.steps = bind_placeholders(std::move(steps), command);
        unit.provenance = Provenance::gap_filled;
        unit.source = "sg:" + std::to_string(sg_id);
        return unit;
    }
    if (auto tpl = templates_.steps_for_act(act)) {
        unit.steps = bind_placeholders(std::move(*tpl), command);
        unit.provenance = Provenance::synthesized;
        unit.source = "template";
        return unit;
    }
    fail(ErrorClass::validation, "cannot fill missing act '" + act + "'");
}

GlobalPlan Planner::gap_fill(const std::string& plan_id,
                             const std::vector<std::string>& missing_acts,
                             const CommandLabeling& labeling, const IntentPrototype& proto,
                             std::optional<int> active_ig) {
    if (static_cast<int>(missing_acts.size()) > cfg_.max_missing_acts)
        fail(ErrorClass::precondition, "gap filling is limited to " +
                                           std::to_string(cfg_.max_missing_acts) + " missing acts");
    GlobalPlan plan = reuse_plan(plan_id, labeling.raw_command);
    for (const auto& act : missing_acts) {
        // Aligned slot: the first prototype slot whose act label matches.
        std::optional<size_t> slot;
        for (size_t i = 0; i < labeling.units.size(); ++i) {
            const auto& acts = labeling.units[i].act_labels;
            if (std::find(acts.begin(), acts.end(), act) != acts.end()) {
                slot = i;
                break;
            }
        }
        int sg_id = -1;
        std::string desc = act;
        if (slot) desc = labeling.units[*slot].desc;
        if (index_ && !index_->empty()) {
            Vec z = slot ? proto.slot_z[*slot]
                         : embed_pseudo_unit(join(dedupe(labeling.all_envs()), "; "), act, act);
            std::optional<int> slot_ig =
                cfg_.gate_by_ig ? index_->active_ig(z) : std::nullopt;
            auto ranked = index_->query_sg(slot_ig, z, 1);
            if (!ranked.empty()) sg_id = ranked[0].sg_id;
        }
        PlanUnit unit = fill_unit_from_sg(sg_id, act, desc, labeling.raw_command);
        size_t pos = slot ? std::min(*slot, plan.units.size())
                          : (plan.units.empty() ? 0 : plan.units.size() - 1);
        plan.units.insert(plan.units.begin() + static_cast<long>(pos), std::move(unit));
    }
    plan.finalize_id();
    plan.validate(phi_);
    return plan;
}

PlanOutcome Planner::plan_command(const std::string& command) {
    PlanOutcome out;
    out.labeling = label_command(command);
    out.prototype = build_prototype(out.labeling);
    if (index_ && !index_->empty()) out.active_ig = index_->active_ig(out.prototype.z);
    out.decision = classify_case(out.prototype, out.labeling, out.active_ig);
    switch (out.decision.decision) {
        case CacheCase::hit:
            out.plan = reuse_plan(out.decision.plan_id, command);
            break;
        case CacheCase::partial:
            out.plan = gap_fill(out.decision.plan_id, out.decision.missing_acts, out.labeling,
                                out.prototype, out.active_ig);
            break;
        case CacheCase::miss:
            out.plan = synthesize_plan(out.prototype, out.labeling, out.active_ig);
            break;
    }
    return out;
}

bool Planner::approve_plan(const PlanOutcome& outcome, const std::string& decision) {
    if (decision != "approved") return false;
    if (!memory_) return false;
    PlanMemoryEntry entry;
    entry.plan_id = outcome.plan.id;
    entry.prototype = outcome.prototype.z;
    entry.env_labels = dedupe(outcome.labeling.all_envs());
    entry.act_labels = outcome.labeling.all_acts();
    entry.plan = outcome.plan;
    entry.ig_id = outcome.active_ig.value_or(-1);
    entry.command = outcome.labeling.raw_command;
    return memory_->store_plan(std::move(entry), "approved");
}

}  // namespace tracemind
