#include "tracemind/memory.hpp"

#include <algorithm>

namespace tracemind {

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::synthesized: return "synthesized";
        case Provenance::reused: return "reused";
        case Provenance::gap_filled: return "gap_filled";
    }
    return "?";
}

Provenance provenance_from(const std::string& s) {
    if (s == "synthesized") return Provenance::synthesized;
    if (s == "reused") return Provenance::reused;
    if (s == "gap_filled") return Provenance::gap_filled;
    fail(ErrorClass::corrupt_file, "unknown provenance '" + s + "'");
}

int GlobalPlan::total_steps() const {
    int n = 0;
    for (const auto& u : units) n += static_cast<int>(u.steps.size());
    return n;
}

void GlobalPlan::finalize_id() {
    json j = plan_to_json(*this);
    j.erase("id");
    id = content_digest(j.dump());
}

void GlobalPlan::validate(const AliasMap& phi) const {
    if (units.empty()) fail(ErrorClass::validation, "plan has no units");
    for (const auto& u : units) {
        if (u.steps.empty())
            fail(ErrorClass::validation, "plan unit '" + u.slot_label + "' has no steps");
        for (const auto& s : u.steps)
            if (!phi.has_verb(s.verb))
                fail(ErrorClass::validation,
                     "plan step verb '" + s.verb + "' is not in the vocabulary");
    }
}

json plan_to_json(const GlobalPlan& plan) {
    json units = json::array();
    for (const auto& u : plan.units) {
        json steps = json::array();
        for (const auto& s : u.steps) {
            json step;
            step["verb"] = s.verb;
            if (!s.object.empty()) step["object"] = s.object;
            if (!s.text.empty()) step["text"] = s.text;
            if (!s.placeholder.empty()) step["placeholder"] = s.placeholder;
            steps.push_back(std::move(step));
        }
        json ju;
        ju["slot"] = u.slot_label;
        ju["desc"] = u.desc;
        ju["steps"] = std::move(steps);
        ju["provenance"] = to_string(u.provenance);
        ju["source"] = u.source;
        units.push_back(std::move(ju));
    }
    json j;
    j["id"] = plan.id;
    j["units"] = std::move(units);
    return j;
}

GlobalPlan plan_from_json(const json& j) {
    GlobalPlan plan;
    plan.id = j.value("id", "");
    for (const auto& ju : j.at("units")) {
        PlanUnit u;
        u.slot_label = ju.at("slot").get<std::string>();
        u.desc = ju.value("desc", "");
        for (const auto& s : ju.at("steps")) {
            PlanStep step;
            step.verb = s.at("verb").get<std::string>();
            step.object = s.value("object", "");
            step.text = s.value("text", "");
            step.placeholder = s.value("placeholder", "");
            u.steps.push_back(std::move(step));
        }
        u.provenance = provenance_from(ju.value("provenance", "synthesized"));
        u.source = ju.value("source", "");
        plan.units.push_back(std::move(u));
    }
    return plan;
}

void save_plan(const GlobalPlan& plan, const std::filesystem::path& path) {
    store_document(path, "tracemind_plan", 1, json{{"plan", plan_to_json(plan)}});
}

GlobalPlan load_plan(const std::filesystem::path& path) {
    return plan_from_json(load_document(path, "tracemind_plan", 1).at("plan"));
}

// --- index -----------------------------------------------------------------------

namespace {

Vec normalized_or_zero(const Vec& v) {
    double n = v.norm();
    if (n == 0) return Vec::Zero(v.size());
    return v / n;
}

}  // namespace

IntentIndex::IntentIndex(IntentHierarchy hierarchy, UnitStore units,
                         std::map<std::string, Vec> embeddings)
    : hierarchy_(std::move(hierarchy)),
      units_(std::move(units)),
      embeddings_(std::move(embeddings)) {
    rebuild_cache();
    validate();
}

void IntentIndex::rebuild_cache() {
    normalized_centroids_.clear();
    normalized_ig_centroids_.clear();
    for (const auto& g : hierarchy_.groups) {
        normalized_ig_centroids_[g.id] = normalized_or_zero(g.centroid);
        for (const auto& sg : g.subgroups)
            normalized_centroids_[sg.id] = normalized_or_zero(sg.centroid);
    }
}

void IntentIndex::validate() const {
    for (const auto& g : hierarchy_.groups)
        for (const auto& sg : g.subgroups)
            for (const auto& rep : sg.representative_ids)
                if (!units_.count(rep))
                    fail(ErrorClass::corrupt_file,
                         "representative '" + rep + "' does not resolve to a stored unit");
}

std::vector<SgMatch> IntentIndex::query_sg(std::optional<int> ig_id, const Vec& query_z,
                                           int top_k) const {
    if (empty()) fail(ErrorClass::precondition, "query_sg on an empty index");
    Vec q = normalized_or_zero(query_z);
    std::vector<SgMatch> matches;
    for (const auto& g : hierarchy_.groups) {
        if (ig_id && g.id != *ig_id) continue;
        for (const auto& sg : g.subgroups)
            matches.push_back({sg.id, q.dot(normalized_centroids_.at(sg.id))});
    }
    std::sort(matches.begin(), matches.end(), [](const SgMatch& a, const SgMatch& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.sg_id < b.sg_id;
    });
    if (top_k >= 0 && static_cast<int>(matches.size()) > top_k) matches.resize(top_k);
    return matches;
}

std::vector<IntentUnit> IntentIndex::top_units(int sg_id, const Vec& query_z, int k) const {
    const SubGroup* sg = hierarchy_.find_sg(sg_id);
    if (!sg) fail(ErrorClass::not_found, "no subgroup " + std::to_string(sg_id));
    // Representatives are preselected by centroid proximity; rerank by cosine
    // to the query prototype. Ties break on the smaller unit id.
    const auto& pool = sg->representative_ids.empty() ? sg->member_ids : sg->representative_ids;
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& id : pool) {
        auto it = embeddings_.find(id);
        double score = it == embeddings_.end() ? 0.0 : cosine(query_z, it->second);
        scored.emplace_back(-score, id);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<IntentUnit> out;
    for (int i = 0; i < std::min<int>(k, static_cast<int>(scored.size())); ++i) {
        auto it = units_.find(scored[i].second);
        if (it == units_.end())
            fail(ErrorClass::not_found, "unit '" + scored[i].second + "' not in store");
        out.push_back(it->second);
    }
    return out;
}

std::optional<int> IntentIndex::active_ig(const Vec& query_z) const {
    if (empty()) return std::nullopt;
    Vec q = normalized_or_zero(query_z);
    std::optional<int> best;
    double best_score = -2;
    for (const auto& g : hierarchy_.groups) {
        double s = q.dot(normalized_ig_centroids_.at(g.id));
        if (s > best_score || (s == best_score && best && g.id < *best)) {
            best_score = s;
            best = g.id;
        }
    }
    return best;
}

std::optional<int> IntentIndex::ig_of_sg(int sg_id) const {
    for (const auto& g : hierarchy_.groups)
        for (const auto& sg : g.subgroups)
            if (sg.id == sg_id) return g.id;
    return std::nullopt;
}

void IntentIndex::save(const std::filesystem::path& path) const {
    json j;
    j["hierarchy"] = hierarchy_to_json(hierarchy_);
    json units = json::array();
    for (const auto& [id, u] : units_) units.push_back(unit_to_json(u));
    j["units"] = std::move(units);
    json embs = json::object();
    for (const auto& [id, z] : embeddings_) embs[id] = vec_to_json(z);
    j["embeddings"] = std::move(embs);
    store_document(path, "tracemind_index", 1, std::move(j));
}

IntentIndex IntentIndex::load(const std::filesystem::path& path) {
    json doc = load_document(path, "tracemind_index", 1);
    try {
        IntentHierarchy h = hierarchy_from_json(doc.at("hierarchy"));
        UnitStore units;
        for (const auto& ju : doc.at("units")) {
            IntentUnit u = unit_from_json(ju);
            units[u.id] = std::move(u);
        }
        std::map<std::string, Vec> embs;
        for (const auto& [id, jv] : doc.at("embeddings").items()) embs[id] = vec_from_json(jv);
        return IntentIndex(std::move(h), std::move(units), std::move(embs));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorClass::corrupt_file, path.string() + ": " + e.what());
    }
}

// --- plan memory -------------------------------------------------------------------

const PlanMemoryEntry* PlanMemory::find(const std::string& plan_id) const {
    for (const auto& e : entries_)
        if (e.plan_id == plan_id) return &e;
    return nullptr;
}

std::optional<PlanMatch> PlanMemory::query_plan(const Vec& query_z,
                                                std::optional<int> ig_id) const {
    std::optional<PlanMatch> best;
    for (const auto& e : entries_) {
        if (ig_id && e.ig_id != *ig_id) continue;
        double s = cosine(query_z, e.prototype);
        if (!best || s > best->score) best = PlanMatch{e.plan_id, s};
    }
    return best;
}

bool PlanMemory::store_plan(PlanMemoryEntry entry, const std::string& approval) {
    if (approval != "approved") return false;
    if (find(entry.plan_id)) return false;  // content-identical plan already stored
    entry.approval = "approved";
    entry.seq = entries_.empty() ? 0 : entries_.back().seq + 1;
    entries_.push_back(std::move(entry));
    return true;
}

void PlanMemory::save(const std::filesystem::path& path) const {
    json entries = json::array();
    for (const auto& e : entries_) {
        json je;
        je["plan_id"] = e.plan_id;
        je["prototype"] = vec_to_json(e.prototype);
        je["env_labels"] = e.env_labels;
        je["act_labels"] = e.act_labels;
        je["plan"] = plan_to_json(e.plan);
        je["approval"] = e.approval;
        je["ig_id"] = e.ig_id;
        je["command"] = e.command;
        je["seq"] = e.seq;
        entries.push_back(std::move(je));
    }
    store_document(path, "tracemind_plan_memory", 1, json{{"entries", std::move(entries)}});
}

PlanMemory PlanMemory::load(const std::filesystem::path& path) {
    json doc = load_document(path, "tracemind_plan_memory", 1);
    PlanMemory mem;
    try {
        for (const auto& je : doc.at("entries")) {
            PlanMemoryEntry e;
            e.plan_id = je.at("plan_id").get<std::string>();
            e.prototype = vec_from_json(je.at("prototype"));
            e.env_labels = je.at("env_labels").get<std::vector<std::string>>();
            e.act_labels = je.at("act_labels").get<std::vector<std::string>>();
            e.plan = plan_from_json(je.at("plan"));
            e.approval = je.at("approval").get<std::string>();
            if (e.approval != "approved")
                fail(ErrorClass::corrupt_file,
                     path.string() + ": memory contains a non-approved plan");
            e.ig_id = je.at("ig_id").get<int>();
            e.command = je.value("command", "");
            e.seq = je.at("seq").get<uint64_t>();
            mem.entries_.push_back(std::move(e));
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorClass::corrupt_file, path.string() + ": " + e.what());
    }
    return mem;
}

}  // namespace tracemind
