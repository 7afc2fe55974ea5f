#pragma once

#include "tracemind/cluster.hpp"

namespace tracemind {

// One executable plan step. `placeholder` names the typed slot the text arg
// was bound from ("" when the text is literal), so reuse can rebind it.
struct PlanStep {
    std::string verb;
    std::string object;
    std::string text;
    std::string placeholder;

    bool operator==(const PlanStep&) const = default;
};

enum class Provenance { synthesized, reused, gap_filled };
const char* to_string(Provenance p);
Provenance provenance_from(const std::string& s);

struct PlanUnit {
    std::string slot_label;   // the act label this unit realizes
    std::string desc;
    std::vector<PlanStep> steps;
    Provenance provenance = Provenance::synthesized;
    std::string source;       // sg id, plan id, or "template"
};

struct GlobalPlan {
    std::string id;           // content digest, assigned on finalize
    std::vector<PlanUnit> units;

    int total_steps() const;
    void finalize_id();
    void validate(const AliasMap& phi) const;  // verbs in vocabulary, units non-empty
};

json plan_to_json(const GlobalPlan& plan);
GlobalPlan plan_from_json(const json& j);
void save_plan(const GlobalPlan& plan, const std::filesystem::path& path);
GlobalPlan load_plan(const std::filesystem::path& path);

// --- retrieval index -----------------------------------------------------------

struct SgMatch {
    int sg_id = -1;
    double score = 0;  // cosine in [-1, 1]
};

// The intent hierarchy plus the unit store, with normalized centroids cached
// for cosine ranking.
class IntentIndex {
public:
    IntentIndex() = default;
    IntentIndex(IntentHierarchy hierarchy, UnitStore units, std::map<std::string, Vec> embeddings);

    bool empty() const { return hierarchy_.groups.empty(); }
    const IntentHierarchy& hierarchy() const { return hierarchy_; }
    IntentHierarchy& hierarchy() { return hierarchy_; }
    const UnitStore& units() const { return units_; }
    const std::map<std::string, Vec>& embeddings() const { return embeddings_; }

    // Ranks subgroups by cosine similarity to the query; restricted to one
    // intent group when ig_id is given. Ties break on the smaller sg id.
    std::vector<SgMatch> query_sg(std::optional<int> ig_id, const Vec& query_z, int top_k) const;

    // Representative members of a subgroup reranked by cosine to the query.
    std::vector<IntentUnit> top_units(int sg_id, const Vec& query_z, int k = 2) const;

    // The intent group whose centroid is nearest by cosine.
    std::optional<int> active_ig(const Vec& query_z) const;

    const SubGroup* find_sg(int sg_id) const { return hierarchy_.find_sg(sg_id); }
    std::optional<int> ig_of_sg(int sg_id) const;

    void rebuild_cache();

    void save(const std::filesystem::path& path) const;
    static IntentIndex load(const std::filesystem::path& path);

private:
    void validate() const;

    IntentHierarchy hierarchy_;
    UnitStore units_;
    std::map<std::string, Vec> embeddings_;       // unit id -> stored z
    std::map<int, Vec> normalized_centroids_;     // sg id -> unit-norm centroid
    std::map<int, Vec> normalized_ig_centroids_;  // ig id -> unit-norm centroid
};

// --- plan memory -----------------------------------------------------------------

struct PlanMemoryEntry {
    std::string plan_id;
    Vec prototype;                       // intent prototype embedding
    std::vector<std::string> env_labels;
    std::vector<std::string> act_labels;
    GlobalPlan plan;
    std::string approval = "approved";   // rejected plans are never stored
    int ig_id = -1;                      // active intent group at creation
    std::string command;
    uint64_t seq = 0;                    // creation order, deterministic
};

struct PlanMatch {
    std::string plan_id;
    double score = 0;
};

class PlanMemory {
public:
    size_t size() const { return entries_.size(); }
    const std::vector<PlanMemoryEntry>& entries() const { return entries_; }
    const PlanMemoryEntry* find(const std::string& plan_id) const;

    // Best cosine match among entries tagged with the active intent group.
    std::optional<PlanMatch> query_plan(const Vec& query_z, std::optional<int> ig_id) const;

    // Approved plans are appended (deduplicated by plan id); anything else
    // leaves the memory untouched. Returns true when stored.
    bool store_plan(PlanMemoryEntry entry, const std::string& approval);

    void save(const std::filesystem::path& path) const;
    static PlanMemory load(const std::filesystem::path& path);

private:
    std::vector<PlanMemoryEntry> entries_;
};

}  // namespace tracemind
