#pragma once

#include <optional>

#include "tracemind/skills.hpp"

namespace tracemind {

inline constexpr int kNoise = -1;

struct ClusterParams {
    int min_cluster_size = 2;
    int min_samples = 1;
    bool allow_single_cluster = true;

    void validate() const;
};

struct ClusterResult {
    std::vector<int> labels;                 // dense ids from 0, or kNoise
    std::map<int, double> stabilities;       // selected condensed-tree clusters
    ClusterParams params;

    int num_clusters() const;
};

// Density-based clustering: mutual-reachability graph -> minimum spanning
// tree -> condensed tree -> stability-maximal flat extraction. Deterministic
// for a fixed input order; MST ties break lexicographically on
// (weight, smaller index, larger index).
ClusterResult hdbscan(const std::vector<Vec>& points, const ClusterParams& params);

struct SubGroup {
    int id = -1;                 // dense across the whole hierarchy
    std::vector<std::string> member_ids;
    Vec centroid;                // arithmetic mean of member embeddings
    int support = 0;             // top skill-hint support; member count before induction
    std::vector<std::string> representative_ids;  // nearest members to the centroid
    std::vector<SkillHint> hints;
};

struct IntentGroup {
    int id = -1;
    bool unassigned = false;     // reserved group holding top-level noise
    std::vector<std::string> member_ids;
    Vec centroid;
    std::vector<SubGroup> subgroups;
};

struct IntentHierarchy {
    int dim = 0;
    std::vector<IntentGroup> groups;

    const SubGroup* find_sg(int sg_id) const;
    const IntentGroup* find_ig(int ig_id) const;
    int sg_count() const;
};

struct HierarchyConfig {
    ClusterParams ig;           // first pass over fused embeddings
    ClusterParams sg;           // second pass within each intent group
    int rep_k = 5;
    // Optional per-pass fusion reweighting (env, mid, desc); requires
    // per-view projections alongside the fused z. Centroids and retrieval
    // stay in plain z space either way.
    std::optional<std::array<double, 3>> ig_fusion;
    std::optional<std::array<double, 3>> sg_fusion;

    bool needs_per_view() const { return ig_fusion.has_value() || sg_fusion.has_value(); }
};

HierarchyConfig hierarchy_config_from_json(const json& j);

struct HierarchyInput {
    std::string id;
    Vec z;
    std::optional<std::array<Vec, 3>> per_view;
};

// Two-pass clustering: intent groups over fused z, subgroups within each
// group. Top-level noise becomes singleton subgroups in a reserved
// "unassigned" group; second-pass noise becomes singleton subgroups in place.
IntentHierarchy build_hierarchy(const std::vector<HierarchyInput>& units,
                                const HierarchyConfig& cfg);

json hierarchy_to_json(const IntentHierarchy& h);
IntentHierarchy hierarchy_from_json(const json& j);

// --- quality metrics ----------------------------------------------------------

enum class SeparationStatus { ok, insufficient_subgroups, degenerate };

struct SeparationRow {
    int sg_id = -1;
    int size = 0;
    double intra = 0;  // mean member distance to the subgroup centroid
    double inter = 0;  // min distance to any other subgroup centroid
};

struct SeparationReport {
    SeparationStatus status = SeparationStatus::ok;
    std::string note;
    std::vector<SeparationRow> rows;        // subgroups with >= 2 members
    std::optional<double> sep_w;            // size-weighted mean of inter/intra
};

// Size-weighted density separation over the hierarchy's subgroups.
// Subgroups with a single member are excluded (their intra distance is 0 by
// construction). Inter distances are taken across the whole hierarchy.
SeparationReport separation_metrics(const IntentHierarchy& h,
                                    const std::map<std::string, Vec>& embeddings);

struct PurityRow {
    int sg_id = -1;
    int size = 0;
    double env_purity = 0;
    double act_purity = 0;
};

struct PurityReport {
    double env_mean = 0, env_std = 0;   // population standard deviation
    double act_mean = 0, act_std = 0;
    std::vector<PurityRow> rows;
};

// Majority ENV/ACT tag fraction per subgroup, averaged over all subgroups.
PurityReport purity_metrics(const IntentHierarchy& h,
                            const std::map<std::string, std::pair<std::string, std::string>>& tags);

}  // namespace tracemind
