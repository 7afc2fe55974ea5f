#pragma once

#include <set>

#include "tracemind/trace.hpp"

namespace tracemind {

// Normalized signature-level dissimilarity plus the raw edit count.
struct SignatureDistance {
    double normalized = 0;  // raw / max(|a|,|b|), 0 for two empty signatures
    int raw = 0;
};

// Levenshtein distance over verb tokens (unit costs).
// Error{unresolved_verb} when either signature contains a blank verb.
SignatureDistance d_sig(const VerbSignature& a, const VerbSignature& b);

// The member minimizing total normalized distance to all candidates.
// Ties: lower total raw distance, then lexicographically smallest trace id.
std::string medoid(const std::vector<std::pair<std::string, VerbSignature>>& candidates);

// A typed runtime-filled placeholder slot, e.g. <url>.
struct ParamSlot {
    std::string token;  // "<url>", "<query>", "<file_path>", "<text>"
    FieldType type = FieldType::text;

    bool operator==(const ParamSlot&) const = default;
};

// Parameterized schema induced from a subgroup's prototype trace: verb
// sequence, placeholder structure, and the concrete (placeholder-bearing)
// step list used at planning time.
struct SkillHint {
    int sg_id = -1;
    VerbSignature verbs;
    std::vector<ParamSlot> arg_schema;
    std::vector<ActionStep> steps;
    int support = 0;
    std::vector<std::string> source_trace_ids;
    int rank = 0;
};

json skill_hint_to_json(const SkillHint& h);
SkillHint skill_hint_from_json(const json& j);

struct SkillConfig {
    double tau_support = 0.8;
    int rep_k = 5;
    int min_schema_support = 2;           // extra schemas need this much support
    std::set<std::string> prune_verbs = {"wait"};
};

SkillConfig skill_config_from_json(const json& j);

// Replaces literal argument values with typed placeholders and drops
// recovery/incidental steps. Error{degenerate} when nothing is left.
SkillHint parameterize(const std::vector<ActionStep>& prototype_trace, const AliasMap& phi,
                       const SkillConfig& cfg = {});

// Returns true when a value is already a placeholder token like <url>.
bool is_placeholder(const std::string& value);

// support(schema) = members whose similarity 1 - d_sig >= tau_support.
// Ranked by support descending; the medoid schema wins ties. Ranks are dense
// from 1.
std::vector<SkillHint> support_and_rank(const std::vector<VerbSignature>& sg_members,
                                        std::vector<SkillHint> schemas, double tau_support,
                                        int medoid_schema_index = 0);

// Top-k member ids minimizing d_sig to the prototype; ties by id.
std::vector<std::string> representative_traces(
    const std::vector<std::pair<std::string, VerbSignature>>& sg_members,
    const VerbSignature& prototype, int k);

struct IntentHierarchy;  // clustering module

// Stores units' action traces consulted during induction and planning.
using UnitStore = std::map<std::string, IntentUnit>;

// Induces skill hints for every subgroup of the hierarchy in place: medoid
// prototype, parameterized schemas, support ranking, representative traces.
void attach_skills(IntentHierarchy& hierarchy, const UnitStore& units, const AliasMap& phi,
                   const SkillConfig& cfg);

}  // namespace tracemind
