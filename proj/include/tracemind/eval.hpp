#pragma once

#include <functional>

#include "tracemind/executor.hpp"

namespace tracemind {

// Step Efficiency Ratio: successful steps / attempted steps.
// Undefined (nullopt) when nothing was attempted.
std::optional<double> ser(const ExecutionRecord& record);

// Plan completion: executed plan steps / synthesized plan steps.
// Error{precondition} on an empty plan.
double completion(const ExecutionRecord& record, const GlobalPlan& plan);

struct BinRow {
    int lo = 0, hi = 0;  // [lo, hi)
    int tasks = 0;
    int successes = 0;
    double success_rate = 0;
    std::optional<double> mean_ser;
    double mean_ticks = 0;
};

// Buckets records by attempted step count into left-closed bins.
std::vector<BinRow> bin_by_length(const std::vector<ExecutionRecord>& records, int bin_size = 5);

struct ConsistencyResult {
    double fraction = 0;
    int consistent_units = 0;
    int total_units = 0;
};

// Plans one task `runs` times and reports the fraction of plan units whose
// step sequences repeat across every run: unit counts and step counts must
// match positionally and all pairwise step-embedding cosines must exceed the
// threshold.
ConsistencyResult step_consistency(const std::function<GlobalPlan(int run)>& plan_run, int runs,
                                   double cos_threshold, EmbeddingProvider& provider);

// Same comparison over already-produced plans.
ConsistencyResult consistency_over_plans(const std::vector<GlobalPlan>& plans,
                                         double cos_threshold, EmbeddingProvider& provider);

// --- ablation matrix -------------------------------------------------------------

struct AblationToggles {
    std::string label;
    enum class Retrieval { none, greedy, gated } retrieval = Retrieval::none;
    bool learned_z = false;
    bool skill_hints = false;
    bool plan_memory = false;
};

// The six rows of the component matrix, baseline through full system.
std::vector<AblationToggles> ablation_rows();
AblationToggles ablation_row(const std::string& label);

struct AblationRow {
    std::string label;
    int tasks = 0;
    int successes = 0;
    double success_rate = 0;
    double mean_completion = 0;
    std::optional<double> mean_ser;
    int case1 = 0, case2 = 0, case3 = 0;
    int gap_filled_units = 0;
};

json ablation_row_to_json(const AblationRow& r);

struct MetricsReport {
    int tasks = 0;
    int successes = 0;
    double success_rate = 0;
    double mean_completion = 0;
    std::optional<double> mean_ser;
    double mean_ticks = 0;
    std::vector<BinRow> bins;
};

MetricsReport summarize(const std::vector<ExecutionRecord>& records,
                        const std::vector<GlobalPlan>& plans, int bin_size = 5);
json metrics_to_json(const MetricsReport& m);
std::string metrics_table(const MetricsReport& m);

}  // namespace tracemind
