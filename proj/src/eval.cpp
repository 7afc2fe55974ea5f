#include "tracemind/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tracemind {

std::optional<double> ser(const ExecutionRecord& record) {
    if (record.steps_attempted == 0) return std::nullopt;
    return static_cast<double>(record.steps_successful) /
           static_cast<double>(record.steps_attempted);
}

double completion(const ExecutionRecord& record, const GlobalPlan& plan) {
    int total = plan.total_steps();
    if (total == 0) fail(ErrorClass::precondition, "completion of an empty plan");
    return static_cast<double>(record.plan_steps_executed) / static_cast<double>(total);
}

std::vector<BinRow> bin_by_length(const std::vector<ExecutionRecord>& records, int bin_size) {
    if (bin_size < 1) fail(ErrorClass::precondition, "bin size must be positive");
    std::map<int, BinRow> bins;
    for (const auto& r : records) {
        int b = r.steps_attempted / bin_size;
        auto& row = bins[b];
        row.lo = b * bin_size;
        row.hi = (b + 1) * bin_size;
        ++row.tasks;
        if (r.outcome == Outcome::SUCCESS) ++row.successes;
        row.mean_ticks += static_cast<double>(r.ticks);
        if (auto s = ser(r)) row.mean_ser = row.mean_ser.value_or(0.0) + *s;
    }
    std::vector<BinRow> out;
    for (auto& [b, row] : bins) {
        row.success_rate = static_cast<double>(row.successes) / row.tasks;
        row.mean_ticks /= row.tasks;
        if (row.mean_ser) *row.mean_ser /= row.tasks;
        out.push_back(row);
    }
    return out;
}

namespace {

std::string step_text(const PlanStep& s) {
    std::string t = s.verb;
    if (!s.object.empty()) t += " " + s.object;
    if (!s.text.empty()) t += " " + s.text;
    return t;
}

}  // namespace

ConsistencyResult consistency_over_plans(const std::vector<GlobalPlan>& plans,
                                         double cos_threshold, EmbeddingProvider& provider) {
    if (plans.size() < 2)
        fail(ErrorClass::precondition, "consistency needs at least two runs to compare");
    size_t max_units = 0;
    for (const auto& p : plans) max_units = std::max(max_units, p.units.size());
    ConsistencyResult res;
    res.total_units = static_cast<int>(max_units);
    for (size_t u = 0; u < max_units; ++u) {
        bool consistent = true;
        for (const auto& p : plans)
            if (u >= p.units.size()) consistent = false;
        if (consistent) {
            size_t steps = plans[0].units[u].steps.size();
            for (const auto& p : plans)
                if (p.units[u].steps.size() != steps) consistent = false;
            if (consistent) {
                for (size_t s = 0; s < steps && consistent; ++s) {
                    std::vector<Vec> embs;
                    for (const auto& p : plans)
                        embs.push_back(provider.embed_text(step_text(p.units[u].steps[s])).vector);
                    for (size_t i = 0; i < embs.size() && consistent; ++i)
                        for (size_t j = i + 1; j < embs.size() && consistent; ++j)
                            if (!(cosine(embs[i], embs[j]) > cos_threshold)) consistent = false;
                }
            }
        }
        if (consistent) ++res.consistent_units;
    }
    res.fraction = max_units == 0 ? 0.0
                                  : static_cast<double>(res.consistent_units) /
                                        static_cast<double>(max_units);
    return res;
}

ConsistencyResult step_consistency(const std::function<GlobalPlan(int run)>& plan_run, int runs,
                                   double cos_threshold, EmbeddingProvider& provider) {
    if (runs < 2) fail(ErrorClass::precondition, "consistency needs runs >= 2");
    std::vector<GlobalPlan> plans;
    plans.reserve(runs);
    for (int r = 0; r < runs; ++r) plans.push_back(plan_run(r));
    return consistency_over_plans(plans, cos_threshold, provider);
}

std::vector<AblationToggles> ablation_rows() {
    using R = AblationToggles::Retrieval;
    return {
        {"B", R::none, false, false, false},
        {"B+Tg", R::greedy, false, false, false},
        {"B+Tsg+Z", R::gated, true, false, false},
        {"B+Tsg+Ssg+PM", R::gated, false, true, true},
        {"B+Tsg+Z+PM", R::gated, true, false, true},
        {"B+Tsg+Z+Ssg+PM", R::gated, true, true, true},
    };
}

AblationToggles ablation_row(const std::string& label) {
    for (const auto& r : ablation_rows())
        if (r.label == label) return r;
    fail(ErrorClass::usage, "unknown ablation row '" + label + "'");
}

json ablation_row_to_json(const AblationRow& r) {
    json j;
    j["label"] = r.label;
    j["tasks"] = r.tasks;
    j["successes"] = r.successes;
    j["success_rate"] = r.success_rate;
    j["mean_completion"] = r.mean_completion;
    if (r.mean_ser) j["mean_ser"] = *r.mean_ser;
    j["cases"] = {{"miss", r.case1}, {"hit", r.case2}, {"partial", r.case3}};
    j["gap_filled_units"] = r.gap_filled_units;
    return j;
}

MetricsReport summarize(const std::vector<ExecutionRecord>& records,
                        const std::vector<GlobalPlan>& plans, int bin_size) {
    if (records.size() != plans.size())
        fail(ErrorClass::precondition, "records and plans must pair up");
    MetricsReport m;
    m.tasks = static_cast<int>(records.size());
    double ser_sum = 0;
    int ser_n = 0;
    for (size_t i = 0; i < records.size(); ++i) {
        if (records[i].outcome == Outcome::SUCCESS) ++m.successes;
        m.mean_completion += completion(records[i], plans[i]);
        m.mean_ticks += static_cast<double>(records[i].ticks);
        if (auto s = ser(records[i])) {
            ser_sum += *s;
            ++ser_n;
        }
    }
    if (m.tasks > 0) {
        m.success_rate = static_cast<double>(m.successes) / m.tasks;
        m.mean_completion /= m.tasks;
        m.mean_ticks /= m.tasks;
    }
    if (ser_n > 0) m.mean_ser = ser_sum / ser_n;
    m.bins = bin_by_length(records, bin_size);
    return m;
}

json metrics_to_json(const MetricsReport& m) {
    json bins = json::array();
    for (const auto& b : m.bins) {
        json jb;
        jb["range"] = {b.lo, b.hi};
        jb["tasks"] = b.tasks;
        jb["successes"] = b.successes;
        jb["success_rate"] = b.success_rate;
        if (b.mean_ser) jb["mean_ser"] = *b.mean_ser;
        jb["mean_ticks"] = b.mean_ticks;
        bins.push_back(std::move(jb));
    }
    json j;
    j["tasks"] = m.tasks;
    j["successes"] = m.successes;
    j["success_rate"] = m.success_rate;
    j["mean_completion"] = m.mean_completion;
    if (m.mean_ser) j["mean_ser"] = *m.mean_ser;
    j["mean_ticks"] = m.mean_ticks;
    j["bins"] = std::move(bins);
    return j;
}

std::string metrics_table(const MetricsReport& m) {
    std::ostringstream os;
    os << "tasks " << m.tasks << "  success " << m.successes << " (" << m.success_rate * 100
       << "%)  completion " << m.mean_completion * 100 << "%";
    if (m.mean_ser) os << "  SER " << *m.mean_ser;
    os << "  ticks " << m.mean_ticks << "\n";
    os << "bin        tasks  success  SER\n";
    for (const auto& b : m.bins) {
        os << "[" << b.lo << "," << b.hi << ")";
        os << std::string(b.hi >= 100 ? 1 : (b.hi >= 10 ? 3 : 5), ' ');
        os << "  " << b.tasks << "      " << b.success_rate * 100 << "%   ";
        if (b.mean_ser) os << *b.mean_ser;
        os << "\n";
    }
    return os.str();
}

}  // namespace tracemind
