#pragma once

#include "tracemind/planner.hpp"
#include "tracemind/sim.hpp"

namespace tracemind {

struct Hint {
    bool empty = true;
    int sg_id = -1;
    double score = 0;
    std::vector<IntentUnit> traces;       // representative traces of the matched subgroup
    std::vector<SkillHint> skill_hints;

    // Component labels named by the hint's traces/skills; used to break
    // grounding ties toward historically used targets.
    std::vector<std::string> known_targets() const;
};

enum class Verdict { success, retryable, blocked };
const char* to_string(Verdict v);

struct CriticVerdict {
    Verdict q = Verdict::success;
    std::string observation;
};

struct StepLogEntry {
    int unit_index = 0;
    int step_index = 0;     // index within the plan unit; -1 for recovery actions
    std::string plan_step;  // rendered plan-level step
    std::string action;     // rendered concrete action
    std::string target_id;
    bool applied = false;
    std::string reason;
};

struct UnitLogEntry {
    int unit_index = 0;
    std::string slot_label;
    std::vector<std::string> verdicts;
    int retries = 0;
    bool reached_success = false;
};

enum class Outcome { SUCCESS, BLOCKED };
const char* to_string(Outcome o);

struct ExecutionRecord {
    Outcome outcome = Outcome::BLOCKED;
    std::string plan_id;
    std::string scenario;
    uint64_t seed = 0;
    int steps_attempted = 0;
    int steps_successful = 0;  // applied actions inside units that reached success
    int retries = 0;
    int generator_calls = 0;
    int plan_steps_total = 0;
    int plan_steps_executed = 0;  // distinct plan-level steps whose expansion ran
    long ticks = 0;
    std::vector<StepLogEntry> steps;
    std::vector<UnitLogEntry> units;
    std::string diagnostic;
    // Measured wall time per phase; excluded from the canonical serialization
    // so replays stay byte-identical.
    std::map<std::string, double> wall_ms;
};

json record_to_json(const ExecutionRecord& r, bool include_timings = false);
ExecutionRecord record_from_json(const json& j);
void save_record(const ExecutionRecord& r, const std::filesystem::path& path,
                 bool include_timings = false);
ExecutionRecord load_record(const std::filesystem::path& path);

struct ExecutorConfig {
    int max_retries = 3;
    double relevance_floor = 0.3;  // below this cosine, hints stay empty
};

ExecutorConfig executor_config_from_json(const json& j);

// Nearest-subgroup hint for a plan unit, or an empty hint below the floor.
Hint inject_hint(const PlanUnit& pu, const IntentIndex* index, const Vec& z_pu,
                 double relevance_floor);

struct OptimizedStep {
    ConcreteAction first;                  // the action a
    std::vector<ConcreteAction> expanded;  // the full actionable sequence g'
    std::string observation;
};

// Expands a plan step through the verb template library and resolves targets
// against the grounded screen. Error{not_found} lists the candidates when no
// target resolves. Hint targets win label ties.
OptimizedStep optimize_step(const ScreenState& s, const PlanStep& g, const GlobalPlan& G,
                            const PlanUnit& pu, const std::string& observation, const Hint& hint,
                            const TemplateLibrary& templates);

StepResult execute_action(const ConcreteAction& a, Simulator& sim);

// Ordered rule checks: unit postcondition, expected focus, next unit's first
// target. Hard stop or an unknown focused window blocks.
CriticVerdict critic_eval(const PlanUnit& pu, const GlobalPlan& G, const ScreenState& s_after,
                          const Simulator& sim, const PlanUnit* next_unit,
                          const TemplateLibrary& templates);

// The full execution loop: per unit inject the hint, optimize and execute
// each step, then gate on the critic; retryable triggers a re-optimization
// on the post state, at most max_retries times per unit.
ExecutionRecord run_plan(const GlobalPlan& plan, Simulator& sim, const IntentIndex* index,
                         UnitEmbedder* embedder, const TemplateLibrary& templates,
                         const ExecutorConfig& cfg, uint64_t seed = 0);

}  // namespace tracemind
