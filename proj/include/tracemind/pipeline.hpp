#pragma once

#include "tracemind/eval.hpp"

namespace tracemind {

struct PipelineConfig {
    ProviderConfig provider;
    EncoderConfig encoder;
    int train_epochs = 30;
    int train_batch = 16;
    HierarchyConfig clustering;
    SkillConfig skills;
    PlannerConfig planner;
    ExecutorConfig executor;
    uint64_t seed = 0;
    std::filesystem::path alias_map_path = "data/alias_map.json";
    std::filesystem::path labeler_rules_path = "data/labeler_rules.json";
    std::filesystem::path templates_path = "data/templates.json";
    json binding_rules;  // optional override
};

// Loads the shared config document; relative paths resolve against the
// config file's directory. Missing keys keep their defaults.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig default_config(const std::filesystem::path& base_dir);

// Long-lived pieces shared by every stage: provider, alias map, labeler,
// templates, binding rules.
struct Pipeline {
    PipelineConfig cfg;
    std::unique_ptr<EmbeddingProvider> provider;
    AliasMap phi;
    RuleLabeler labeler;
    TemplateLibrary templates;
    BindingRules bindings;

    static Pipeline open(PipelineConfig cfg);
};

// Per-unit raw view embeddings for the whole corpus, in corpus order.
std::vector<UnitViews> corpus_views(const std::vector<IntentUnit>& units,
                                    EmbeddingProvider& provider);

// Trains the encoder on a trace corpus with the configured schedule.
EncoderParams train_encoder(const std::vector<IntentUnit>& units, Pipeline& pipe);

// Embeds, clusters, and induces skills; returns the finished retrieval index.
IntentIndex build_index(const std::vector<IntentUnit>& units, UnitEmbedder& embedder,
                        Pipeline& pipe, bool with_skills = true);

// --- task suites -------------------------------------------------------------------

struct SuiteTask {
    std::string id;
    std::string command;
    std::filesystem::path scenario_path;
};

std::vector<SuiteTask> load_suite(const std::filesystem::path& path);

struct TaskRun {
    SuiteTask task;
    PlanOutcome outcome;
    ExecutionRecord record;
};

// Executes one command against one scenario with the given stack.
TaskRun run_task(const SuiteTask& task, Planner& planner, const IntentIndex* index,
                 UnitEmbedder* embedder, Pipeline& pipe);

// Runs a whole suite under one ablation row. Plan memory, when enabled,
// accumulates within the suite: plans whose execution succeeded are approved
// and stored for later tasks.
struct SuiteResult {
    AblationRow row;
    std::vector<TaskRun> runs;
};

SuiteResult run_suite(const std::vector<SuiteTask>& suite, const AblationToggles& toggles,
                      const std::vector<IntentUnit>& corpus, Pipeline& pipe,
                      const EncoderParams* trained);

// All six rows with shared seeds and a shared trained encoder.
std::vector<SuiteResult> run_ablation(const std::vector<SuiteTask>& suite,
                                      const std::vector<AblationToggles>& rows,
                                      const std::vector<IntentUnit>& corpus, Pipeline& pipe);

// Plans one command `runs` times through a template-only planner whose
// labeler is perturbed with seeded noise (level 0 keeps it deterministic),
// then scores step consistency at the given cosine threshold.
ConsistencyResult run_consistency(const std::string& command, int runs, double threshold,
                                  double noise_level, uint64_t base_seed, Pipeline& pipe);

}  // namespace tracemind
