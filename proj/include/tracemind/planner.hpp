#pragma once

#include "tracemind/encoder.hpp"
#include "tracemind/memory.hpp"

namespace tracemind {

struct TaskUnit {
    std::vector<std::string> env_labels;
    std::vector<std::string> act_labels;  // at least one
    std::string desc;
};

struct CommandLabeling {
    std::vector<TaskUnit> units;
    std::string raw_command;

    // Collapsed "ENV[...], ACT[...]" rendering in task-unit order.
    std::string render() const;
    std::vector<std::string> all_acts() const;
    std::vector<std::string> all_envs() const;
};

class Labeler {
public:
    virtual ~Labeler() = default;
    virtual CommandLabeling label(const std::string& command) = 0;
};

// Deterministic keyword/regex labeler driven by a rules document.
class RuleLabeler : public Labeler {
public:
    static RuleLabeler load(const std::filesystem::path& path);
    static RuleLabeler from_json(const json& doc);
    CommandLabeling label(const std::string& command) override;

private:
    struct Rule {
        std::string id;
        std::string trigger;  // ECMAScript regex, case-insensitive
        std::string act;      // may contain {1} for the first capture
        std::string env;
        std::string desc;
        std::vector<json> implies;  // inline {act, env, desc} units inserted before
    };
    std::vector<Rule> rules_;
};

// Wraps another labeler and perturbs task units with seeded noise; used by
// the consistency protocol. Each run should use a distinct run_seed.
class NoisyLabeler : public Labeler {
public:
    NoisyLabeler(Labeler& inner, double noise_level, uint64_t run_seed)
        : inner_(inner), noise_(noise_level), seed_(run_seed) {}
    CommandLabeling label(const std::string& command) override;

private:
    Labeler& inner_;
    double noise_;
    uint64_t seed_;
};

// Remote labeler: POST {"command": ...} -> {"units":[{env:[],act:[],desc}]}.
class HttpLabeler : public Labeler {
public:
    explicit HttpLabeler(std::string endpoint) : endpoint_(std::move(endpoint)) {}
    CommandLabeling label(const std::string& command) override;

private:
    std::string endpoint_;
};

struct IntentPrototype {
    Vec z;                          // whole-command embedding
    std::vector<Vec> slot_z;        // one per task unit
    std::vector<std::string> slot_labels;
    std::vector<std::string> slot_descs;
};

enum class CacheCase { miss, hit, partial };
const char* to_string(CacheCase c);

struct CacheDecision {
    CacheCase decision = CacheCase::miss;
    std::string plan_id;    // hit/partial
    double score = 0;
    std::vector<std::string> missing_acts;  // partial: 1..max_missing_acts
};

json cache_decision_to_json(const CacheDecision& d);

// Per-placeholder-type extraction rules applied to the raw command.
struct BindingRules {
    std::map<std::string, std::vector<std::string>> patterns;  // type -> regexes (first capture wins)

    static BindingRules defaults();
    static BindingRules from_json(const json& j);
    std::optional<std::string> extract(FieldType type, const std::string& command) const;
};

// Default step templates: act-level (planner synthesis without retrieval)
// and verb-level (executor expansion).
struct TemplateLibrary {
    struct ActTemplate {
        std::string pattern;  // regex over the act label; {1} binds the capture
        std::vector<PlanStep> steps;
    };
    std::vector<ActTemplate> acts;
    std::map<std::string, std::vector<std::vector<PlanStep>>> verb_variants;

    static TemplateLibrary load(const std::filesystem::path& path);
    static TemplateLibrary from_json(const json& doc);
    std::optional<std::vector<PlanStep>> steps_for_act(const std::string& act_label) const;
    const std::vector<std::vector<PlanStep>>* variants_for_verb(const std::string& verb) const;
};

// Produces a plan unit's steps for one slot. Implementations must count
// invocations so reuse paths can assert zero calls.
class StepGenerator {
public:
    virtual ~StepGenerator() = default;
    struct SlotContext {
        std::string slot_label;
        std::string desc;
        std::string command;
    };
    virtual std::vector<PlanStep> generate(const SlotContext& ctx,
                                           const std::vector<IntentUnit>& retrieved,
                                           const SkillHint* hint) = 0;
    int calls() const { return calls_; }
    void reset_calls() { calls_ = 0; }

protected:
    int calls_ = 0;
};

// Deterministic built-in generator: splices the skill hint (placeholders
// bound from the command), falls back to retrieved traces, then to act
// templates.
class HintGenerator : public StepGenerator {
public:
    HintGenerator(const TemplateLibrary& templates, const BindingRules& bindings,
                  const AliasMap& phi)
        : templates_(templates), bindings_(bindings), phi_(phi) {}
    std::vector<PlanStep> generate(const SlotContext& ctx,
                                   const std::vector<IntentUnit>& retrieved,
                                   const SkillHint* hint) override;

private:
    const TemplateLibrary& templates_;
    const BindingRules& bindings_;
    const AliasMap& phi_;
};

// Remote generator: POST slot context + exemplars, expect {"steps":[...]}.
class HttpGenerator : public StepGenerator {
public:
    HttpGenerator(std::string endpoint, const AliasMap& phi)
        : endpoint_(std::move(endpoint)), phi_(phi) {}
    std::vector<PlanStep> generate(const SlotContext& ctx,
                                   const std::vector<IntentUnit>& retrieved,
                                   const SkillHint* hint) override;

private:
    std::string endpoint_;
    const AliasMap& phi_;
};

struct PlannerConfig {
    double hit_threshold = 0.95;
    double partial_threshold = 0.80;
    int max_missing_acts = 2;
    int top_k_units = 2;
    bool use_skill_hints = true;     // S_SG toggle
    bool gate_by_ig = true;          // gated vs greedy retrieval
};

PlannerConfig planner_config_from_json(const json& j);

// Embeds units/pseudo-units into the retrieval space: the learned encoder by
// default, or the mean of raw view embeddings for the representation-off
// ablation.
class UnitEmbedder {
public:
    virtual ~UnitEmbedder() = default;
    virtual Vec embed(const IntentUnit& unit) = 0;
    // Raw per-view vectors in slot order; per-pass reweighted clustering
    // mixes these, while centroids and retrieval stay in embed() space.
    virtual std::array<Vec, kNumSlots> embed_per_view(const IntentUnit& unit) = 0;
    virtual int dim() const = 0;
};

class LearnedEmbedder : public UnitEmbedder {
public:
    LearnedEmbedder(const EncoderParams& params, EmbeddingProvider& provider)
        : params_(params), provider_(provider) {}
    Vec embed(const IntentUnit& unit) override { return encode_unit(unit, params_, provider_).z; }
    std::array<Vec, kNumSlots> embed_per_view(const IntentUnit& unit) override {
        return raw_views(unit, provider_);
    }
    int dim() const override { return params_.cfg.dim; }

private:
    const EncoderParams& params_;
    EmbeddingProvider& provider_;
};

class RawMeanEmbedder : public UnitEmbedder {
public:
    explicit RawMeanEmbedder(EmbeddingProvider& provider) : provider_(provider) {}
    Vec embed(const IntentUnit& unit) override;
    std::array<Vec, kNumSlots> embed_per_view(const IntentUnit& unit) override {
        return raw_views(unit, provider_);
    }
    int dim() const override { return provider_.dimension(); }

private:
    EmbeddingProvider& provider_;
};

struct PlanOutcome {
    GlobalPlan plan;
    CacheDecision decision;
    std::optional<int> active_ig;
    IntentPrototype prototype;
    CommandLabeling labeling;
};

class Planner {
public:
    Planner(const IntentIndex* index, PlanMemory* memory, Labeler& labeler,
            StepGenerator& generator, UnitEmbedder& embedder, const AliasMap& phi,
            const TemplateLibrary& templates, const BindingRules& bindings,
            PlannerConfig cfg = {});

    CommandLabeling label_command(const std::string& command);
    IntentPrototype build_prototype(const CommandLabeling& labeling);
    CacheDecision classify_case(const IntentPrototype& proto, const CommandLabeling& labeling,
                                std::optional<int> active_ig) const;
    GlobalPlan synthesize_plan(const IntentPrototype& proto, const CommandLabeling& labeling,
                               std::optional<int> active_ig);
    GlobalPlan reuse_plan(const std::string& plan_id, const std::string& command) const;
    GlobalPlan gap_fill(const std::string& plan_id, const std::vector<std::string>& missing_acts,
                        const CommandLabeling& labeling, const IntentPrototype& proto,
                        std::optional<int> active_ig);

    // Full Case 1/2/3 dispatch for a command.
    PlanOutcome plan_command(const std::string& command);

    // Approved plans are stored (and become retrievable); rejected plans are
    // discarded. Returns true when stored.
    bool approve_plan(const PlanOutcome& outcome, const std::string& decision);

    const PlannerConfig& config() const { return cfg_; }

private:
    Vec embed_pseudo_unit(const std::string& env, const std::string& act,
                          const std::string& desc);
    std::vector<PlanStep> bind_placeholders(std::vector<PlanStep> steps,
                                            const std::string& command) const;
    PlanUnit fill_unit_from_sg(int sg_id, const std::string& act, const std::string& desc,
                               const std::string& command);

    const IntentIndex* index_;
    PlanMemory* memory_;
    Labeler& labeler_;
    StepGenerator& generator_;
    UnitEmbedder& embedder_;
    const AliasMap& phi_;
    const TemplateLibrary& templates_;
    const BindingRules& bindings_;
    PlannerConfig cfg_;
};

}  // namespace tracemind
