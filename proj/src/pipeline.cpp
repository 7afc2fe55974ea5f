#include "tracemind/pipeline.hpp"

namespace tracemind {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
    return p.is_absolute() ? p : base / p;
}

}  // namespace

PipelineConfig default_config(const std::filesystem::path& base_dir) {
    PipelineConfig cfg;
    cfg.alias_map_path = base_dir / "data/alias_map.json";
    cfg.labeler_rules_path = base_dir / "data/labeler_rules.json";
    cfg.templates_path = base_dir / "data/templates.json";
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    json doc = load_document(path, "tracemind_config", 1);
    std::filesystem::path base = path.parent_path();
    PipelineConfig cfg;
    if (doc.contains("provider")) cfg.provider = provider_config_from_json(doc.at("provider"));
    if (doc.contains("encoder")) cfg.encoder = encoder_config_from_json(doc.at("encoder"));
    cfg.train_epochs = doc.value("train_epochs", cfg.train_epochs);
    cfg.train_batch = doc.value("train_batch", cfg.train_batch);
    if (doc.contains("clustering"))
        cfg.clustering = hierarchy_config_from_json(doc.at("clustering"));
    if (doc.contains("skills")) cfg.skills = skill_config_from_json(doc.at("skills"));
    if (doc.contains("planner")) cfg.planner = planner_config_from_json(doc.at("planner"));
    if (doc.contains("executor")) cfg.executor = executor_config_from_json(doc.at("executor"));
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("paths")) {
        const auto& p = doc.at("paths");
        if (p.contains("alias_map"))
            cfg.alias_map_path = resolve(base, p.at("alias_map").get<std::string>());
        if (p.contains("labeler_rules"))
            cfg.labeler_rules_path = resolve(base, p.at("labeler_rules").get<std::string>());
        if (p.contains("templates"))
            cfg.templates_path = resolve(base, p.at("templates").get<std::string>());
    }
    if (doc.contains("bindings")) cfg.binding_rules = doc.at("bindings");
    return cfg;
}

Pipeline Pipeline::open(PipelineConfig cfg) {
    Pipeline p{std::move(cfg), nullptr, {}, {}, {}, {}};
    p.provider = make_provider(p.cfg.provider);
    p.phi = AliasMap::load(p.cfg.alias_map_path);
    p.labeler = RuleLabeler::load(p.cfg.labeler_rules_path);
    p.templates = TemplateLibrary::load(p.cfg.templates_path);
    p.bindings = p.cfg.binding_rules.is_null() ? BindingRules::defaults()
                                               : BindingRules::from_json(p.cfg.binding_rules);
    return p;
}

std::vector<UnitViews> corpus_views(const std::vector<IntentUnit>& units,
                                    EmbeddingProvider& provider) {
    std::vector<UnitViews> out;
    out.reserve(units.size());
    for (const auto& u : units) out.push_back(raw_views(u, provider));
    return out;
}

EncoderParams train_encoder(const std::vector<IntentUnit>& units, Pipeline& pipe) {
    EncoderConfig ecfg = pipe.cfg.encoder;
    ecfg.d_raw = pipe.provider->dimension();
    ecfg.seed = pipe.cfg.seed;
    EncoderParams params = init_encoder(ecfg);
    auto views = corpus_views(units, *pipe.provider);
    int batch = std::min<int>(pipe.cfg.train_batch, static_cast<int>(views.size()));
    train(views, params, pipe.cfg.train_epochs, batch);
    return params;
}

IntentIndex build_index(const std::vector<IntentUnit>& units, UnitEmbedder& embedder,
                        Pipeline& pipe, bool with_skills) {
    std::vector<HierarchyInput> inputs;
    std::map<std::string, Vec> embeddings;
    UnitStore store;
    for (const auto& u : units) {
        HierarchyInput in;
        in.id = u.id;
        if (pipe.cfg.clustering.needs_per_view()) {
            auto per_view = embedder.embed_per_view(u);
            in.z = embedder.embed(u);
            in.per_view = per_view;
        } else {
            in.z = embedder.embed(u);
        }
        embeddings[u.id] = in.z;
        store[u.id] = u;
        inputs.push_back(std::move(in));
    }
    IntentHierarchy h = build_hierarchy(inputs, pipe.cfg.clustering);
    if (with_skills) attach_skills(h, store, pipe.phi, pipe.cfg.skills);
    return IntentIndex(std::move(h), std::move(store), std::move(embeddings));
}

std::vector<SuiteTask> load_suite(const std::filesystem::path& path) {
    json doc = load_document(path, "tracemind_suite", 1);
    std::filesystem::path base = path.parent_path();
    std::vector<SuiteTask> tasks;
    for (const auto& jt : doc.at("tasks")) {
        SuiteTask t;
        t.id = jt.at("id").get<std::string>();
        t.command = jt.at("command").get<std::string>();
        t.scenario_path = resolve(base, jt.at("scenario").get<std::string>());
        tasks.push_back(std::move(t));
    }
    if (tasks.empty()) fail(ErrorClass::validation, "suite has no tasks");
    return tasks;
}

TaskRun run_task(const SuiteTask& task, Planner& planner, const IntentIndex* index,
                 UnitEmbedder* embedder, Pipeline& pipe) {
    TaskRun run;
    run.task = task;
    run.outcome = planner.plan_command(task.command);
    Simulator sim(load_scenario_file(task.scenario_path));
    run.record = run_plan(run.outcome.plan, sim, index, embedder, pipe.templates,
                          pipe.cfg.executor, pipe.cfg.seed);
    return run;
}

SuiteResult run_suite(const std::vector<SuiteTask>& suite, const AblationToggles& toggles,
                      const std::vector<IntentUnit>& corpus, Pipeline& pipe,
                      const EncoderParams* trained) {
    using R = AblationToggles::Retrieval;
    SuiteResult result;
    result.row.label = toggles.label;

    std::optional<EncoderParams> local_params;
    std::unique_ptr<UnitEmbedder> embedder;
    if (toggles.learned_z) {
        if (trained)
            embedder = std::make_unique<LearnedEmbedder>(*trained, *pipe.provider);
        else {
            local_params = train_encoder(corpus, pipe);
            embedder = std::make_unique<LearnedEmbedder>(*local_params, *pipe.provider);
        }
    } else {
        embedder = std::make_unique<RawMeanEmbedder>(*pipe.provider);
    }

    std::optional<IntentIndex> index;
    if (toggles.retrieval != R::none)
        index = build_index(corpus, *embedder, pipe, toggles.skill_hints);

    PlanMemory memory;
    PlannerConfig pcfg = pipe.cfg.planner;
    pcfg.use_skill_hints = toggles.skill_hints;
    pcfg.gate_by_ig = toggles.retrieval == R::gated;

    HintGenerator generator(pipe.templates, pipe.bindings, pipe.phi);
    Planner planner(index ? &*index : nullptr, toggles.plan_memory ? &memory : nullptr,
                    pipe.labeler, generator, *embedder, pipe.phi, pipe.templates, pipe.bindings,
                    pcfg);

    double completion_sum = 0;
    double ser_sum = 0;
    int ser_n = 0;
    for (const auto& task : suite) {
        int calls_before = generator.calls();
        TaskRun run = run_task(task, planner, index ? &*index : nullptr, embedder.get(), pipe);
        run.record.generator_calls = generator.calls() - calls_before;
        switch (run.outcome.decision.decision) {
            case CacheCase::miss: ++result.row.case1; break;
            case CacheCase::hit: ++result.row.case2; break;
            case CacheCase::partial: ++result.row.case3; break;
        }
        for (const auto& u : run.outcome.plan.units)
            if (u.provenance == Provenance::gap_filled) ++result.row.gap_filled_units;
        if (run.record.outcome == Outcome::SUCCESS) {
            ++result.row.successes;
            // Successful execution stands in for user approval in batch runs.
            if (toggles.plan_memory) planner.approve_plan(run.outcome, "approved");
        }
        completion_sum += completion(run.record, run.outcome.plan);
        if (auto s = ser(run.record)) {
            ser_sum += *s;
            ++ser_n;
        }
        result.runs.push_back(std::move(run));
    }
    result.row.tasks = static_cast<int>(suite.size());
    result.row.success_rate =
        result.row.tasks ? static_cast<double>(result.row.successes) / result.row.tasks : 0.0;
    result.row.mean_completion = result.row.tasks ? completion_sum / result.row.tasks : 0.0;
    if (ser_n) result.row.mean_ser = ser_sum / ser_n;
    return result;
}

std::vector<SuiteResult> run_ablation(const std::vector<SuiteTask>& suite,
                                      const std::vector<AblationToggles>& rows,
                                      const std::vector<IntentUnit>& corpus, Pipeline& pipe) {
    std::optional<EncoderParams> trained;
    for (const auto& r : rows)
        if (r.learned_z && !trained) trained = train_encoder(corpus, pipe);
    std::vector<SuiteResult> results;
    for (const auto& r : rows)
        results.push_back(run_suite(suite, r, corpus, pipe, trained ? &*trained : nullptr));
    return results;
}

ConsistencyResult run_consistency(const std::string& command, int runs, double threshold,
                                  double noise_level, uint64_t base_seed, Pipeline& pipe) {
    RawMeanEmbedder embedder(*pipe.provider);
    return step_consistency(
        [&](int run) {
            HintGenerator generator(pipe.templates, pipe.bindings, pipe.phi);
            if (noise_level <= 0) {
                Planner planner(nullptr, nullptr, pipe.labeler, generator, embedder, pipe.phi,
                                pipe.templates, pipe.bindings, pipe.cfg.planner);
                return planner.plan_command(command).plan;
            }
            NoisyLabeler noisy(pipe.labeler, noise_level,
                               base_seed + static_cast<uint64_t>(run) * 7919);
            Planner planner(nullptr, nullptr, noisy, generator, embedder, pipe.phi,
                            pipe.templates, pipe.bindings, pipe.cfg.planner);
            return planner.plan_command(command).plan;
        },
        runs, threshold, *pipe.provider);
}

}  // namespace tracemind
