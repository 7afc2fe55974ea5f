#include <CLI11.hpp>

#include <iostream>
#include <unistd.h>

#include "tracemind/pipeline.hpp"

using namespace tracemind;

namespace {

PipelineConfig resolve_config(const std::string& config_path, uint64_t seed_override,
                              bool has_seed) {
    PipelineConfig cfg;
    if (!config_path.empty())
        cfg = load_config(config_path);
    else
        cfg = default_config(std::filesystem::current_path());
    if (has_seed) {
        cfg.seed = seed_override;
        cfg.encoder.seed = seed_override;
    }
    return cfg;
}

std::vector<IntentUnit> load_units_file(const std::filesystem::path& path) {
    auto parsed = parse_trace_path(path);
    for (const auto& d : parsed.diagnostics)
        std::cerr << path.string() << ": " << d.message << "\n";
    return parsed.units;
}

int prompt_approval(bool auto_approve) {
    if (auto_approve) return 1;
    std::cerr << "approve plan? [y/N] " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line)) return 0;
    return (!line.empty() && (line[0] == 'y' || line[0] == 'Y')) ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trace mining, skill induction, and plan execution against a simulated desktop"};
    app.require_subcommand(1);

    std::string config_path;
    uint64_t seed = 0;
    bool verbose = false;
    app.add_option("--config", config_path, "shared config document");
    auto* seed_opt = app.add_option("--seed", seed, "override the pipeline seed");
    app.add_flag("--verbose", verbose, "chatty progress on stderr");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse trace files into canonical units");
    std::vector<std::string> trace_files;
    std::string ingest_out = "units.jsonl";
    ingest->add_option("traces", trace_files, "trace files (line-delimited records)")->required();
    ingest->add_option("--out", ingest_out, "canonical unit store");

    // train
    auto* train_cmd = app.add_subcommand("train", "train the multi-view encoder");
    std::string train_units, train_out = "checkpoint.json";
    int train_epochs = -1;
    train_cmd->add_option("--units", train_units, "unit store")->required();
    train_cmd->add_option("--out", train_out, "checkpoint path");
    train_cmd->add_option("--epochs", train_epochs, "override configured epochs");

    // cluster
    auto* cluster_cmd = app.add_subcommand("cluster", "build the intent hierarchy index");
    std::string cluster_units, cluster_ckpt, cluster_out = "index.json";
    cluster_cmd->add_option("--units", cluster_units, "unit store")->required();
    cluster_cmd->add_option("--checkpoint", cluster_ckpt, "encoder checkpoint (raw mean otherwise)");
    cluster_cmd->add_option("--out", cluster_out, "index document");

    // skills
    auto* skills_cmd = app.add_subcommand("skills", "induce skill hints into an index");
    std::string skills_index, skills_out;
    skills_cmd->add_option("--index", skills_index, "index document")->required();
    skills_cmd->add_option("--out", skills_out, "output path (defaults to --index)");

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "plan a command (cache-first)");
    std::string plan_command_text, plan_index, plan_memory_path, plan_ckpt;
    std::string plan_labeler = "rule", plan_generator = "hint";
    std::string plan_labeler_endpoint, plan_generator_endpoint, plan_out;
    bool auto_approve = false;
    plan_cmd->add_option("command", plan_command_text, "natural-language command")->required();
    plan_cmd->add_flag("--auto-approve", auto_approve, "store without prompting");
    plan_cmd->add_option("--index", plan_index, "intent index document");
    plan_cmd->add_option("--memory", plan_memory_path, "plan memory document");
    plan_cmd->add_option("--checkpoint", plan_ckpt, "encoder checkpoint");
    plan_cmd->add_option("--labeler", plan_labeler, "rule|http")
        ->check(CLI::IsMember({"rule", "http"}));
    plan_cmd->add_option("--generator", plan_generator, "hint|http")
        ->check(CLI::IsMember({"hint", "http"}));
    plan_cmd->add_option("--labeler-endpoint", plan_labeler_endpoint, "http labeler endpoint");
    plan_cmd->add_option("--generator-endpoint", plan_generator_endpoint, "http generator endpoint");
    plan_cmd->add_option("--out", plan_out, "write the plan document here");

    // run
    auto* run_cmd = app.add_subcommand("run", "execute a plan against a scenario");
    std::string run_plan_path, run_scenario, run_record, run_index, run_ckpt;
    int run_max_retries = -1;
    bool run_timings = false;
    run_cmd->add_option("--plan", run_plan_path, "plan document")->required();
    run_cmd->add_option("--scenario", run_scenario, "scenario document")->required();
    run_cmd->add_option("--record", run_record, "write the execution record here");
    run_cmd->add_option("--index", run_index, "intent index for hint injection");
    run_cmd->add_option("--checkpoint", run_ckpt, "encoder checkpoint for hint embedding");
    run_cmd->add_option("--max-retries", run_max_retries, "override the retry bound");
    run_cmd->add_flag("--timings", run_timings, "include measured wall time in the record");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "run a task suite under ablation rows");
    std::string eval_suite, eval_rowspec = "all", eval_out = "report.json", eval_corpus;
    bool eval_table = false;
    eval_cmd->add_option("--suite", eval_suite, "suite document")->required();
    eval_cmd->add_option("--corpus", eval_corpus, "trace corpus for index building");
    eval_cmd->add_option("--rows", eval_rowspec, "row label or 'all'");
    eval_cmd->add_option("--out", eval_out, "report path");
    eval_cmd->add_flag("--table", eval_table, "print a plain-text table");

    // inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "summarize any artifact document");
    std::string inspect_path;
    inspect_cmd->add_option("path", inspect_path, "document to summarize")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        PipelineConfig cfg = resolve_config(config_path, seed, seed_opt->count() > 0);

        if (*ingest) {
            std::vector<IntentUnit> all;
            std::vector<ParseDiagnostic> diags;
            for (const auto& f : trace_files) {
                auto parsed = parse_trace_path(f);
                for (const auto& d : parsed.diagnostics)
                    std::cerr << f << ": " << d.message << "\n";
                Pipeline pipe = Pipeline::open(cfg);
                for (auto& u : parsed.units) {
                    for (auto& a : u.actions) a = canonicalize_action(a, pipe.phi);
                    all.push_back(std::move(u));
                }
            }
            write_file_atomic(ingest_out, serialize_units(all));
            std::cerr << "wrote " << all.size() << " units to " << ingest_out << "\n";
        } else if (*train_cmd) {
            if (train_epochs >= 0) cfg.train_epochs = train_epochs;
            Pipeline pipe = Pipeline::open(cfg);
            auto units = load_units_file(train_units);
            EncoderParams params = train_encoder(units, pipe);
            save_checkpoint(params, train_out);
            std::cerr << "checkpoint written to " << train_out << "\n";
        } else if (*cluster_cmd) {
            Pipeline pipe = Pipeline::open(cfg);
            auto units = load_units_file(cluster_units);
            std::optional<EncoderParams> params;
            std::unique_ptr<UnitEmbedder> embedder;
            if (!cluster_ckpt.empty()) {
                params = load_checkpoint(cluster_ckpt);
                embedder = std::make_unique<LearnedEmbedder>(*params, *pipe.provider);
            } else {
                embedder = std::make_unique<RawMeanEmbedder>(*pipe.provider);
            }
            IntentIndex index = build_index(units, *embedder, pipe, /*with_skills=*/false);
            index.save(cluster_out);
            std::cerr << "index with " << index.hierarchy().groups.size() << " intent groups, "
                      << index.hierarchy().sg_count() << " subgroups -> " << cluster_out << "\n";
        } else if (*skills_cmd) {
            Pipeline pipe = Pipeline::open(cfg);
            IntentIndex index = IntentIndex::load(skills_index);
            attach_skills(index.hierarchy(), index.units(), pipe.phi, pipe.cfg.skills);
            index.rebuild_cache();
            index.save(skills_out.empty() ? skills_index : skills_out);
            std::cerr << "skill hints attached\n";
        } else if (*plan_cmd) {
            Pipeline pipe = Pipeline::open(cfg);
            std::optional<IntentIndex> index;
            if (!plan_index.empty()) index = IntentIndex::load(plan_index);
            PlanMemory memory;
            if (!plan_memory_path.empty() && std::filesystem::exists(plan_memory_path))
                memory = PlanMemory::load(plan_memory_path);
            std::optional<EncoderParams> params;
            std::unique_ptr<UnitEmbedder> embedder;
            if (!plan_ckpt.empty()) {
                params = load_checkpoint(plan_ckpt);
                embedder = std::make_unique<LearnedEmbedder>(*params, *pipe.provider);
            } else {
                embedder = std::make_unique<RawMeanEmbedder>(*pipe.provider);
            }
            std::unique_ptr<Labeler> http_labeler;
            Labeler* labeler = &pipe.labeler;
            if (plan_labeler == "http") {
                http_labeler = std::make_unique<HttpLabeler>(plan_labeler_endpoint);
                labeler = http_labeler.get();
            }
            HintGenerator hint_gen(pipe.templates, pipe.bindings, pipe.phi);
            std::unique_ptr<HttpGenerator> http_gen;
            StepGenerator* generator = &hint_gen;
            if (plan_generator == "http") {
                http_gen = std::make_unique<HttpGenerator>(plan_generator_endpoint, pipe.phi);
                generator = http_gen.get();
            }
            Planner planner(index ? &*index : nullptr, &memory, *labeler, *generator, *embedder,
                            pipe.phi, pipe.templates, pipe.bindings, pipe.cfg.planner);
            PlanOutcome outcome = planner.plan_command(plan_command_text);
            json result;
            result["decision"] = cache_decision_to_json(outcome.decision);
            result["labeling"] = outcome.labeling.render();
            result["plan"] = plan_to_json(outcome.plan);
            if (outcome.active_ig) result["active_ig"] = *outcome.active_ig;
            std::cout << result.dump(2) << "\n";
            if (!plan_out.empty()) save_plan(outcome.plan, plan_out);
            if (!plan_memory_path.empty()) {
                if (prompt_approval(auto_approve)) {
                    planner.approve_plan(outcome, "approved");
                    memory.save(plan_memory_path);
                    std::cerr << "plan approved and stored\n";
                } else {
                    std::cerr << "plan rejected and discarded\n";
                }
            }
        } else if (*run_cmd) {
            Pipeline pipe = Pipeline::open(cfg);
            if (run_max_retries >= 0) pipe.cfg.executor.max_retries = run_max_retries;
            GlobalPlan plan = load_plan(run_plan_path);
            Simulator sim(load_scenario_file(run_scenario));
            std::optional<IntentIndex> index;
            std::optional<EncoderParams> params;
            std::unique_ptr<UnitEmbedder> embedder;
            if (!run_index.empty()) {
                index = IntentIndex::load(run_index);
                if (!run_ckpt.empty()) {
                    params = load_checkpoint(run_ckpt);
                    embedder = std::make_unique<LearnedEmbedder>(*params, *pipe.provider);
                } else {
                    embedder = std::make_unique<RawMeanEmbedder>(*pipe.provider);
                }
            }
            ExecutionRecord record =
                run_plan(plan, sim, index ? &*index : nullptr, embedder.get(), pipe.templates,
                         pipe.cfg.executor, pipe.cfg.seed);
            std::cout << record_to_json(record, run_timings).dump(2) << "\n";
            if (!run_record.empty()) save_record(record, run_record, run_timings);
            if (record.outcome != Outcome::SUCCESS) return 2;
        } else if (*eval_cmd) {
            Pipeline pipe = Pipeline::open(cfg);
            auto suite = load_suite(eval_suite);
            std::vector<IntentUnit> corpus;
            if (!eval_corpus.empty()) corpus = load_units_file(eval_corpus);
            std::vector<AblationToggles> rows;
            if (eval_rowspec == "all")
                rows = ablation_rows();
            else
                rows = {ablation_row(eval_rowspec)};
            auto results = run_ablation(suite, rows, corpus, pipe);
            json report;
            json jrows = json::array();
            for (const auto& r : results) {
                jrows.push_back(ablation_row_to_json(r.row));
                std::cerr << r.row.label << ": success " << r.row.success_rate * 100
                          << "% completion " << r.row.mean_completion * 100 << "%\n";
            }
            report["rows"] = std::move(jrows);
            store_document(eval_out, "tracemind_report", 1, std::move(report));
            if (eval_table) {
                for (const auto& r : results) {
                    std::vector<GlobalPlan> plans;
                    std::vector<ExecutionRecord> records;
                    for (const auto& run : r.runs) {
                        plans.push_back(run.outcome.plan);
                        records.push_back(run.record);
                    }
                    std::cout << "== " << r.row.label << " ==\n"
                              << metrics_table(summarize(records, plans)) << "\n";
                }
            }
        } else if (*inspect_cmd) {
            std::string text = read_file(inspect_path);
            json doc = json::parse(text, nullptr, false);
            if (doc.is_discarded() || !doc.is_object() || !doc.contains("format")) {
                // Maybe a unit store (line-delimited records).
                auto parsed = parse_trace_file(text);
                std::cout << "unit store: " << parsed.units.size() << " units, "
                          << parsed.diagnostics.size() << " diagnostics\n";
                return 0;
            }
            std::string format = doc.at("format").get<std::string>();
            std::cout << format << " v" << doc.value("version", 0) << "\n";
            if (format == "tracemind_index") {
                IntentIndex index = IntentIndex::load(inspect_path);
                for (const auto& g : index.hierarchy().groups) {
                    std::cout << "IG " << g.id << (g.unassigned ? " (unassigned)" : "") << ": "
                              << g.member_ids.size() << " units\n";
                    for (const auto& sg : g.subgroups) {
                        std::cout << "  SG " << sg.id << ": " << sg.member_ids.size()
                                  << " units, support " << sg.support;
                        if (!sg.hints.empty()) {
                            std::cout << ", top hint [";
                            for (size_t i = 0; i < sg.hints[0].verbs.size(); ++i)
                                std::cout << (i ? " " : "") << sg.hints[0].verbs[i];
                            std::cout << "]";
                        }
                        std::cout << "\n";
                    }
                }
            } else if (format == "tracemind_plan_memory") {
                PlanMemory mem = PlanMemory::load(inspect_path);
                for (const auto& e : mem.entries())
                    std::cout << "plan " << e.plan_id.substr(0, 12) << " ig=" << e.ig_id << " \""
                              << e.command << "\" (" << e.plan.units.size() << " units)\n";
            } else if (format == "tracemind_record") {
                ExecutionRecord r = load_record(inspect_path);
                std::cout << to_string(r.outcome) << " steps " << r.steps_successful << "/"
                          << r.steps_attempted << " retries " << r.retries << " ticks " << r.ticks
                          << "\n";
            } else {
                std::cout << doc.dump(2).substr(0, 2000) << "\n";
            }
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error:" << to_string(e.cls()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error:internal: " << e.what() << "\n";
        return 1;
    }
}
