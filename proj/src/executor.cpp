#include "tracemind/executor.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>

namespace tracemind {

namespace {

std::string lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

std::string render_plan_step(const PlanStep& g) {
    std::string s = g.verb;
    if (!g.object.empty()) s += "(" + g.object + ")";
    if (!g.text.empty()) s += " \"" + g.text + "\"";
    return s;
}

}  // namespace

std::vector<std::string> Hint::known_targets() const {
    std::vector<std::string> out;
    auto add = [&](const std::string& label) {
        if (label.empty()) return;
        if (std::find(out.begin(), out.end(), label) == out.end()) out.push_back(label);
    };
    for (const auto& u : traces)
        for (const auto& a : u.actions) add(a.object);
    for (const auto& h : skill_hints)
        for (const auto& a : h.steps) add(a.object);
    return out;
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::success: return "success";
        case Verdict::retryable: return "retryable";
        case Verdict::blocked: return "blocked";
    }
    return "?";
}

const char* to_string(Outcome o) { return o == Outcome::SUCCESS ? "SUCCESS" : "BLOCKED"; }

ExecutorConfig executor_config_from_json(const json& j) {
    ExecutorConfig c;
    c.max_retries = j.value("max_retries", c.max_retries);
    c.relevance_floor = j.value("relevance_floor", c.relevance_floor);
    return c;
}

Hint inject_hint(const PlanUnit& pu, const IntentIndex* index, const Vec& z_pu,
                 double relevance_floor) {
    (void)pu;
    Hint hint;
    if (!index || index->empty()) return hint;
    auto ranked = index->query_sg(std::nullopt, z_pu, 1);
    if (ranked.empty() || ranked[0].score < relevance_floor) return hint;
    const SubGroup* sg = index->find_sg(ranked[0].sg_id);
    if (!sg) return hint;
    hint.empty = false;
    hint.sg_id = sg->id;
    hint.score = ranked[0].score;
    for (const auto& rep : sg->representative_ids) {
        auto it = index->units().find(rep);
        if (it != index->units().end()) hint.traces.push_back(it->second);
    }
    hint.skill_hints = sg->hints;
    return hint;
}

namespace {

struct Resolution {
    const ScreenState::GroundedComponent* component = nullptr;
    std::string considered;  // candidate labels, for the error message
};

// Exact label/id match first, then normalized substring; hint targets break
// ties toward historically used components.
Resolution resolve_target(const ScreenState& s, const std::string& raw_target, const Hint& hint) {
    Resolution r;
    std::string role_filter;
    std::string want = raw_target;
    auto colon = raw_target.find(':');
    if (colon != std::string::npos && colon > 0) {
        role_filter = lower(raw_target.substr(0, colon));
        want = raw_target.substr(colon + 1);
    }
    std::string want_lc = lower(want);
    auto actionable = s.actionable();
    std::vector<const ScreenState::GroundedComponent*> pool;
    for (const auto* c : actionable) {
        if (!role_filter.empty() && lower(c->role) != role_filter) continue;
        pool.push_back(c);
        if (!r.considered.empty()) r.considered += ", ";
        r.considered += c->label;
    }
    std::vector<const ScreenState::GroundedComponent*> exact, partial;
    for (const auto* c : pool) {
        std::string label_lc = lower(c->label);
        if (c->id == want || label_lc == want_lc)
            exact.push_back(c);
        else if (label_lc.find(want_lc) != std::string::npos ||
                 want_lc.find(label_lc) != std::string::npos)
            partial.push_back(c);
    }
    const auto& bucket = !exact.empty() ? exact : partial;
    if (bucket.empty()) return r;
    if (bucket.size() == 1) {
        r.component = bucket[0];
        return r;
    }
    for (const auto& hinted : hint.known_targets())
        for (const auto* c : bucket)
            if (lower(c->label) == lower(hinted)) {
                r.component = c;
                return r;
            }
    r.component = bucket[0];
    return r;
}

std::optional<std::string> resolve_window(const ScreenState& s, const std::string& name) {
    std::string want = lower(name);
    for (const auto& w : s.windows)
        if (w.id == name || lower(w.title) == want) return w.id;
    for (const auto& w : s.windows)
        if (lower(w.title).find(want) != std::string::npos) return w.id;
    return std::nullopt;
}

bool needs_target(const std::string& verb) {
    return verb != "enter" && verb != "hotkey" && verb != "wait" && verb != "switch_focus";
}

std::string substitute(std::string s, const PlanStep& g) {
    auto replace_all = [&](const std::string& token, const std::string& value) {
        size_t pos;
        while ((pos = s.find(token)) != std::string::npos) s.replace(pos, token.size(), value);
    };
    replace_all("{target}", g.object);
    replace_all("{text}", g.text);
    return s;
}

}  // namespace

OptimizedStep optimize_step(const ScreenState& s, const PlanStep& g, const GlobalPlan& G,
                            const PlanUnit& pu, const std::string& observation, const Hint& hint,
                            const TemplateLibrary& templates) {
    (void)G;
    (void)pu;
    OptimizedStep out;

    // Corrective re-invocation: a focus mismatch observation maps directly to
    // a focus switch on the expected window.
    if (observation.rfind("focus: expected=", 0) == 0) {
        std::string rest = observation.substr(std::string("focus: expected=").size());
        std::string wid = rest.substr(0, rest.find(' '));
        ConcreteAction a;
        a.verb = "switch_focus";
        a.window_id = wid;
        a.target_label = wid;
        out.first = a;
        out.expanded = {a};
        out.observation = "recovery: switching focus to " + wid;
        return out;
    }

    std::vector<std::vector<PlanStep>> variants;
    if (const auto* v = templates.variants_for_verb(g.verb)) {
        for (const auto& variant : *v) {
            std::vector<PlanStep> steps;
            for (PlanStep step : variant) {
                step.object = substitute(step.object, g);
                step.text = substitute(step.text, g);
                steps.push_back(std::move(step));
            }
            variants.push_back(std::move(steps));
        }
    } else {
        variants.push_back({g});
    }

    std::string last_failure;
    for (const auto& variant : variants) {
        std::vector<ConcreteAction> actions;
        bool ok = true;
        for (const auto& step : variant) {
            ConcreteAction a;
            a.verb = step.verb;
            a.text = step.text;
            if (step.verb == "switch_focus") {
                auto wid = resolve_window(s, step.object);
                if (!wid) {
                    ok = false;
                    last_failure = "no window matches '" + step.object + "'";
                    break;
                }
                a.window_id = *wid;
                a.target_label = step.object;
            } else if (needs_target(step.verb) && !step.object.empty()) {
                Resolution r = resolve_target(s, step.object, hint);
                if (!r.component) {
                    ok = false;
                    last_failure = "unresolvable target '" + step.object +
                                   "'; candidates considered: [" + r.considered + "]";
                    break;
                }
                a.target_id = r.component->id;
                a.target_label = r.component->label;
            }
            actions.push_back(std::move(a));
        }
        if (ok && !actions.empty()) {
            out.first = actions.front();
            out.expanded = std::move(actions);
            out.observation = "ok";
            return out;
        }
    }
    fail(ErrorClass::not_found,
         last_failure.empty() ? "step '" + render_plan_step(g) + "' expanded to nothing"
                              : last_failure);
}

StepResult execute_action(const ConcreteAction& a, Simulator& sim) { return sim.apply(a); }

CriticVerdict critic_eval(const PlanUnit& pu, const GlobalPlan& G, const ScreenState& s_after,
                          const Simulator& sim, const PlanUnit* next_unit,
                          const TemplateLibrary& templates) {
    if (sim.hard_stop()) return {Verdict::blocked, "hard stop flag set"};
    if (!s_after.focused_window_id.empty() &&
        !sim.scenario().known_windows.count(s_after.focused_window_id))
        return {Verdict::blocked, "unknown window '" + s_after.focused_window_id + "' focused"};

    const auto& posts = sim.scenario().postconditions;
    auto it = posts.find(pu.slot_label);
    if (it != posts.end()) {
        for (const auto& predicate : it->second.require)
            if (!sim.holds(predicate))
                return {Verdict::retryable, "postcondition " + predicate.dump() + " unmet"};
        if (!it->second.expected_focus.empty() &&
            s_after.focused_window_id != it->second.expected_focus)
            return {Verdict::retryable, "focus: expected=" + it->second.expected_focus +
                                            " actual=" + s_after.focused_window_id};
    }
    if (next_unit && !next_unit->steps.empty()) {
        const PlanStep& first = next_unit->steps[0];
        if (needs_target(first.verb) && !first.object.empty()) {
            try {
                Hint no_hint;
                optimize_step(s_after, first, G, *next_unit, "", no_hint, templates);
            } catch (const Error& e) {
                return {Verdict::retryable, std::string("next-target: ") + e.what()};
            }
        }
    }
    return {Verdict::success, "ok"};
}

ExecutionRecord run_plan(const GlobalPlan& plan, Simulator& sim, const IntentIndex* index,
                         UnitEmbedder* embedder, const TemplateLibrary& templates,
                         const ExecutorConfig& cfg, uint64_t seed) {
    using clock = std::chrono::steady_clock;
    auto wall = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };
    ExecutionRecord rec;
    rec.plan_id = plan.id;
    rec.scenario = sim.scenario().name;
    rec.seed = seed;
    rec.plan_steps_total = plan.total_steps();
    rec.wall_ms = {{"ground", 0}, {"optimize", 0}, {"execute", 0}, {"critic", 0}};

    std::string observation;  // threaded through optimizer calls, initially empty
    bool blocked = false;

    for (size_t ui = 0; ui < plan.units.size() && !blocked; ++ui) {
        const PlanUnit& unit = plan.units[ui];
        const PlanUnit* next_unit = ui + 1 < plan.units.size() ? &plan.units[ui + 1] : nullptr;
        UnitLogEntry ule;
        ule.unit_index = static_cast<int>(ui);
        ule.slot_label = unit.slot_label;

        Hint hint;
        if (index && embedder && !index->empty()) {
            auto t0 = clock::now();
            IntentUnit pseudo;
            pseudo.id = "pu" + std::to_string(ui);
            pseudo.env = unit.slot_label;
            std::vector<std::string> verbs;
            for (const auto& s : unit.steps) verbs.push_back(s.verb);
            pseudo.act_or_key = verbs.empty() ? unit.slot_label : render_plan_step(unit.steps[0]);
            {
                std::string joined;
                for (const auto& v : verbs) joined += (joined.empty() ? "" : " ") + v;
                pseudo.act_or_key = joined.empty() ? unit.slot_label : joined;
            }
            pseudo.desc = unit.desc.empty() ? unit.slot_label : unit.desc;
            pseudo.kind = TraceKind::control;
            Vec z_pu = embedder->embed(pseudo);
            hint = inject_hint(unit, index, z_pu, cfg.relevance_floor);
            rec.wall_ms["optimize"] += wall(t0, clock::now());
        }

        try {
            for (size_t si = 0; si < unit.steps.size(); ++si) {
                const PlanStep& g = unit.steps[si];
                auto tg = clock::now();
                ScreenState s = sim.ground();
                rec.wall_ms["ground"] += wall(tg, clock::now());

                auto to_ = clock::now();
                std::optional<OptimizedStep> opt;
                std::string resolve_error;
                try {
                    opt = optimize_step(s, g, plan, unit, observation, hint, templates);
                } catch (const Error& e) {
                    resolve_error = e.what();
                }
                rec.wall_ms["optimize"] += wall(to_, clock::now());

                if (!opt) {
                    StepLogEntry sle;
                    sle.unit_index = static_cast<int>(ui);
                    sle.step_index = static_cast<int>(si);
                    sle.plan_step = render_plan_step(g);
                    sle.action = "-";
                    sle.applied = false;
                    sle.reason = resolve_error;
                    rec.steps.push_back(std::move(sle));
                    ++rec.steps_attempted;
                    observation = "unresolved: " + resolve_error;
                    continue;
                }
                observation = opt->observation;
                ++rec.plan_steps_executed;
                for (const auto& action : opt->expanded) {
                    auto te = clock::now();
                    StepResult res = execute_action(action, sim);
                    rec.wall_ms["execute"] += wall(te, clock::now());
                    StepLogEntry sle;
                    sle.unit_index = static_cast<int>(ui);
                    sle.step_index = static_cast<int>(si);
                    sle.plan_step = render_plan_step(g);
                    sle.action = render_action(action);
                    sle.target_id = action.target_id;
                    sle.applied = res.applied;
                    sle.reason = res.reason;
                    rec.steps.push_back(std::move(sle));
                    ++rec.steps_attempted;
                }
            }

            auto tg = clock::now();
            ScreenState s_after = sim.ground();
            rec.wall_ms["ground"] += wall(tg, clock::now());
            auto tc = clock::now();
            CriticVerdict verdict =
                critic_eval(unit, plan, s_after, sim, next_unit, templates);
            rec.wall_ms["critic"] += wall(tc, clock::now());
            ule.verdicts.push_back(to_string(verdict.q));
            observation = verdict.observation;

            int tries = 0;
            while (verdict.q == Verdict::retryable && tries < cfg.max_retries) {
                ++tries;
                ++rec.retries;
                const PlanStep& gstep = unit.steps.back();
                auto to_ = clock::now();
                std::optional<OptimizedStep> adjusted;
                std::string resolve_error;
                try {
                    adjusted = optimize_step(s_after, gstep, plan, unit, observation, hint,
                                             templates);
                } catch (const Error& e) {
                    resolve_error = e.what();
                }
                rec.wall_ms["optimize"] += wall(to_, clock::now());
                if (adjusted) {
                    for (const auto& action : adjusted->expanded) {
                        auto te = clock::now();
                        StepResult res = execute_action(action, sim);
                        rec.wall_ms["execute"] += wall(te, clock::now());
                        StepLogEntry sle;
                        sle.unit_index = static_cast<int>(ui);
                        sle.step_index = -1;  // recovery action
                        sle.plan_step = render_plan_step(gstep);
                        sle.action = render_action(action);
                        sle.target_id = action.target_id;
                        sle.applied = res.applied;
                        sle.reason = res.reason;
                        rec.steps.push_back(std::move(sle));
                        ++rec.steps_attempted;
                    }
                } else {
                    StepLogEntry sle;
                    sle.unit_index = static_cast<int>(ui);
                    sle.step_index = -1;
                    sle.plan_step = render_plan_step(gstep);
                    sle.action = "-";
                    sle.applied = false;
                    sle.reason = resolve_error;
                    rec.steps.push_back(std::move(sle));
                    ++rec.steps_attempted;
                }
                tg = clock::now();
                s_after = sim.ground();
                rec.wall_ms["ground"] += wall(tg, clock::now());
                tc = clock::now();
                verdict = critic_eval(unit, plan, s_after, sim, next_unit, templates);
                rec.wall_ms["critic"] += wall(tc, clock::now());
                ule.verdicts.push_back(to_string(verdict.q));
                observation = verdict.observation;
            }
            ule.retries = tries;
            if (verdict.q == Verdict::success) {
                ule.reached_success = true;
            } else {
                blocked = true;
                rec.diagnostic = verdict.q == Verdict::retryable
                                     ? "retries exhausted in unit '" + unit.slot_label +
                                           "': " + verdict.observation
                                     : "blocked in unit '" + unit.slot_label +
                                           "': " + verdict.observation;
            }
        } catch (const Error& e) {
            blocked = true;
            rec.diagnostic = std::string("simulator failure: ") + e.what();
        }
        rec.units.push_back(std::move(ule));
    }

    rec.outcome = blocked ? Outcome::BLOCKED : Outcome::SUCCESS;
    std::vector<char> unit_success(plan.units.size(), 0);
    for (const auto& u : rec.units)
        if (u.reached_success) unit_success[u.unit_index] = 1;
    for (const auto& s : rec.steps)
        if (s.applied && unit_success[s.unit_index]) ++rec.steps_successful;
    rec.ticks = sim.ticks();
    return rec;
}

// --- serialization ---------------------------------------------------------------

json record_to_json(const ExecutionRecord& r, bool include_timings) {
    json steps = json::array();
    for (const auto& s : r.steps) {
        json js;
        js["unit"] = s.unit_index;
        js["step"] = s.step_index;
        js["plan_step"] = s.plan_step;
        js["action"] = s.action;
        if (!s.target_id.empty()) js["target"] = s.target_id;
        js["applied"] = s.applied;
        if (!s.reason.empty()) js["reason"] = s.reason;
        steps.push_back(std::move(js));
    }
    json units = json::array();
    for (const auto& u : r.units) {
        json ju;
        ju["unit"] = u.unit_index;
        ju["slot"] = u.slot_label;
        ju["verdicts"] = u.verdicts;
        ju["retries"] = u.retries;
        ju["success"] = u.reached_success;
        units.push_back(std::move(ju));
    }
    json j;
    j["outcome"] = to_string(r.outcome);
    j["plan_id"] = r.plan_id;
    j["scenario"] = r.scenario;
    j["seed"] = r.seed;
    j["counters"] = {{"steps_attempted", r.steps_attempted},
                     {"steps_successful", r.steps_successful},
                     {"retries", r.retries},
                     {"generator_calls", r.generator_calls},
                     {"plan_steps_total", r.plan_steps_total},
                     {"plan_steps_executed", r.plan_steps_executed}};
    j["ticks"] = r.ticks;
    j["steps"] = std::move(steps);
    j["units"] = std::move(units);
    if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
    if (include_timings) j["wall_ms"] = r.wall_ms;
    return j;
}

ExecutionRecord record_from_json(const json& j) {
    ExecutionRecord r;
    r.outcome = j.at("outcome").get<std::string>() == "SUCCESS" ? Outcome::SUCCESS : Outcome::BLOCKED;
    r.plan_id = j.value("plan_id", "");
    r.scenario = j.value("scenario", "");
    r.seed = j.value("seed", 0ULL);
    const auto& c = j.at("counters");
    r.steps_attempted = c.at("steps_attempted").get<int>();
    r.steps_successful = c.at("steps_successful").get<int>();
    r.retries = c.at("retries").get<int>();
    r.generator_calls = c.at("generator_calls").get<int>();
    r.plan_steps_total = c.at("plan_steps_total").get<int>();
    r.plan_steps_executed = c.at("plan_steps_executed").get<int>();
    r.ticks = j.at("ticks").get<long>();
    for (const auto& js : j.at("steps")) {
        StepLogEntry s;
        s.unit_index = js.at("unit").get<int>();
        s.step_index = js.at("step").get<int>();
        s.plan_step = js.at("plan_step").get<std::string>();
        s.action = js.at("action").get<std::string>();
        s.target_id = js.value("target", "");
        s.applied = js.at("applied").get<bool>();
        s.reason = js.value("reason", "");
        r.steps.push_back(std::move(s));
    }
    for (const auto& ju : j.at("units")) {
        UnitLogEntry u;
        u.unit_index = ju.at("unit").get<int>();
        u.slot_label = ju.at("slot").get<std::string>();
        u.verdicts = ju.at("verdicts").get<std::vector<std::string>>();
        u.retries = ju.at("retries").get<int>();
        u.reached_success = ju.at("success").get<bool>();
        r.units.push_back(std::move(u));
    }
    r.diagnostic = j.value("diagnostic", "");
    return r;
}

void save_record(const ExecutionRecord& r, const std::filesystem::path& path,
                 bool include_timings) {
    store_document(path, "tracemind_record", 1, json{{"record", record_to_json(r, include_timings)}});
}

ExecutionRecord load_record(const std::filesystem::path& path) {
    return record_from_json(load_document(path, "tracemind_record", 1).at("record"));
}

}  // namespace tracemind
