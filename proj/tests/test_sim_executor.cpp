#include <doctest.h>

#include "tracemind/eval.hpp"
#include "tracemind/executor.hpp"
#include "tracemind/pipeline.hpp"

using namespace tracemind;

namespace {

std::filesystem::path data_dir() {
    return std::filesystem::path(TRACEMIND_SOURCE_DIR) / "data";
}

Scenario scenario(const std::string& name) {
    return load_scenario_file(data_dir() / "scenarios" / (name + ".json"));
}

TemplateLibrary templates() { return TemplateLibrary::load(data_dir() / "templates.json"); }

PlanStep step(const std::string& verb, const std::string& object = "",
              const std::string& text = "") {
    return {verb, object, text, ""};
}

GlobalPlan browser_search_plan(const std::string& query) {
    GlobalPlan plan;
    PlanUnit open;
    open.slot_label = "open browser";
    open.desc = "open browser";
    open.steps = {step("open", "browser")};
    PlanUnit search;
    search.slot_label = "search";
    search.desc = "search " + query;
    search.steps = {step("click", "Address and search bar"),
                    step("text_input", "Address and search bar", query), step("enter")};
    plan.units = {open, search};
    plan.finalize_id();
    return plan;
}

GlobalPlan notepad_plan() {
    GlobalPlan plan;
    PlanUnit open;
    open.slot_label = "open notepad";
    open.desc = "open notepad";
    open.steps = {step("open", "notepad")};
    PlanUnit type;
    type.slot_label = "type text";
    type.desc = "type hello";
    type.steps = {step("click", "Text Area"), step("text_input", "Text Area", "hello")};
    plan.units = {open, type};
    plan.finalize_id();
    return plan;
}

}  // namespace

TEST_SUITE("sim_executor") {

TEST_CASE("a minimal one-window scenario parses") {
    json doc;
    doc["name"] = "mini";
    doc["windows"] = {{{"id", "w"}, {"title", "W"}, {"focused", true},
                       {"components", {{{"id", "b"}, {"role", "button"}, {"label", "B"}}}}}};
    doc["rules"] = json::array();
    Scenario s = load_scenario(doc);
    CHECK(s.windows.size() == 1);
    Simulator sim(s);
    auto state = sim.ground();
    CHECK(state.focused_window_id == "w");
    CHECK(state.components.size() == 1);
}

TEST_CASE("duplicate-match rules are rejected at load") {
    json doc;
    doc["name"] = "dup";
    doc["windows"] = json::array();
    doc["rules"] = {{{"id", "r1"}, {"verb", "click"}, {"target", "x"}, {"effects", json::array()}},
                    {{"id", "r2"}, {"verb", "click"}, {"target", "x"}, {"effects", json::array()}}};
    try {
        load_scenario(doc);
        FAIL("expected validation error");
    } catch (const Error& e) {
        CHECK(e.cls() == ErrorClass::validation);
        CHECK(std::string(e.what()).find("r1") != std::string::npos);
        CHECK(std::string(e.what()).find("r2") != std::string::npos);
    }
}

TEST_CASE("golden scenario round-trips through its json form") {
    Scenario s = scenario("browser");
    Scenario s2 = load_scenario(json(scenario_to_json(s)));
    CHECK(json(scenario_to_json(s2)) == json(scenario_to_json(s)));
    CHECK(s2.rules.size() == s.rules.size());
    CHECK(s2.postconditions.size() == s.postconditions.size());
}

TEST_CASE("ground is side-effect free and enumerates occlusion") {
    Scenario s = scenario("browser");
    // Spawn the popup immediately to test occlusion enumeration.
    Window popup;
    popup.id = "p";
    popup.title = "Popup";
    popup.popup = true;
    popup.occludes = {"icon_browser"};
    Component x;
    x.id = "px";
    x.label = "X";
    popup.components = {x};
    s.windows.push_back(popup);
    s.known_windows.insert("p");
    Simulator sim(s);
    auto g1 = sim.ground();
    auto g2 = sim.ground();
    CHECK(g1.components.size() == g2.components.size());
    CHECK(g1.focused_window_id == g2.focused_window_id);
    const auto* icon = g1.by_id("icon_browser");
    REQUIRE(icon != nullptr);
    CHECK(icon->occluded);
    CHECK_FALSE(icon->actionable);
    for (const auto* c : g1.actionable()) CHECK(c->id != "icon_browser");

    // An action on the occluded component always fails.
    ConcreteAction a;
    a.verb = "doubleclick";
    a.target_id = "icon_browser";
    auto res = sim.apply(a);
    CHECK_FALSE(res.applied);
    CHECK(res.reason.find("occluded") != std::string::npos);
}

TEST_CASE("empty desktop grounds to zero components") {
    json doc;
    doc["name"] = "empty";
    doc["windows"] = json::array();
    doc["rules"] = json::array();
    Simulator sim(load_scenario(doc));
    CHECK(sim.ground().components.empty());
    CHECK(sim.ground().focused_window_id.empty());
}

TEST_CASE("apply: matching transition mutates the scene and advances the clock") {
    Simulator sim(scenario("browser"));
    ConcreteAction open;
    open.verb = "doubleclick";
    open.target_id = "icon_browser";
    long t0 = sim.ticks();
    auto res = sim.apply(open);
    CHECK(res.applied);
    CHECK(sim.ticks() == t0 + 1);
    auto state = sim.ground();
    CHECK(state.focused_window_id == "win_browser");

    // No matching transition: failed no-effect result.
    ConcreteAction strange;
    strange.verb = "rightclick";
    strange.target_id = "icon_browser";
    res = sim.apply(strange);
    CHECK_FALSE(res.applied);
    CHECK(res.reason.find("no transition") != std::string::npos);
}

TEST_CASE("scripted fault fires after the configured applied-action index") {
    Simulator sim(scenario("popup_occlusion"));
    ConcreteAction open;
    open.verb = "doubleclick";
    open.target_id = "icon_browser";
    CHECK(sim.apply(open).applied);  // action 1
    CHECK(sim.ground().by_id("address_search")->actionable);
    ConcreteAction click;
    click.verb = "click";
    click.target_id = "address_search";
    CHECK(sim.apply(click).applied);  // action 2 triggers the popup
    auto state = sim.ground();
    const auto* bar = state.by_id("address_search");
    REQUIRE(bar != nullptr);
    CHECK(bar->occluded);
}

TEST_CASE("determinism: identical scenario and action sequence replay identically") {
    auto run_once = [] {
        Simulator sim(scenario("notepad"));
        std::vector<std::string> log;
        ConcreteAction a;
        a.verb = "doubleclick";
        a.target_id = "icon_notepad";
        log.push_back(std::to_string(sim.apply(a).applied));
        a = {};
        a.verb = "text_input";
        a.target_id = "text_area";
        a.text = "hi";
        log.push_back(std::to_string(sim.apply(a).applied));
        log.push_back(std::to_string(sim.ticks()));
        log.push_back(sim.ground().focused_window_id);
        return log;
    };
    CHECK(run_once() == run_once());
}

TEST_CASE("optimize_step: open expands through the icon template variant") {
    Simulator sim(scenario("notepad"));
    auto tpl = templates();
    GlobalPlan plan = notepad_plan();
    Hint none;
    auto opt = optimize_step(sim.ground(), plan.units[0].steps[0], plan, plan.units[0], "", none,
                             tpl);
    REQUIRE(opt.expanded.size() == 1);
    CHECK(opt.expanded[0].verb == "doubleclick");
    CHECK(opt.expanded[0].target_id == "icon_notepad");
}

TEST_CASE("optimize_step: unique label match and unresolvable targets") {
    Simulator sim(scenario("notepad"));
    ConcreteAction open;
    open.verb = "doubleclick";
    open.target_id = "icon_notepad";
    sim.apply(open);
    auto tpl = templates();
    GlobalPlan plan = notepad_plan();
    Hint none;
    auto opt = optimize_step(sim.ground(), step("click", "Text Area"), plan, plan.units[1], "",
                             none, tpl);
    CHECK(opt.expanded[0].target_id == "text_area");

    try {
        optimize_step(sim.ground(), step("click", "Nonexistent Widget"), plan, plan.units[1], "",
                      none, tpl);
        FAIL("expected unresolvable");
    } catch (const Error& e) {
        CHECK(e.cls() == ErrorClass::not_found);
        CHECK(std::string(e.what()).find("candidates considered") != std::string::npos);
    }
}

TEST_CASE("optimize_step: hint target label breaks grounding ties") {
    json doc;
    doc["name"] = "tie";
    doc["windows"] = {
        {{"id", "w1"}, {"title", "Main"}, {"focused", true},
         {"components", {{{"id", "ok1"}, {"role", "button"}, {"label", "OK (window)"}}}}},
        {{"id", "w2"}, {"title", "Dialog"},
         {"components", {{{"id", "ok2"}, {"role", "button"}, {"label", "OK (dialog)"}}}}}};
    doc["rules"] = json::array();
    Simulator sim(load_scenario(doc));
    auto tpl = templates();
    GlobalPlan plan;
    PlanUnit pu;
    pu.slot_label = "confirm";
    pu.steps = {step("click", "OK")};
    plan.units.push_back(pu);

    Hint none;
    auto no_hint = optimize_step(sim.ground(), pu.steps[0], plan, pu, "", none, tpl);
    CHECK(no_hint.expanded[0].target_id == "ok1");  // first grounded candidate

    Hint hint;
    hint.empty = false;
    IntentUnit trace;
    trace.id = "t";
    trace.env = "dialog";
    trace.act_or_key = "confirm";
    trace.desc = "confirm the dialog";
    ActionStep a;
    a.raw_label = "click OK (dialog)";
    a.verb = "click";
    a.object = "OK (dialog)";
    trace.actions = {a};
    hint.traces = {trace};
    auto hinted = optimize_step(sim.ground(), pu.steps[0], plan, pu, "", hint, tpl);
    CHECK(hinted.expanded[0].target_id == "ok2");
}

TEST_CASE("critic: scripted postcondition, focus mismatch, hard stop") {
    Simulator sim(scenario("notepad"));
    auto tpl = templates();
    GlobalPlan plan = notepad_plan();

    // Before opening, the postcondition for "open notepad" is unmet.
    auto v = critic_eval(plan.units[0], plan, sim.ground(), sim, &plan.units[1], tpl);
    CHECK(v.q == Verdict::retryable);
    CHECK(v.observation.find("postcondition") != std::string::npos);

    ConcreteAction open;
    open.verb = "doubleclick";
    open.target_id = "icon_notepad";
    sim.apply(open);
    v = critic_eval(plan.units[0], plan, sim.ground(), sim, &plan.units[1], tpl);
    CHECK(v.q == Verdict::success);

    // Focus mismatch surfaces as a structured observation.
    Simulator faulted(scenario("focus_fault"));
    faulted.apply(open);
    v = critic_eval(plan.units[0], plan, faulted.ground(), faulted, &plan.units[1], tpl);
    CHECK(v.q == Verdict::retryable);
    CHECK(v.observation.rfind("focus: expected=win_notepad", 0) == 0);
}

TEST_CASE("hard stop and unknown windows block") {
    json doc;
    doc["name"] = "stop";
    doc["windows"] = {{{"id", "w"}, {"title", "W"}, {"focused", true},
                       {"components", {{{"id", "b"}, {"role", "button"}, {"label", "Stop"}}}}}};
    doc["rules"] = {{{"id", "r"}, {"verb", "click"}, {"target", "b"},
                     {"effects", {{{"kind", "set_hard_stop"}}}}}};
    Simulator sim(load_scenario(doc));
    ConcreteAction a;
    a.verb = "click";
    a.target_id = "b";
    sim.apply(a);
    GlobalPlan plan;
    PlanUnit pu;
    pu.slot_label = "anything";
    pu.steps = {step("click", "Stop")};
    plan.units.push_back(pu);
    auto v = critic_eval(pu, plan, sim.ground(), sim, nullptr, templates());
    CHECK(v.q == Verdict::blocked);
}

TEST_CASE("run_plan: engineered happy path succeeds with zero retries") {
    Simulator sim(scenario("browser"));
    auto tpl = templates();
    GlobalPlan plan = browser_search_plan("cats");
    ExecutorConfig cfg;
    auto rec = run_plan(plan, sim, nullptr, nullptr, tpl, cfg, 7);
    CHECK(rec.outcome == Outcome::SUCCESS);
    CHECK(rec.retries == 0);
    CHECK(rec.steps_attempted == 4);
    CHECK(rec.steps_successful == 4);
    CHECK(rec.plan_steps_executed == plan.total_steps());
    CHECK(rec.units.size() == 2);
    for (const auto& u : rec.units) CHECK(u.reached_success);
}

TEST_CASE("run_plan: single focus fault recovers with exactly one retry") {
    Simulator sim(scenario("focus_fault"));
    auto tpl = templates();
    GlobalPlan plan = notepad_plan();
    ExecutorConfig cfg;
    auto rec = run_plan(plan, sim, nullptr, nullptr, tpl, cfg, 7);
    CHECK(rec.outcome == Outcome::SUCCESS);
    CHECK(rec.retries == 1);
    REQUIRE(rec.units.size() == 2);
    CHECK(rec.units[0].retries == 1);
    CHECK(rec.units[0].verdicts ==
          std::vector<std::string>{"retryable", "success"});
    // Exactly one adjusted sub-plan was applied: the recovery focus switch.
    int recovery_actions = 0;
    for (const auto& s : rec.steps)
        if (s.step_index == -1) ++recovery_actions;
    CHECK(recovery_actions == 1);
    CHECK(rec.steps[rec.steps.size() - 3].action.find("switch_focus") != std::string::npos);
}

TEST_CASE("run_plan: occluding pop-up exhausts retries and blocks") {
    Simulator sim(scenario("popup_occlusion"));
    auto tpl = templates();
    GlobalPlan plan = browser_search_plan("cats");
    ExecutorConfig cfg;  // max_retries = 3
    auto rec = run_plan(plan, sim, nullptr, nullptr, tpl, cfg, 7);
    CHECK(rec.outcome == Outcome::BLOCKED);
    REQUIRE(rec.units.size() == 2);
    CHECK(rec.units[1].retries == cfg.max_retries);
    CHECK(rec.units[1].verdicts.size() == static_cast<size_t>(cfg.max_retries) + 1);
    for (const auto& verdict : rec.units[1].verdicts) CHECK(verdict == "retryable");
    CHECK(rec.diagnostic.find("retries exhausted") != std::string::npos);
}

TEST_CASE("run_plan replays byte-identically for identical inputs") {
    auto tpl = templates();
    GlobalPlan plan = browser_search_plan("cats");
    ExecutorConfig cfg;
    Simulator sim1(scenario("popup_occlusion"));
    Simulator sim2(scenario("popup_occlusion"));
    auto r1 = run_plan(plan, sim1, nullptr, nullptr, tpl, cfg, 42);
    auto r2 = run_plan(plan, sim2, nullptr, nullptr, tpl, cfg, 42);
    CHECK(record_to_json(r1).dump() == record_to_json(r2).dump());
}

TEST_CASE("record serialization round-trips and timings stay out by default") {
    Simulator sim(scenario("browser"));
    auto tpl = templates();
    GlobalPlan plan = browser_search_plan("x");
    auto rec = run_plan(plan, sim, nullptr, nullptr, tpl, {}, 1);
    json j = record_to_json(rec);
    CHECK_FALSE(j.contains("wall_ms"));
    auto path = std::filesystem::temp_directory_path() / "tracemind_rec.json";
    save_record(rec, path);
    auto loaded = load_record(path);
    CHECK(record_to_json(loaded).dump() == j.dump());
    CHECK(record_to_json(rec, true).contains("wall_ms"));
    std::filesystem::remove(path);
}

TEST_CASE("inject_hint: empty index gives an empty hint; nearest subgroup otherwise") {
    PlanUnit pu;
    pu.slot_label = "search";
    Hint h = inject_hint(pu, nullptr, Vec::Zero(4), 0.3);
    CHECK(h.empty);

    IntentHierarchy hier;
    hier.dim = 4;
    IntentGroup g;
    g.id = 0;
    UnitStore store;
    std::map<std::string, Vec> embs;
    for (int s = 0; s < 3; ++s) {
        SubGroup sg;
        sg.id = s;
        sg.centroid = Vec::Unit(4, s);
        std::string id = "u" + std::to_string(s);
        IntentUnit u;
        u.id = id;
        u.env = "e";
        u.act_or_key = "a";
        u.desc = "d";
        store[id] = u;
        sg.member_ids = {id};
        sg.representative_ids = {id};
        SkillHint sk;
        sk.sg_id = s;
        sk.verbs = {"click"};
        sg.hints = {sk};
        g.subgroups.push_back(sg);
        embs[id] = sg.centroid;
    }
    g.centroid = Vec::Constant(4, 1.0 / 3);
    hier.groups.push_back(g);
    IntentIndex index(std::move(hier), std::move(store), std::move(embs));

    // Oracle: nearest centroid by cosine.
    Vec q(4);
    q << 0.2, 0.9, 0.1, 0.0;
    Hint got = inject_hint(pu, &index, q, 0.3);
    CHECK_FALSE(got.empty);
    CHECK(got.sg_id == 1);
    CHECK(got.traces.size() == 1);
    CHECK(got.skill_hints.size() == 1);

    // Below the relevance floor the hint stays empty.
    Vec weak(4);
    weak << 0.1, 0.1, 0.1, 3.0;
    Hint floor = inject_hint(pu, &index, weak, 0.9);
    CHECK(floor.empty);
}

TEST_CASE("occlusion soundness holds across a scripted sequence") {
    Simulator sim(scenario("popup_occlusion"));
    ConcreteAction open;
    open.verb = "doubleclick";
    open.target_id = "icon_browser";
    sim.apply(open);
    ConcreteAction click;
    click.verb = "click";
    click.target_id = "address_search";
    sim.apply(click);  // popup appears
    for (int i = 0; i < 3; ++i) {
        auto state = sim.ground();
        for (const auto* c : state.actionable()) CHECK_FALSE(c->occluded);
        ConcreteAction type;
        type.verb = "text_input";
        type.target_id = "address_search";
        type.text = "cats";
        CHECK_FALSE(sim.apply(type).applied);
    }
}

}  // TEST_SUITE
