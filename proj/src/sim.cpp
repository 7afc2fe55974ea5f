#include "tracemind/sim.hpp"

#include <algorithm>
#include <cctype>

namespace tracemind {

namespace {

std::string lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

Component component_from_json(const json& j) {
    Component c;
    c.id = j.at("id").get<std::string>();
    c.role = j.value("role", "component");
    c.label = j.value("label", c.id);
    c.value = j.value("value", "");
    c.actionable = j.value("actionable", true);
    c.occluded = j.value("occluded", false);
    return c;
}

json component_to_json(const Component& c) {
    json j;
    j["id"] = c.id;
    j["role"] = c.role;
    j["label"] = c.label;
    if (!c.value.empty()) j["value"] = c.value;
    if (!c.actionable) j["actionable"] = false;
    if (c.occluded) j["occluded"] = true;
    return j;
}

Window window_from_json(const json& j) {
    Window w;
    w.id = j.at("id").get<std::string>();
    w.title = j.value("title", w.id);
    w.focused = j.value("focused", false);
    w.popup = j.value("popup", false);
    w.panels = j.value("panels", std::vector<std::string>{});
    for (const auto& c : j.value("components", json::array()))
        w.components.push_back(component_from_json(c));
    w.occludes = j.value("occludes", std::vector<std::string>{});
    return w;
}

json window_to_json(const Window& w) {
    json j;
    j["id"] = w.id;
    j["title"] = w.title;
    if (w.focused) j["focused"] = true;
    if (w.popup) j["popup"] = true;
    if (!w.panels.empty()) j["panels"] = w.panels;
    json comps = json::array();
    for (const auto& c : w.components) comps.push_back(component_to_json(c));
    j["components"] = std::move(comps);
    if (!w.occludes.empty()) j["occludes"] = w.occludes;
    return j;
}

Effect::Kind effect_kind_from(const std::string& s) {
    if (s == "spawn_window") return Effect::Kind::spawn_window;
    if (s == "close_window") return Effect::Kind::close_window;
    if (s == "focus_window") return Effect::Kind::focus_window;
    if (s == "add_component") return Effect::Kind::add_component;
    if (s == "remove_component") return Effect::Kind::remove_component;
    if (s == "set_occluded") return Effect::Kind::set_occluded;
    if (s == "set_value") return Effect::Kind::set_value;
    if (s == "set_label") return Effect::Kind::set_label;
    if (s == "set_hard_stop") return Effect::Kind::set_hard_stop;
    if (s == "fail") return Effect::Kind::fail;
    fail(ErrorClass::validation, "unknown effect kind '" + s + "'");
}

Effect effect_from_json(const json& j) {
    Effect e;
    e.kind = effect_kind_from(j.at("kind").get<std::string>());
    e.payload = j;
    return e;
}

}  // namespace

std::string render_action(const ConcreteAction& a) {
    std::string s = a.verb;
    if (!a.target_label.empty())
        s += "(" + a.target_label + (a.text.empty() ? "" : ", \"" + a.text + "\"") + ")";
    else if (!a.window_id.empty())
        s += "(" + a.window_id + ")";
    else if (!a.text.empty())
        s += "(\"" + a.text + "\")";
    return s;
}

std::vector<const ScreenState::GroundedComponent*> ScreenState::actionable() const {
    std::vector<const GroundedComponent*> out;
    for (const auto& c : components)
        if (c.actionable && !c.occluded) out.push_back(&c);
    return out;
}

const ScreenState::GroundedComponent* ScreenState::by_id(const std::string& id) const {
    for (const auto& c : components)
        if (c.id == id) return &c;
    return nullptr;
}

Scenario load_scenario(const json& doc) {
    Scenario s;
    s.name = doc.value("name", "scenario");
    for (const auto& w : doc.value("windows", json::array())) {
        s.windows.push_back(window_from_json(w));
        s.known_windows.insert(s.windows.back().id);
    }
    int focused = 0;
    for (const auto& w : s.windows) focused += w.focused ? 1 : 0;
    if (focused > 1) fail(ErrorClass::validation, "more than one window is focused initially");

    for (const auto& jr : doc.value("rules", json::array())) {
        TransitionRule r;
        r.id = jr.value("id", "rule" + std::to_string(s.rules.size()));
        r.verb = jr.at("verb").get<std::string>();
        r.target = lower(jr.value("target", ""));
        r.text = jr.value("text", "");
        r.ticks = jr.value("ticks", -1);
        for (const auto& je : jr.at("effects")) {
            Effect e = effect_from_json(je);
            if (e.kind == Effect::Kind::spawn_window) {
                Window w = window_from_json(e.payload.at("window"));
                s.known_windows.insert(w.id);
            }
            r.effects.push_back(std::move(e));
        }
        s.rules.push_back(std::move(r));
    }
    // Determinism: no two rules may match the same action. Rules sharing
    // (verb, target) must carry distinct non-empty text matchers.
    for (size_t i = 0; i < s.rules.size(); ++i)
        for (size_t j = i + 1; j < s.rules.size(); ++j) {
            const auto& a = s.rules[i];
            const auto& b = s.rules[j];
            if (a.verb != b.verb || a.target != b.target) continue;
            if (a.text.empty() || b.text.empty() || a.text == b.text)
                fail(ErrorClass::validation,
                     "ambiguous rules '" + a.id + "' and '" + b.id + "': both can match " +
                         a.verb + "(" + a.target + ")");
        }

    for (const auto& jf : doc.value("faults", json::array())) {
        Fault f;
        if (jf.at("trigger").contains("step_index"))
            f.trigger.step_index = jf.at("trigger").at("step_index").get<int>();
        else
            f.trigger.predicate = jf.at("trigger");
        f.once = jf.value("once", true);
        for (const auto& je : jf.at("effects")) {
            Effect e = effect_from_json(je);
            if (e.kind == Effect::Kind::spawn_window)
                s.known_windows.insert(e.payload.at("window").at("id").get<std::string>());
            f.effects.push_back(std::move(e));
        }
        s.faults.push_back(std::move(f));
    }

    json posts = doc.value("postconditions", json::object());
    for (const auto& [label, jc] : posts.items()) {
        UnitCheck c;
        c.expected_focus = jc.value("expected_focus", "");
        for (const auto& p : jc.value("require", json::array())) c.require.push_back(p);
        s.postconditions[label] = std::move(c);
    }

    if (doc.contains("tick_costs"))
        for (const auto& [verb, cost] : doc.at("tick_costs").items())
            s.tick_costs[verb] = cost.get<int>();
    return s;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
    return load_scenario(load_document(path, "tracemind_scenario", 1));
}

json scenario_to_json(const Scenario& s) {
    json doc;
    doc["name"] = s.name;
    json windows = json::array();
    for (const auto& w : s.windows) windows.push_back(window_to_json(w));
    doc["windows"] = std::move(windows);
    json rules = json::array();
    for (const auto& r : s.rules) {
        json jr;
        jr["id"] = r.id;
        jr["verb"] = r.verb;
        if (!r.target.empty()) jr["target"] = r.target;
        if (!r.text.empty()) jr["text"] = r.text;
        if (r.ticks >= 0) jr["ticks"] = r.ticks;
        json effects = json::array();
        for (const auto& e : r.effects) effects.push_back(e.payload);
        jr["effects"] = std::move(effects);
        rules.push_back(std::move(jr));
    }
    doc["rules"] = std::move(rules);
    json faults = json::array();
    for (const auto& f : s.faults) {
        json jf;
        jf["trigger"] = f.trigger.step_index >= 0
                            ? json{{"step_index", f.trigger.step_index}}
                            : f.trigger.predicate;
        if (!f.once) jf["once"] = false;
        json effects = json::array();
        for (const auto& e : f.effects) effects.push_back(e.payload);
        jf["effects"] = std::move(effects);
        faults.push_back(std::move(jf));
    }
    doc["faults"] = std::move(faults);
    json posts = json::object();
    for (const auto& [label, c] : s.postconditions) {
        json jc;
        if (!c.expected_focus.empty()) jc["expected_focus"] = c.expected_focus;
        jc["require"] = c.require;
        posts[label] = std::move(jc);
    }
    doc["postconditions"] = std::move(posts);
    if (!s.tick_costs.empty()) doc["tick_costs"] = s.tick_costs;
    return doc;
}

// --- simulator -----------------------------------------------------------------

Simulator::Simulator(Scenario scenario)
    : scenario_(std::move(scenario)),
      windows_(scenario_.windows),
      pending_faults_(scenario_.faults) {}

Window* Simulator::find_window(const std::string& id) {
    for (auto& w : windows_)
        if (w.id == id) return &w;
    return nullptr;
}

const Window* Simulator::find_window(const std::string& id) const {
    for (const auto& w : windows_)
        if (w.id == id) return &w;
    return nullptr;
}

std::pair<Window*, Component*> Simulator::find_component(const std::string& id) {
    for (auto& w : windows_)
        for (auto& c : w.components)
            if (c.id == id) return {&w, &c};
    return {nullptr, nullptr};
}

std::pair<const Window*, const Component*> Simulator::find_component(const std::string& id) const {
    for (const auto& w : windows_)
        for (const auto& c : w.components)
            if (c.id == id) return {&w, &c};
    return {nullptr, nullptr};
}

bool Simulator::is_occluded(const std::string& component_id) const {
    auto [w, c] = find_component(component_id);
    if (!c) return false;
    if (c->occluded) return true;
    for (const auto& win : windows_)
        for (const auto& id : win.occludes)
            if (id == component_id) return true;
    return false;
}

ScreenState Simulator::ground() const {
    ScreenState s;
    for (const auto& w : windows_) {
        s.windows.push_back({w.id, w.title});
        if (w.focused) {
            s.focused_window_id = w.id;
            s.window_title = w.title;
            s.panels = w.panels;
        }
        int count = 0;
        for (const auto& c : w.components) {
            ScreenState::GroundedComponent g;
            g.id = c.id;
            g.role = c.role;
            g.label = c.label;
            g.value = c.value;
            g.window_id = w.id;
            g.occluded = is_occluded(c.id);
            g.actionable = c.actionable && !g.occluded;
            s.components.push_back(std::move(g));
            ++count;
        }
        s.component_counts[w.id] = count;
    }
    return s;
}

bool Simulator::holds(const json& predicate) const {
    if (predicate.contains("window_present"))
        return find_window(predicate.at("window_present").get<std::string>()) != nullptr;
    if (predicate.contains("window_absent"))
        return find_window(predicate.at("window_absent").get<std::string>()) == nullptr;
    if (predicate.contains("window_focused")) {
        const Window* w = find_window(predicate.at("window_focused").get<std::string>());
        return w && w->focused;
    }
    if (predicate.contains("component_present")) {
        auto [w, c] = find_component(predicate.at("component_present").get<std::string>());
        return c != nullptr;
    }
    if (predicate.contains("component_absent")) {
        auto [w, c] = find_component(predicate.at("component_absent").get<std::string>());
        return c == nullptr;
    }
    if (predicate.contains("value_equals")) {
        const auto& p = predicate.at("value_equals");
        auto [w, c] = find_component(p.at("component").get<std::string>());
        return c && c->value == p.at("value").get<std::string>();
    }
    if (predicate.contains("value_contains")) {
        const auto& p = predicate.at("value_contains");
        auto [w, c] = find_component(p.at("component").get<std::string>());
        return c && c->value.find(p.at("value").get<std::string>()) != std::string::npos;
    }
    if (predicate.contains("value_nonempty")) {
        auto [w, c] = find_component(predicate.at("value_nonempty").get<std::string>());
        return c && !c->value.empty();
    }
    fail(ErrorClass::validation, "unknown predicate: " + predicate.dump());
}

void Simulator::apply_effect(const Effect& e, const ConcreteAction& a, StepResult& result) {
    auto expand = [&](std::string s) {
        if (s == "$target") return a.target_id;
        if (s == "$text") return a.text;
        return s;
    };
    switch (e.kind) {
        case Effect::Kind::spawn_window: {
            Window w = window_from_json(e.payload.at("window"));
            if (find_window(w.id))
                fail(ErrorClass::simulator, "spawn_window: window '" + w.id + "' already open");
            if (w.focused)
                for (auto& other : windows_) other.focused = false;
            windows_.push_back(std::move(w));
            break;
        }
        case Effect::Kind::close_window: {
            std::string id = expand(e.payload.at("window_id").get<std::string>());
            auto it = std::find_if(windows_.begin(), windows_.end(),
                                   [&](const Window& w) { return w.id == id; });
            if (it == windows_.end())
                fail(ErrorClass::simulator, "close_window: no window '" + id + "'");
            bool was_focused = it->focused;
            windows_.erase(it);
            if (was_focused && !windows_.empty()) {
                // Focus falls back to the last remaining non-popup window.
                for (auto w = windows_.rbegin(); w != windows_.rend(); ++w)
                    if (!w->popup) {
                        w->focused = true;
                        break;
                    }
            }
            break;
        }
        case Effect::Kind::focus_window: {
            std::string id = expand(e.payload.at("window_id").get<std::string>());
            Window* w = find_window(id);
            if (!w) fail(ErrorClass::simulator, "focus_window: no window '" + id + "'");
            for (auto& other : windows_) other.focused = false;
            w->focused = true;
            break;
        }
        case Effect::Kind::add_component: {
            std::string wid = expand(e.payload.at("window_id").get<std::string>());
            Window* w = find_window(wid);
            if (!w) fail(ErrorClass::simulator, "add_component: no window '" + wid + "'");
            w->components.push_back(component_from_json(e.payload.at("component")));
            break;
        }
        case Effect::Kind::remove_component: {
            std::string id = expand(e.payload.at("component_id").get<std::string>());
            auto [w, c] = find_component(id);
            if (!w) fail(ErrorClass::simulator, "remove_component: no component '" + id + "'");
            auto& comps = w->components;
            comps.erase(std::remove_if(comps.begin(), comps.end(),
                                       [&](const Component& x) { return x.id == id; }),
                        comps.end());
            break;
        }
        case Effect::Kind::set_occluded: {
            std::string id = expand(e.payload.at("component_id").get<std::string>());
            auto [w, c] = find_component(id);
            if (!c) fail(ErrorClass::simulator, "set_occluded: no component '" + id + "'");
            c->occluded = e.payload.value("occluded", true);
            break;
        }
        case Effect::Kind::set_value: {
            std::string id = expand(e.payload.at("component").get<std::string>());
            auto [w, c] = find_component(id);
            if (!c) fail(ErrorClass::simulator, "set_value: no component '" + id + "'");
            c->value = expand(e.payload.at("value").get<std::string>());
            break;
        }
        case Effect::Kind::set_label: {
            std::string id = expand(e.payload.at("component").get<std::string>());
            auto [w, c] = find_component(id);
            if (!c) fail(ErrorClass::simulator, "set_label: no component '" + id + "'");
            c->label = expand(e.payload.at("value").get<std::string>());
            break;
        }
        case Effect::Kind::set_hard_stop:
            hard_stop_ = true;
            break;
        case Effect::Kind::fail:
            result.applied = false;
            result.reason = e.payload.value("reason", "rule declared no-op-with-failure");
            break;
    }
}

void Simulator::fire_faults() {
    for (auto it = pending_faults_.begin(); it != pending_faults_.end();) {
        bool fire = false;
        if (it->trigger.step_index >= 0)
            fire = actions_applied_ == it->trigger.step_index;
        else
            fire = holds(it->trigger.predicate);
        if (fire) {
            StepResult ignored;
            ConcreteAction none;
            for (const auto& e : it->effects) apply_effect(e, none, ignored);
            if (it->once) {
                it = pending_faults_.erase(it);
                continue;
            }
        }
        ++it;
    }
}

StepResult Simulator::apply(const ConcreteAction& a) {
    auto cost_it = scenario_.tick_costs.find(a.verb);
    if (cost_it == scenario_.tick_costs.end()) cost_it = scenario_.tick_costs.find("default");
    ticks_ += cost_it == scenario_.tick_costs.end() ? 1 : cost_it->second;

    StepResult result;
    if (!a.target_id.empty()) {
        auto [w, c] = find_component(a.target_id);
        if (!c) {
            result.reason = "no component '" + a.target_id + "'";
            return result;
        }
        if (is_occluded(a.target_id)) {
            result.reason = "component '" + a.target_id + "' is occluded";
            return result;
        }
        if (!c->actionable) {
            result.reason = "component '" + a.target_id + "' is not actionable";
            return result;
        }
    }

    if (a.verb == "switch_focus") {
        // Built-in semantics: focus an open window by id or title.
        Window* w = find_window(a.window_id.empty() ? a.target_id : a.window_id);
        if (!w)
            for (auto& win : windows_)
                if (lower(win.title) == lower(a.window_id.empty() ? a.target_label : a.window_id))
                    w = &win;
        if (!w) {
            result.reason = "no window to focus";
            return result;
        }
        for (auto& other : windows_) other.focused = false;
        w->focused = true;
        result.applied = true;
        ++actions_applied_;
        fire_faults();
        return result;
    }

    const TransitionRule* match = nullptr;
    auto [tw, tc] = find_component(a.target_id);
    (void)tw;
    for (const auto& r : scenario_.rules) {
        bool target_ok;
        if (r.target.empty())
            target_ok = a.target_id.empty();
        else
            target_ok = (tc && (lower(a.target_id) == r.target || lower(tc->label) == r.target));
        if (!target_ok) continue;
        if (r.verb != a.verb) continue;
        if (!r.text.empty() && r.text != a.text) continue;
        match = &r;
        break;
    }
    if (!match) {
        result.reason = "no transition matches " + render_action(a);
        return result;
    }
    if (match->ticks >= 0)
        ticks_ += match->ticks - (cost_it == scenario_.tick_costs.end() ? 1 : cost_it->second);
    result.applied = true;
    for (const auto& e : match->effects) {
        apply_effect(e, a, result);
        if (!result.applied) break;
    }
    if (result.applied) {
        ++actions_applied_;
        fire_faults();
    }
    return result;
}

}  // namespace tracemind
