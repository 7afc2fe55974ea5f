#pragma once

#include <set>

#include "tracemind/memory.hpp"

namespace tracemind {

struct Component {
    std::string id;
    std::string role;     // icon, button, textbox, panel, menu, ...
    std::string label;
    std::string value;    // text content for editable components
    bool actionable = true;
    bool occluded = false;
};

struct Window {
    std::string id;
    std::string title;
    bool focused = false;
    bool popup = false;
    std::vector<std::string> panels;
    std::vector<Component> components;
    std::vector<std::string> occludes;  // component ids hidden while this window is open
};

// Grounded screen: full component enumeration plus summary metadata.
struct ScreenState {
    std::string focused_window_id;   // "" when nothing is focused
    std::string window_title;
    std::vector<std::string> panels;
    struct GroundedComponent {
        std::string id, role, label, value, window_id;
        bool actionable = false;
        bool occluded = false;
    };
    struct WindowInfo {
        std::string id, title;
    };
    std::vector<WindowInfo> windows;
    std::vector<GroundedComponent> components;
    std::map<std::string, int> component_counts;  // per window

    std::vector<const GroundedComponent*> actionable() const;
    const GroundedComponent* by_id(const std::string& id) const;
};

// Fully resolved atomic action the simulator can apply.
struct ConcreteAction {
    std::string verb;
    std::string target_id;     // component id ("" for global verbs)
    std::string target_label;  // as resolved, for the log
    std::string text;
    std::string window_id;     // switch_focus target
};

std::string render_action(const ConcreteAction& a);

struct StepResult {
    bool applied = false;
    std::string reason;  // non-empty on failure
};

struct Effect {
    enum class Kind {
        spawn_window,
        close_window,
        focus_window,
        add_component,
        remove_component,
        set_occluded,
        set_value,
        set_label,
        set_hard_stop,
        fail,
    } kind;
    json payload;  // kind-specific fields; "$target"/"$text" expand from the action
};

struct TransitionRule {
    std::string id;
    std::string verb;
    std::string target;  // component id or label, matched case-insensitively; "" for global verbs
    std::string text;    // "" matches any action text
    int ticks = -1;      // -1: use the per-verb default
    std::vector<Effect> effects;
};

struct Trigger {
    int step_index = -1;        // fires after the n-th applied action (1-based)
    json predicate;             // or a state predicate, e.g. {"window_present": "w1"}
};

struct Fault {
    Trigger trigger;
    std::vector<Effect> effects;
    bool once = true;
};

// Per plan-unit postcondition checked by the critic.
struct UnitCheck {
    std::string expected_focus;          // window id; "" skips the focus check
    std::vector<json> require;           // predicates that must hold after the unit
};

struct Scenario {
    std::string name;
    std::vector<Window> windows;
    std::vector<TransitionRule> rules;
    std::vector<Fault> faults;
    std::map<std::string, UnitCheck> postconditions;  // keyed by plan-unit slot label
    std::map<std::string, int> tick_costs;            // per verb; "default" fallback
    std::set<std::string> known_windows;              // every window id the scenario can show
};

// Validated parse; ambiguous rules and malformed effects are rejected with
// the offending rule named. Error{validation}.
Scenario load_scenario(const json& doc);
Scenario load_scenario_file(const std::filesystem::path& path);
json scenario_to_json(const Scenario& s);

class Simulator {
public:
    explicit Simulator(Scenario scenario);

    // Side-effect-free enumeration of the current scene. Occluded components
    // are never actionable.
    ScreenState ground() const;

    // Applies one action: the matching transition fires and the clock
    // advances; no match or an occluded/unknown target is a failed result.
    StepResult apply(const ConcreteAction& a);

    long ticks() const { return ticks_; }
    int actions_applied() const { return actions_applied_; }
    bool hard_stop() const { return hard_stop_; }
    const Scenario& scenario() const { return scenario_; }

    // State predicate evaluation, shared with the critic.
    bool holds(const json& predicate) const;

private:
    Window* find_window(const std::string& id);
    const Window* find_window(const std::string& id) const;
    std::pair<Window*, Component*> find_component(const std::string& id);
    std::pair<const Window*, const Component*> find_component(const std::string& id) const;
    bool is_occluded(const std::string& component_id) const;
    void apply_effect(const Effect& e, const ConcreteAction& a, StepResult& result);
    void fire_faults();

    Scenario scenario_;
    std::vector<Window> windows_;
    std::vector<Fault> pending_faults_;
    long ticks_ = 0;
    int actions_applied_ = 0;
    bool hard_stop_ = false;
};

}  // namespace tracemind
