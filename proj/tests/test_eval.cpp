#include <doctest.h>

#include "tracemind/pipeline.hpp"

using namespace tracemind;

namespace {

ExecutionRecord rec(int attempted, int successful, Outcome outcome, long ticks = 10,
                    int plan_executed = 0, int plan_total = 0) {
    ExecutionRecord r;
    r.steps_attempted = attempted;
    r.steps_successful = successful;
    r.outcome = outcome;
    r.ticks = ticks;
    r.plan_steps_executed = plan_executed;
    r.plan_steps_total = plan_total;
    return r;
}

GlobalPlan plan_with_steps(int n) {
    GlobalPlan p;
    PlanUnit u;
    u.slot_label = "slot";
    for (int i = 0; i < n; ++i) u.steps.push_back({"click", "x", "", ""});
    p.units.push_back(u);
    p.finalize_id();
    return p;
}

Pipeline golden_pipeline() {
    return Pipeline::open(load_config(std::filesystem::path(TRACEMIND_SOURCE_DIR) /
                                      "data/config/golden.json"));
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("ser: ratio, undefined case, and batch mean") {
    CHECK(*ser(rec(10, 9, Outcome::SUCCESS)) == doctest::Approx(0.9));
    CHECK_FALSE(ser(rec(0, 0, Outcome::BLOCKED)).has_value());
    std::vector<ExecutionRecord> batch = {rec(10, 9, Outcome::SUCCESS),
                                          rec(4, 2, Outcome::BLOCKED),
                                          rec(5, 5, Outcome::SUCCESS)};
    double mean = 0;
    for (const auto& r : batch) mean += *ser(r) / 3.0;
    CHECK(mean == doctest::Approx((0.9 + 0.5 + 1.0) / 3.0));
}

TEST_CASE("completion: full, half, empty plan") {
    GlobalPlan ten = plan_with_steps(10);
    CHECK(completion(rec(12, 12, Outcome::SUCCESS, 10, 10, 10), ten) == doctest::Approx(1.0));
    CHECK(completion(rec(7, 5, Outcome::BLOCKED, 10, 5, 10), ten) == doctest::Approx(0.5));
    GlobalPlan empty;
    CHECK_THROWS_AS(completion(rec(0, 0, Outcome::BLOCKED), empty), Error);
}

TEST_CASE("step-length bins are left-closed right-open") {
    auto bins = bin_by_length({rec(12, 12, Outcome::SUCCESS)});
    REQUIRE(bins.size() == 1);
    CHECK(bins[0].lo == 10);
    CHECK(bins[0].hi == 15);
    bins = bin_by_length({rec(15, 15, Outcome::SUCCESS)});
    CHECK(bins[0].lo == 15);
    CHECK(bins[0].hi == 20);
}

TEST_CASE("binning a six-record fixture matches the hand table") {
    std::vector<ExecutionRecord> records = {
        rec(3, 3, Outcome::SUCCESS, 3),   rec(4, 2, Outcome::BLOCKED, 4),
        rec(7, 7, Outcome::SUCCESS, 7),   rec(9, 9, Outcome::SUCCESS, 9),
        rec(12, 6, Outcome::BLOCKED, 12), rec(14, 14, Outcome::SUCCESS, 14),
    };
    auto bins = bin_by_length(records, 5);
    REQUIRE(bins.size() == 3);
    CHECK(bins[0].lo == 0);
    CHECK(bins[0].tasks == 2);
    CHECK(bins[0].success_rate == doctest::Approx(0.5));
    CHECK(*bins[0].mean_ser == doctest::Approx((1.0 + 0.5) / 2));
    CHECK(bins[1].lo == 5);
    CHECK(bins[1].tasks == 2);
    CHECK(bins[1].success_rate == doctest::Approx(1.0));
    CHECK(bins[2].lo == 10);
    CHECK(bins[2].tasks == 2);
    CHECK(bins[2].success_rate == doctest::Approx(0.5));
    CHECK(bins[2].mean_ticks == doctest::Approx(13.0));
}

TEST_CASE("consistency over identical plans is 1.0; runs=1 is rejected") {
    ProviderConfig pc;
    pc.dimension = 64;
    HashingProvider provider(pc);
    GlobalPlan p = plan_with_steps(3);
    CHECK(consistency_over_plans({p, p, p, p, p}, 0.93, provider).fraction == doctest::Approx(1.0));
    CHECK_THROWS_AS(consistency_over_plans({p}, 0.93, provider), Error);
}

TEST_CASE("a swapped unit in one run marks exactly that unit inconsistent") {
    ProviderConfig pc;
    pc.dimension = 64;
    HashingProvider provider(pc);
    GlobalPlan base;
    for (int u = 0; u < 3; ++u) {
        PlanUnit unit;
        unit.slot_label = "slot" + std::to_string(u);
        unit.steps = {{"click", "component " + std::to_string(u), "", ""}};
        base.units.push_back(unit);
    }
    GlobalPlan swapped = base;
    swapped.units[1].steps[0] = {"hotkey", "", "ctrl+q entirely different payload", ""};
    auto res = consistency_over_plans({base, base, swapped, base, base}, 0.93, provider);
    CHECK(res.total_units == 3);
    CHECK(res.consistent_units == 2);
    CHECK(res.fraction == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("deterministic labeler and generator give 100% consistency") {
    Pipeline pipe = golden_pipeline();
    for (const char* cmd : {"search cats at a browser", "open notepad and type hello world",
                            "compose an email to bob saying lunch"}) {
        auto res = run_consistency(cmd, 5, 0.93, 0.0, 11, pipe);
        CHECK_MESSAGE(res.fraction == doctest::Approx(1.0), cmd);
    }
}

TEST_CASE("seeded labeler noise strictly decreases consistency across three levels") {
    Pipeline pipe = golden_pipeline();
    std::vector<const char*> commands = {
        "search cats at a browser", "open notepad and type hello world",
        "compose an email to bob saying lunch", "search files for report",
        "open notepad, type meeting notes and save as notes.txt",
        "open the website https://example.com", "search dogs at a browser",
        "open notepad and paste"};
    std::vector<double> fractions;
    for (double noise : {0.15, 0.45, 0.85}) {
        int consistent = 0, total = 0;
        for (const char* cmd : commands) {
            auto res = run_consistency(cmd, 5, 0.93, noise, 1234, pipe);
            consistent += res.consistent_units;
            total += res.total_units;
        }
        fractions.push_back(static_cast<double>(consistent) / total);
    }
    CHECK(fractions[0] > fractions[1]);
    CHECK(fractions[1] > fractions[2]);
}

TEST_CASE("ablation rows cover the component matrix") {
    auto rows = ablation_rows();
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].label == "B");
    CHECK(rows[0].retrieval == AblationToggles::Retrieval::none);
    CHECK_FALSE(rows[0].plan_memory);
    CHECK(rows[5].label == "B+Tsg+Z+Ssg+PM");
    CHECK(rows[5].learned_z);
    CHECK(rows[5].skill_hints);
    CHECK(rows[5].plan_memory);
    CHECK(ablation_row("B+Tg").retrieval == AblationToggles::Retrieval::greedy);
    CHECK_THROWS_AS(ablation_row("nope"), Error);
}

TEST_CASE("summarize aggregates success, completion, ser and bins") {
    std::vector<ExecutionRecord> records = {rec(4, 4, Outcome::SUCCESS, 4, 2, 2),
                                            rec(6, 3, Outcome::BLOCKED, 6, 1, 2)};
    std::vector<GlobalPlan> plans = {plan_with_steps(2), plan_with_steps(2)};
    auto m = summarize(records, plans);
    CHECK(m.tasks == 2);
    CHECK(m.successes == 1);
    CHECK(m.success_rate == doctest::Approx(0.5));
    CHECK(m.mean_completion == doctest::Approx((1.0 + 0.5) / 2));
    CHECK(*m.mean_ser == doctest::Approx((1.0 + 0.5) / 2));
    json j = metrics_to_json(m);
    CHECK(j["tasks"] == 2);
    CHECK(!metrics_table(m).empty());
}

}  // TEST_SUITE
