#include <doctest.h>

#include "oracles/skills_oracle.hpp"
#include "tracemind/cluster.hpp"
#include "tracemind/skills.hpp"

using namespace tracemind;

namespace {

AliasMap test_phi() {
    return AliasMap::load(std::filesystem::path(TRACEMIND_SOURCE_DIR) / "data/alias_map.json");
}

ActionStep canon(const std::string& verb, const std::string& target = "",
                 const std::string& text_field = "", const std::string& text_value = "",
                 bool recovery = false) {
    ActionStep s;
    s.raw_label = verb + " " + target;
    s.verb = verb;
    if (!target.empty()) {
        s.args["target"] = target;
        s.object = target;
    }
    if (!text_field.empty()) s.args[text_field] = text_value;
    s.recovery = recovery;
    return s;
}

}  // namespace

TEST_SUITE("skills") {

TEST_CASE("d_sig: identity, one edit, empty pair") {
    VerbSignature a = {"open", "click"};
    CHECK(d_sig(a, a).raw == 0);
    CHECK(d_sig(a, a).normalized == 0.0);
    auto d = d_sig({"open"}, {"open", "click"});
    CHECK(d.raw == 1);
    CHECK(d.normalized == doctest::Approx(0.5));
    CHECK(d_sig({}, {}).raw == 0);
    CHECK(d_sig({}, {}).normalized == 0.0);
}

TEST_CASE("d_sig rejects unresolved verbs") {
    CHECK_THROWS_AS(d_sig({""}, {"open"}), Error);
}

TEST_CASE("d_sig matches the exhaustive recursion on random pairs") {
    auto rng = seeded_rng(21, "dsig");
    for (int rep = 0; rep < 300; ++rep) {
        auto a = oracle::random_signature(rng);
        auto b = oracle::random_signature(rng);
        int expect = oracle::lev_recursive(a, b);
        auto got = d_sig(a, b);
        CHECK(got.raw == expect);
        size_t mx = std::max(a.size(), b.size());
        if (mx > 0) CHECK(got.normalized == doctest::Approx(double(expect) / double(mx)));
    }
}

TEST_CASE("d_sig satisfies the metric axioms on random triples") {
    auto rng = seeded_rng(22, "metric");
    for (int rep = 0; rep < 10000; ++rep) {
        auto a = oracle::random_signature(rng, 5);
        auto b = oracle::random_signature(rng, 5);
        auto c = oracle::random_signature(rng, 5);
        double dab = d_sig(a, b).normalized;
        double dba = d_sig(b, a).normalized;
        double dac = d_sig(a, c).normalized;
        double dcb = d_sig(c, b).normalized;
        CHECK(dab == dba);                // symmetry
        CHECK((dab == 0.0) == (a == b));  // identity of indiscernibles
        CHECK(dab <= dac + dcb + 1e-12);  // triangle inequality
    }
}

TEST_CASE("medoid: singleton, three-candidate example, ties") {
    CHECK(medoid({{"only", {"open"}}}) == "only");
    std::vector<std::pair<std::string, VerbSignature>> cands = {
        {"a", {"open", "click"}},
        {"b", {"open", "click"}},
        {"c", {"open", "click", "save"}},
    };
    std::string m = medoid(cands);
    CHECK((m == "a" || m == "b"));
    CHECK(m == "a");  // lexicographic tie-break
}

TEST_CASE("medoid matches exhaustive argmin over the full distance matrix") {
    auto rng = seeded_rng(23, "medoid");
    for (int rep = 0; rep < 120; ++rep) {
        std::uniform_int_distribution<int> n_dist(1, 8);
        int n = n_dist(rng);
        std::vector<std::pair<std::string, VerbSignature>> cands;
        for (int i = 0; i < n; ++i) {
            char id[8];
            std::snprintf(id, sizeof(id), "t%02d", i);
            cands.emplace_back(id, oracle::random_signature(rng));
        }
        std::string best;
        double best_norm = 1e18;
        long best_raw = std::numeric_limits<long>::max();
        for (const auto& [id, sig] : cands) {
            double tn = 0;
            long tr = 0;
            for (const auto& [other_id, other] : cands) {
                tn += d_sig(sig, other).normalized;
                tr += d_sig(sig, other).raw;
            }
            if (tn < best_norm || (tn == best_norm && tr < best_raw) ||
                (tn == best_norm && tr == best_raw && id < best)) {
                best_norm = tn;
                best_raw = tr;
                best = id;
            }
        }
        CHECK(medoid(cands) == best);

        // Direct re-verification of the medoid property.
        std::string m = medoid(cands);
        double m_total = 0;
        for (const auto& [id, sig] : cands)
            if (id == m)
                for (const auto& [other_id, other] : cands)
                    m_total += d_sig(sig, other).normalized;
        for (const auto& [id, sig] : cands) {
            double total = 0;
            for (const auto& [other_id, other] : cands) total += d_sig(sig, other).normalized;
            CHECK(m_total <= total + 1e-12);
        }
    }
}

TEST_CASE("parameterize: literal url becomes a typed placeholder") {
    AliasMap phi = test_phi();
    std::vector<ActionStep> trace = {
        canon("press", "address_bar"),
        canon("text_input", "address_bar", "text", "https://example.com"),
    };
    SkillHint hint = parameterize(trace, phi);
    REQUIRE(hint.steps.size() == 2);
    CHECK(hint.steps[1].args.at("text") == "<url>");
    REQUIRE(hint.arg_schema.size() == 1);
    CHECK(hint.arg_schema[0].token == "<url>");
    CHECK(hint.arg_schema[0].type == FieldType::url);
    CHECK(hint.verbs == VerbSignature{"press", "text_input"});
}

TEST_CASE("parameterize: recovery and prune-list steps are dropped, order kept") {
    AliasMap phi = test_phi();
    std::vector<ActionStep> trace = {
        canon("close", "popup", "", "", /*recovery=*/true),
        canon("click", "Text Area"),
        canon("wait", "", "duration", "1s"),
        canon("text_input", "Text Area", "text", "hello"),
    };
    SkillHint hint = parameterize(trace, phi);
    CHECK(hint.verbs == VerbSignature{"click", "text_input"});
    CHECK(hint.steps[1].args.at("text") == "<text>");
}

TEST_CASE("parameterize is idempotent on an already-parameterized trace") {
    AliasMap phi = test_phi();
    std::vector<ActionStep> trace = {
        canon("text_input", "address_bar", "text", "https://example.com"),
        canon("save", "", "filename", "notes.txt"),
    };
    SkillHint once = parameterize(trace, phi);
    SkillHint twice = parameterize(once.steps, phi);
    CHECK(once.steps == twice.steps);
    CHECK(once.verbs == twice.verbs);
    REQUIRE(once.arg_schema.size() == twice.arg_schema.size());
}

TEST_CASE("parameterize: a trace that prunes to nothing is a degenerate skill") {
    AliasMap phi = test_phi();
    std::vector<ActionStep> trace = {canon("wait", "", "duration", "2s")};
    try {
        parameterize(trace, phi);
        FAIL("expected degenerate");
    } catch (const Error& e) {
        CHECK(e.cls() == ErrorClass::degenerate);
    }
}

TEST_CASE("support: exact schema supports the whole subgroup; tau=1 counts exact only") {
    VerbSignature sig = {"click", "text_input", "enter"};
    std::vector<VerbSignature> members(4, sig);
    SkillHint schema;
    schema.verbs = sig;
    auto ranked = support_and_rank(members, {schema}, 0.8);
    CHECK(ranked[0].support == 4);

    members.push_back({"click", "text_input"});  // one edit away (sim 2/3)
    ranked = support_and_rank(members, {schema}, 1.0);
    CHECK(ranked[0].support == 4);
    ranked = support_and_rank(members, {schema}, 0.6);
    CHECK(ranked[0].support == 5);
}

TEST_CASE("support: five-member fixture hand-counted at tau 0.8") {
    // Similarities to [open, click, save]: 1.0, 1.0, 2/3, 3/4, 1/3 — only
    // the two exact matches clear 0.8.
    VerbSignature schema_sig = {"open", "click", "save"};
    std::vector<VerbSignature> members = {
        {"open", "click", "save"},
        {"open", "click", "save"},
        {"open", "click", "copy"},
        {"open", "click", "save", "close"},
        {"open", "enter", "copy"},
    };
    SkillHint schema;
    schema.verbs = schema_sig;
    auto ranked = support_and_rank(members, {schema}, 0.8);
    CHECK(ranked[0].support == 2);
}

TEST_CASE("support is monotone non-increasing in tau") {
    auto rng = seeded_rng(31, "mono");
    std::vector<VerbSignature> members;
    for (int i = 0; i < 12; ++i) members.push_back(oracle::random_signature(rng, 5));
    SkillHint schema;
    schema.verbs = oracle::random_signature(rng, 5);
    int prev = std::numeric_limits<int>::max();
    for (double tau = 0.0; tau <= 1.0001; tau += 0.1) {
        auto ranked = support_and_rank(members, {schema}, tau);
        CHECK(ranked[0].support <= prev);
        prev = ranked[0].support;
    }
}

TEST_CASE("ranking: higher support first, medoid wins ties") {
    std::vector<VerbSignature> members = {{"open"}, {"open"}, {"open"},
                                          {"click"}, {"click"}, {"click"}};
    SkillHint medoid_schema, other;
    medoid_schema.verbs = {"click"};
    other.verbs = {"open"};
    auto ranked = support_and_rank(members, {other, medoid_schema}, 1.0, 1);
    CHECK(ranked[0].verbs == VerbSignature{"click"});
    CHECK(ranked[0].rank == 1);
    CHECK(ranked[1].rank == 2);
}

TEST_CASE("representative traces: singleton, saturation, full-sort oracle") {
    std::vector<std::pair<std::string, VerbSignature>> one = {{"solo", {"open"}}};
    CHECK(representative_traces(one, {"open"}, 5) == std::vector<std::string>{"solo"});

    std::vector<std::pair<std::string, VerbSignature>> members = {
        {"m1", {"open", "click"}},           // d = 1/3 (one insertion, len 3)
        {"m2", {"open", "click", "save"}},   // d = 0
        {"m3", {"open"}},                    // d = 2/3
        {"m4", {"open", "click", "copy"}},   // d = 1/3
        {"m5", {"click", "click", "save"}},  // d = 1/3
        {"m6", {"enter"}},                   // d = 1
    };
    VerbSignature proto = {"open", "click", "save"};
    auto all = representative_traces(members, proto, 10);
    CHECK(all.size() == 6);  // saturation
    auto top3 = representative_traces(members, proto, 3);
    CHECK(top3 == std::vector<std::string>{"m2", "m1", "m4"});  // ties by id
}

TEST_CASE("attach_skills fills hints for every subgroup with traces") {
    AliasMap phi = test_phi();
    UnitStore store;
    IntentHierarchy h;
    h.dim = 2;
    IntentGroup g;
    g.id = 0;
    SubGroup sg;
    sg.id = 0;
    for (int i = 0; i < 4; ++i) {
        IntentUnit u;
        u.id = "u" + std::to_string(i);
        u.env = "browser";
        u.act_or_key = "search";
        u.desc = "search things";
        u.actions = {canon("click", "Address and search bar"),
                     canon("text_input", "Address and search bar", "text", "cats")};
        if (i == 3) u.actions.push_back(canon("enter"));
        store[u.id] = u;
        sg.member_ids.push_back(u.id);
    }
    sg.centroid = Vec::Zero(2);
    g.subgroups.push_back(sg);
    h.groups.push_back(g);
    attach_skills(h, store, phi, {});
    const auto& hints = h.groups[0].subgroups[0].hints;
    REQUIRE(!hints.empty());
    CHECK(hints[0].verbs == VerbSignature{"click", "text_input"});
    CHECK(hints[0].support == 3);
    CHECK(hints[0].rank == 1);
    CHECK(h.groups[0].subgroups[0].support == 3);
    CHECK(hints[0].steps[1].args.at("text") == "<text>");
    CHECK(!hints[0].source_trace_ids.empty());
}

}  // TEST_SUITE
