#include <catch2/catch_amalgamated.hpp>

#include "dff/json_io.hpp"
#include "dff/learners.hpp"
#include "dff/world.hpp"

using namespace dff;

namespace {

Example ex(std::initializer_list<bool> bits) { return Example{std::vector<bool>(bits)}; }

Example zeros(std::size_t n, std::initializer_list<std::size_t> ones = {}) {
    Example x;
    x.bits.assign(n, false);
    for (std::size_t i : ones) x.bits[i] = true;
    return x;
}

TeacherFeedback fb(Label label, Literal feature) { return {std::move(label), feature}; }

// G0:A, G1:B, feature 0 true on G0.
std::pair<Representation, std::vector<Example>> ab_world(std::uint64_t seed = 3) {
    WorldGenParams params;
    params.m = 2;
    params.labels = {"A", "B"};
    params.pool_size = 3;
    params.seed = seed;
    return generate_world(params);
}

std::vector<ScriptRound> components(std::initializer_list<int> cs) {
    std::vector<ScriptRound> script;
    for (int c : cs) script.push_back({c, {}, {}, false});
    return script;
}

}  // namespace

TEST_CASE("ub formula", "[learners]") {
    CHECK(ub(3, 0) == 6);
    CHECK(ub(1, 5) == 5);
    CHECK(ub(2, 3) == 8);
    CHECK_THROWS_AS(ub(0, 0), Error);
}

TEST_CASE("srdff construction", "[learners]") {
    SrDff learner(3);
    CHECK(learner.rules().empty());
    CHECK_FALSE(learner.anchored());
    CHECK_THROWS_AS(SrDff(0), Error);
}

TEST_CASE("prediction falls back to the anchor and uses first-match order", "[learners]") {
    SrDff learner(5);
    CHECK_THROWS_AS(learner.predict(ex({true})), Error);
    learner.anchor(0, ex({true, false, false}), "A");

    auto p = learner.predict(ex({false, false, false}));
    CHECK(p.label == "A");
    CHECK(p.explanation_id == 0);
    CHECK(p.anchor_fallback);

    // build rule1 {} -> {(1,-)} and rule2 {}
    learner.absorb(1, ex({false, false, false}), p, fb("B", {0, true}));
    REQUIRE(learner.rules().size() == 1);
    auto p2 = learner.predict(ex({true, true, false}));
    CHECK(p2.label == "B");  // empty conjunction matches everything
    CHECK_FALSE(p2.anchor_fallback);
    learner.absorb(2, ex({true, true, false}), p2, fb("A", {1, true}));
    REQUIRE(learner.rules()[0].conj.contains({1, false}));

    auto p3 = learner.predict(ex({false, true, false}));
    CHECK(p3.anchor_fallback);  // rule1 no longer matches
    learner.absorb(3, ex({false, true, false}), p3, fb("C", {2, true}));
    REQUIRE(learner.rules().size() == 2);

    // both rules match now: the earlier-created one answers
    auto p4 = learner.predict(ex({false, false, false}));
    CHECK(p4.label == "B");
    CHECK(p4.explanation_id == 1);
}

TEST_CASE("srdff refinement, duplicates and deletion threshold", "[learners]") {
    SrDff learner(2);
    learner.anchor(0, zeros(8, {0}), "A");
    auto p = learner.predict(zeros(8));
    learner.absorb(1, zeros(8), p, fb("B", {0, true}));
    REQUIRE(learner.rules().size() == 1);
    CHECK(learner.rules()[0].conj.empty());
    CHECK(learner.rules()[0].label == "B");

    // refine with phi = (5,+): conjunction becomes {(5,-)}
    auto p2 = learner.predict(zeros(8));
    learner.absorb(2, zeros(8), p2, fb("A", {5, true}));
    REQUIRE(learner.rules().size() == 1);
    CHECK(learner.rules()[0].conj.size() == 1);
    CHECK(learner.rules()[0].conj.contains({5, false}));

    // duplicate refinement leaves the set unchanged, so no deletion at m=2
    auto p3 = learner.predict(zeros(8));
    learner.absorb(3, zeros(8), p3, fb("A", {5, true}));
    REQUIRE(learner.rules().size() == 1);
    CHECK(learner.rules()[0].conj.size() == 1);

    // a second distinct literal reaches |C| >= m: rule deleted
    auto p4 = learner.predict(zeros(8));
    learner.absorb(4, zeros(8), p4, fb("A", {6, true}));
    CHECK(learner.rules().empty());
}

TEST_CASE("srdff with m=1 deletes every rule on first refinement", "[learners]") {
    SrDff learner(1);
    learner.anchor(0, zeros(4, {0}), "A");
    auto p = learner.predict(zeros(4));
    learner.absorb(1, zeros(4), p, fb("B", {0, true}));
    REQUIRE(learner.rules().size() == 1);
    auto p2 = learner.predict(zeros(4));
    learner.absorb(2, zeros(4), p2, fb("A", {1, true}));
    CHECK(learner.rules().empty());
}

TEST_CASE("srdff hand trace on the two-component world", "[learners]") {
    auto [world, pool] = ab_world();
    auto stream = adversarial_stream(world, components({0, 1, 0, 0}), ExceptionSpec::none(), 1);
    SrDff learner(2);
    SessionResult session = run_session(learner, stream, world, ExceptionSpec::none());

    CHECK(session.mistakes == 2);
    CHECK(session.transcript[1].mistake);
    CHECK(session.transcript[2].mistake);
    CHECK_FALSE(session.transcript[3].mistake);
    CHECK(session.mistakes <= ub(2, 0));

    REQUIRE(learner.rules().size() == 1);
    const Rule& rule = learner.rules()[0];
    CHECK(rule.label == "B");
    CHECK(rule.representative_id == 1);
    CHECK(rule.conj.size() == 1);
    CHECK(rule.conj.contains({0, false}));
}

TEST_CASE("session on a stream of anchor-labeled examples makes no mistakes", "[learners]") {
    auto [world, pool] = ab_world();
    auto stream = adversarial_stream(world, components({0, 0, 0, 0, 0, 0}), ExceptionSpec::none());
    SrDff learner(2);
    SessionResult session = run_session(learner, stream, world, ExceptionSpec::none());
    CHECK(session.mistakes == 0);
}

TEST_CASE("feedback without a mistake is rejected at the learner boundary", "[learners]") {
    SrDff learner(2);
    learner.anchor(0, zeros(2, {0}), "A");
    Prediction made{"A", 99, false};  // names a rule that does not exist
    CHECK_THROWS_AS(learner.absorb(1, zeros(2), made, fb("B", {0, true})), Error);
}

TEST_CASE("dff18 equals srdff on exception-free streams", "[learners]") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        WorldGenParams params;
        params.m = 3;
        params.label_count = 2 + rng.below_int(2);
        params.pool_size = 3;
        params.seed = rng.next();
        auto [world, pool] = generate_world(params);
        std::vector<ScriptRound> script;
        for (int t = 0; t < 40; ++t) script.push_back({rng.below_int(3), {}, {}, false});
        auto stream = adversarial_stream(world, script, ExceptionSpec::none(), rng.next());
        SrDff a(3);
        Dff18 b;
        SessionResult ra = run_session(a, stream, world, ExceptionSpec::none());
        SessionResult rb = run_session(b, stream, world, ExceptionSpec::none());
        CHECK(ra.mistakes == rb.mistakes);
        REQUIRE(ra.transcript.size() == rb.transcript.size());
        for (std::size_t i = 0; i < ra.transcript.size(); ++i) {
            CHECK(ra.transcript[i].predicted == rb.transcript[i].predicted);
            CHECK(ra.transcript[i].feedback == rb.transcript[i].feedback);
        }
    }
}

TEST_CASE("scripted corruption grows a dff18 rule past m while srdff deletes it", "[learners]") {
    // hand-built world: feature 0 discriminates, features 1..3 are free
    Representation world;
    world.feature_count = 4;
    world.components.push_back({"A", {zeros(4, {0})}});
    world.components.push_back({"B", {zeros(4)}});
    world.phi[{0, 1}] = Literal{0, true};
    world.phi[{1, 0}] = Literal{0, false};

    std::vector<ScriptRound> script = {
        {1, {}, {}, false},                  // anchor in G1 (label B)
        {0, {}, {}, false},                  // no-match mistake: rule for A
        {0, {}, fb("B", {1, true}), true},   // false claim, junk literal (1,-)
        {0, {}, fb("B", {2, true}), true},   // junk literal (2,-): |C| = 2 = m
        {0, {}, fb("B", {3, true}), true},   // dff18 keeps growing
    };
    auto stream = adversarial_stream(world, script, ExceptionSpec::none(), 5);

    SrDff srdff(2);
    SessionResult rs = run_session(srdff, stream, world, ExceptionSpec::none());
    for (const Rule& r : srdff.rules()) CHECK(r.conj.size() < 2);  // deleted at |C| >= 2

    Dff18 dff18;
    SessionResult rd = run_session(dff18, stream, world, ExceptionSpec::none());
    REQUIRE(dff18.rules().size() == 1);
    CHECK(dff18.rules()[0].conj.size() >= 2);
}

TEST_CASE("unique_label: parameter validation", "[learners]") {
    CHECK_THROWS_AS(UniqueLabelLearner(-0.1, 2, 1), Error);
    CHECK_THROWS_AS(UniqueLabelLearner(1.1, 2, 1), Error);
    CHECK_THROWS_AS(UniqueLabelLearner(0.5, 0, 1), Error);
    UniqueLabelLearner ok(0.5, 2, 1, 3);
    CHECK(ok.update_threshold() == 4);  // m + l - 1
}

TEST_CASE("unique_label: consistency guard skips the literal but counts the update", "[learners]") {
    UniqueLabelLearner learner(1.0, 2, 7, 3);
    learner.anchor(0, zeros(4, {0}), "A");
    auto p = learner.predict(zeros(4));
    learner.absorb(1, zeros(4), p, fb("B", {0, true}));  // create rule for B
    REQUIRE(learner.rules().size() == 1);

    // phi = (0,-): the representative satisfies phi itself, guard fails
    auto p2 = learner.predict(zeros(4, {1}));
    REQUIRE_FALSE(p2.anchor_fallback);
    learner.absorb(2, zeros(4, {1}), p2, fb("A", {0, false}));
    CHECK(learner.rules()[0].conj.empty());
    CHECK(learner.rules()[0].update_count == 1);

    // phi = (1,+): representative satisfies (1,-), example satisfies (1,+): added
    auto p3 = learner.predict(zeros(4, {1}));
    learner.absorb(3, zeros(4, {1}), p3, fb("A", {1, true}));
    CHECK(learner.rules()[0].conj.contains({1, false}));
    CHECK(learner.rules()[0].update_count == 2);
}

TEST_CASE("unique_label: rule deleted once the update counter hits m+l-1", "[learners]") {
    UniqueLabelLearner learner(1.0, 1, 7, 2);  // threshold 2
    learner.anchor(0, zeros(4, {0}), "A");
    auto p = learner.predict(zeros(4));
    learner.absorb(1, zeros(4), p, fb("B", {0, true}));
    REQUIRE(learner.rules().size() == 1);
    auto p2 = learner.predict(zeros(4, {1}));
    learner.absorb(2, zeros(4, {1}), p2, fb("A", {0, false}));  // skipped update, U=1
    REQUIRE(learner.rules().size() == 1);
    auto p3 = learner.predict(zeros(4, {2}));
    learner.absorb(3, zeros(4, {2}), p3, fb("A", {2, true}));  // U=2 >= threshold
    CHECK(learner.rules().empty());
}

TEST_CASE("unique_label: no-match repair removes the unsatisfied literal", "[learners]") {
    UniqueLabelLearner learner(1.0, 9, 7, 10);  // threshold 18, no deletions here
    learner.anchor(0, zeros(10, {0}), "A");

    // create rule for B with representative satisfying (8,+)
    auto p1 = learner.predict(zeros(10, {8}));
    learner.absorb(1, zeros(10, {8}), p1, fb("B", {0, true}));
    // add (3,-): x_t has f3 = 1, representative has f3 = 0
    auto p2 = learner.predict(zeros(10, {3, 8}));
    learner.absorb(2, zeros(10, {3, 8}), p2, fb("A", {3, true}));
    // add (8,+): x_t has f8 = 0, representative has f8 = 1
    auto p3 = learner.predict(zeros(10));
    REQUIRE_FALSE(p3.anchor_fallback);  // rule {(3,-)} still matches an all-zero x
    learner.absorb(3, zeros(10), p3, fb("A", {8, false}));
    REQUIRE(learner.rules().size() == 1);
    REQUIRE(learner.rules()[0].conj.literals() ==
            std::vector<Literal>{{3, false}, {8, true}});

    // no-match round (satisfies (3,-) but not (8,+)) with true label B: repair
    auto p4 = learner.predict(zeros(10, {9}));
    REQUIRE(p4.anchor_fallback);
    learner.absorb(4, zeros(10, {9}), p4, fb("B", {0, false}));
    REQUIRE(learner.rules().size() == 1);
    CHECK(learner.rules()[0].conj.literals() == std::vector<Literal>{{3, false}});
    CHECK(learner.rules()[0].update_count == 3);
}

TEST_CASE("unique_label: p=0 never creates rules, p=1 always does", "[learners]") {
    UniqueLabelLearner never(0.0, 2, 5, 3);
    never.anchor(0, zeros(2, {0}), "A");
    for (int t = 1; t <= 5; ++t) {
        auto p = never.predict(zeros(2));
        never.absorb(t, zeros(2), p, fb("B", {0, true}));
    }
    CHECK(never.rules().empty());

    UniqueLabelLearner always(1.0, 2, 5, 3);
    always.anchor(0, zeros(2, {0}), "A");
    auto p = always.predict(zeros(2));
    always.absorb(1, zeros(2), p, fb("B", {0, true}));
    CHECK(always.rules().size() == 1);
}

TEST_CASE("pfrdff phase schedule starts with (1,1) and doubles as budgets break", "[learners]") {
    PfrDff learner;
    REQUIRE_FALSE(learner.phases().empty());
    CHECK(learner.phases()[0].m_guess == 1);
    CHECK(learner.phases()[0].k_guess == 1);
    CHECK(learner.phases()[0].budget == 1);
}

TEST_CASE("pfrdff on a (m=2,k=0)-consistent stream stays within the doubling bound",
          "[learners]") {
    auto [world, pool] = ab_world();
    Rng rng(11);
    std::vector<ScriptRound> script;
    for (int t = 0; t < 300; ++t) script.push_back({rng.below_int(2), {}, {}, false});
    auto stream = adversarial_stream(world, script, ExceptionSpec::none(), 13);
    PfrDff learner;
    SessionResult session = run_session(learner, stream, world, ExceptionSpec::none());
    CHECK(session.mistakes <= 1024);  // 32 UB(2,0) log2^2(8 UB(2,0))

    // the terminal phase never needs more than m < 2m components
    int terminal_m = 0;
    for (auto it = learner.phases().rbegin(); it != learner.phases().rend(); ++it)
        if (it->rounds > 0) {
            terminal_m = it->m_guess;
            break;
        }
    CHECK(terminal_m < 4);
}

TEST_CASE("transcripts replay bit-identically", "[learners]") {
    auto [world, pool] = ab_world(9);
    Rng rng(21);
    std::vector<ScriptRound> script;
    for (int t = 0; t < 60; ++t) script.push_back({rng.below_int(2), {}, {}, false});
    ExceptionSpec spec = ExceptionSpec::adversarial({5, 9}, Corruption::both);
    auto stream = adversarial_stream(world, script, spec, 31);

    auto run_one = [&](Learner& learner) {
        SessionResult s = run_session(learner, stream, world, spec);
        return transcript_to_jsonl(s.transcript);
    };
    {
        SrDff a(2), b(2);
        CHECK(run_one(a) == run_one(b));
    }
    {
        PfrDff a, b;
        CHECK(run_one(a) == run_one(b));
    }
    {
        UniqueLabelLearner a(0.5, 1, 77, 2), b(0.5, 1, 77, 2);
        CHECK(run_one(a) == run_one(b));
    }
}
