#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "dff/json_io.hpp"
#include "dff/protocol.hpp"
#include "dff/suites.hpp"

using namespace dff;

namespace {

WireMessage random_message(Rng& rng) {
    switch (rng.below(6)) {
        case 0: {
            MsgExample m;
            m.t = rng.below_int(1000);
            for (int f = 0; f < 1 + rng.below_int(8); ++f) m.x.bits.push_back(rng.bernoulli(0.5));
            return m;
        }
        case 1:
            return MsgPrediction{rng.below_int(1000), "L" + std::to_string(rng.below(5)),
                                 rng.below_int(100)};
        case 2: {
            MsgFeedback m;
            m.t = rng.below_int(1000);
            m.feedback.label = "L" + std::to_string(rng.below(5));
            if (rng.bernoulli(0.8))
                m.feedback.feature = Literal{static_cast<FeatureId>(rng.below(40)), rng.bernoulli(0.5)};
            return m;
        }
        case 3:
            return MsgAck{rng.below_int(1000)};
        case 4:
            return MsgSessionInit{"srdff", Json{{"m", 1 + rng.below_int(6)}}};
        default:
            return MsgSessionEnd{static_cast<long long>(rng.below(50)), ""};
    }
}

bool same_message(const WireMessage& a, const WireMessage& b) {
    return encode(a) == encode(b) && a.index() == b.index();
}

}  // namespace

TEST_CASE("codec round-trips every message variant", "[protocol]") {
    MsgFeedback fb;
    fb.t = 4;
    fb.feedback.label = "B";
    fb.feedback.feature = Literal{7, false};
    const std::string line = encode(fb);
    const WireMessage decoded = decode(line);
    REQUIRE(std::holds_alternative<MsgFeedback>(decoded));
    const auto& m = std::get<MsgFeedback>(decoded);
    CHECK(m.t == 4);
    CHECK(m.feedback.label == "B");
    CHECK(m.feedback.feature == Literal{7, false});

    Rng rng(1234);
    for (int i = 0; i < 1000; ++i) {
        WireMessage msg = random_message(rng);
        CHECK(same_message(msg, decode(encode(msg))));
    }
}

TEST_CASE("codec reports the byte offset of malformed frames", "[protocol]") {
    const std::string truncated = R"({"type":"feedback","t":4,"label")";
    try {
        decode(truncated, 512);
        FAIL("expected a decode error");
    } catch (const DecodeError& e) {
        CHECK(e.byte_offset == 512);
    }
    CHECK_THROWS_AS(decode(R"({"type":"nope"})"), DecodeError);
    CHECK_THROWS_AS(decode(std::string(kMaxFrameBytes + 1, ' ')), DecodeError);
}

TEST_CASE("serve session: zero examples end cleanly", "[protocol]") {
    InMemoryDuplex pipe;
    std::thread server([&] { serve_session(pipe.b_side(), default_learner_factory()); });
    LineTransport& client = pipe.a_side();
    client.write_line(encode(MsgSessionInit{"dff18", Json::object()}));
    client.write_line(encode(MsgSessionEnd{0, ""}));
    auto reply = client.read_line();
    server.join();
    REQUIRE(reply.has_value());
    const auto msg = decode(*reply);
    REQUIRE(std::holds_alternative<MsgSessionEnd>(msg));
    CHECK(std::get<MsgSessionEnd>(msg).mistakes == 0);
    CHECK(std::get<MsgSessionEnd>(msg).error.empty());
}

TEST_CASE("serve session: out-of-order t aborts with an error", "[protocol]") {
    InMemoryDuplex pipe;
    std::thread server([&] { serve_session(pipe.b_side(), default_learner_factory()); });
    LineTransport& client = pipe.a_side();
    client.write_line(encode(MsgSessionInit{"dff18", Json::object()}));
    MsgExample e0;
    e0.t = 5;
    e0.x.bits = {true};
    client.write_line(encode(e0));
    REQUIRE(client.read_line().has_value());  // ack (anchor round)
    MsgExample e1;
    e1.t = 5;  // not strictly increasing
    e1.x.bits = {true};
    client.write_line(encode(e1));
    auto reply = client.read_line();
    server.join();
    REQUIRE(reply.has_value());
    const auto msg = decode(*reply);
    REQUIRE(std::holds_alternative<MsgSessionEnd>(msg));
    CHECK_FALSE(std::get<MsgSessionEnd>(msg).error.empty());
}

TEST_CASE("serve session: feedback matching the prediction label aborts", "[protocol]") {
    InMemoryDuplex pipe;
    std::thread server([&] { serve_session(pipe.b_side(), default_learner_factory()); });
    LineTransport& client = pipe.a_side();
    client.write_line(encode(MsgSessionInit{"dff18", Json::object()}));

    MsgExample e0;
    e0.t = 0;
    e0.x.bits = {true};
    client.write_line(encode(e0));
    REQUIRE(client.read_line().has_value());
    client.write_line(encode(MsgFeedback{0, {"A", std::nullopt}}));
    REQUIRE(client.read_line().has_value());

    MsgExample e1;
    e1.t = 1;
    e1.x.bits = {false};
    client.write_line(encode(e1));
    auto prediction = client.read_line();
    REQUIRE(prediction.has_value());
    CHECK(std::holds_alternative<MsgPrediction>(decode(*prediction)));

    // the teacher claims a mistake and then names the predicted label as correct
    client.write_line(encode(MsgFeedback{1, {"A", Literal{0, true}}}));
    auto reply = client.read_line();
    server.join();
    REQUIRE(reply.has_value());
    const auto msg = decode(*reply);
    REQUIRE(std::holds_alternative<MsgSessionEnd>(msg));
    CHECK(std::get<MsgSessionEnd>(msg).error == "feedback after a correct prediction");
}

TEST_CASE("loopback sessions reproduce in-process transcripts byte for byte", "[protocol]") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        GridStream gs = make_grid_stream(3, seed % 2 == 0 ? 0 : 2, derive_seed(42, seed), false);

        SrDff in_process(3);
        SessionResult direct = run_session(in_process, gs.stream, gs.world, gs.spec);
        const std::string direct_jsonl = transcript_to_jsonl(direct.transcript);

        InMemoryDuplex pipe;
        SessionSummary summary;
        std::thread server(
            [&] { summary = serve_session(pipe.b_side(), default_learner_factory()); });
        Teacher teacher(gs.world, gs.spec);
        DriveResult wire =
            drive_session(pipe.a_side(), teacher, gs.stream, "srdff", Json{{"m", 3}});
        server.join();

        REQUIRE(wire.ok());
        CHECK(wire.reported_mistakes == wire.mistakes);
        CHECK(wire.mistakes == direct.mistakes);
        CHECK(transcript_to_jsonl(wire.transcript) == direct_jsonl);
    }
}

TEST_CASE("loopback preserves the unique-label learner given a fixed seed", "[protocol]") {
    GridStream gs = make_grid_stream(3, 1, 99, true);
    UniqueLabelLearner in_process(0.5, 2, 7, 3);
    SessionResult direct = run_session(in_process, gs.stream, gs.world, gs.spec);

    InMemoryDuplex pipe;
    std::thread server([&] { serve_session(pipe.b_side(), default_learner_factory()); });
    Teacher teacher(gs.world, gs.spec);
    DriveResult wire = drive_session(pipe.a_side(), teacher, gs.stream, "unique_label",
                                     Json{{"p", 0.5}, {"l", 2}, {"seed", 7}, {"m", 3}});
    server.join();

    REQUIRE(wire.ok());
    CHECK(transcript_to_jsonl(wire.transcript) == transcript_to_jsonl(direct.transcript));
}
