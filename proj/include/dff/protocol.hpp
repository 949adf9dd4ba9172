#pragma once

#include <condition_variable>
#include <deque>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>

#include <json.hpp>

#include "dff/json_io.hpp"
#include "dff/learners.hpp"
#include "dff/world.hpp"

namespace dff {

// ─── Wire messages ───────────────────────────────────────────────────
// One UTF-8 JSON object per newline-terminated line, tagged with "type". Frames are
// capped at 1 MiB. t is strictly increasing; Feedback refers to the Prediction (or
// the round-0 Example) with the same t; explanation ids name previously sent
// examples.

constexpr std::size_t kMaxFrameBytes = 1 << 20;

struct MsgExample {
    int t = 0;
    Example x;
};
struct MsgPrediction {
    int t = 0;
    Label label;
    int explanation_id = -1;
};
struct MsgFeedback {
    int t = 0;
    TeacherFeedback feedback;
};
struct MsgAck {
    int t = 0;
};
struct MsgSessionInit {
    std::string learner;
    Json params;
};
struct MsgSessionEnd {
    long long mistakes = 0;
    std::string error;  // empty on clean shutdown
};

using WireMessage =
    std::variant<MsgExample, MsgPrediction, MsgFeedback, MsgAck, MsgSessionInit, MsgSessionEnd>;

struct DecodeError : Error {
    DecodeError(std::size_t offset, const std::string& what)
        : Error("decode error at byte " + std::to_string(offset) + ": " + what),
          byte_offset(offset) {}
    std::size_t byte_offset;
};

inline std::string encode(const WireMessage& msg) {
    Json j;
    if (const auto* m = std::get_if<MsgExample>(&msg)) {
        j["type"] = "example";
        j["t"] = m->t;
        j["assignment"] = example_to_json(m->x);
    } else if (const auto* m = std::get_if<MsgPrediction>(&msg)) {
        j["type"] = "prediction";
        j["t"] = m->t;
        j["label"] = m->label;
        j["explanation_id"] = m->explanation_id;
    } else if (const auto* m = std::get_if<MsgFeedback>(&msg)) {
        j["type"] = "feedback";
        j["t"] = m->t;
        j["label"] = m->feedback.label;
        if (m->feedback.feature) {
            j["feature"] = m->feedback.feature->feature;
            j["polarity"] = m->feedback.feature->polarity;
        }
    } else if (const auto* m = std::get_if<MsgAck>(&msg)) {
        j["type"] = "ack";
        j["t"] = m->t;
    } else if (const auto* m = std::get_if<MsgSessionInit>(&msg)) {
        j["type"] = "session_init";
        j["learner"] = m->learner;
        j["params"] = m->params;
    } else if (const auto* m = std::get_if<MsgSessionEnd>(&msg)) {
        j["type"] = "session_end";
        j["mistakes"] = m->mistakes;
        if (!m->error.empty()) j["error"] = m->error;
    }
    return j.dump();
}

// `offset` is the byte position of the frame start in the overall stream, used only
// to report parse errors.
inline WireMessage decode(const std::string& line, std::size_t offset = 0) {
    if (line.size() > kMaxFrameBytes) throw DecodeError(offset, "frame exceeds 1 MiB");
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DecodeError(offset, "malformed JSON frame");
    try {
        const std::string type = j.at("type").get<std::string>();
        if (type == "example") return MsgExample{j.at("t").get<int>(), example_from_json(j.at("assignment"))};
        if (type == "prediction")
            return MsgPrediction{j.at("t").get<int>(), j.at("label").get<Label>(),
                                 j.at("explanation_id").get<int>()};
        if (type == "feedback") {
            MsgFeedback m;
            m.t = j.at("t").get<int>();
            m.feedback.label = j.at("label").get<Label>();
            if (j.contains("feature"))
                m.feedback.feature = Literal{j.at("feature").get<FeatureId>(), j.at("polarity").get<bool>()};
            return m;
        }
        if (type == "ack") return MsgAck{j.at("t").get<int>()};
        if (type == "session_init") return MsgSessionInit{j.at("learner").get<std::string>(), j.value("params", Json::object())};
        if (type == "session_end") return MsgSessionEnd{j.at("mistakes").get<long long>(), j.value("error", "")};
        throw DecodeError(offset, "unknown message type: " + type);
    } catch (const Json::exception& e) {
        throw DecodeError(offset, e.what());
    }
}

// ─── Transports ──────────────────────────────────────────────────────

class LineTransport {
public:
    virtual ~LineTransport() = default;
    virtual std::optional<std::string> read_line() = 0;  // nullopt on end of stream
    virtual void write_line(const std::string& line) = 0;
};

class IostreamTransport final : public LineTransport {
public:
    IostreamTransport(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

    std::optional<std::string> read_line() override {
        std::string line;
        if (!std::getline(in_, line)) return std::nullopt;
        DFF_REQUIRE(line.size() <= kMaxFrameBytes, "frame exceeds 1 MiB");
        return line;
    }
    void write_line(const std::string& line) override { out_ << line << '\n' << std::flush; }

private:
    std::istream& in_;
    std::ostream& out_;
};

// Bidirectional in-memory channel; `a_side` and `b_side` views exchange lines.
class InMemoryDuplex {
public:
    class End final : public LineTransport {
    public:
        End(InMemoryDuplex& owner, bool a) : owner_(owner), a_(a) {}
        std::optional<std::string> read_line() override { return owner_.pop(a_); }
        void write_line(const std::string& line) override { owner_.push(!a_, line); }

    private:
        InMemoryDuplex& owner_;
        bool a_;
    };

    InMemoryDuplex() : a_end_(*this, true), b_end_(*this, false) {}

    LineTransport& a_side() { return a_end_; }
    LineTransport& b_side() { return b_end_; }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        cv_.notify_all();
    }

private:
    void push(bool to_a, const std::string& line) {
        std::lock_guard lock(mutex_);
        (to_a ? to_a_ : to_b_).push_back(line);
        cv_.notify_all();
    }
    std::optional<std::string> pop(bool from_a_queue) {
        std::unique_lock lock(mutex_);
        auto& q = from_a_queue ? to_a_ : to_b_;
        cv_.wait(lock, [&] { return !q.empty() || closed_; });
        if (q.empty()) return std::nullopt;
        std::string line = q.front();
        q.pop_front();
        return line;
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::string> to_a_;
    std::deque<std::string> to_b_;
    bool closed_ = false;
    End a_end_;
    End b_end_;
};

// ─── Learner-side session ────────────────────────────────────────────

struct SessionSummary {
    long long mistakes = 0;
    int rounds = 0;
    std::string error;  // empty iff the session ended cleanly
    bool ok() const { return error.empty(); }
};

using LearnerFactory = std::function<std::unique_ptr<Learner>(const MsgSessionInit&)>;

inline LearnerFactory default_learner_factory() {
    return [](const MsgSessionInit& init) {
        Json spec = init.params;
        spec["name"] = init.learner;
        return make_learner(spec);
    };
}

// Serves one session: SessionInit, then alternating Example -> Prediction (or Ack
// for the unanchored round 0) and optional Feedback -> Ack, closed by SessionEnd,
// answered with the mistake count. Protocol violations abort the session with a
// SessionEnd carrying an error field.
inline SessionSummary serve_session(LineTransport& transport, const LearnerFactory& factory) {
    SessionSummary summary;
    auto abort_session = [&](const std::string& why) {
        summary.error = why;
        transport.write_line(encode(MsgSessionEnd{summary.mistakes, why}));
        return summary;
    };

    std::unique_ptr<Learner> learner;
    {
        auto line = transport.read_line();
        if (!line) return abort_session("no session_init");
        WireMessage msg;
        try {
            msg = decode(*line);
        } catch (const DecodeError& e) {
            return abort_session(e.what());
        }
        const auto* init = std::get_if<MsgSessionInit>(&msg);
        if (!init) return abort_session("expected session_init");
        try {
            learner = factory(*init);
        } catch (const std::exception& e) {
            return abort_session(std::string("bad learner spec: ") + e.what());
        }
    }

    int last_t = -1;
    std::optional<MsgExample> pending_example;     // example awaiting feedback or next round
    std::optional<Prediction> pending_prediction;  // prediction for pending_example
    std::size_t offset = 0;

    auto settle_pending = [&](const std::optional<TeacherFeedback>& feedback) {
        if (!pending_example) return;
        if (pending_prediction) {
            learner->absorb(pending_example->t, pending_example->x, *pending_prediction, feedback);
            if (feedback) ++summary.mistakes;
        } else if (feedback) {
            learner->anchor(pending_example->t, pending_example->x, feedback->label);
        }
        pending_example.reset();
        pending_prediction.reset();
    };

    while (true) {
        auto line = transport.read_line();
        if (!line) return abort_session("connection closed mid-session");
        WireMessage msg;
        try {
            msg = decode(*line, offset);
        } catch (const DecodeError& e) {
            return abort_session(e.what());
        }
        offset += line->size() + 1;

        if (const auto* ex = std::get_if<MsgExample>(&msg)) {
            if (ex->t <= last_t) return abort_session("t must strictly increase");
            if (pending_example && !pending_prediction && !learner->anchored())
                return abort_session("round 0 needs its label before the next example");
            settle_pending(std::nullopt);  // previous prediction was correct
            last_t = ex->t;
            pending_example = *ex;
            ++summary.rounds;
            if (!learner->anchored()) {
                transport.write_line(encode(MsgAck{ex->t}));
            } else {
                pending_prediction = learner->predict(ex->x);
                transport.write_line(encode(
                    MsgPrediction{ex->t, pending_prediction->label, pending_prediction->explanation_id}));
            }
        } else if (const auto* fb = std::get_if<MsgFeedback>(&msg)) {
            if (!pending_example || fb->t != pending_example->t)
                return abort_session("feedback without a matching prediction");
            if (pending_prediction && fb->feedback.label == pending_prediction->label)
                return abort_session("feedback after a correct prediction");
            if (pending_prediction && !fb->feedback.feature)
                return abort_session("mistake feedback without a feature");
            try {
                settle_pending(fb->feedback);
            } catch (const std::exception& e) {
                return abort_session(std::string("learner rejected feedback: ") + e.what());
            }
            transport.write_line(encode(MsgAck{fb->t}));
        } else if (std::get_if<MsgSessionEnd>(&msg)) {
            settle_pending(std::nullopt);
            transport.write_line(encode(MsgSessionEnd{summary.mistakes, ""}));
            return summary;
        } else {
            return abort_session("unexpected message");
        }
    }
}

// ─── Teacher-side driver ─────────────────────────────────────────────
//
// Replays a pre-generated stream against a served learner, acting as the teacher.
// Produces the same RoundRecord transcript as run_session so the two can be compared
// byte-for-byte. The wire carries no fallback flag, so label-protected rounds are
// recognized as predictions explained by the round-0 anchor; this matches the
// in-process sessions of every learner whose fallback explanation is the anchor.

struct DriveResult {
    std::vector<RoundRecord> transcript;
    long long mistakes = 0;
    long long reported_mistakes = 0;
    std::string error;
    bool ok() const { return error.empty(); }
};

inline DriveResult drive_session(LineTransport& transport, const Teacher& teacher,
                                 std::span<const StreamEvent> stream, const std::string& learner,
                                 const Json& params) {
    DriveResult result;
    const Representation& world = teacher.world();
    auto fail = [&](const std::string& why) {
        result.error = why;
        return result;
    };
    auto expect = [&](auto tag) -> std::optional<typename decltype(tag)::type> {
        auto line = transport.read_line();
        if (!line) return std::nullopt;
        WireMessage msg = decode(*line);
        using T = typename decltype(tag)::type;
        if (auto* m = std::get_if<T>(&msg)) return *m;
        return std::nullopt;
    };
    struct AckTag { using type = MsgAck; };
    struct PredTag { using type = MsgPrediction; };
    struct EndTag { using type = MsgSessionEnd; };

    transport.write_line(encode(MsgSessionInit{learner, params}));

    {
        const StreamEvent& ev = stream[0];
        const Label y0 = world.label(ev.hidden.component);
        transport.write_line(encode(MsgExample{ev.t, ev.x}));
        if (!expect(AckTag{})) return fail("expected ack for round-0 example");
        transport.write_line(encode(MsgFeedback{ev.t, {y0, std::nullopt}}));
        if (!expect(AckTag{})) return fail("expected ack for round-0 label");
        RoundRecord rec;
        rec.t = ev.t;
        rec.x = ev.x;
        rec.component = ev.hidden.component;
        rec.feedback = TeacherFeedback{y0, std::nullopt};
        result.transcript.push_back(std::move(rec));
    }

    for (std::size_t i = 1; i < stream.size(); ++i) {
        const StreamEvent& ev = stream[i];
        transport.write_line(encode(MsgExample{ev.t, ev.x}));
        auto prediction = expect(PredTag{});
        if (!prediction) return fail("expected prediction");
        if (prediction->explanation_id < 0 ||
            prediction->explanation_id >= static_cast<int>(result.transcript.size()))
            return fail("prediction explains with an unseen example");
        const auto& expl = result.transcript[static_cast<std::size_t>(prediction->explanation_id)];
        PredictionContext ctx{prediction->label, prediction->explanation_id, expl.component,
                              prediction->explanation_id == 0};
        const TeacherOutcome outcome = teacher.respond(ev, ctx);
        if (outcome.feedback) {
            transport.write_line(encode(MsgFeedback{ev.t, *outcome.feedback}));
            if (!expect(AckTag{})) return fail("expected ack for feedback");
            ++result.mistakes;
        }
        RoundRecord rec;
        rec.t = ev.t;
        rec.x = ev.x;
        rec.component = ev.hidden.component;
        rec.exception = outcome.exception_effective;
        rec.forced = outcome.forced;
        rec.predicted = prediction->label;
        rec.explanation_id = prediction->explanation_id;
        rec.anchor_fallback = ctx.anchor_fallback;
        rec.feedback = outcome.feedback;
        rec.mistake = outcome.feedback.has_value();
        result.transcript.push_back(std::move(rec));
    }

    transport.write_line(encode(MsgSessionEnd{0, ""}));
    auto end = expect(EndTag{});
    if (!end) return fail("expected session_end");
    result.reported_mistakes = end->mistakes;
    return result;
}

}  // namespace dff
