#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dff/core.hpp"
#include "dff/rng.hpp"
#include "dff/world.hpp"

namespace dff {

// Theorem-style mistake budget for SR-DFF.
inline long long ub(long long m, long long k) {
    DFF_REQUIRE(m >= 1 && k >= 0, "ub requires m >= 1, k >= 0");
    return m * (m - 1) + m * k;
}

struct Prediction {
    Label label;
    int explanation_id = -1;
    bool anchor_fallback = false;  // see PredictionContext
};

struct Rule {
    int id = -1;  // event id of the creating round
    int representative_id = -1;
    Example representative;
    Conjunction conj;
    Label label;
    int update_count = 0;
};

class Learner {
public:
    virtual ~Learner() = default;
    virtual std::string name() const = 0;
    virtual void anchor(int event_id, const Example& x, const Label& y) = 0;
    virtual Prediction predict(const Example& x) const = 0;
    virtual void absorb(int event_id, const Example& x, const Prediction& made,
                        const std::optional<TeacherFeedback>& feedback) = 0;
    virtual const std::vector<Rule>& rules() const = 0;

    bool anchored() const { return anchored_; }

    std::vector<LearnerEvent> take_events() { return std::exchange(events_, {}); }

    std::vector<Label> live_rule_labels() const {
        std::vector<Label> out;
        for (const Rule& r : rules()) out.push_back(r.label);
        return out;
    }

protected:
    void log(LearnerEvent ev) { events_.push_back(std::move(ev)); }
    bool anchored_ = false;
    std::vector<LearnerEvent> events_;
};

// ─── DFF18 / SR-DFF ──────────────────────────────────────────────────
//
// Decision-list learner that refines first-matching rules with negated feedback
// features and creates an empty rule on unexplained mistakes. SR-DFF additionally
// deletes any rule whose conjunction reaches m literals; DFF18 never deletes.

class RefineDeleteLearner : public Learner {
public:
    void anchor(int event_id, const Example& x, const Label& y) override {
        DFF_REQUIRE(!anchored_, "anchor already set");
        anchor_id_ = event_id;
        anchor_x_ = x;
        anchor_y_ = y;
        anchored_ = true;
    }

    Prediction predict(const Example& x) const override {
        DFF_REQUIRE(anchored_, "predict before anchor");
        for (const Rule& r : rules_)
            if (satisfies_conjunction(x, r.conj)) return {r.label, r.representative_id, false};
        return {anchor_y_, anchor_id_, true};
    }

    void absorb(int event_id, const Example& x, const Prediction& made,
                const std::optional<TeacherFeedback>& feedback) override {
        DFF_REQUIRE(anchored_, "absorb before anchor");
        if (!feedback) return;
        if (!made.anchor_fallback) {
            auto it = find_rule(made.explanation_id);
            DFF_REQUIRE(it != rules_.end(), "feedback for unknown rule");
            DFF_REQUIRE(feedback->feature.has_value(), "mistake feedback without feature");
            if (it->conj.add(negate(*feedback->feature)))
                log({LearnerEvent::Kind::literal_added, it->id, negate(*feedback->feature), 0});
            else
                log({LearnerEvent::Kind::refinement_skipped, it->id, *feedback->feature, 0});
            if (delete_threshold_ > 0 && static_cast<int>(it->conj.size()) >= delete_threshold_) {
                log({LearnerEvent::Kind::rule_deleted, it->id, {}, 0});
                rules_.erase(it);
            }
        } else {
            Rule r;
            r.id = event_id;
            r.representative_id = event_id;
            r.representative = x;
            r.label = feedback->label;
            rules_.push_back(std::move(r));
            log({LearnerEvent::Kind::rule_created, event_id, {}, 0});
        }
    }

    const std::vector<Rule>& rules() const override { return rules_; }

protected:
    explicit RefineDeleteLearner(int delete_threshold) : delete_threshold_(delete_threshold) {}

    std::vector<Rule>::iterator find_rule(int representative_id) {
        for (auto it = rules_.begin(); it != rules_.end(); ++it)
            if (it->representative_id == representative_id) return it;
        return rules_.end();
    }

    int delete_threshold_;  // 0 disables deletion
    int anchor_id_ = -1;
    Example anchor_x_;
    Label anchor_y_;
    std::vector<Rule> rules_;
};

class SrDff final : public RefineDeleteLearner {
public:
    explicit SrDff(int m) : RefineDeleteLearner(m), m_(m) {
        DFF_REQUIRE(m >= 1, "SR-DFF requires m >= 1");
    }
    std::string name() const override { return "srdff"; }
    int m() const { return m_; }

private:
    int m_;
};

class Dff18 final : public RefineDeleteLearner {
public:
    Dff18() : RefineDeleteLearner(0) {}
    std::string name() const override { return "dff18"; }
};

// ─── Unique-label randomized learner ─────────────────────────────────
//
// Maintains at most one rule per label. Matched mistakes refine the rule when the
// feedback feature is consistent with both examples; unmatched mistakes either
// create a rule with probability p or remove one unsatisfied literal from the rule
// already carrying the true label. Every update bumps a counter, including skipped
// refinements, and a rule is deleted once its counter reaches m + l - 1.

class UniqueLabelLearner final : public Learner {
public:
    UniqueLabelLearner(double p, int l, std::uint64_t seed, int m = -1)
        : p_(p), l_(l), m_(m < 0 ? l + 1 : m), rng_(seed) {
        DFF_REQUIRE(p >= 0.0 && p <= 1.0, "p must be in [0,1]");
        DFF_REQUIRE(l >= 1, "l must be >= 1");
        DFF_REQUIRE(m_ >= 1, "m must be >= 1");
    }

    std::string name() const override { return "unique_label"; }

    void anchor(int event_id, const Example& x, const Label& y) override {
        DFF_REQUIRE(!anchored_, "anchor already set");
        anchor_id_ = event_id;
        anchor_x_ = x;
        anchor_y_ = y;
        anchored_ = true;
    }

    Prediction predict(const Example& x) const override {
        DFF_REQUIRE(anchored_, "predict before anchor");
        for (const Rule& r : rules_)
            if (satisfies_conjunction(x, r.conj)) return {r.label, r.representative_id, false};
        return {anchor_y_, anchor_id_, true};
    }

    void absorb(int event_id, const Example& x, const Prediction& made,
                const std::optional<TeacherFeedback>& feedback) override {
        DFF_REQUIRE(anchored_, "absorb before anchor");
        if (!feedback) return;
        if (!made.anchor_fallback) {
            auto it = find_rule_by_rep(made.explanation_id);
            DFF_REQUIRE(it != rules_.end(), "feedback for unknown rule");
            DFF_REQUIRE(feedback->feature.has_value(), "mistake feedback without feature");
            const Literal phi = *feedback->feature;
            const bool consistent = !satisfies(it->representative, phi) && satisfies(x, phi);
            if (consistent && it->conj.add(negate(phi)))
                log({LearnerEvent::Kind::literal_added, it->id, negate(phi), 0});
            else
                log({LearnerEvent::Kind::refinement_skipped, it->id, phi, 0});
            bump_and_maybe_delete(it);
        } else {
            auto it = find_rule_by_label(feedback->label);
            if (it == rules_.end()) {
                if (rng_.bernoulli(p_)) {
                    Rule r;
                    r.id = event_id;
                    r.representative_id = event_id;
                    r.representative = x;
                    r.label = feedback->label;
                    rules_.push_back(std::move(r));
                    log({LearnerEvent::Kind::rule_created, event_id, {}, 0});
                }
            } else {
                // x_t does not satisfy this rule, so an unsatisfied literal exists.
                std::optional<Literal> victim;
                for (Literal lit : it->conj.literals())
                    if (!satisfies(x, lit)) {
                        victim = lit;
                        break;
                    }
                DFF_REQUIRE(victim.has_value(), "no unsatisfied literal in unmatched rule");
                it->conj.remove(*victim);
                log({LearnerEvent::Kind::literal_removed, it->id, *victim, 0});
                bump_and_maybe_delete(it);
            }
        }
    }

    const std::vector<Rule>& rules() const override { return rules_; }

    int update_threshold() const { return m_ + l_ - 1; }

private:
    std::vector<Rule>::iterator find_rule_by_rep(int representative_id) {
        for (auto it = rules_.begin(); it != rules_.end(); ++it)
            if (it->representative_id == representative_id) return it;
        return rules_.end();
    }
    std::vector<Rule>::iterator find_rule_by_label(const Label& y) {
        for (auto it = rules_.begin(); it != rules_.end(); ++it)
            if (it->label == y) return it;
        return rules_.end();
    }
    void bump_and_maybe_delete(std::vector<Rule>::iterator it) {
        it->update_count += 1;
        log({LearnerEvent::Kind::counter_bumped, it->id, {}, it->update_count});
        if (it->update_count >= update_threshold()) {
            log({LearnerEvent::Kind::rule_deleted, it->id, {}, 0});
            rules_.erase(it);
        }
    }

    double p_;
    int l_;
    int m_;
    Rng rng_;
    int anchor_id_ = -1;
    Example anchor_x_;
    Label anchor_y_;
    std::vector<Rule> rules_;
};

// ─── Parameter-free wrapper ──────────────────────────────────────────
//
// Nested doubling over a budget v, a component guess, and an exception guess. Each
// (m, k) pair runs exactly once, at the single v with UB(m,k) in (v/2, v]; the
// inner SR-DFF instance is discarded once it exceeds UB(m,k) mistakes. Every phase
// after the first re-anchors on its first example by predicting the last label this
// learner saw confirmed, charging at most one extra mistake per phase.

struct PfrPhase {
    int m_guess = 1;
    long long k_guess = 0;
    long long budget = 0;
    long long mistakes = 0;
    long long rounds = 0;  // events this phase consumed, anchor acquisition included
};

class PfrDff final : public Learner {
public:
    PfrDff() { advance_phase(); }

    std::string name() const override { return "pfrdff"; }

    void anchor(int event_id, const Example& x, const Label& y) override {
        DFF_REQUIRE(!anchored_, "anchor already set");
        anchored_ = true;
        last_label_ = y;
        last_label_id_ = event_id;
        phase().rounds += 1;
        inner_ = std::make_unique<SrDff>(phase().m_guess);
        inner_->anchor(event_id, x, y);
    }

    Prediction predict(const Example& x) const override {
        DFF_REQUIRE(anchored_, "predict before anchor");
        if (!inner_) return {last_label_, last_label_id_, true};
        return inner_->predict(x);
    }

    void absorb(int event_id, const Example& x, const Prediction& made,
                const std::optional<TeacherFeedback>& feedback) override {
        DFF_REQUIRE(anchored_, "absorb before anchor");
        phase().rounds += 1;
        if (!inner_) {
            // Anchor acquisition round for the current phase.
            Label y = feedback ? feedback->label : made.label;
            inner_ = std::make_unique<SrDff>(phase().m_guess);
            inner_->anchor(event_id, x, y);
            note_confirmed_label(event_id, y);
            if (feedback && ++phase().mistakes > phase().budget) break_phase();
            return;
        }
        inner_->absorb(event_id, x, made, feedback);
        for (auto& ev : inner_->take_events()) log(std::move(ev));
        if (feedback) {
            // Mistake-round labels are not used for re-anchoring: a corrupted one
            // would poison the next phase's anchor.
            if (++phase().mistakes > phase().budget) break_phase();
        } else {
            note_confirmed_label(event_id, made.label);
        }
    }

    const std::vector<Rule>& rules() const override {
        static const std::vector<Rule> empty;
        return inner_ ? inner_->rules() : empty;
    }

    const std::vector<PfrPhase>& phases() const { return phases_; }
    const PfrPhase& current_phase() const { return phases_.back(); }

private:
    PfrPhase& phase() { return phases_.back(); }

    void note_confirmed_label(int event_id, const Label& y) {
        last_label_ = y;
        last_label_id_ = event_id;
    }

    void break_phase() {
        inner_.reset();
        advance_phase();
    }

    // Steps the (v, m, k) loops to the next phase that passes the UB(m,k) > v/2 gate.
    void advance_phase() {
        while (true) {
            if (!loop_primed_) {
                v_ = 1;
                m_guess_ = 1;
                k_guess_ = 0;
                loop_primed_ = true;
            } else {
                k_guess_ = 2 * k_guess_ + 1;
            }
            while (ub(m_guess_, k_guess_) > v_) {
                m_guess_ *= 2;
                k_guess_ = 0;
                if (ub(m_guess_, 0) > v_) {
                    v_ *= 2;
                    m_guess_ = 1;
                }
            }
            if (2 * ub(m_guess_, k_guess_) > v_) break;
        }
        phases_.push_back({m_guess_, k_guess_, ub(m_guess_, k_guess_), 0});
    }

    std::unique_ptr<SrDff> inner_;
    Label last_label_;
    int last_label_id_ = -1;
    bool loop_primed_ = false;
    long long v_ = 1;
    int m_guess_ = 1;
    long long k_guess_ = 0;
    std::vector<PfrPhase> phases_;
};

// ─── Session loop ────────────────────────────────────────────────────

struct SessionOptions {
    bool record_examples = true;
    // Called after each round is fully absorbed.
    std::function<void(const RoundRecord&)> on_round;
};

struct SessionResult {
    std::vector<RoundRecord> transcript;
    long long mistakes = 0;
    int exceptions_effective = 0;
    int forced = 0;
};

// Drives the predict/feedback round loop over a pre-generated stream. Round 0
// provides the anchor label; every later round asks the learner for a prediction
// and forwards the teacher's response.
inline SessionResult run_session(Learner& learner, std::span<const StreamEvent> stream,
                                 const Teacher& teacher, const SessionOptions& options = {}) {
    DFF_REQUIRE(!stream.empty(), "empty stream");
    const Representation& world = teacher.world();
    SessionResult result;

    auto emit = [&](RoundRecord&& record) {
        if (!options.record_examples) record.x = Example{};
        if (options.on_round) options.on_round(record);
        result.transcript.push_back(std::move(record));
    };

    {
        const StreamEvent& ev = stream[0];
        DFF_REQUIRE(ev.t == 0, "stream events must be numbered 0..n-1");
        const Label y0 = world.label(ev.hidden.component);
        learner.anchor(ev.t, ev.x, y0);
        RoundRecord rec;
        rec.t = ev.t;
        rec.x = ev.x;
        rec.component = ev.hidden.component;
        rec.feedback = TeacherFeedback{y0, std::nullopt};
        rec.events = learner.take_events();
        emit(std::move(rec));
    }

    for (std::size_t i = 1; i < stream.size(); ++i) {
        const StreamEvent& ev = stream[i];
        DFF_REQUIRE(ev.t == static_cast<int>(i), "stream events must be numbered 0..n-1");
        const Prediction made = learner.predict(ev.x);
        DFF_REQUIRE(made.explanation_id >= 0 &&
                        made.explanation_id < static_cast<int>(result.transcript.size()),
                    "explanation references an unseen event");
        const int expl_component = result.transcript[static_cast<std::size_t>(made.explanation_id)].component;
        const TeacherOutcome outcome =
            teacher.respond(ev, {made.label, made.explanation_id, expl_component, made.anchor_fallback});
        learner.absorb(ev.t, ev.x, made, outcome.feedback);

        RoundRecord rec;
        rec.t = ev.t;
        rec.x = ev.x;
        rec.component = ev.hidden.component;
        rec.exception = outcome.exception_effective;
        rec.forced = outcome.forced;
        rec.predicted = made.label;
        rec.explanation_id = made.explanation_id;
        rec.anchor_fallback = made.anchor_fallback;
        rec.feedback = outcome.feedback;
        rec.mistake = outcome.feedback.has_value();
        rec.events = learner.take_events();
        if (rec.mistake) ++result.mistakes;
        if (rec.exception) ++result.exceptions_effective;
        if (rec.forced) ++result.forced;
        emit(std::move(rec));
    }
    return result;
}

inline SessionResult run_session(Learner& learner, std::span<const StreamEvent> stream,
                                 const Representation& world, const ExceptionSpec& spec,
                                 const SessionOptions& options = {}) {
    Teacher teacher(world, spec, [&learner] { return learner.live_rule_labels(); });
    return run_session(learner, stream, teacher, options);
}

}  // namespace dff
