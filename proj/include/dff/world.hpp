#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dff/core.hpp"
#include "dff/rational.hpp"
#include "dff/rng.hpp"

namespace dff {

// ─── World generation ────────────────────────────────────────────────

struct WorldGenParams {
    int m = 1;
    int label_count = 1;
    std::vector<Label> labels;  // optional explicit per-component labels (overrides label_count)
    int pool_size = 1;
    int noise_features = 0;
    bool unique_labels = false;  // forces one distinct label per component
    std::uint64_t seed = 0;
};

// One dedicated discriminative feature per differently-labeled pair; features not
// constrained by a pair get i.i.d. values per example, as do noise features.
inline std::pair<Representation, std::vector<Example>> generate_world(const WorldGenParams& params) {
    DFF_REQUIRE(params.m >= 1, "m must be >= 1");
    DFF_REQUIRE(params.pool_size >= 1, "pool_size must be >= 1");
    DFF_REQUIRE(params.noise_features >= 0, "noise_features must be >= 0");

    std::vector<Label> labels = params.labels;
    if (labels.empty()) {
        DFF_REQUIRE(params.label_count >= 1 && params.label_count <= params.m,
                    "label_count must be in [1, m]");
        DFF_REQUIRE(!params.unique_labels || params.label_count == params.m,
                    "unique_labels requires label_count == m");
        for (int i = 0; i < params.m; ++i)
            labels.push_back("L" + std::to_string(params.unique_labels ? i : i % params.label_count));
    } else {
        DFF_REQUIRE(static_cast<int>(labels.size()) == params.m, "labels must have one entry per component");
    }

    Representation rep;
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < params.m; ++i)
        for (int j = i + 1; j < params.m; ++j)
            if (labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)])
                pairs.emplace_back(i, j);

    const auto pair_features = static_cast<FeatureId>(pairs.size());
    rep.feature_count = pair_features + static_cast<std::size_t>(params.noise_features);
    for (FeatureId f = 0; f < pair_features; ++f) {
        auto [i, j] = pairs[f];
        rep.phi[{i, j}] = Literal{f, true};
        rep.phi[{j, i}] = Literal{f, false};
    }

    Rng rng(params.seed);
    for (int i = 0; i < params.m; ++i) {
        ComponentDef comp;
        comp.label = labels[static_cast<std::size_t>(i)];
        for (int e = 0; e < params.pool_size; ++e) {
            Example x;
            x.bits.resize(rep.feature_count);
            for (FeatureId f = 0; f < pair_features; ++f) {
                auto [a, b] = pairs[f];
                if (i == a)
                    x.bits[f] = true;
                else if (i == b)
                    x.bits[f] = false;
                else
                    x.bits[f] = rng.bernoulli(0.5);
            }
            for (std::size_t f = pair_features; f < rep.feature_count; ++f)
                x.bits[f] = rng.bernoulli(0.5);
            comp.pool.push_back(std::move(x));
        }
        rep.components.push_back(std::move(comp));
    }
    return {rep, world_pool(rep)};
}

// Matched-world helper: same structure, `extra` additional noise features with fresh
// i.i.d. values appended to every pooled example.
inline Representation with_noise_features(const Representation& base, int extra, std::uint64_t seed) {
    DFF_REQUIRE(extra >= 0, "extra must be >= 0");
    Representation rep = base;
    rep.feature_count += static_cast<std::size_t>(extra);
    Rng rng(seed);
    for (auto& comp : rep.components)
        for (auto& x : comp.pool)
            for (int f = 0; f < extra; ++f) x.bits.push_back(rng.bernoulli(0.5));
    return rep;
}

// ─── Streams and exceptions ──────────────────────────────────────────

enum class Corruption { wrong_label, wrong_feature, both };

struct ExceptionSpec {
    enum class Mode { none, adversarial, stochastic };
    Mode mode = Mode::none;
    std::vector<int> rounds;                      // adversarial: planned round indices
    Rational epsilon = Rational(0);               // stochastic: shared per-draw rate
    std::vector<Rational> epsilon_per_component;  // optional per-component override
    Corruption corruption = Corruption::both;
    // Draw corrupted labels from the learner's live rule labels. Only meaningful for
    // the unique-label learner, whose no-match branch repairs an existing rule instead
    // of creating one; with other learners this would plant wrongly-labeled rules.
    bool adaptive_labels = false;

    Rational epsilon_for(int component) const {
        if (!epsilon_per_component.empty())
            return epsilon_per_component[static_cast<std::size_t>(component)];
        return epsilon;
    }

    static ExceptionSpec none() { return {}; }
    static ExceptionSpec adversarial(std::vector<int> rounds, Corruption c = Corruption::both) {
        ExceptionSpec s;
        s.mode = Mode::adversarial;
        s.rounds = std::move(rounds);
        s.corruption = c;
        return s;
    }
    static ExceptionSpec stochastic(Rational eps, Corruption c = Corruption::both) {
        ExceptionSpec s;
        s.mode = Mode::stochastic;
        s.epsilon = std::move(eps);
        s.corruption = c;
        return s;
    }
};

struct TeacherFeedback {
    Label label;
    std::optional<Literal> feature;  // absent only for the round-0 anchor label

    friend bool operator==(const TeacherFeedback&, const TeacherFeedback&) = default;
};

// One protocol round as produced by a stream generator. Everything under `hidden`
// is for the harness and teacher only; learners receive (t, x) and nothing else.
struct StreamEvent {
    int t = 0;
    Example x;
    struct Hidden {
        int component = -1;
        bool exception = false;  // planned corruption flag
        std::uint64_t nonce = 0; // pre-drawn corruption randomness
        std::optional<TeacherFeedback> override_feedback;  // scripted full override
        bool override_force = false;  // emit the override even on a correct prediction
    } hidden;
};

struct StochasticSource {
    std::vector<long long> weights;  // integer masses over components, implicitly normalized
    ExceptionSpec exceptions;        // stochastic mode

    long long total_mass() const {
        long long s = 0;
        for (long long w : weights) s += w;
        return s;
    }
    Rational weight_of(int i) const {
        return Rational(weights[static_cast<std::size_t>(i)], total_mass());
    }
    // P[G] = P[X in G and no exception]
    Rational p_valid(int i) const {
        return weight_of(i) * (Rational(1) - exceptions.epsilon_for(i));
    }
};

struct ScriptRound {
    std::optional<int> component;    // draw the next pool example of this component
    std::optional<Example> example;  // or use this explicit example
    std::optional<TeacherFeedback> feedback_override;
    bool force_feedback = false;
};

inline std::vector<StreamEvent> adversarial_stream(const Representation& world,
                                                   const std::vector<ScriptRound>& script,
                                                   const ExceptionSpec& spec,
                                                   std::uint64_t seed = 0) {
    for (int r : spec.rounds)
        DFF_REQUIRE(r >= 0 && r < static_cast<int>(script.size()), "exception index out of range");

    std::vector<StreamEvent> events;
    std::vector<std::size_t> visit(world.components.size(), 0);
    for (std::size_t t = 0; t < script.size(); ++t) {
        const ScriptRound& round = script[t];
        StreamEvent ev;
        ev.t = static_cast<int>(t);
        if (round.component) {
            int c = *round.component;
            DFF_REQUIRE(c >= 0 && c < world.m(), "script references unknown component");
            const auto& pool = world.pool(c);
            ev.x = pool[visit[static_cast<std::size_t>(c)]++ % pool.size()];
            ev.hidden.component = c;
        } else {
            DFF_REQUIRE(round.example.has_value(), "script round has neither component nor example");
            ev.x = *round.example;
            auto cs = world.components_containing(ev.x);
            DFF_REQUIRE(!cs.empty(), "scripted example belongs to no component");
            ev.hidden.component = cs.front();
        }
        if (spec.mode == ExceptionSpec::Mode::adversarial)
            ev.hidden.exception =
                std::find(spec.rounds.begin(), spec.rounds.end(), static_cast<int>(t)) != spec.rounds.end();
        ev.hidden.nonce = mix64(seed ^ mix64(t));
        ev.hidden.override_feedback = round.feedback_override;
        ev.hidden.override_force = round.force_feedback;
        events.push_back(std::move(ev));
    }
    return events;
}

inline std::vector<StreamEvent> stochastic_stream(const Representation& world,
                                                  const StochasticSource& source,
                                                  int n, std::uint64_t seed) {
    DFF_REQUIRE(n >= 1, "stream length must be >= 1");
    DFF_REQUIRE(source.weights.size() == world.components.size(), "weight vector size mismatch");
    const long long total = source.total_mass();
    DFF_REQUIRE(total > 0, "weights must have positive mass");

    Rng rng(seed);
    std::vector<StreamEvent> events;
    events.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        long long ball = static_cast<long long>(rng.below(static_cast<std::uint64_t>(total)));
        int comp = 0;
        for (std::size_t i = 0; i < source.weights.size(); ++i) {
            if (ball < source.weights[i]) {
                comp = static_cast<int>(i);
                break;
            }
            ball -= source.weights[i];
        }
        StreamEvent ev;
        ev.t = t;
        const auto& pool = world.pool(comp);
        ev.x = pool[rng.below(pool.size())];
        ev.hidden.component = comp;
        if (source.exceptions.mode == ExceptionSpec::Mode::stochastic)
            ev.hidden.exception = rng.bernoulli(to_double(source.exceptions.epsilon_for(comp)));
        ev.hidden.nonce = rng.next();
        events.push_back(std::move(ev));
    }
    return events;
}

// ─── Teacher oracle ──────────────────────────────────────────────────

struct PredictionContext {
    Label label;
    int explanation_id = -1;
    int explanation_component = -1;
    // Set by the learner when a wrong prediction on this round makes it store the
    // feedback label verbatim (anchor acquisition and rule creation). The simulated
    // teacher never corrupts labels on such rounds: a stored wrong label would force
    // later rounds where no representation-consistent feedback exists, blowing the
    // exception budget the stream was certified for.
    bool anchor_fallback = false;
};

struct TeacherOutcome {
    std::optional<TeacherFeedback> feedback;
    bool exception_effective = false;  // this round's feedback deviates from the protocol
    bool forced = false;               // deviation forced by poisoned learner state, not planned
};

using AdaptiveLabelView = std::function<std::vector<Label>()>;

class Teacher {
public:
    Teacher(const Representation& world, ExceptionSpec spec, AdaptiveLabelView view = {})
        : world_(&world), spec_(std::move(spec)), view_(std::move(view)) {
        labels_ = world.distinct_labels();
        for (FeatureId f : world.discriminative_features()) {
            pair_literals_.push_back({f, true});
            pair_literals_.push_back({f, false});
        }
    }

    const Representation& world() const { return *world_; }

    TeacherOutcome respond(const StreamEvent& ev, const PredictionContext& ctx) const {
        const Label truth = world_->label(ev.hidden.component);
        const bool mistake = ctx.label != truth;

        if (ev.hidden.override_feedback) {
            if (mistake || ev.hidden.override_force)
                return {ev.hidden.override_feedback, true, false};
            return {std::nullopt, false, false};
        }

        Rng rng(ev.hidden.nonce);
        if (!mistake) {
            // The only deviation available on a correct prediction is a false mistake
            // claim; it needs a lying label, so it is off-limits on protected rounds.
            if (ev.hidden.exception && !ctx.anchor_fallback &&
                spec_.corruption != Corruption::wrong_feature) {
                auto label = corrupt_label(rng, truth, ctx.label, /*fallback_round=*/false);
                if (label && !pair_literals_.empty()) {
                    TeacherFeedback fb{*label, pair_literals_[rng.below(pair_literals_.size())]};
                    return {fb, true, false};
                }
            }
            return {std::nullopt, false, false};
        }

        DFF_REQUIRE(truth != ctx.label, "declared mistake on a matching label");
        auto entry = ctx.explanation_component >= 0
                         ? world_->phi_for(ev.hidden.component, ctx.explanation_component)
                         : std::nullopt;
        if (!entry) {
            // Same-label explanation: the protocol defines no discriminative feature
            // here, so any response is an exception (reachable only via scripted
            // overrides that poison a rule label first).
            TeacherFeedback fb{truth, junk_satisfied_by(rng, ev.x)};
            return {fb, true, true};
        }

        TeacherFeedback fb{truth, *entry};
        bool corrupted = false;
        if (ev.hidden.exception) {
            if (spec_.corruption != Corruption::wrong_feature) {
                auto label = corrupt_label(rng, truth, ctx.label, ctx.anchor_fallback);
                if (label) {
                    fb.label = *label;
                    corrupted = true;
                }
            }
            if (spec_.corruption != Corruption::wrong_label) {
                fb.feature = junk_violating(rng, ev.x, ctx.explanation_component, *entry);
                corrupted = true;
            }
        }
        return {fb, corrupted, false};
    }

private:
    // Uniform wrong label. On anchor-fallback rounds only the adaptive draw is
    // allowed, and only into labels of currently live rules (the unique-label
    // learner then repairs an existing rule rather than creating a poisoned one).
    std::optional<Label> corrupt_label(Rng& rng, const Label& truth, const Label& predicted,
                                       bool fallback_round) const {
        std::vector<Label> candidates;
        if (spec_.adaptive_labels && view_) {
            for (const Label& l : view_())
                if (l != truth && l != predicted) candidates.push_back(l);
        } else if (!fallback_round) {
            for (const Label& l : labels_)
                if (l != truth && l != predicted) candidates.push_back(l);
        }
        if (candidates.empty()) return std::nullopt;
        return candidates[rng.below(candidates.size())];
    }

    // A discriminative-pool literal violating the axiom for (G(x_t), G(explanation)).
    // Noise features are never emitted, keeping feedback independent of |Phi|.
    Literal junk_violating(Rng& rng, const Example& x, int explanation_component,
                           Literal true_entry) const {
        std::vector<Literal> candidates;
        for (Literal c : pair_literals_) {
            if (c == true_entry) continue;
            bool conforming = satisfies(x, c);
            if (conforming)
                for (const Example& y : world_->pool(explanation_component))
                    if (satisfies(y, c)) {
                        conforming = false;
                        break;
                    }
            if (!conforming) candidates.push_back(c);
        }
        if (candidates.empty()) return negate(true_entry);
        return candidates[rng.below(candidates.size())];
    }

    Literal junk_satisfied_by(Rng& rng, const Example& x) const {
        std::vector<Literal> candidates;
        for (Literal c : pair_literals_)
            if (satisfies(x, c)) candidates.push_back(c);
        DFF_REQUIRE(!candidates.empty(), "no literal available for forced feedback");
        return candidates[rng.below(candidates.size())];
    }

    const Representation* world_;
    ExceptionSpec spec_;
    AdaptiveLabelView view_;
    std::vector<Label> labels_;
    std::vector<Literal> pair_literals_;
};

inline TeacherOutcome teacher_respond(const Representation& world, const ExceptionSpec& spec,
                                      const StreamEvent& ev, const Label& predicted,
                                      int explanation_component, bool anchor_fallback = false) {
    Teacher teacher(world, spec);
    return teacher.respond(ev, {predicted, -1, explanation_component, anchor_fallback});
}

// ─── Transcript ──────────────────────────────────────────────────────

// Structured updates a learner reports while absorbing one round; the harness uses
// them to track rule provenance for the invariant checks.
struct LearnerEvent {
    enum class Kind {
        rule_created,
        literal_added,
        literal_removed,
        rule_deleted,
        counter_bumped,
        refinement_skipped
    };
    Kind kind;
    int rule_id = -1;
    Literal literal{};
    int update_count = 0;
};

struct RoundRecord {
    int t = 0;
    Example x;
    int component = -1;
    bool exception = false;  // effective: materialized, forced, or scripted override
    bool forced = false;
    Label predicted;
    int explanation_id = -1;
    bool anchor_fallback = false;
    std::optional<TeacherFeedback> feedback;
    bool mistake = false;
    std::vector<LearnerEvent> events;
};

// Number of rounds whose feedback is provably inconsistent with the representation.
// A lower bound on any exception count k the stream could be certified with.
inline int count_min_exceptions(const std::vector<RoundRecord>& transcript,
                                const Representation& world) {
    int count = 0;
    for (const RoundRecord& r : transcript) {
        const Label truth = world.label(r.component);
        if (r.t == 0) {
            if (!r.feedback || r.feedback->label != truth) ++count;
            continue;
        }
        const bool mistake_truth = r.predicted != truth;
        if (!r.feedback) {
            if (mistake_truth) ++count;
            continue;
        }
        bool ok = mistake_truth && r.feedback->label == truth && r.feedback->feature.has_value();
        if (ok) {
            ok = false;
            const RoundRecord& expl = transcript[static_cast<std::size_t>(r.explanation_id)];
            for (int g : world.components_containing(r.x)) {
                for (int g2 : world.components_containing(expl.x)) {
                    auto entry = world.phi_for(g, g2);
                    if (entry && *entry == *r.feedback->feature) {
                        ok = true;
                        break;
                    }
                }
                if (ok) break;
            }
        }
        if (!ok) ++count;
    }
    return count;
}

}  // namespace dff
