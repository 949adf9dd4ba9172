#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dff/core.hpp"
#include "dff/rational.hpp"
#include "dff/world.hpp"

namespace dff {

// ─── Distribution analysis ───────────────────────────────────────────

struct FeatureCounter {
    std::map<Literal, long long> counts;  // keyed by designated positive literal
    long long total = 0;                  // ||F||_1

    void bump(Literal positive) {
        counts[positive] += 1;
        total += 1;
    }
    long long count(Literal positive) const {
        auto it = counts.find(positive);
        return it == counts.end() ? 0 : it->second;
    }
};

struct DistributionAnalysis {
    // Unordered component pairs separated by each designated positive feature, and
    // the pair mass beta_phi = sum of P[G] P[G'] over those pairs.
    std::map<Literal, std::set<std::pair<int, int>>> pair_sets;
    std::map<Literal, Rational> beta;

    Rational beta_sum() const {
        Rational s(0);
        for (const auto& [lit, b] : beta) s += b;
        return s;
    }
};

inline DistributionAnalysis analyze_distribution(const Representation& world,
                                                 const StochasticSource& source) {
    DFF_REQUIRE(source.weights.size() == world.components.size(), "weight vector size mismatch");
    DistributionAnalysis analysis;
    for (const auto& [pair, lit] : world.phi) {
        auto [i, j] = pair;
        if (i > j) continue;
        auto positive = world.positive_literal(lit.feature);
        DFF_REQUIRE(positive.has_value(), "phi entry without positive designation");
        analysis.pair_sets[*positive].insert({i, j});
        analysis.beta[*positive] += source.p_valid(i) * source.p_valid(j);
    }
    return analysis;
}

inline std::vector<Literal> phi_beta(const DistributionAnalysis& analysis, const Rational& beta) {
    DFF_REQUIRE(beta > 0 && beta <= 1, "beta must be in (0,1]");
    std::vector<Literal> out;
    for (const auto& [lit, b] : analysis.beta)
        if (b >= beta) out.push_back(lit);
    return out;
}

// ─── Hypothesis class ────────────────────────────────────────────────

struct DlRule {
    Conjunction conj;
    Label label;
};

// Decision list with at most m rules of at most m-1 literals each; first satisfied
// rule wins, otherwise the default label.
struct RestrictedDecisionList {
    std::vector<DlRule> rules;
    Label default_label;

    const Label& evaluate(const Example& x) const {
        for (const DlRule& r : rules)
            if (satisfies_conjunction(x, r.conj)) return r.label;
        return default_label;
    }
};

// Capacity of the restricted class, in bits.
inline double capacity_bound(int m, double beta) {
    DFF_REQUIRE(m >= 1, "m must be >= 1");
    DFF_REQUIRE(beta > 0.0 && beta <= 1.0, "beta must be in (0,1]");
    return m * std::log2(static_cast<double>(m)) + static_cast<double>(m) * m * std::log2(3.0 / beta);
}

// log2 of the raw enumeration bound (2/beta + 1)^(m(m-1)) * m^m.
inline double class_count_log2_bound(int m, double beta) {
    return static_cast<double>(m) * (m - 1) * std::log2(2.0 / beta + 1.0) +
           m * std::log2(static_cast<double>(m));
}

// ─── Empirical error ─────────────────────────────────────────────────

struct LabeledExample {
    Example x;
    Label y;
};

inline long long count_mismatches(const RestrictedDecisionList& h,
                                  const std::vector<LabeledExample>& sample) {
    long long bad = 0;
    for (const auto& [x, y] : sample)
        if (h.evaluate(x) != y) ++bad;
    return bad;
}

inline double eval_error(const RestrictedDecisionList& h, const std::vector<LabeledExample>& sample) {
    if (sample.empty()) return 0.0;
    return static_cast<double>(count_mismatches(h, sample)) / static_cast<double>(sample.size());
}

// Exact err(h, D) for a finite-pool source: mass-weighted mismatches on valid draws
// plus the exception mass, where an exception re-labels the draw uniformly among the
// other labels (or keeps the true label when only features are corrupted).
inline Rational eval_error_exact(const RestrictedDecisionList& h, const Representation& world,
                                 const StochasticSource& source) {
    const auto labels = world.distinct_labels();
    const auto label_count = static_cast<long long>(labels.size());
    const bool flips = source.exceptions.corruption != Corruption::wrong_feature && label_count > 1;

    Rational err(0);
    for (int i = 0; i < world.m(); ++i) {
        const Rational w = source.weight_of(i);
        const Rational eps = source.exceptions.epsilon_for(i);
        const auto& pool = world.pool(i);
        Rational pool_err(0);
        for (const Example& x : pool) {
            const bool wrong = h.evaluate(x) != world.label(i);
            Rational valid_term = wrong ? Rational(1) : Rational(0);
            Rational exception_term;
            if (flips)
                exception_term = wrong ? Rational(1) - Rational(1, label_count - 1) : Rational(1);
            else
                exception_term = valid_term;
            pool_err += (Rational(1) - eps) * valid_term + eps * exception_term;
        }
        err += w * pool_err / Rational(static_cast<long long>(pool.size()));
    }
    return err;
}

// ─── Exhaustive / greedy ERM ─────────────────────────────────────────

struct ErmResult {
    RestrictedDecisionList h;
    long long mismatches = 0;
    double error = 0.0;
    bool certified = false;       // true ERM (exhaustive); greedy results are heuristic
    long long class_size = 0;     // enumerated class size before reachability pruning
    double log2_class_size = 0.0;
};

namespace detail {

inline std::vector<Conjunction> enumerate_conjunctions(const std::vector<Literal>& phi_hat,
                                                       int max_len) {
    std::vector<FeatureId> features;
    for (Literal lit : phi_hat) features.push_back(lit.feature);
    std::sort(features.begin(), features.end());
    features.erase(std::unique(features.begin(), features.end()), features.end());

    std::vector<Conjunction> out;
    out.emplace_back();  // empty conjunction
    const int n = static_cast<int>(features.size());
    std::vector<int> idx;
    auto emit_polarities = [&]() {
        const std::size_t s = idx.size();
        for (std::uint64_t mask = 0; mask < (1ULL << s); ++mask) {
            Conjunction c;
            for (std::size_t b = 0; b < s; ++b)
                c.add({features[static_cast<std::size_t>(idx[b])], ((mask >> b) & 1) != 0});
            out.push_back(std::move(c));
        }
    };
    // subsets of features in lexicographic order, size 1..max_len
    for (int size = 1; size <= std::min(max_len, n); ++size) {
        idx.assign(static_cast<std::size_t>(size), 0);
        for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
        while (true) {
            emit_polarities();
            int pos = size - 1;
            while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - size + pos) --pos;
            if (pos < 0) break;
            ++idx[static_cast<std::size_t>(pos)];
            for (int i = pos + 1; i < size; ++i)
                idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
        }
    }
    return out;
}

inline bool subset_of(const Conjunction& a, const Conjunction& b) {
    for (Literal lit : a.literals())
        if (!b.contains(lit)) return false;
    return true;
}

}  // namespace detail

// Exhaustive empirical risk minimization over decision lists with at most m rules of
// at most m-1 literals drawn from phi_hat (plus negations), labels from `labels`.
// Ties break in enumeration order. Lists where an earlier rule's conjunction is a
// subset of a later one are skipped: the later rule is unreachable and the same
// function appears earlier in the enumeration.
inline ErmResult erm_decision_list(const std::vector<Literal>& phi_hat,
                                   const std::vector<LabeledExample>& sample, int m,
                                   const std::vector<Label>& labels,
                                   long long budget = 10'000'000, bool greedy = false) {
    DFF_REQUIRE(m >= 1, "m must be >= 1");
    DFF_REQUIRE(!labels.empty(), "label set must be nonempty");

    // collapse the sample to weighted distinct points
    std::vector<std::pair<LabeledExample, long long>> points;
    for (const auto& s : sample) {
        auto it = std::find_if(points.begin(), points.end(), [&](const auto& p) {
            return p.first.x == s.x && p.first.y == s.y;
        });
        if (it == points.end())
            points.push_back({s, 1});
        else
            it->second += 1;
    }
    auto mismatches_of = [&](const RestrictedDecisionList& h) {
        long long bad = 0;
        for (const auto& [pt, w] : points)
            if (h.evaluate(pt.x) != pt.y) bad += w;
        return bad;
    };

    if (greedy) {
        // Heuristic: grow one rule at a time, adding the literal that most reduces
        // residual mistakes; not a certified minimizer.
        ErmResult result;
        result.certified = false;
        std::vector<std::pair<LabeledExample, long long>> residual = points;
        auto majority = [&](const std::vector<std::pair<LabeledExample, long long>>& pts) {
            Label best = labels.front();
            long long best_mass = -1;
            for (const Label& l : labels) {
                long long mass = 0;
                for (const auto& [pt, w] : pts)
                    if (pt.y == l) mass += w;
                if (mass > best_mass) {
                    best_mass = mass;
                    best = l;
                }
            }
            return best;
        };
        std::vector<Literal> literal_pool;
        for (Literal lit : phi_hat) {
            literal_pool.push_back(lit);
            literal_pool.push_back(negate(lit));
        }
        for (int slot = 0; slot < m && !residual.empty(); ++slot) {
            Conjunction conj;
            auto rule_cost = [&](const Conjunction& c, const Label& l) {
                long long cost = 0;
                for (const auto& [pt, w] : residual)
                    if (satisfies_conjunction(pt.x, c) && pt.y != l) cost += w;
                return cost;
            };
            Label label = majority(residual);
            long long cost = rule_cost(conj, label);
            bool improved = true;
            while (improved && static_cast<int>(conj.size()) < m - 1) {
                improved = false;
                for (Literal lit : literal_pool) {
                    if (conj.contains_feature(lit.feature)) continue;
                    Conjunction trial = conj;
                    trial.add(lit);
                    for (const Label& l : labels) {
                        long long c = rule_cost(trial, l);
                        if (c < cost) {
                            cost = c;
                            conj = trial;
                            label = l;
                            improved = true;
                        }
                    }
                }
            }
            result.h.rules.push_back({conj, label});
            std::vector<std::pair<LabeledExample, long long>> next;
            for (const auto& p : residual)
                if (!satisfies_conjunction(p.first.x, conj)) next.push_back(p);
            residual = std::move(next);
        }
        result.h.default_label = residual.empty() ? labels.front() : majority(residual);
        result.mismatches = mismatches_of(result.h);
        result.error = sample.empty() ? 0.0
                                      : static_cast<double>(result.mismatches) /
                                            static_cast<double>(sample.size());
        return result;
    }

    const auto conjunctions = detail::enumerate_conjunctions(phi_hat, m - 1);
    const long long rule_count =
        static_cast<long long>(conjunctions.size()) * static_cast<long long>(labels.size());

    long long class_size = 0;
    {
        long long lists = 1;  // empty rule sequence
        long long power = 1;
        for (int r = 1; r <= m; ++r) {
            if (power > budget / std::max<long long>(rule_count, 1)) {
                power = budget + 1;  // saturate
            } else {
                power *= rule_count;
            }
            lists += power;
            if (lists > budget) break;
        }
        class_size = lists * static_cast<long long>(labels.size());
        DFF_REQUIRE(class_size <= budget && lists <= budget,
                    "exhaustive ERM budget exceeded; use greedy mode or raise the budget");
    }

    ErmResult result;
    result.certified = true;
    result.class_size = class_size;
    result.log2_class_size = std::log2(static_cast<double>(class_size));
    result.mismatches = std::numeric_limits<long long>::max();

    std::vector<int> seq;  // rule indices into (conj, label) pairs
    auto rule_of = [&](int ri) {
        return DlRule{conjunctions[static_cast<std::size_t>(ri) / labels.size()],
                      labels[static_cast<std::size_t>(ri) % labels.size()]};
    };
    auto consider = [&](const std::vector<int>& rule_seq) {
        RestrictedDecisionList h;
        for (int ri : rule_seq) h.rules.push_back(rule_of(ri));
        for (std::size_t i = 0; i < h.rules.size(); ++i)
            for (std::size_t j = i + 1; j < h.rules.size(); ++j)
                if (detail::subset_of(h.rules[i].conj, h.rules[j].conj)) return;  // unreachable
        for (const Label& def : labels) {
            h.default_label = def;
            long long bad = mismatches_of(h);
            if (bad < result.mismatches) {
                result.mismatches = bad;
                result.h = h;
            }
        }
    };

    consider(seq);
    for (int r = 1; r <= m; ++r) {
        seq.assign(static_cast<std::size_t>(r), 0);
        while (true) {
            consider(seq);
            int pos = r - 1;
            while (pos >= 0 && seq[static_cast<std::size_t>(pos)] == rule_count - 1) --pos;
            if (pos < 0) break;
            ++seq[static_cast<std::size_t>(pos)];
            for (int i = pos + 1; i < r; ++i) seq[static_cast<std::size_t>(i)] = 0;
        }
    }
    result.error = sample.empty()
                       ? 0.0
                       : static_cast<double>(result.mismatches) / static_cast<double>(sample.size());
    return result;
}

// ─── Feature discovery (stage 1) ─────────────────────────────────────

struct DiscoveryResult {
    FeatureCounter counter;
    std::vector<Literal> phi_hat;  // designated positive literals with F >= beta ||F||_1
    long long mistakes = 0;
    std::size_t rounds_consumed = 0;  // stream events consumed, anchor included
    bool under_sampled = false;       // stopped before ||F||_1 exceeded b/2
    std::vector<RoundRecord> transcript;
};

// Repeatedly fixes (x_base, y_base) and predicts y_base until a mistake yields one
// independent feature observation. Stops once ||F||_1 > b/2 or after b mistakes.
inline DiscoveryResult feature_discovery(std::span<const StreamEvent> stream,
                                         const Teacher& teacher, long long b,
                                         const Rational& beta) {
    DFF_REQUIRE(b >= 2, "mistake limit must be >= 2");
    DFF_REQUIRE(beta > 0 && beta < 1, "beta must be in (0,1)");
    DFF_REQUIRE(!stream.empty(), "empty stream");
    const Representation& world = teacher.world();

    DiscoveryResult result;
    std::size_t cursor = 0;

    const StreamEvent& first = stream[cursor++];
    const Label y0 = world.label(first.hidden.component);
    const int anchor_id = first.t;
    {
        RoundRecord rec;
        rec.t = first.t;
        rec.x = first.x;
        rec.component = first.hidden.component;
        rec.feedback = TeacherFeedback{y0, std::nullopt};
        result.transcript.push_back(std::move(rec));
    }

    auto play = [&](const StreamEvent& ev, const Label& predicted, int explanation_id,
                    bool protects_label) -> const RoundRecord& {
        const int expl_component =
            result.transcript[static_cast<std::size_t>(explanation_id)].component;
        auto outcome =
            teacher.respond(ev, {predicted, explanation_id, expl_component, protects_label});
        RoundRecord rec;
        rec.t = ev.t;
        rec.x = ev.x;
        rec.component = ev.hidden.component;
        rec.exception = outcome.exception_effective;
        rec.forced = outcome.forced;
        rec.predicted = predicted;
        rec.explanation_id = explanation_id;
        rec.anchor_fallback = protects_label;
        rec.feedback = outcome.feedback;
        rec.mistake = outcome.feedback.has_value();
        if (rec.mistake) ++result.mistakes;
        result.transcript.push_back(std::move(rec));
        return result.transcript.back();
    };

    while (result.counter.total <= b / 2) {
        if (cursor >= stream.size() || result.mistakes >= b) break;
        // baseline-setting round: the learner stores the label, so it is protected
        const StreamEvent& base_ev = stream[cursor++];
        const RoundRecord& base = play(base_ev, y0, anchor_id, /*protects_label=*/true);
        const Label y_base = base.feedback ? base.feedback->label : y0;
        const int base_id = base.t;

        while (cursor < stream.size() && result.mistakes < b) {
            const StreamEvent& ev = stream[cursor++];
            const RoundRecord& round = play(ev, y_base, base_id, /*protects_label=*/false);
            if (round.mistake) {
                if (round.feedback->feature) {
                    auto positive = world.positive_literal(round.feedback->feature->feature);
                    result.counter.bump(positive ? *positive
                                                 : Literal{round.feedback->feature->feature, true});
                }
                break;
            }
        }
    }

    result.under_sampled = result.counter.total <= b / 2;
    result.rounds_consumed = cursor;
    for (const auto& [lit, c] : result.counter.counts)
        if (Rational(c) >= beta * Rational(result.counter.total)) result.phi_hat.push_back(lit);
    return result;
}

// ─── Three-stage stochastic pipeline ─────────────────────────────────

struct StochasticRunParams {
    Rational beta;
    double alpha = 0.25;
    double delta = 0.1;
    int n = 0;            // total stream length budgeted for the run
    int m = 1;            // representation size bound (class parameter)
    long long b = -1;     // stage-1 mistake limit; -1 derives 12 ln(1/(2 delta beta)) / beta
    bool greedy = false;
    long long budget = 10'000'000;

    long long mistake_limit() const {
        if (b >= 0) return b;
        const double bd = to_double(beta);
        return static_cast<long long>(std::ceil(12.0 * std::log(1.0 / (2.0 * delta * bd)) / bd));
    }
    int n1() const { return static_cast<int>(std::ceil(alpha * n / 2.0)); }
};

struct ThreeStageResult {
    DiscoveryResult stage1;
    int n1 = 0;
    ErmResult erm;
    long long stage2_mistakes = 0;
    long long stage3_mistakes = 0;
    long long stage3_rounds = 0;
    long long total_mistakes = 0;
    double mistake_rate = 0.0;
    std::vector<RoundRecord> transcript;
};

inline ThreeStageResult three_stage_run(std::span<const StreamEvent> stream,
                                        const Teacher& teacher,
                                        const StochasticRunParams& params) {
    DFF_REQUIRE(params.n >= 2 && static_cast<std::size_t>(params.n) <= stream.size(),
                "stream shorter than the configured n");
    const Representation& world = teacher.world();

    ThreeStageResult result;
    result.stage1 = feature_discovery(stream, teacher, params.mistake_limit(), params.beta);
    result.transcript = result.stage1.transcript;
    std::size_t cursor = result.stage1.rounds_consumed;

    const Label y0 = world.label(stream[0].hidden.component);
    auto play = [&](const StreamEvent& ev, const Label& predicted, int explanation_id) {
        const int expl_component =
            result.transcript[static_cast<std::size_t>(explanation_id)].component;
        auto outcome = teacher.respond(ev, {predicted, explanation_id, expl_component, false});
        RoundRecord rec;
        rec.t = ev.t;
        rec.x = ev.x;
        rec.component = ev.hidden.component;
        rec.exception = outcome.exception_effective;
        rec.forced = outcome.forced;
        rec.predicted = predicted;
        rec.explanation_id = explanation_id;
        rec.feedback = outcome.feedback;
        rec.mistake = outcome.feedback.has_value();
        result.transcript.push_back(std::move(rec));
        return result.transcript.back();
    };

    // Stage 2: predict the anchor label for n1 rounds while collecting S1.
    result.n1 = params.n1();
    std::vector<LabeledExample> sample;
    const std::size_t stage2_end =
        std::min(cursor + static_cast<std::size_t>(result.n1), static_cast<std::size_t>(params.n));
    std::vector<std::pair<int, Label>> stage2_points;  // event id, observed label
    while (cursor < stage2_end) {
        const StreamEvent& ev = stream[cursor++];
        const RoundRecord& rec = play(ev, y0, 0);
        const Label y = rec.feedback ? rec.feedback->label : y0;
        sample.push_back({ev.x, y});
        stage2_points.push_back({ev.t, y});
        if (rec.mistake) ++result.stage2_mistakes;
    }

    std::vector<Label> labels;
    for (const auto& s : sample)
        if (std::find(labels.begin(), labels.end(), s.y) == labels.end()) labels.push_back(s.y);
    if (labels.empty()) labels.push_back(y0);
    std::sort(labels.begin(), labels.end());

    result.erm = erm_decision_list(result.stage1.phi_hat, sample, params.m, labels, params.budget,
                                   params.greedy);

    // Stage 3 explanations: per label, the most recent stage-2 example the hypothesis
    // maps to that label; the anchor as a fallback.
    std::map<Label, int> explanation_for;
    for (const auto& [event_id, observed] : stage2_points) {
        const Label predicted = result.erm.h.evaluate(
            result.transcript[static_cast<std::size_t>(event_id)].x);
        explanation_for[predicted] = event_id;
    }

    while (cursor < static_cast<std::size_t>(params.n)) {
        const StreamEvent& ev = stream[cursor++];
        const Label predicted = result.erm.h.evaluate(ev.x);
        auto it = explanation_for.find(predicted);
        const RoundRecord& rec = play(ev, predicted, it == explanation_for.end() ? 0 : it->second);
        ++result.stage3_rounds;
        if (rec.mistake) ++result.stage3_mistakes;
    }

    result.total_mistakes =
        result.stage1.mistakes + result.stage2_mistakes + result.stage3_mistakes;
    result.mistake_rate = static_cast<double>(result.total_mistakes) / params.n;
    return result;
}

// ─── Restricted-error witness (Lemma check) ──────────────────────────

struct ErrhbReport {
    RestrictedDecisionList h;
    Rational err;
    Rational epsilon;  // exact P[Ex] of the source
    double bound = 0.0;
    bool pass = false;
};

// Builds the witness decision list h_beta: one rule per component holding every
// discriminative feature with beta_phi >= beta, ordered by P[G] descending, and
// checks err(h_beta, D) <= eps + sqrt(beta) m^2 / 2 exactly (the square-root
// comparison is done on squares, keeping everything rational).
inline ErrhbReport verify_errhb(const Representation& world, const StochasticSource& source,
                                const Rational& beta) {
    const DistributionAnalysis analysis = analyze_distribution(world, source);

    std::vector<int> order;
    for (int i = 0; i < world.m(); ++i) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return source.p_valid(a) > source.p_valid(b);
    });

    ErrhbReport report;
    for (int g : order) {
        DlRule rule;
        rule.label = world.label(g);
        for (int g2 = 0; g2 < world.m(); ++g2) {
            auto entry = world.phi_for(g, g2);
            if (!entry) continue;
            auto positive = world.positive_literal(entry->feature);
            if (analysis.beta.at(*positive) >= beta) rule.conj.add(*entry);
        }
        report.h.rules.push_back(std::move(rule));
    }
    report.h.default_label = report.h.rules.empty() ? Label{} : report.h.rules.front().label;

    report.err = eval_error_exact(report.h, world, source);
    Rational eps(0);
    for (int i = 0; i < world.m(); ++i)
        eps += source.weight_of(i) * source.exceptions.epsilon_for(i);
    report.epsilon = eps;

    const Rational m2(static_cast<long long>(world.m()) * world.m());
    report.bound = to_double(eps) + std::sqrt(to_double(beta)) * to_double(m2) / 2.0;
    if (report.err <= eps)
        report.pass = true;
    else {
        const Rational gap = report.err - eps;
        report.pass = gap * gap <= beta * m2 * m2 / Rational(4);
    }
    return report;
}

}  // namespace dff
