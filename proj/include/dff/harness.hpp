#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dff/core.hpp"
#include "dff/json_io.hpp"
#include "dff/learners.hpp"
#include "dff/rng.hpp"
#include "dff/stochastic.hpp"
#include "dff/world.hpp"

namespace dff {

// ─── Structural invariant checks ─────────────────────────────────────
//
// Shadow-tracks every rule's provenance from the learner event log and the hidden
// round flags: which rounds were exceptions, which literals they contributed, and
// which rules they created. Violation messages carry round and rule ids.

class LemmaChecker {
public:
    LemmaChecker(const Representation& world, bool check_update_counter = false)
        : world_(&world), check_update_counter_(check_update_counter) {}

    void on_round(const RoundRecord& rec) {
        if (rec.exception) ++exceptions_seen_;
        for (const LearnerEvent& ev : rec.events) {
            switch (ev.kind) {
                case LearnerEvent::Kind::rule_created: {
                    ShadowRule rule;
                    rule.id = ev.rule_id;
                    rule.component = rec.component;
                    rule.created_by_exception = rec.exception;
                    rules_[ev.rule_id] = rule;
                    ++rules_created_;
                    check_distinct_components(rec.t);
                    break;
                }
                case LearnerEvent::Kind::literal_added: {
                    ShadowRule& rule = rules_.at(ev.rule_id);
                    if (rec.exception) {
                        rule.corrupted = true;
                    } else if (!rule.created_by_exception && !rule.corrupted) {
                        // Lemma: a valid non-corrupted rule's conjunction stays
                        // satisfied by the whole pool of its component.
                        for (const Example& x : world_->pool(rule.component))
                            if (!satisfies(x, ev.literal)) {
                                violation(rec.t, ev.rule_id,
                                          "valid rule refined with a literal its component pool does not satisfy");
                                break;
                            }
                    }
                    break;
                }
                case LearnerEvent::Kind::literal_removed:
                    break;
                case LearnerEvent::Kind::rule_deleted: {
                    ShadowRule& rule = rules_.at(ev.rule_id);
                    if (!rule.created_by_exception && !rule.corrupted)
                        violation(rec.t, ev.rule_id, "deleted a rule unaffected by exceptions");
                    rule.live = false;
                    ++deletions_;
                    break;
                }
                case LearnerEvent::Kind::counter_bumped: {
                    ShadowRule& rule = rules_.at(ev.rule_id);
                    rule.update_count = ev.update_count;
                    if (rec.exception) ++rule.exception_updates;
                    if (check_update_counter_ && !rule.created_by_exception &&
                        2 * rule.exception_updates < rule.update_count - (world_->m() - 1))
                        violation(rec.t, ev.rule_id,
                                  "update counter exceeds what the rule's exceptions can explain");
                    break;
                }
                case LearnerEvent::Kind::refinement_skipped:
                    if (rec.exception) rules_.at(ev.rule_id).touched_by_exception = true;
                    break;
            }
        }
    }

    // Lemma: at most m + k rules ever created.
    void finish(int effective_exceptions) {
        if (rules_created_ > world_->m() + effective_exceptions)
            violation(-1, -1,
                      "created " + std::to_string(rules_created_) + " rules with m=" +
                          std::to_string(world_->m()) + ", k=" + std::to_string(effective_exceptions));
    }

    const std::vector<std::string>& violations() const { return violations_; }
    int rules_created() const { return rules_created_; }
    int deletions() const { return deletions_; }

private:
    struct ShadowRule {
        int id = -1;
        int component = -1;
        bool created_by_exception = false;
        bool corrupted = false;
        bool touched_by_exception = false;
        bool live = true;
        int update_count = 0;
        int exception_updates = 0;
    };

    void check_distinct_components(int t) {
        std::vector<int> seen;
        for (const auto& [id, rule] : rules_) {
            if (!rule.live || rule.created_by_exception || rule.corrupted) continue;
            if (std::find(seen.begin(), seen.end(), rule.component) != seen.end()) {
                violation(t, id, "two live valid non-corrupted rules share a component");
                return;
            }
            seen.push_back(rule.component);
        }
    }

    void violation(int t, int rule_id, const std::string& what) {
        violations_.push_back("round " + std::to_string(t) + ", rule " + std::to_string(rule_id) +
                              ": " + what);
    }

    const Representation* world_;
    bool check_update_counter_;
    std::map<int, ShadowRule> rules_;
    std::vector<std::string> violations_;
    int rules_created_ = 0;
    int deletions_ = 0;
    int exceptions_seen_ = 0;
};

// ─── Result rows / CSV ───────────────────────────────────────────────

struct TrialRow {
    std::string learner;
    int m = 0;
    std::string k_or_eps;
    long long trial = 0;  // -1 encodes the per-config summary row
    std::uint64_t seed = 0;
    long long mistakes = 0;
    std::string bound;
    bool pass = true;
};

inline std::string results_to_csv(const std::vector<TrialRow>& rows) {
    std::ostringstream out;
    out << "learner,m,k_or_eps,trial,seed,mistakes,bound,pass\n";
    for (const TrialRow& r : rows) {
        out << r.learner << ',' << r.m << ',' << r.k_or_eps << ',';
        if (r.trial < 0)
            out << "summary";
        else
            out << r.trial;
        out << ',' << r.seed << ',' << r.mistakes << ',' << r.bound << ',' << (r.pass ? 1 : 0)
            << '\n';
    }
    return out.str();
}

inline void export_results(const std::vector<TrialRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    DFF_REQUIRE(out.good(), "cannot open for writing: " + path);
    out << results_to_csv(rows);
}

inline std::vector<TrialRow> parse_results_csv(const std::string& text) {
    std::vector<TrialRow> rows;
    std::istringstream in(text);
    std::string line;
    DFF_REQUIRE(std::getline(in, line), "empty csv");
    DFF_REQUIRE(line == "learner,m,k_or_eps,trial,seed,mistakes,bound,pass", "unexpected csv header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        TrialRow r;
        std::getline(ls, r.learner, ',');
        std::getline(ls, field, ',');
        r.m = std::stoi(field);
        std::getline(ls, r.k_or_eps, ',');
        std::getline(ls, field, ',');
        r.trial = field == "summary" ? -1 : std::stoll(field);
        std::getline(ls, field, ',');
        r.seed = std::stoull(field);
        std::getline(ls, field, ',');
        r.mistakes = std::stoll(field);
        std::getline(ls, r.bound, ',');
        std::getline(ls, field, ',');
        r.pass = field == "1";
        rows.push_back(std::move(r));
    }
    return rows;
}

// ─── Scenario-driven trials ──────────────────────────────────────────

struct TrialConfig {
    Scenario scenario;
    bool check_lemmas = false;
    bool check_update_counter = false;
    std::optional<long long> bound;  // hard per-trial mistake bound
};

struct BoundReport {
    std::vector<long long> per_trial_mistakes;
    std::string bound;
    std::vector<long long> violations;  // trial ids
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::vector<std::string> lemma_violations;
    bool pass = true;
};

inline std::unique_ptr<Learner> make_trial_learner(const Json& spec, std::uint64_t trial_seed) {
    Json adjusted = spec;
    if (adjusted.value("name", "") == "unique_label" && !adjusted.contains("seed"))
        adjusted["seed"] = trial_seed;
    return make_learner(adjusted);
}

inline BoundReport run_trials(const TrialConfig& config,
                              std::vector<SessionResult>* transcripts = nullptr) {
    BoundReport report;
    if (config.bound) report.bound = std::to_string(*config.bound);
    for (int trial = 0; trial < config.scenario.trials; ++trial) {
        const std::uint64_t seed = derive_seed(config.scenario.seed, static_cast<std::uint64_t>(trial));
        auto stream = config.scenario.stream.materialize(config.scenario.world, seed);
        auto learner = make_trial_learner(config.scenario.learner_spec, mix64(seed));
        LemmaChecker checker(config.scenario.world, config.check_update_counter);
        SessionOptions options;
        options.record_examples = transcripts != nullptr;
        if (config.check_lemmas || config.check_update_counter)
            options.on_round = [&checker](const RoundRecord& rec) { checker.on_round(rec); };
        SessionResult session = run_session(*learner, stream, config.scenario.world,
                                            config.scenario.stream.exception_spec(), options);
        if (config.check_lemmas) checker.finish(session.exceptions_effective);
        for (const auto& v : checker.violations())
            report.lemma_violations.push_back("trial " + std::to_string(trial) + ": " + v);
        report.per_trial_mistakes.push_back(session.mistakes);
        if (config.bound && session.mistakes > *config.bound) report.violations.push_back(trial);
        if (transcripts) transcripts->push_back(std::move(session));
    }
    const auto n = static_cast<double>(report.per_trial_mistakes.size());
    if (n > 0) {
        double sum = 0;
        for (long long v : report.per_trial_mistakes) sum += static_cast<double>(v);
        report.mean = sum / n;
        double var = 0;
        for (long long v : report.per_trial_mistakes) {
            const double d = static_cast<double>(v) - report.mean;
            var += d * d;
        }
        report.stderr_mean = n > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
    }
    report.pass = report.violations.empty() && report.lemma_violations.empty();
    return report;
}

// ─── Adversarial grid suites ─────────────────────────────────────────

// One (world, stream) draw for a grid cell. Worlds rotate label counts and pool
// sizes; streams alternate random component draws with structured scripts; planned
// exception rounds are a random subset of size k.
struct GridStream {
    Representation world;
    std::vector<StreamEvent> stream;
    ExceptionSpec spec;
};

inline GridStream make_grid_stream(int m, int k, std::uint64_t seed, bool unique_labels,
                                   bool adaptive_labels = false) {
    Rng rng(seed);
    WorldGenParams params;
    params.m = m;
    params.unique_labels = unique_labels;
    params.label_count = unique_labels ? m : (m == 1 ? 1 : 2 + rng.below_int(m - 1));
    params.pool_size = 3 + rng.below_int(3);
    params.noise_features = (rng.below(4) == 0) ? 4 : 0;
    params.seed = rng.next();
    auto [world, pool] = generate_world(params);

    const int length = std::max<long long>(40, 4 * (ub(m, k) + m));
    std::vector<ScriptRound> script;
    const int pattern = rng.below_int(4);
    int a = rng.below_int(m), b = rng.below_int(m);
    for (int t = 0; t < length; ++t) {
        int component = 0;
        switch (pattern) {
            case 0: component = rng.below_int(m); break;                 // i.i.d. uniform
            case 1: component = t % m; break;                            // cycle
            case 2: component = (t % 2 == 0) ? a : b; break;             // ping-pong
            default: component = (t / 3) % m; break;                     // blocks
        }
        script.push_back({component, std::nullopt, std::nullopt, false});
    }

    std::vector<int> rounds;
    if (k > 0 && length > 1) {
        std::vector<int> all;
        for (int t = 1; t < length; ++t) all.push_back(t);
        for (int i = 0; i < k && !all.empty(); ++i) {
            const auto j = rng.below(all.size());
            rounds.push_back(all[j]);
            all.erase(all.begin() + static_cast<std::ptrdiff_t>(j));
        }
        std::sort(rounds.begin(), rounds.end());
    }
    Corruption corruption = Corruption::both;
    if (const auto roll = rng.below(3); roll == 1)
        corruption = Corruption::wrong_feature;
    else if (roll == 2)
        corruption = Corruption::wrong_label;

    ExceptionSpec spec = rounds.empty() ? ExceptionSpec::none()
                                        : ExceptionSpec::adversarial(rounds, corruption);
    spec.adaptive_labels = adaptive_labels;
    GridStream out{std::move(world), {}, spec};
    out.stream = adversarial_stream(out.world, script, spec, rng.next());
    return out;
}

struct SuiteResult {
    std::vector<TrialRow> rows;
    bool pass = true;
    std::vector<std::string> notes;  // violation details

    void fail(std::string note) {
        pass = false;
        notes.push_back(std::move(note));
    }
};

// Theorem 1 hard bound (and, when enabled, the per-round structural lemmas) over all
// (m, k) cells, `trials` seeded streams per cell certified for <= k exceptions.
inline SuiteResult theorem1_suite(int trials, std::uint64_t base_seed, bool check_lemmas,
                                  int m_max = 6, int k_max = 5) {
    SuiteResult result;
    for (int m = 1; m <= m_max; ++m) {
        for (int k = 0; k <= k_max; ++k) {
            const long long bound = ub(m, k);
            long long worst = 0;
            std::uint64_t cell_seed = derive_seed(base_seed, static_cast<std::uint64_t>(m * 100 + k));
            bool cell_pass = true;
            for (int trial = 0; trial < trials; ++trial) {
                const std::uint64_t seed = derive_seed(cell_seed, static_cast<std::uint64_t>(trial));
                GridStream gs = make_grid_stream(m, k, seed, false);
                SrDff learner(m);
                LemmaChecker checker(gs.world, false);
                SessionOptions options;
                options.record_examples = false;
                if (check_lemmas)
                    options.on_round = [&checker](const RoundRecord& rec) { checker.on_round(rec); };
                SessionResult session =
                    run_session(learner, gs.stream, gs.world, gs.spec, options);
                if (session.forced > 0)
                    result.fail("m=" + std::to_string(m) + " k=" + std::to_string(k) + " trial " +
                                std::to_string(trial) + ": forced exception in a certified stream");
                if (session.exceptions_effective > k)
                    result.fail("m=" + std::to_string(m) + " k=" + std::to_string(k) + " trial " +
                                std::to_string(trial) + ": stream exceeded its exception budget");
                if (check_lemmas) {
                    checker.finish(session.exceptions_effective);
                    for (const auto& v : checker.violations())
                        result.fail("m=" + std::to_string(m) + " k=" + std::to_string(k) +
                                    " trial " + std::to_string(trial) + ": " + v);
                }
                worst = std::max(worst, session.mistakes);
                if (session.mistakes > bound) {
                    cell_pass = false;
                    result.fail("m=" + std::to_string(m) + " k=" + std::to_string(k) + " trial " +
                                std::to_string(trial) + ": " + std::to_string(session.mistakes) +
                                " mistakes > bound " + std::to_string(bound));
                }
            }
            result.rows.push_back({"srdff", m, std::to_string(k), -1, cell_seed, worst,
                                   std::to_string(bound), cell_pass});
        }
    }
    return result;
}

// Theorem 2: the parameter-free wrapper on the same stream suite. Also checks that
// the terminal phase (the last one that consumed events) has m_guess < 2m.
inline SuiteResult theorem2_suite(int trials, std::uint64_t base_seed, int m_max = 6, int k_max = 5) {
    SuiteResult result;
    for (int m = 1; m <= m_max; ++m) {
        for (int k = 0; k <= k_max; ++k) {
            const long long u = ub(m, k);
            const double log_term = u > 0 ? std::log2(8.0 * static_cast<double>(u)) : 0.0;
            const long long bound =
                u > 0 ? static_cast<long long>(std::floor(32.0 * static_cast<double>(u) * log_term * log_term))
                      : 0;
            long long worst = 0;
            std::uint64_t cell_seed = derive_seed(base_seed, static_cast<std::uint64_t>(m * 100 + k));
            bool cell_pass = true;
            for (int trial = 0; trial < trials; ++trial) {
                const std::uint64_t seed = derive_seed(cell_seed, static_cast<std::uint64_t>(trial));
                GridStream gs = make_grid_stream(m, k, seed, false);
                PfrDff learner;
                SessionOptions options;
                options.record_examples = false;
                SessionResult session =
                    run_session(learner, gs.stream, gs.world, gs.spec, options);
                worst = std::max(worst, session.mistakes);
                if (session.mistakes > bound) {
                    cell_pass = false;
                    result.fail("pfrdff m=" + std::to_string(m) + " k=" + std::to_string(k) +
                                " trial " + std::to_string(trial) + ": " +
                                std::to_string(session.mistakes) + " > " + std::to_string(bound));
                }
                const auto& phases = learner.phases();
                int terminal_m = 1;
                for (auto it = phases.rbegin(); it != phases.rend(); ++it)
                    if (it->rounds > 0) {
                        terminal_m = it->m_guess;
                        break;
                    }
                if (terminal_m >= 2 * m) {
                    cell_pass = false;
                    result.fail("pfrdff m=" + std::to_string(m) + " k=" + std::to_string(k) +
                                " trial " + std::to_string(trial) + ": terminal phase m_guess=" +
                                std::to_string(terminal_m));
                }
            }
            result.rows.push_back({"pfrdff", m, std::to_string(k), -1, cell_seed, worst,
                                   std::to_string(bound), cell_pass});
        }
    }
    return result;
}

// Theorem 3 expectation bound for the unique-label learner with p = 1/(m-1),
// l = m-1, on unique-label worlds with adaptive label corruption. Pass criterion:
// sample mean <= 2m(m-1) + 6k + 3 standard errors. The update-counter invariant is
// checked on every round.
inline SuiteResult theorem3_suite(int trials, std::uint64_t base_seed, int m_min = 2, int m_max = 5,
                                  int k_max = 4) {
    SuiteResult result;
    for (int m = m_min; m <= m_max; ++m) {
        for (int k = 0; k <= k_max; ++k) {
            const double bound = 2.0 * m * (m - 1) + 6.0 * k;
            std::uint64_t cell_seed = derive_seed(base_seed, static_cast<std::uint64_t>(m * 100 + k));
            std::vector<long long> mistakes;
            bool cell_pass = true;
            for (int trial = 0; trial < trials; ++trial) {
                const std::uint64_t seed = derive_seed(cell_seed, static_cast<std::uint64_t>(trial));
                GridStream gs = make_grid_stream(m, k, seed, true, true);
                UniqueLabelLearner learner(1.0 / (m - 1), m - 1, mix64(seed), m);
                LemmaChecker checker(gs.world, true);
                SessionOptions options;
                options.record_examples = false;
                options.on_round = [&checker](const RoundRecord& rec) { checker.on_round(rec); };
                SessionResult session =
                    run_session(learner, gs.stream, gs.world, gs.spec, options);
                if (session.forced > 0)
                    result.fail("unique_label m=" + std::to_string(m) + " k=" + std::to_string(k) +
                                " trial " + std::to_string(trial) + ": forced exception");
                for (const auto& v : checker.violations())
                    result.fail("unique_label m=" + std::to_string(m) + " k=" + std::to_string(k) +
                                " trial " + std::to_string(trial) + ": " + v);
                mistakes.push_back(session.mistakes);
            }
            double mean = 0;
            for (long long v : mistakes) mean += static_cast<double>(v);
            mean /= static_cast<double>(mistakes.size());
            double var = 0;
            for (long long v : mistakes) {
                const double d = static_cast<double>(v) - mean;
                var += d * d;
            }
            const double stderr_mean =
                mistakes.size() > 1
                    ? std::sqrt(var / (static_cast<double>(mistakes.size()) - 1.0) /
                                static_cast<double>(mistakes.size()))
                    : 0.0;
            if (mean > bound + 3.0 * stderr_mean) {
                cell_pass = false;
                result.fail("unique_label m=" + std::to_string(m) + " k=" + std::to_string(k) +
                            ": mean " + std::to_string(mean) + " > " + std::to_string(bound) +
                            " + 3se(" + std::to_string(stderr_mean) + ")");
            }
            // The mistakes column of a summary row holds the mean in milli-units so
            // the csv stays integral and byte-stable.
            result.rows.push_back({"unique_label", m, std::to_string(k), -1, cell_seed,
                                   static_cast<long long>(std::llround(mean * 1000)),
                                   std::to_string(bound), cell_pass});
        }
    }
    return result;
}

// ─── Worst-case script search ────────────────────────────────────────

struct SearchResult {
    std::vector<int> script;            // component per round
    std::vector<int> exception_rounds;  // planned exception rounds
    long long mistakes = 0;
    bool exhaustive = false;
};

namespace detail {

inline long long score_script(const Representation& world, const std::vector<int>& script,
                              const std::vector<int>& exceptions,
                              const std::function<std::unique_ptr<Learner>()>& factory,
                              std::uint64_t seed) {
    std::vector<ScriptRound> rounds;
    for (int c : script) rounds.push_back({c, std::nullopt, std::nullopt, false});
    ExceptionSpec spec =
        exceptions.empty() ? ExceptionSpec::none() : ExceptionSpec::adversarial(exceptions);
    auto stream = adversarial_stream(world, rounds, spec, seed);
    auto learner = factory();
    SessionOptions options;
    options.record_examples = false;
    return run_session(*learner, stream, world, spec, options).mistakes;
}

}  // namespace detail

// Exhaustive over all component scripts (and exception-round subsets of size k) when
// the space is small; random restarts with greedy single-round flips otherwise.
inline SearchResult adversarial_search(const Representation& world, int length, int k,
                                       const std::function<std::unique_ptr<Learner>()>& factory,
                                       long long budget = 20000, std::uint64_t seed = 1) {
    DFF_REQUIRE(length >= 0, "length must be >= 0");
    const int m = world.m();
    SearchResult best;
    if (length == 0) return best;  // nothing to present, nothing to get wrong

    double space = std::pow(static_cast<double>(m), length);
    const bool exhaustive = length <= 8 && space <= 1e6 && k <= 1;
    if (exhaustive) {
        best.exhaustive = true;
        std::vector<int> script(static_cast<std::size_t>(length), 0);
        auto exception_sets = [&]() {
            std::vector<std::vector<int>> sets;
            sets.push_back({});
            if (k >= 1)
                for (int t = 1; t < length; ++t) sets.push_back({t});
            return sets;
        }();
        while (true) {
            for (const auto& exceptions : exception_sets) {
                const long long score =
                    detail::score_script(world, script, exceptions, factory, seed);
                if (score > best.mistakes) {
                    best.mistakes = score;
                    best.script = script;
                    best.exception_rounds = exceptions;
                }
            }
            int pos = length - 1;
            while (pos >= 0 && script[static_cast<std::size_t>(pos)] == m - 1) --pos;
            if (pos < 0) break;
            ++script[static_cast<std::size_t>(pos)];
            for (int i = pos + 1; i < length; ++i) script[static_cast<std::size_t>(i)] = 0;
        }
        return best;
    }

    Rng rng(seed);
    long long evals = 0;
    while (evals < budget) {
        std::vector<int> script;
        for (int t = 0; t < length; ++t) script.push_back(rng.below_int(m));
        std::vector<int> exceptions;
        {
            std::vector<int> all;
            for (int t = 1; t < length; ++t) all.push_back(t);
            for (int i = 0; i < k && !all.empty(); ++i) {
                const auto j = rng.below(all.size());
                exceptions.push_back(all[j]);
                all.erase(all.begin() + static_cast<std::ptrdiff_t>(j));
            }
            std::sort(exceptions.begin(), exceptions.end());
        }
        long long score = detail::score_script(world, script, exceptions, factory, seed);
        ++evals;
        bool improved = true;
        while (improved && evals < budget) {
            improved = false;
            for (int t = 0; t < length && evals < budget; ++t) {
                const int original = script[static_cast<std::size_t>(t)];
                for (int c = 0; c < m && evals < budget; ++c) {
                    if (c == original) continue;
                    script[static_cast<std::size_t>(t)] = c;
                    const long long s = detail::score_script(world, script, exceptions, factory, seed);
                    ++evals;
                    if (s > score) {
                        score = s;
                        improved = true;
                    } else {
                        script[static_cast<std::size_t>(t)] = original;
                    }
                }
            }
        }
        if (score > best.mistakes) {
            best.mistakes = score;
            best.script = script;
            best.exception_rounds = exceptions;
        }
    }
    return best;
}

}  // namespace dff
