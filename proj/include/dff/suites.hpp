#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dff/harness.hpp"
#include "dff/stochastic.hpp"

namespace dff {

// ─── Zero-exception equivalence (SR-DFF vs DFF18) ────────────────────

inline bool same_round(const RoundRecord& a, const RoundRecord& b) {
    return a.t == b.t && a.predicted == b.predicted && a.explanation_id == b.explanation_id &&
           a.feedback == b.feedback && a.mistake == b.mistake;
}

inline SuiteResult equivalence_suite(int trials, std::uint64_t base_seed) {
    SuiteResult result;
    long long worst = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(trial));
        const int m = 2 + trial % 5;
        GridStream gs = make_grid_stream(m, 0, seed, false);
        SrDff srdff(m);
        Dff18 dff18;
        SessionOptions options;
        options.record_examples = false;
        SessionResult a = run_session(srdff, gs.stream, gs.world, gs.spec, options);
        SessionResult b = run_session(dff18, gs.stream, gs.world, gs.spec, options);
        worst = std::max(worst, a.mistakes);
        if (a.mistakes != b.mistakes || a.transcript.size() != b.transcript.size()) {
            result.fail("trial " + std::to_string(trial) + ": transcript sizes or mistakes differ");
            continue;
        }
        for (std::size_t i = 0; i < a.transcript.size(); ++i)
            if (!same_round(a.transcript[i], b.transcript[i])) {
                result.fail("trial " + std::to_string(trial) + ": transcripts diverge at round " +
                            std::to_string(i));
                break;
            }
    }
    result.rows.push_back(
        {"dff18", 0, "0", -1, base_seed, worst, "transcripts identical", result.pass});
    return result;
}

// ─── |Phi|-independence probe ────────────────────────────────────────
//
// Matched worlds differing only in 50 extra noise features produce identical
// SR-DFF transcripts: teacher feedback never names a noise feature.

inline SuiteResult phi_independence_suite(int trials, std::uint64_t base_seed) {
    SuiteResult result;
    for (int trial = 0; trial < trials; ++trial) {
        const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(trial));
        Rng rng(seed);
        const int m = 2 + trial % 5;
        WorldGenParams params;
        params.m = m;
        params.label_count = 2 + rng.below_int(m - 1);
        params.pool_size = 3 + rng.below_int(3);
        params.noise_features = 0;
        params.seed = rng.next();
        auto [base_world, pool] = generate_world(params);
        Representation noisy_world = with_noise_features(base_world, 50, rng.next());

        const int length = 60;
        std::vector<ScriptRound> script;
        for (int t = 0; t < length; ++t)
            script.push_back({rng.below_int(m), std::nullopt, std::nullopt, false});
        const int k = trial % 3;
        std::vector<int> exception_rounds;
        for (int i = 0; i < k; ++i) exception_rounds.push_back(1 + rng.below_int(length - 1));
        std::sort(exception_rounds.begin(), exception_rounds.end());
        exception_rounds.erase(std::unique(exception_rounds.begin(), exception_rounds.end()),
                               exception_rounds.end());
        ExceptionSpec spec = exception_rounds.empty()
                                 ? ExceptionSpec::none()
                                 : ExceptionSpec::adversarial(exception_rounds);
        const std::uint64_t stream_seed = rng.next();

        auto stream0 = adversarial_stream(base_world, script, spec, stream_seed);
        auto stream50 = adversarial_stream(noisy_world, script, spec, stream_seed);

        SrDff a(m), b(m);
        SessionOptions options;
        options.record_examples = false;
        SessionResult r0 = run_session(a, stream0, base_world, spec, options);
        SessionResult r50 = run_session(b, stream50, noisy_world, spec, options);
        if (r0.mistakes != r50.mistakes) {
            result.fail("trial " + std::to_string(trial) + ": mistake counts differ (" +
                        std::to_string(r0.mistakes) + " vs " + std::to_string(r50.mistakes) + ")");
            continue;
        }
        for (std::size_t i = 0; i < r0.transcript.size(); ++i)
            if (!same_round(r0.transcript[i], r50.transcript[i])) {
                result.fail("trial " + std::to_string(trial) + ": transcripts diverge at round " +
                            std::to_string(i));
                break;
            }
    }
    result.rows.push_back({"srdff", 0, "0vs50noise", -1, base_seed, 0,
                           "transcripts identical", result.pass});
    return result;
}

// ─── Distribution analysis exactness ─────────────────────────────────
//
// Random sources: sum of beta_phi <= 1/2 and |Phi_beta| <= 1/(2 beta) hold exactly;
// the witness decision list h_beta stays within err <= eps + sqrt(beta) m^2/2, all
// in rational arithmetic.

inline SuiteResult distribution_exactness_suite(int sources, int errhb_triples,
                                                std::uint64_t base_seed) {
    SuiteResult result;
    auto random_world_source = [&](std::uint64_t seed) {
        Rng rng(seed);
        WorldGenParams params;
        params.m = 1 + rng.below_int(6);
        params.label_count = params.m == 1 ? 1 : 1 + rng.below_int(params.m);
        params.pool_size = 2 + rng.below_int(4);
        params.seed = rng.next();
        auto [world, pool] = generate_world(params);
        StochasticSource source;
        for (int i = 0; i < params.m; ++i)
            source.weights.push_back(1 + static_cast<long long>(rng.below(20)));
        source.exceptions = ExceptionSpec::stochastic(Rational(0), Corruption::wrong_label);
        for (int i = 0; i < params.m; ++i)
            source.exceptions.epsilon_per_component.push_back(
                Rational(static_cast<long long>(rng.below(6)), 20));
        source.exceptions.epsilon = source.exceptions.epsilon_per_component.front();
        return std::pair{std::move(world), std::move(source)};
    };

    for (int i = 0; i < sources; ++i) {
        const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(i));
        auto [world, source] = random_world_source(seed);
        const DistributionAnalysis analysis = analyze_distribution(world, source);
        if (analysis.beta_sum() > Rational(1, 2))
            result.fail("source " + std::to_string(i) + ": sum of beta_phi exceeds 1/2");
        Rng rng(mix64(seed));
        const Rational beta(1 + static_cast<long long>(rng.below(63)), 64);
        const auto selected = phi_beta(analysis, beta);
        if (Rational(static_cast<long long>(selected.size())) * beta * 2 > Rational(1))
            result.fail("source " + std::to_string(i) + ": |Phi_beta| exceeds 1/(2 beta)");
    }

    for (int i = 0; i < errhb_triples; ++i) {
        const std::uint64_t seed = derive_seed(base_seed ^ 0x5eedULL, static_cast<std::uint64_t>(i));
        auto [world, source] = random_world_source(seed);
        Rng rng(mix64(seed));
        const Rational beta(1 + static_cast<long long>(rng.below(63)), 64);
        const ErrhbReport report = verify_errhb(world, source, beta);
        if (!report.pass)
            result.fail("errhb triple " + std::to_string(i) + ": err " +
                        std::to_string(to_double(report.err)) + " > bound " +
                        std::to_string(report.bound));
    }
    result.rows.push_back({"analysis", 0, "-", -1, base_seed, 0, "exact", result.pass});
    return result;
}

// ─── Feature-discovery concentration ─────────────────────────────────
//
// m=3 worlds with a threshold separating the planted pair masses; checks
// Phi_beta subset of Phi_hat in at least `required` of the seeds, and that the
// discovery stage never exceeds its mistake limit.

struct DiscoverySetup {
    Representation world;
    StochasticSource source;
    Rational beta;
    long long b = 0;
    std::vector<Literal> planted;  // Phi_beta, computed exactly
};

inline DiscoverySetup make_discovery_setup(double delta) {
    WorldGenParams params;
    params.m = 3;
    params.labels = {"A", "B", "B"};
    params.pool_size = 4;
    params.seed = 99;
    auto [world, pool] = generate_world(params);
    StochasticSource source;
    source.weights = {10, 7, 1};
    source.exceptions = ExceptionSpec::stochastic(Rational(1, 50), Corruption::both);
    DiscoverySetup setup{std::move(world), std::move(source), Rational(1, 16), 0, {}};
    const double bd = to_double(setup.beta);
    setup.b = static_cast<long long>(std::ceil(12.0 * std::log(1.0 / (2.0 * delta * bd)) / bd));
    setup.planted = phi_beta(analyze_distribution(setup.world, setup.source), setup.beta);
    return setup;
}

inline SuiteResult discovery_concentration_suite(int seeds, double required_fraction,
                                                 std::uint64_t base_seed, double delta = 0.1) {
    SuiteResult result;
    DiscoverySetup setup = make_discovery_setup(delta);
    if (setup.planted.empty()) result.fail("setup has an empty Phi_beta");

    int contained = 0;
    for (int s = 0; s < seeds; ++s) {
        const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(s));
        auto stream = stochastic_stream(setup.world, setup.source, 6000, seed);
        Teacher teacher(setup.world, setup.source.exceptions);
        DiscoveryResult dr = feature_discovery(stream, teacher, setup.b, setup.beta);
        if (dr.mistakes > setup.b)
            result.fail("seed " + std::to_string(s) + ": stage-1 mistakes exceed the limit");
        if (dr.under_sampled) {
            result.fail("seed " + std::to_string(s) + ": stream exhausted before b/2 counts");
            continue;
        }
        bool ok = true;
        for (Literal lit : setup.planted)
            if (std::find(dr.phi_hat.begin(), dr.phi_hat.end(), lit) == dr.phi_hat.end()) ok = false;
        if (ok) ++contained;
    }
    const double fraction = static_cast<double>(contained) / seeds;
    if (fraction < required_fraction)
        result.fail("Phi_beta contained in only " + std::to_string(fraction) + " of seeds");
    result.rows.push_back({"discovery", 3, "0.02", -1, base_seed,
                           static_cast<long long>(contained), std::to_string(required_fraction),
                           result.pass});
    return result;
}

// ─── End-to-end stochastic mistake rate ──────────────────────────────

struct PipelineCellResult {
    int rate_ok = 0;             // seeds with rate <= eps + 2 alpha
    int stage3_zero = 0;         // seeds with no stage-3 mistakes
    bool capacity_ok = true;     // log2 |H| <= capacity bound on every run
    int seeds = 0;
};

inline PipelineCellResult pipeline_rate_cell(const Rational& epsilon, int seeds,
                                             std::uint64_t base_seed) {
    WorldGenParams params;
    params.m = 2;
    params.label_count = 2;
    params.pool_size = 4;
    params.seed = 7;
    auto [world, pool] = generate_world(params);
    StochasticSource source;
    source.weights = {1, 1};
    source.exceptions = ExceptionSpec::stochastic(epsilon, Corruption::both);

    StochasticRunParams run_params;
    run_params.beta = Rational(1, 64);  // sqrt(beta) m^2 / 2 == alpha
    run_params.alpha = 0.25;
    run_params.delta = 0.1;
    run_params.n = 20000;
    run_params.m = 2;

    PipelineCellResult cell;
    cell.seeds = seeds;
    const double capacity = capacity_bound(run_params.m, to_double(run_params.beta));
    const double target = to_double(epsilon) + 2.0 * run_params.alpha;
    for (int s = 0; s < seeds; ++s) {
        const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(s));
        auto stream = stochastic_stream(world, source, run_params.n, seed);
        Teacher teacher(world, source.exceptions);
        ThreeStageResult r = three_stage_run(stream, teacher, run_params);
        if (r.mistake_rate <= target) ++cell.rate_ok;
        if (r.stage3_mistakes == 0) ++cell.stage3_zero;
        if (r.erm.log2_class_size > capacity) cell.capacity_ok = false;
    }
    return cell;
}

inline SuiteResult pipeline_rate_suite(int seeds, std::uint64_t base_seed) {
    SuiteResult result;
    { // epsilon = 0: rate target and exact stage-3 realizability
        PipelineCellResult cell = pipeline_rate_cell(Rational(0), seeds, base_seed);
        if (cell.rate_ok < static_cast<int>(std::ceil(0.7 * seeds)))
            result.fail("eps=0: rate target met in only " + std::to_string(cell.rate_ok) + "/" +
                        std::to_string(seeds) + " seeds");
        if (cell.stage3_zero < static_cast<int>(std::ceil(0.9 * seeds)))
            result.fail("eps=0: stage-3 error zero in only " + std::to_string(cell.stage3_zero) +
                        "/" + std::to_string(seeds) + " seeds");
        if (!cell.capacity_ok) result.fail("eps=0: capacity bound violated");
        result.rows.push_back({"three_stage", 2, "0", -1, base_seed,
                               static_cast<long long>(cell.rate_ok), "rate<=0.5", result.pass});
    }
    { // epsilon = 0.05
        PipelineCellResult cell =
            pipeline_rate_cell(Rational(1, 20), seeds, derive_seed(base_seed, 1));
        bool cell_pass = true;
        if (cell.rate_ok < static_cast<int>(std::ceil(0.7 * seeds))) {
            cell_pass = false;
            result.fail("eps=0.05: rate target met in only " + std::to_string(cell.rate_ok) + "/" +
                        std::to_string(seeds) + " seeds");
        }
        if (!cell.capacity_ok) {
            cell_pass = false;
            result.fail("eps=0.05: capacity bound violated");
        }
        result.rows.push_back({"three_stage", 2, "0.05", -1, base_seed,
                               static_cast<long long>(cell.rate_ok), "rate<=0.55", cell_pass});
    }
    return result;
}

}  // namespace dff
