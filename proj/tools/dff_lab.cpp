// dff-lab: world generation, seeded trial runs, bound-verification suites, a
// worst-case script search, and a stdio/TCP serve mode for external teachers.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dff/harness.hpp"
#include "dff/json_io.hpp"
#include "dff/protocol.hpp"
#include "dff/stochastic.hpp"
#include "dff/suites.hpp"

namespace {

using namespace dff;

int cmd_gen(const std::string& params_path, const std::string& out_path, int m, int label_count,
            int pool, int noise, bool unique, std::uint64_t seed) {
    WorldGenParams params;
    if (!params_path.empty()) {
        Json j = load_json(params_path);
        params.m = j.value("m", 1);
        params.label_count = j.value("label_count", params.m);
        if (j.contains("labels")) params.labels = j.at("labels").get<std::vector<Label>>();
        params.pool_size = j.value("pool_size", 3);
        params.noise_features = j.value("noise_features", 0);
        params.unique_labels = j.value("unique_labels", false);
        params.seed = j.value("seed", 0ULL);
    } else {
        params.m = m;
        params.label_count = label_count > 0 ? label_count : m;
        params.pool_size = pool;
        params.noise_features = noise;
        params.unique_labels = unique;
        params.seed = seed;
    }
    auto [world, pool_examples] = generate_world(params);
    const ValidationReport report = validate_representation(world, pool_examples);
    if (!report.ok()) {
        for (const auto& v : report.violations) std::cerr << "violation: " << v.detail << '\n';
        return 1;
    }
    save_json(world_to_json(world), out_path);
    std::cout << "wrote " << out_path << " (m=" << world.m() << ", features=" << world.feature_count
              << ", pool=" << pool_examples.size() << ")\n";
    return 0;
}

int run_pipeline_scenario(const Scenario& scenario, int trials, std::uint64_t seed,
                          const std::string& out_path) {
    const Json& p = scenario.pipeline;
    StochasticRunParams params;
    params.alpha = p.value("alpha", 0.25);
    params.delta = p.value("delta", 0.1);
    const Json beta = p.value("beta", Json(0.015625));
    params.beta = beta.is_string() ? rational_from_decimal(beta.get<std::string>())
                                   : rational_from_decimal(beta.dump());
    params.n = scenario.stream.n;
    params.m = p.value("m", scenario.world.m());
    if (p.contains("b") && p.at("b").is_number_integer()) params.b = p.at("b").get<long long>();
    params.greedy = p.value("erm", "exhaustive") == std::string("greedy");
    params.budget = p.value("budget", 10'000'000LL);

    std::vector<TrialRow> rows;
    bool all_ok = true;
    for (int trial = 0; trial < trials; ++trial) {
        const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(trial));
        auto stream = scenario.stream.materialize(scenario.world, trial_seed);
        Teacher teacher(scenario.world, scenario.stream.exception_spec());
        ThreeStageResult r = three_stage_run(stream, teacher, params);

        Json f = Json::object();
        for (const auto& [lit, c] : r.stage1.counter.counts)
            f[std::to_string(lit.feature) + (lit.polarity ? "+" : "-")] = c;
        Json phi_hat = Json::array();
        for (Literal lit : r.stage1.phi_hat)
            phi_hat.push_back(std::to_string(lit.feature) + (lit.polarity ? "+" : "-"));
        Json summary = {
            {"trial", trial},
            {"stage1",
             {{"mistakes", r.stage1.mistakes}, {"F", f}, {"phi_hat", phi_hat},
              {"under_sampled", r.stage1.under_sampled}}},
            {"stage2", {{"n1", r.n1}, {"erm_error", r.erm.error}}},
            {"stage3", {{"mistakes", r.stage3_mistakes}, {"rate", r.mistake_rate}}},
        };
        std::cout << summary.dump() << '\n';
        rows.push_back({"three_stage", params.m, to_double(scenario.stream.epsilon) == 0.0 ? "0" : "eps",
                        trial, trial_seed, r.total_mistakes, "-", true});
    }
    if (!out_path.empty()) export_results(rows, out_path);
    return all_ok ? 0 : 1;
}

int cmd_run(const std::string& scenario_path, int trials_override, long long seed_override,
            const std::string& out_path, const std::string& transcripts_dir) {
    const auto base_dir = std::filesystem::path(scenario_path).parent_path().string();
    Scenario scenario = scenario_from_json(load_json(scenario_path), base_dir.empty() ? "." : base_dir);
    const int trials = trials_override > 0 ? trials_override : scenario.trials;
    const std::uint64_t seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override)
                                                  : scenario.seed;
    if (!scenario.pipeline.empty() && scenario.pipeline.value("pipeline", "") == "three_stage")
        return run_pipeline_scenario(scenario, trials, seed, out_path);

    std::vector<TrialRow> rows;
    const std::string learner_name = scenario.learner_spec.value("name", "srdff");
    const int m = scenario.learner_spec.value("m", scenario.world.m());
    long long total = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(trial));
        auto stream = scenario.stream.materialize(scenario.world, trial_seed);
        auto learner = make_trial_learner(scenario.learner_spec, mix64(trial_seed));
        SessionOptions options;
        options.record_examples = !transcripts_dir.empty();
        SessionResult session = run_session(*learner, stream, scenario.world,
                                            scenario.stream.exception_spec(), options);
        total += session.mistakes;
        rows.push_back({learner_name, m, "-", trial, trial_seed, session.mistakes, "-", true});
        if (!transcripts_dir.empty()) {
            std::filesystem::create_directories(transcripts_dir);
            std::ofstream out(transcripts_dir + "/trial_" + std::to_string(trial) + ".jsonl",
                              std::ios::binary);
            out << transcript_to_jsonl(session.transcript);
        }
    }
    rows.push_back({learner_name, m, "-", -1, seed, total, "-", true});
    if (!out_path.empty())
        export_results(rows, out_path);
    else
        std::cout << results_to_csv(rows);
    return 0;
}

int cmd_verify(const std::string& suite, const std::string& out_path, int trials,
               std::uint64_t seed) {
    SuiteResult result;
    if (suite == "theorem1") {
        result = theorem1_suite(trials > 0 ? trials : 1000, seed, false);
    } else if (suite == "lemmas") {
        result = theorem1_suite(trials > 0 ? trials : 1000, seed, true);
    } else if (suite == "theorem2") {
        result = theorem2_suite(trials > 0 ? trials : 1000, seed);
    } else if (suite == "theorem3") {
        result = theorem3_suite(trials > 0 ? trials : 2000, seed);
    } else if (suite == "stochastic") {
        result = distribution_exactness_suite(200, 100, seed);
        SuiteResult discovery = discovery_concentration_suite(trials > 0 ? trials : 500, 0.9, seed);
        SuiteResult pipeline = pipeline_rate_suite(trials > 0 ? trials : 200, seed);
        result.pass = result.pass && discovery.pass && pipeline.pass;
        for (auto& r : discovery.rows) result.rows.push_back(r);
        for (auto& r : pipeline.rows) result.rows.push_back(r);
        for (auto& n : discovery.notes) result.notes.push_back(n);
        for (auto& n : pipeline.notes) result.notes.push_back(n);
    } else {
        std::cerr << "unknown suite: " << suite << '\n';
        return 2;
    }
    for (const auto& note : result.notes) std::cerr << "FAIL " << note << '\n';
    if (!out_path.empty())
        export_results(result.rows, out_path);
    else
        std::cout << results_to_csv(result.rows);
    std::cout << (result.pass ? "PASS" : "FAIL") << " suite " << suite << '\n';
    return result.pass ? 0 : 1;
}

int cmd_search(const std::string& world_path, int k, int length, const std::string& learner_json,
               long long budget) {
    Representation world = world_from_json(load_json(world_path));
    Json spec = learner_json.empty() ? Json{{"name", "srdff"}, {"m", world.m()}}
                                     : Json::parse(learner_json);
    auto factory = [&spec] { return make_learner(spec); };
    SearchResult result = adversarial_search(world, length, k, factory);
    Json out = {{"mistakes", result.mistakes},
                {"exhaustive", result.exhaustive},
                {"script", result.script},
                {"exceptions", result.exception_rounds}};
    std::cout << out.dump(2) << '\n';
    return 0;
}

int serve_fd(int fd) {
    struct FdStreams {
        explicit FdStreams(int fd) : in_buf(fd), out_buf(fd), in(&in_buf), out(&out_buf) {}
        struct FdBuf : std::streambuf {
            explicit FdBuf(int fd) : fd_(fd) {}
            int underflow() override {
                const ssize_t n = ::read(fd_, buf_, sizeof buf_);
                if (n <= 0) return traits_type::eof();
                setg(buf_, buf_, buf_ + n);
                return traits_type::to_int_type(*gptr());
            }
            int overflow(int c) override {
                if (c != traits_type::eof()) {
                    const char ch = static_cast<char>(c);
                    if (::write(fd_, &ch, 1) != 1) return traits_type::eof();
                }
                return c;
            }
            std::streamsize xsputn(const char* s, std::streamsize n) override {
                return ::write(fd_, s, static_cast<std::size_t>(n));
            }
            int fd_;
            char buf_[4096];
        };
        FdBuf in_buf, out_buf;
        std::istream in;
        std::ostream out;
    };
    FdStreams streams(fd);
    IostreamTransport transport(streams.in, streams.out);
    SessionSummary summary = serve_session(transport, default_learner_factory());
    std::cerr << "session closed: mistakes=" << summary.mistakes
              << (summary.ok() ? "" : ", error=" + summary.error) << '\n';
    return summary.ok() ? 0 : 1;
}

int cmd_serve(bool stdio, const std::string& listen) {
    if (stdio) {
        IostreamTransport transport(std::cin, std::cout);
        SessionSummary summary = serve_session(transport, default_learner_factory());
        std::cerr << "session closed: mistakes=" << summary.mistakes
                  << (summary.ok() ? "" : ", error=" + summary.error) << '\n';
        return summary.ok() ? 0 : 1;
    }
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) {
        std::cerr << "--listen expects host:port\n";
        return 2;
    }
    const std::string host = listen.substr(0, colon);
    const int port = std::stoi(listen.substr(colon + 1));

    const int server = ::socket(AF_INET, SOCK_STREAM, 0);
    if (server < 0) {
        std::perror("socket");
        return 1;
    }
    const int one = 1;
    ::setsockopt(server, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    addr.sin_addr.s_addr = host == "0.0.0.0" ? INADDR_ANY : ::inet_addr(host.c_str());
    if (::bind(server, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        std::perror("bind");
        return 1;
    }
    if (::listen(server, 4) != 0) {
        std::perror("listen");
        return 1;
    }
    std::cerr << "listening on " << listen << " (one session per connection)\n";
    while (true) {
        const int client = ::accept(server, nullptr, nullptr);
        if (client < 0) break;
        serve_fd(client);
        ::close(client);
    }
    ::close(server);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discriminative Feature Feedback lab: simulator, learners, bound checks"};
    app.require_subcommand(1);

    // gen
    std::string gen_params, gen_out = "world.json";
    int gen_m = 2, gen_labels = 0, gen_pool = 3, gen_noise = 0;
    bool gen_unique = false;
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("gen", "generate a world file");
    gen->add_option("--params", gen_params, "JSON file with generation parameters");
    gen->add_option("--out", gen_out, "output world file")->required();
    gen->add_option("--m", gen_m, "component count");
    gen->add_option("--labels", gen_labels, "distinct label count (default m)");
    gen->add_option("--pool", gen_pool, "pool size per component");
    gen->add_option("--noise", gen_noise, "noise feature count");
    gen->add_flag("--unique", gen_unique, "one distinct label per component");
    gen->add_option("--seed", gen_seed, "generation seed");

    // run
    std::string run_scenario, run_out, run_transcripts;
    int run_trials = 0;
    long long run_seed = -1;
    auto* run = app.add_subcommand("run", "run a scenario for N seeded trials");
    run->add_option("--scenario", run_scenario, "scenario file")->required();
    run->add_option("--trials", run_trials, "trial count (overrides scenario)");
    run->add_option("--seed", run_seed, "base seed (overrides scenario)");
    run->add_option("--out", run_out, "results csv path");
    run->add_option("--transcripts", run_transcripts, "directory for per-trial JSONL transcripts");

    // verify
    std::string verify_suite, verify_out;
    int verify_trials = 0;
    std::uint64_t verify_seed = 2024;
    auto* verify = app.add_subcommand("verify", "run a bound-verification suite");
    verify->add_option("--suite", verify_suite, "theorem1|theorem2|theorem3|stochastic|lemmas")
        ->required();
    verify->add_option("--out", verify_out, "report csv path");
    verify->add_option("--trials", verify_trials, "trials per configuration");
    verify->add_option("--seed", verify_seed, "base seed");

    // search
    std::string search_world, search_learner;
    int search_k = 0, search_len = 6;
    long long search_budget = 20000;
    auto* search = app.add_subcommand("search", "search for high-mistake adversarial scripts");
    search->add_option("--world", search_world, "world file")->required();
    search->add_option("--k", search_k, "exception budget");
    search->add_option("--len", search_len, "script length");
    search->add_option("--learner", search_learner, "learner spec as inline JSON");
    search->add_option("--budget", search_budget, "evaluation budget (heuristic mode)");

    // serve
    bool serve_stdio = false;
    std::string serve_listen;
    auto* serve = app.add_subcommand("serve", "serve the learner side of the protocol");
    serve->add_flag("--stdio", serve_stdio, "one session over stdin/stdout");
    serve->add_option("--listen", serve_listen, "TCP listener, host:port");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen(gen_params, gen_out, gen_m, gen_labels, gen_pool, gen_noise, gen_unique,
                           gen_seed);
        if (run->parsed()) return cmd_run(run_scenario, run_trials, run_seed, run_out, run_transcripts);
        if (verify->parsed()) return cmd_verify(verify_suite, verify_out, verify_trials, verify_seed);
        if (search->parsed())
            return cmd_search(search_world, search_k, search_len, search_learner, search_budget);
        if (serve->parsed()) {
            if (!serve_stdio && serve_listen.empty()) {
                std::cerr << "serve requires --stdio or --listen\n";
                return 2;
            }
            return cmd_serve(serve_stdio, serve_listen);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
