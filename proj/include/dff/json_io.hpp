#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dff/core.hpp"
#include "dff/learners.hpp"
#include "dff/world.hpp"

namespace dff {

using Json = nlohmann::ordered_json;

// ─── World files ─────────────────────────────────────────────────────
// {"m": 2, "labels": [...], "features": 3, "components": [[row, ...], ...],
//  "phi_table": [{"i":0,"j":1,"feature":0,"polarity":true}, ...]}
// Rows are arrays of booleans, one value per feature. phi_table entries may list
// either direction of a pair; the missing direction is derived by negation.

inline Json example_to_json(const Example& x) {
    Json row = Json::array();
    for (bool b : x.bits) row.push_back(b);
    return row;
}

inline Example example_from_json(const Json& row) {
    Example x;
    for (const auto& v : row) x.bits.push_back(v.get<bool>());
    return x;
}

inline Json world_to_json(const Representation& rep) {
    Json j;
    j["m"] = rep.m();
    Json labels = Json::array();
    for (const auto& c : rep.components) labels.push_back(c.label);
    j["labels"] = labels;
    j["features"] = rep.feature_count;
    Json comps = Json::array();
    for (const auto& c : rep.components) {
        Json pool = Json::array();
        for (const Example& x : c.pool) pool.push_back(example_to_json(x));
        comps.push_back(pool);
    }
    j["components"] = comps;
    Json phi = Json::array();
    for (const auto& [pair, lit] : rep.phi) {
        if (pair.first > pair.second) continue;
        phi.push_back({{"i", pair.first},
                       {"j", pair.second},
                       {"feature", lit.feature},
                       {"polarity", lit.polarity}});
    }
    j["phi_table"] = phi;
    return j;
}

inline Representation world_from_json(const Json& j) {
    Representation rep;
    const int m = j.at("m").get<int>();
    rep.feature_count = j.at("features").get<std::size_t>();
    const auto& labels = j.at("labels");
    const auto& comps = j.at("components");
    DFF_REQUIRE(static_cast<int>(labels.size()) == m, "labels size mismatch");
    DFF_REQUIRE(static_cast<int>(comps.size()) == m, "components size mismatch");
    for (int i = 0; i < m; ++i) {
        ComponentDef c;
        c.label = labels[static_cast<std::size_t>(i)].get<Label>();
        for (const auto& row : comps[static_cast<std::size_t>(i)]) {
            Example x = example_from_json(row);
            DFF_REQUIRE(x.bits.size() == rep.feature_count, "assignment row has wrong width");
            c.pool.push_back(std::move(x));
        }
        rep.components.push_back(std::move(c));
    }
    for (const auto& entry : j.at("phi_table")) {
        int i = entry.at("i").get<int>();
        int jj = entry.at("j").get<int>();
        Literal lit{entry.at("feature").get<FeatureId>(), entry.at("polarity").get<bool>()};
        DFF_REQUIRE(i >= 0 && i < m && jj >= 0 && jj < m && i != jj, "phi_table entry out of range");
        auto existing = rep.phi_for(i, jj);
        DFF_REQUIRE(!existing || *existing == lit, "conflicting phi_table entries");
        rep.phi[{i, jj}] = lit;
        auto reverse = rep.phi_for(jj, i);
        DFF_REQUIRE(!reverse || *reverse == negate(lit), "phi_table entries violate antisymmetry");
        rep.phi[{jj, i}] = negate(lit);
    }
    return rep;
}

inline void save_json(const Json& j, const std::string& path) {
    std::ofstream out(path);
    DFF_REQUIRE(out.good(), "cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

inline Json load_json(const std::string& path) {
    std::ifstream in(path);
    DFF_REQUIRE(in.good(), "cannot open: " + path);
    return Json::parse(in);
}

// ─── Feedback / transcript ───────────────────────────────────────────

inline Json feedback_to_json(const std::optional<TeacherFeedback>& fb) {
    if (!fb) return nullptr;
    Json j;
    j["label"] = fb->label;
    j["feature"] = fb->feature ? Json(fb->feature->feature) : Json(nullptr);
    j["polarity"] = fb->feature ? Json(fb->feature->polarity) : Json(nullptr);
    return j;
}

inline std::optional<TeacherFeedback> feedback_from_json(const Json& j) {
    if (j.is_null()) return std::nullopt;
    TeacherFeedback fb;
    fb.label = j.at("label").get<Label>();
    if (!j.at("feature").is_null())
        fb.feature = Literal{j.at("feature").get<FeatureId>(), j.at("polarity").get<bool>()};
    return fb;
}

inline Json round_to_json(const RoundRecord& r) {
    Json j;
    j["t"] = r.t;
    j["example"] = example_to_json(r.x);
    j["predicted"] = r.predicted;
    j["explanation_id"] = r.explanation_id;
    j["feedback"] = feedback_to_json(r.feedback);
    j["mistake"] = r.mistake;
    j["hidden"] = {{"exception", r.exception}, {"component", r.component}};
    return j;
}

inline std::string transcript_to_jsonl(const std::vector<RoundRecord>& transcript) {
    std::ostringstream out;
    for (const RoundRecord& r : transcript) out << round_to_json(r).dump() << '\n';
    return out.str();
}

// ─── Learner factory ─────────────────────────────────────────────────
// {"name":"srdff","m":3} | {"name":"dff18"} | {"name":"pfrdff"} |
// {"name":"unique_label","p":0.5,"l":2,"seed":7}

inline std::unique_ptr<Learner> make_learner(const Json& spec) {
    const std::string name = spec.at("name").get<std::string>();
    if (name == "srdff") return std::make_unique<SrDff>(spec.at("m").get<int>());
    if (name == "dff18") return std::make_unique<Dff18>();
    if (name == "pfrdff") return std::make_unique<PfrDff>();
    if (name == "unique_label") {
        double p = spec.at("p").get<double>();
        int l = spec.at("l").get<int>();
        std::uint64_t seed = spec.value("seed", 0ULL);
        int m = spec.value("m", -1);
        return std::make_unique<UniqueLabelLearner>(p, l, seed, m);
    }
    throw Error("unknown learner: " + name);
}

// ─── Scenario files ──────────────────────────────────────────────────
// {"world": {...} | "path.json",
//  "stream": {"type":"script","rounds":[...],"exceptions":[...],"corruption":"both"}
//          | {"type":"stochastic","weights":[...],"epsilon":0.05,"n":100,"seed":1,
//             "corruption":"both"},
//  "learner": {...}, "trials": 10, "seed": 42}
// Script rounds are component indices, assignment rows, or objects with optional
// scripted feedback: {"component":0,"feedback":{...},"force":true}.

inline Corruption corruption_from_string(const std::string& s) {
    if (s == "wrong_label") return Corruption::wrong_label;
    if (s == "wrong_feature") return Corruption::wrong_feature;
    if (s == "both") return Corruption::both;
    throw Error("unknown corruption mode: " + s);
}

struct StreamSpec {
    enum class Type { script, stochastic };
    Type type = Type::script;
    // script
    std::vector<ScriptRound> rounds;
    std::vector<int> exceptions;
    // stochastic
    std::vector<long long> weights;
    Rational epsilon = Rational(0);
    int n = 0;
    Corruption corruption = Corruption::both;
    bool adaptive_labels = false;

    ExceptionSpec exception_spec() const {
        ExceptionSpec spec;
        if (type == Type::script) {
            spec = exceptions.empty() ? ExceptionSpec::none()
                                      : ExceptionSpec::adversarial(exceptions, corruption);
        } else {
            spec = ExceptionSpec::stochastic(epsilon, corruption);
        }
        spec.adaptive_labels = adaptive_labels;
        return spec;
    }

    std::vector<StreamEvent> materialize(const Representation& world, std::uint64_t seed) const {
        if (type == Type::script) return adversarial_stream(world, rounds, exception_spec(), seed);
        StochasticSource source{weights, exception_spec()};
        return stochastic_stream(world, source, n, seed);
    }
};

inline StreamSpec stream_spec_from_json(const Json& j) {
    StreamSpec spec;
    const std::string type = j.at("type").get<std::string>();
    if (j.contains("corruption"))
        spec.corruption = corruption_from_string(j.at("corruption").get<std::string>());
    spec.adaptive_labels = j.value("adaptive_labels", false);
    if (type == "script") {
        spec.type = StreamSpec::Type::script;
        for (const auto& r : j.at("rounds")) {
            ScriptRound round;
            if (r.is_number_integer()) {
                round.component = r.get<int>();
            } else if (r.is_array()) {
                round.example = example_from_json(r);
            } else {
                if (r.contains("component")) round.component = r.at("component").get<int>();
                if (r.contains("example")) round.example = example_from_json(r.at("example"));
                if (r.contains("feedback")) round.feedback_override = feedback_from_json(r.at("feedback"));
                round.force_feedback = r.value("force", false);
            }
            spec.rounds.push_back(std::move(round));
        }
        if (j.contains("exceptions")) spec.exceptions = j.at("exceptions").get<std::vector<int>>();
    } else if (type == "stochastic") {
        spec.type = StreamSpec::Type::stochastic;
        spec.weights = j.at("weights").get<std::vector<long long>>();
        if (j.contains("epsilon")) {
            const auto& eps = j.at("epsilon");
            spec.epsilon = eps.is_string() ? rational_from_decimal(eps.get<std::string>())
                                           : rational_from_decimal(eps.dump());
        }
        spec.n = j.at("n").get<int>();
    } else {
        throw Error("unknown stream type: " + type);
    }
    return spec;
}

struct Scenario {
    Representation world;
    StreamSpec stream;
    Json learner_spec;
    int trials = 1;
    std::uint64_t seed = 0;
    Json pipeline;  // optional stochastic-pipeline block; empty when absent
};

inline Scenario scenario_from_json(const Json& j, const std::string& base_dir = ".") {
    Scenario s;
    const auto& w = j.at("world");
    s.world = w.is_string() ? world_from_json(load_json(base_dir + "/" + w.get<std::string>()))
                            : world_from_json(w);
    s.stream = stream_spec_from_json(j.at("stream"));
    s.learner_spec = j.value("learner", Json{{"name", "srdff"}, {"m", s.world.m()}});
    s.trials = j.value("trials", 1);
    s.seed = j.value("seed", 0ULL);
    if (j.contains("pipeline")) s.pipeline = j;
    return s;
}

}  // namespace dff
