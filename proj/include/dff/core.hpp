#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dff {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define DFF_REQUIRE(cond, msg) \
    do {                       \
        if (!(cond)) throw ::dff::Error(msg); \
    } while (0)

using FeatureId = std::uint32_t;
using Label = std::string;

// A signed binary feature. polarity == true is the raw feature, false its negation.
// Which of the two is the *designated positive* literal of a feature is a property
// of the representation (see Representation::positive_literal).
struct Literal {
    FeatureId feature = 0;
    bool polarity = true;

    friend bool operator==(const Literal&, const Literal&) = default;
    friend auto operator<=>(const Literal&, const Literal&) = default;
};

inline Literal negate(Literal lit) { return {lit.feature, !lit.polarity}; }

// Total boolean assignment over a world's feature universe.
struct Example {
    std::vector<bool> bits;

    std::size_t universe_size() const { return bits.size(); }
    friend bool operator==(const Example&, const Example&) = default;
};

inline bool satisfies(const Example& x, Literal lit) {
    DFF_REQUIRE(lit.feature < x.bits.size(), "literal references unknown feature id");
    return x.bits[lit.feature] == lit.polarity;
}

// A set of literals, kept sorted and duplicate-free. A feature may appear with both
// polarities (such conjunctions match nothing); representation validation and the
// hypothesis enumerator reject that, learner rules may reach it through exceptions.
class Conjunction {
public:
    Conjunction() = default;
    explicit Conjunction(std::vector<Literal> lits) {
        for (Literal l : lits) add(l);
    }

    // Returns true if the literal was not present before.
    bool add(Literal lit) {
        auto it = std::lower_bound(lits_.begin(), lits_.end(), lit);
        if (it != lits_.end() && *it == lit) return false;
        lits_.insert(it, lit);
        return true;
    }

    bool remove(Literal lit) {
        auto it = std::lower_bound(lits_.begin(), lits_.end(), lit);
        if (it == lits_.end() || *it != lit) return false;
        lits_.erase(it);
        return true;
    }

    bool contains(Literal lit) const {
        return std::binary_search(lits_.begin(), lits_.end(), lit);
    }

    bool contains_feature(FeatureId f) const {
        return contains({f, true}) || contains({f, false});
    }

    std::size_t size() const { return lits_.size(); }
    bool empty() const { return lits_.empty(); }
    const std::vector<Literal>& literals() const { return lits_; }

    bool contradictory() const {
        for (std::size_t i = 1; i < lits_.size(); ++i)
            if (lits_[i].feature == lits_[i - 1].feature) return true;
        return false;
    }

    friend bool operator==(const Conjunction&, const Conjunction&) = default;

private:
    std::vector<Literal> lits_;
};

// Empty conjunction is satisfied by every example.
inline bool satisfies_conjunction(const Example& x, const Conjunction& c) {
    for (Literal lit : c.literals())
        if (!satisfies(x, lit)) return false;
    return true;
}

struct ComponentDef {
    Label label;
    std::vector<Example> pool;
};

// The hidden ground truth: m labeled components covering the example pool, plus a
// discriminative-feature table phi for every ordered differently-labeled pair.
struct Representation {
    std::size_t feature_count = 0;
    std::vector<ComponentDef> components;
    std::map<std::pair<int, int>, Literal> phi;

    int m() const { return static_cast<int>(components.size()); }
    const Label& label(int i) const { return components[static_cast<std::size_t>(i)].label; }
    const std::vector<Example>& pool(int i) const { return components[static_cast<std::size_t>(i)].pool; }

    std::optional<Literal> phi_for(int i, int j) const {
        auto it = phi.find({i, j});
        if (it == phi.end()) return std::nullopt;
        return it->second;
    }

    std::vector<Label> distinct_labels() const {
        std::vector<Label> out;
        for (const auto& c : components)
            if (std::find(out.begin(), out.end(), c.label) == out.end()) out.push_back(c.label);
        return out;
    }

    // Feature ids that appear anywhere in the phi table.
    std::vector<FeatureId> discriminative_features() const {
        std::set<FeatureId> s;
        for (const auto& [pair, lit] : phi) s.insert(lit.feature);
        return {s.begin(), s.end()};
    }

    // The designated positive literal of a feature: the entry stored for the
    // lexicographically smallest unordered pair that uses it.
    std::optional<Literal> positive_literal(FeatureId f) const {
        for (const auto& [pair, lit] : phi) {
            if (pair.first < pair.second && lit.feature == f) return lit;
        }
        return std::nullopt;
    }

    std::vector<int> components_containing(const Example& x) const {
        std::vector<int> out;
        for (int i = 0; i < m(); ++i) {
            const auto& p = pool(i);
            if (std::find(p.begin(), p.end(), x) != p.end()) out.push_back(i);
        }
        return out;
    }
};

// c*(x) = label of the component containing x. Ambiguity across labels is a
// malformed world for this x; membership in no component violates the cover axiom.
inline Label concept_label(const Representation& rep, const Example& x) {
    std::vector<int> cs = rep.components_containing(x);
    DFF_REQUIRE(!cs.empty(), "example belongs to no component (cover violation)");
    const Label& first = rep.label(cs.front());
    for (int c : cs)
        DFF_REQUIRE(rep.label(c) == first, "example belongs to differently-labeled components");
    return first;
}

struct Violation {
    enum class Kind { cover, discriminative, antisymmetry, missing_pair, spurious_pair, label_overlap, bad_feature_id };
    Kind kind;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Report-style check of the representation axioms against an example pool.
inline ValidationReport validate_representation(const Representation& rep,
                                                const std::vector<Example>& pool) {
    ValidationReport report;
    auto add = [&](Violation::Kind k, std::string d) {
        report.violations.push_back({k, std::move(d)});
    };

    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto cs = rep.components_containing(pool[i]);
        if (cs.empty()) {
            add(Violation::Kind::cover, "pool example " + std::to_string(i) + " is in no component");
            continue;
        }
        for (int c : cs)
            if (rep.label(c) != rep.label(cs.front()))
                add(Violation::Kind::label_overlap,
                    "pool example " + std::to_string(i) + " is in differently-labeled components");
    }

    for (int i = 0; i < rep.m(); ++i) {
        for (int j = 0; j < rep.m(); ++j) {
            if (i == j) continue;
            const bool differ = rep.label(i) != rep.label(j);
            auto entry = rep.phi_for(i, j);
            if (!differ) {
                if (entry)
                    add(Violation::Kind::spurious_pair,
                        "phi entry for same-label pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
                continue;
            }
            if (!entry) {
                add(Violation::Kind::missing_pair,
                    "no phi entry for pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
                continue;
            }
            if (entry->feature >= rep.feature_count) {
                add(Violation::Kind::bad_feature_id,
                    "phi entry for (" + std::to_string(i) + "," + std::to_string(j) + ") uses unknown feature");
                continue;
            }
            auto reverse = rep.phi_for(j, i);
            if (!reverse || *reverse != negate(*entry))
                add(Violation::Kind::antisymmetry,
                    "phi(" + std::to_string(j) + "," + std::to_string(i) + ") is not the negation of phi(" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
            for (const Example& x : rep.pool(i))
                if (!satisfies(x, *entry)) {
                    add(Violation::Kind::discriminative,
                        "discriminative feature fails on G_" + std::to_string(i) + " for pair (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
                    break;
                }
            for (const Example& x : rep.pool(j))
                if (satisfies(x, *entry)) {
                    add(Violation::Kind::discriminative,
                        "discriminative feature fails on G_" + std::to_string(j) + " for pair (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
                    break;
                }
        }
    }
    return report;
}

// All component pool entries, in component order. Entries may repeat: same-label
// components can share examples, and small feature universes collapse values.
inline std::vector<Example> world_pool(const Representation& rep) {
    std::vector<Example> out;
    for (const auto& c : rep.components)
        for (const Example& x : c.pool) out.push_back(x);
    return out;
}

}  // namespace dff
