#pragma once

#include <string>

namespace acceptance {

struct CriterionResult {
    bool pass = false;
    std::string detail;
};

// Adversarial-setting criteria.
CriterionResult criterion1_theorem1_bound();
CriterionResult criterion2_lemma_suite();
CriterionResult criterion3_theorem3_expectation();
CriterionResult criterion4_theorem2_pfr();
CriterionResult criterion5_zero_exception_equivalence();
CriterionResult criterion10_phi_independence();

// Stochastic-setting criteria.
CriterionResult criterion6_distribution_exactness();
CriterionResult criterion7_discovery_concentration();
CriterionResult criterion8_stochastic_rate();
CriterionResult criterion9_erm_oracle();

// Protocol criterion.
CriterionResult criterion11_protocol_transparency();

}  // namespace acceptance
