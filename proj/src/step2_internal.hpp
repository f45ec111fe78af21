#pragma once

#include "scarr/step2.hpp"

namespace scarr::step2 {

/// Filter log-likelihood without parameter checks; requires |psi_a| < 1.
double log_likelihood_unchecked(const DlmParams& p, const DlmInputs& in);

} // namespace scarr::step2
