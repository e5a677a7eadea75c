#pragma once

#include <functional>
#include <string>
#include <vector>

#include "edsc/autodiff.hpp"

namespace edsc {

struct GradcheckReport {
    bool pass = true;
    double max_rel_err = 0.0;
    int64_t checked = 0;
    std::string detail;  // empty when everything agreed
};

// Builds the graph f over leaves made from `inputs` and compares reverse-mode
// gradients against central finite differences, in double precision.
// rel err = |analytic - numeric| / max(|analytic|, |numeric|, 1).
// f is evaluated twice on identical inputs first; differing outputs mean the
// graph is not a deterministic function of its inputs and fail the check.
// max_checks_per_input == 0 checks every element, otherwise a seeded random
// subset of that size per input tensor.
using GradFn = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

GradcheckReport gradcheck(const GradFn& f, const std::vector<Tensor<double>>& inputs,
                          double eps = 1e-5, double tol = 1e-6,
                          int64_t max_checks_per_input = 0, uint64_t seed = 0x5eed);

}  // namespace edsc
