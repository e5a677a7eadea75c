#include "edsc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "edsc/rng.hpp"

namespace edsc {

namespace {

double eval(const GradFn& f, const std::vector<Tensor<double>>& inputs) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, false));
    Var<double> y = f(tape, vars);
    if (y.value().numel() != 1)
        throw std::invalid_argument("gradcheck target must be scalar, got shape " +
                                    y.value().shape().str());
    return y.value()[0];
}

}  // namespace

GradcheckReport gradcheck(const GradFn& f, const std::vector<Tensor<double>>& inputs, double eps,
                          double tol, int64_t max_checks_per_input, uint64_t seed) {
    GradcheckReport rep;

    // Determinism probe: the same graph on the same inputs must reproduce the
    // same scalar bit for bit.
    const double y1 = eval(f, inputs);
    const double y2 = eval(f, inputs);
    if (!(y1 == y2)) {
        rep.pass = false;
        rep.detail = "non-deterministic graph: two evaluations gave " + std::to_string(y1) +
                     " and " + std::to_string(y2);
        return rep;
    }

    // Analytic gradients.
    std::vector<Tensor<double>> analytic;
    {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
        Var<double> y = f(tape, vars);
        tape.backward(y);
        for (const auto& v : vars) analytic.push_back(v.grad());
    }

    Rng rng(seed);
    std::vector<Tensor<double>> work = inputs;
    for (size_t k = 0; k < inputs.size(); ++k) {
        const int64_t n = inputs[k].numel();
        std::vector<int64_t> idx;
        if (max_checks_per_input <= 0 || max_checks_per_input >= n) {
            idx.resize(n);
            for (int64_t i = 0; i < n; ++i) idx[i] = i;
        } else {
            // Sample without replacement from a shuffled index set.
            idx.resize(n);
            for (int64_t i = 0; i < n; ++i) idx[i] = i;
            for (int64_t i = n - 1; i > 0; --i)
                std::swap(idx[i], idx[rng.uniform_int(0, i)]);
            idx.resize(max_checks_per_input);
        }
        for (int64_t i : idx) {
            const double x0 = work[k][i];
            work[k][i] = x0 + eps;
            const double yp = eval(f, work);
            work[k][i] = x0 - eps;
            const double ym = eval(f, work);
            work[k][i] = x0;
            const double numeric = (yp - ym) / (2.0 * eps);
            const double a = analytic[k][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
            ++rep.checked;
            if (rel > rep.max_rel_err) rep.max_rel_err = rel;
            if (rel > tol && rep.pass) {
                rep.pass = false;
                rep.detail = "input " + std::to_string(k) + " element " + std::to_string(i) +
                             ": analytic " + std::to_string(a) + " vs numeric " +
                             std::to_string(numeric);
            }
        }
    }
    return rep;
}

}  // namespace edsc
