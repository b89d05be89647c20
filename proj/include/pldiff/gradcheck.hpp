#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "pldiff/tensor.hpp"

namespace pldiff {

// Central finite differences against the reverse-mode gradients. The
// callable rebuilds the scalar loss from the given leaves on every call,
// so it must not cache graph state. Run with T = double for checks.
//
// Returns max over all leaf elements of |analytic - numeric| / max(1, |analytic|).
template <typename T>
double grad_check(std::vector<Tensor<T>> leaves,
                  const std::function<Tensor<T>(std::vector<Tensor<T>>&)>& f,
                  double step) {
    if (step <= 0.0) throw std::invalid_argument("grad_check: step must be > 0");
    for (auto& l : leaves) {
        l.set_requires_grad(true);
        l.zero_grad();
    }
    Tensor<T> loss = f(leaves);
    if (loss.size() != 1) throw std::invalid_argument("grad_check: loss must be scalar");
    loss.backward();

    double max_err = 0.0;
    for (auto& leaf : leaves) {
        std::vector<T> analytic = leaf.grad();
        leaf.set_requires_grad(false);
        for (std::size_t i = 0; i < leaf.size(); ++i) {
            const T saved = leaf.data()[i];
            leaf.data()[i] = saved + static_cast<T>(step);
            const double up = static_cast<double>(f(leaves).item());
            leaf.data()[i] = saved - static_cast<T>(step);
            const double dn = static_cast<double>(f(leaves).item());
            leaf.data()[i] = saved;
            const double numeric = (up - dn) / (2.0 * step);
            const double a = static_cast<double>(analytic[i]);
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            max_err = std::max(max_err, err);
        }
        leaf.set_requires_grad(true);
    }
    return max_err;
}

}  // namespace pldiff
