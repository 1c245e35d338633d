#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "topopack/matrix.hpp"

namespace topopack {

// Additive-mask softmax. Blocked positions come out exactly 0; allowed
// positions are positive and sum to 1. Max-subtraction keeps the exp in range.
// Throws on an all-blocked row (a layout/mask construction bug upstream).
std::vector<double> softmax_masked(const std::vector<double>& scores,
                                   const std::vector<bool>& allowed);

// gain * (x - mean) / sqrt(var + eps) + bias, population variance.
std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& gain,
                               const std::vector<double>& bias, double eps);

// Named parameter tensors shared by every trainable module.
struct ParamSet {
    std::map<std::string, Matrix> tensors;

    Matrix& operator[](const std::string& name) { return tensors[name]; }
    const Matrix& get(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

// Objective callback: evaluates the scalar, and when `grads` is non-null also
// fills analytic gradients (same names/shapes as params).
using Objective = std::function<double(const ParamSet& params, ParamSet* grads)>;

// Central-difference check over every entry of every parameter tensor.
// Returns max over parameters of |analytic - central| / max(1, |central|).
// Throws "non-finite objective" if f is non-finite anywhere it is evaluated.
double grad_check(const Objective& f, const ParamSet& params, double h);

}  // namespace topopack
