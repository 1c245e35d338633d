#include "topopack/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace topopack {

std::vector<double> softmax_masked(const std::vector<double>& scores,
                                   const std::vector<bool>& allowed) {
    if (scores.size() != allowed.size())
        throw std::invalid_argument("softmax_masked: size mismatch");

    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < scores.size(); ++i)
        if (allowed[i]) mx = std::max(mx, scores[i]);
    if (mx == -std::numeric_limits<double>::infinity())
        throw std::runtime_error("empty attention row");

    std::vector<double> out(scores.size(), 0.0);
    double denom = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!allowed[i]) continue;
        out[i] = std::exp(scores[i] - mx);
        denom += out[i];
    }
    for (size_t i = 0; i < scores.size(); ++i)
        if (allowed[i]) out[i] /= denom;
    return out;
}

std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& gain,
                               const std::vector<double>& bias, double eps) {
    if (x.empty()) throw std::invalid_argument("layer_norm: empty input");
    if (gain.size() != x.size() || bias.size() != x.size())
        throw std::invalid_argument("layer_norm: size mismatch");

    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;

    const double inv = 1.0 / std::sqrt(var + eps);
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * (x[i] - mean) * inv + bias[i];
    return out;
}

const Matrix& ParamSet::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::invalid_argument("missing parameter: " + name);
    return it->second;
}

double grad_check(const Objective& f, const ParamSet& params, double h) {
    ParamSet grads;
    for (const auto& [name, t] : params.tensors) grads.tensors[name] = Matrix::zeros(t.rows, t.cols);

    const double base = f(params, &grads);
    if (!std::isfinite(base)) throw std::runtime_error("non-finite objective");

    ParamSet work = params;
    double max_rel = 0.0;
    for (auto& [name, t] : work.tensors) {
        const Matrix& g = grads.get(name);
        for (size_t i = 0; i < t.data.size(); ++i) {
            const double orig = t.data[i];
            t.data[i] = orig + h;
            const double fp = f(work, nullptr);
            t.data[i] = orig - h;
            const double fm = f(work, nullptr);
            t.data[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error("non-finite objective");
            const double central = (fp - fm) / (2.0 * h);
            const double rel = std::abs(g.data[i] - central) / std::max(1.0, std::abs(central));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace topopack
