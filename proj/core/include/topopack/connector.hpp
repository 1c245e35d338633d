#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "topopack/attention.hpp"
#include "topopack/numerics.hpp"

namespace topopack {

// Fixed-query cross-attention resampler: a learned set of query vectors
// cross-attends to a variable-length summary sequence and always emits
// `query_count` output tokens.
struct ResamplerConfig {
    int query_count = 32;
    int in_dim = 16;
    int out_dim = 16;
    int layers = 2;
    bool positional = false;  // 1D input-order sinusoid when on
    uint64_t seed = 0;
};

ParamSet init_resampler_params(const ResamplerConfig& cfg, std::mt19937_64& rng);

// summaries is L x in_dim, L >= 1; output is query_count x out_dim.
Matrix resample(const Matrix& summaries, const ResamplerConfig& cfg, const ParamSet& params);

// Tape variant for training and gradient checks; `summaries` enters as a
// constant leaf.
Tape::NodeId resample_tape(Tape& tape, const Matrix& summaries, const ResamplerConfig& cfg,
                           const TapeParams& reg);

struct AlignmentSample {
    Matrix summaries;            // L x in_dim
    std::vector<double> target;  // out_dim
};

struct AlignmentResult {
    ParamSet params;
    std::vector<double> loss_curve;  // one entry per step
};

// Full-batch gradient descent on the mean squared distance between the
// mean-pooled resampler output and each sample's target. Throws with the
// step index if the loss goes non-finite.
AlignmentResult alignment_train(const std::vector<AlignmentSample>& corpus,
                                const ResamplerConfig& cfg, ParamSet params, int steps, double lr);

// Mean pooled-output MSE over the corpus; fills grads when non-null.
double alignment_loss(const std::vector<AlignmentSample>& corpus, const ResamplerConfig& cfg,
                      const ParamSet& params, ParamSet* grads);

}  // namespace topopack
