#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "topopack/attention.hpp"
#include "topopack/grid.hpp"
#include "topopack/numerics.hpp"

namespace topopack {

enum class MaePhase { PatchWise, PackWise };

// Masked token indices are Patch tokens only; Summary and Global tokens are
// never masked and padded tokens are never counted as maskable.
struct MaeMask {
    MaePhase phase;
    std::vector<int> masked_tokens;  // sorted ascending
    double ratio = 0.0;
    uint64_t seed = 0;
    bool clamped = false;
};

// PatchWise: floor(ratio * maskable) valid patch tokens, resampling picks
// that would leave a pack with no visible valid patch; clamps to one visible
// patch per pack when the ratio is unsatisfiable. PackWise: floor(ratio * M)
// whole packs.
MaeMask sample_mae_mask(const PackLayout& layout, MaePhase phase, double ratio,
                        const std::vector<bool>& valid, uint64_t seed);

// Mean squared error over masked token positions and all dims only.
double mae_reconstruction_loss(const Matrix& predicted, const Matrix& target, const MaeMask& mask);

struct MoCoState {
    ParamSet query_params;
    ParamSet key_params;
    std::deque<std::vector<double>> queue;  // unit-norm summary embeddings
    int capacity = 1024;
    double tau = 0.07;
    double momentum = 0.99;
    double sigma = 0.1;
};

// theta_k <- m * theta_k + (1 - m) * theta_q, elementwise.
void momentum_update(MoCoState& state);

// Seeded zero-mean Gaussian noise of scale sigma per element.
Matrix noise_positive(const Matrix& features, double sigma, uint64_t seed);

// -log[ exp(q.k+ / tau) / (exp(q.k+ / tau) + sum_queue exp(q.k- / tau)) ].
// All embeddings are expected L2-normalized.
double infonce_loss(const std::vector<double>& query, const std::vector<double>& positive,
                    const std::deque<std::vector<double>>& queue, double tau);

// One MAE step: replaces masked patch tokens with the learned mask embedding,
// runs the topo-masked encoder plus a one-block decoder with a linear head,
// and returns the masked reconstruction loss. Analytic gradients are added
// to *grads when non-null.
double mae_forward_loss(const TokenSequence& seq, const MaeMask& mask, const EncoderConfig& cfg,
                        const ParamSet& params, ParamSet* grads);

// Encoder + decoder + mask-embedding parameters for the MAE stage.
ParamSet init_mae_params(const EncoderConfig& cfg, std::mt19937_64& rng);

struct MoCoStepResult {
    double loss = 0.0;
    int queue_len = 0;
};

// Encodes the anchor with the query encoder and a noise-injected positive
// with the key encoder, takes mean InfoNCE over the M summary outputs against
// the pre-step queue, applies one SGD update to the query encoder, pushes the
// key summaries, evicts beyond capacity, and applies the momentum update.
MoCoStepResult moco_step(MoCoState& state, const TokenSequence& anchor, const EncoderConfig& cfg,
                         double lr, uint64_t seed);

// Loss + gradient only (no state mutation); negatives are the current queue.
double moco_forward_loss(const MoCoState& state, const TokenSequence& anchor,
                         const EncoderConfig& cfg, uint64_t noise_seed, ParamSet* grads);

}  // namespace topopack
