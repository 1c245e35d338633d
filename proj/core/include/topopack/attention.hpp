#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "topopack/grid.hpp"
#include "topopack/numerics.hpp"
#include "topopack/tape.hpp"
#include "topopack/topomask.hpp"

namespace topopack {

// Reference O(N^2 d) implementation: full score matrix, masked softmax per
// row, then value aggregation. Kept independent of the sparse kernel.
Matrix dense_oracle_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                              const TopoMaskDescriptor& desc, double scl);

// Block-sparse kernel; touches only descriptor-allowed (i, j) pairs.
Matrix sparse_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const TopoMaskDescriptor& desc, double scl);

struct EncoderConfig {
    int layers = 2;
    int heads = 2;
    int model_dim = 16;
    int ff_dim = 32;
    int k = 3;
    bool positional = true;
    uint64_t seed = 0;

    int head_dim() const { return model_dim / heads; }
};

struct EncoderOutput {
    Matrix tokens;     // N x D
    Matrix summaries;  // M x D view copy
    std::vector<double> global_out;
};

// Tape handles for a registered parameter set.
struct TapeParams {
    std::map<std::string, Tape::NodeId> ids;
    Tape::NodeId at(const std::string& name) const;
};

TapeParams register_params(Tape& tape, const ParamSet& params, bool requires_grad = true);
// Accumulates tape gradients of registered params into `grads` (same names).
void collect_grads(const Tape& tape, const TapeParams& reg, ParamSet* grads);

// Parameter names are "<prefix>.<tensor>"; init is seeded and deterministic.
ParamSet init_encoder_params(const EncoderConfig& cfg, const std::string& prefix,
                             std::mt19937_64& rng);

// Pre-norm blocks: topo-masked multi-head attention + GELU feed-forward,
// shared mask across heads and layers. Input node is N x D.
Tape::NodeId encoder_forward_tape(Tape& tape, Tape::NodeId input, const TopoMaskDescriptor& desc,
                                  const EncoderConfig& cfg, const TapeParams& reg,
                                  const std::string& prefix,
                                  const std::vector<TokenRole>* roles = nullptr);

// Convenience non-training forward over an assembled sequence.
EncoderOutput encoder_forward(const TokenSequence& seq, const EncoderConfig& cfg,
                              const ParamSet& params, const std::string& prefix = "enc");

// Learned role embedding plus optional 2D pack-coordinate sinusoid,
// evaluated per token index. Returned as an N x D constant.
Matrix positional_table(const PackLayout& layout, int D);

// Toy stand-in for the frozen patch encoder: mean-pools each channel to a
// fixed 8 x 8 raster and applies one seeded linear map, shared across
// patches, pack regions, and the whole grid.
std::vector<double> toy_encode_region(const std::vector<Matrix>& channels, int D, uint64_t seed);

// Feature-only fallback when no pixel data exists: means over valid cells.
std::vector<double> summary_from_features(const FeatureGrid& grid, const PackLayout& layout, int m);
std::vector<double> global_from_features(const FeatureGrid& grid);

// Summaries for every pack via the feature fallback, M x D.
Matrix summaries_from_features(const FeatureGrid& grid, const PackLayout& layout);

}  // namespace topopack
