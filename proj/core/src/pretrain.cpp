#include "topopack/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace topopack {

namespace {

// Valid patch tokens per pack, in token order.
std::vector<std::vector<int>> maskable_by_pack(const PackLayout& layout,
                                               const std::vector<bool>& valid) {
    std::vector<std::vector<int>> packs(layout.packs);
    for (int t = 1; t < layout.seq_len; ++t) {
        if (token_role(layout, t, &valid) != TokenRole::Patch) continue;
        packs[token_pack(layout, t)].push_back(t);
    }
    return packs;
}

}  // namespace

MaeMask sample_mae_mask(const PackLayout& layout, MaePhase phase, double ratio,
                        const std::vector<bool>& valid, uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("sample_mae_mask: ratio in [0,1]");
    MaeMask mask;
    mask.phase = phase;
    mask.ratio = ratio;
    mask.seed = seed;

    std::mt19937_64 rng(seed);
    const auto packs = maskable_by_pack(layout, valid);

    if (phase == MaePhase::PackWise) {
        std::vector<int> order(layout.packs);
        for (int m = 0; m < layout.packs; ++m) order[m] = m;
        std::shuffle(order.begin(), order.end(), rng);
        const int n_packs = static_cast<int>(std::floor(ratio * layout.packs));
        for (int a = 0; a < n_packs; ++a)
            for (int t : packs[order[a]]) mask.masked_tokens.push_back(t);
    } else {
        std::vector<int> maskable;
        std::vector<int> visible(layout.packs, 0);
        int achievable = 0;
        for (int m = 0; m < layout.packs; ++m) {
            visible[m] = static_cast<int>(packs[m].size());
            achievable += std::max(0, visible[m] - 1);
            for (int t : packs[m]) maskable.push_back(t);
        }
        int target = static_cast<int>(std::floor(ratio * maskable.size()));
        if (target > achievable) {
            target = achievable;
            mask.clamped = true;
        }
        std::shuffle(maskable.begin(), maskable.end(), rng);
        // Rejected picks (last visible patch of their pack) are skipped; the
        // shuffle order makes the resample deterministic.
        for (int t : maskable) {
            if (static_cast<int>(mask.masked_tokens.size()) == target) break;
            const int m = token_pack(layout, t);
            if (visible[m] <= 1) continue;
            --visible[m];
            mask.masked_tokens.push_back(t);
        }
    }
    std::sort(mask.masked_tokens.begin(), mask.masked_tokens.end());
    return mask;
}

double mae_reconstruction_loss(const Matrix& predicted, const Matrix& target, const MaeMask& mask) {
    if (!predicted.same_shape(target))
        throw std::invalid_argument("mae_reconstruction_loss: shape mismatch");
    if (mask.masked_tokens.empty()) throw std::invalid_argument("nothing to reconstruct");
    double sum = 0.0;
    for (int t : mask.masked_tokens) {
        const double* p = predicted.row_ptr(t);
        const double* q = target.row_ptr(t);
        for (int d = 0; d < predicted.cols; ++d) {
            const double diff = p[d] - q[d];
            sum += diff * diff;
        }
    }
    return sum / (static_cast<double>(mask.masked_tokens.size()) * predicted.cols);
}

void momentum_update(MoCoState& state) {
    const double m = state.momentum;
    if (m < 0.0 || m > 1.0) throw std::invalid_argument("momentum_update: m in [0,1]");
    for (auto& [name, key] : state.key_params.tensors) {
        const Matrix& query = state.query_params.get(name);
        for (size_t i = 0; i < key.data.size(); ++i)
            key.data[i] = m * key.data[i] + (1.0 - m) * query.data[i];
    }
}

Matrix noise_positive(const Matrix& features, double sigma, uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("noise_positive: sigma must be >= 0");
    Matrix out = features;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    for (auto& v : out.data) v += dist(rng);
    return out;
}

double infonce_loss(const std::vector<double>& query, const std::vector<double>& positive,
                    const std::deque<std::vector<double>>& queue, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("infonce_loss: tau must be > 0");
    if (query.size() != positive.size()) throw std::invalid_argument("infonce_loss: dim mismatch");
    const int d = static_cast<int>(query.size());

    std::vector<double> logits;
    logits.push_back(dot(query.data(), positive.data(), d) / tau);
    for (const auto& neg : queue) logits.push_back(dot(query.data(), neg.data(), d) / tau);

    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    double lse = 0.0;
    for (double z : logits) lse += std::exp(z - mx);
    return mx + std::log(lse) - logits[0];
}

ParamSet init_mae_params(const EncoderConfig& cfg, std::mt19937_64& rng) {
    ParamSet p = init_encoder_params(cfg, "enc", rng);
    EncoderConfig dec_cfg = cfg;
    dec_cfg.layers = 1;
    ParamSet dec = init_encoder_params(dec_cfg, "dec", rng);
    for (auto& [name, t] : dec.tensors) p.tensors[name] = std::move(t);
    p["mae.mask_emb"] = Matrix::randn(1, cfg.model_dim, 0.02, rng);
    p["dec.head.w"] = Matrix::randn(cfg.model_dim, cfg.model_dim,
                                    0.5 / std::sqrt(static_cast<double>(cfg.model_dim)), rng);
    p["dec.head.b"] = Matrix::zeros(1, cfg.model_dim);
    return p;
}

namespace {

std::vector<bool> valid_from_roles(const TokenSequence& seq) {
    const PackLayout& layout = seq.layout;
    std::vector<bool> valid(static_cast<size_t>(layout.H) * layout.W, true);
    for (int t = 1; t < layout.seq_len; ++t) {
        if (seq.roles[t] == TokenRole::PaddedPatch) {
            auto [i, j] = token_to_coord(layout, t);
            valid[static_cast<size_t>(i) * layout.W + j] = false;
        }
    }
    return valid;
}

}  // namespace

double mae_forward_loss(const TokenSequence& seq, const MaeMask& mask, const EncoderConfig& cfg,
                        const ParamSet& params, ParamSet* grads) {
    const PackLayout& layout = seq.layout;
    const int N = layout.seq_len;
    const int D = cfg.model_dim;
    const std::vector<bool> valid = valid_from_roles(seq);
    const TopoMaskDescriptor desc = build_descriptor(layout, &valid);

    Matrix base = seq.embeddings;
    Matrix indicator(N, 1);
    for (int t : mask.masked_tokens) {
        for (int d = 0; d < D; ++d) base.at(t, d) = 0.0;
        indicator.at(t, 0) = 1.0;
    }
    Matrix loss_weight(N, D);
    for (int t : mask.masked_tokens)
        for (int d = 0; d < D; ++d) loss_weight.at(t, d) = 1.0;

    Tape tape;
    const TapeParams reg = register_params(tape, params, grads != nullptr);
    Tape::NodeId x = tape.add(tape.leaf(std::move(base)),
                              tape.matmul(tape.leaf(std::move(indicator)), reg.at("mae.mask_emb")));
    x = encoder_forward_tape(tape, x, desc, cfg, reg, "enc", &seq.roles);

    EncoderConfig dec_cfg = cfg;
    dec_cfg.layers = 1;
    dec_cfg.positional = false;
    x = encoder_forward_tape(tape, x, desc, dec_cfg, reg, "dec", &seq.roles);
    x = tape.add_row_broadcast(tape.matmul(x, reg.at("dec.head.w")), reg.at("dec.head.b"));

    Tape::NodeId diff = tape.sub(x, tape.leaf(seq.embeddings));
    Tape::NodeId sq = tape.hadamard(diff, diff);
    Tape::NodeId masked = tape.hadamard(sq, tape.leaf(std::move(loss_weight)));
    if (mask.masked_tokens.empty()) throw std::invalid_argument("nothing to reconstruct");
    Tape::NodeId loss = tape.scale(tape.sum_all(masked),
                                   1.0 / (static_cast<double>(mask.masked_tokens.size()) * D));

    if (grads) {
        tape.backward(loss);
        collect_grads(tape, reg, grads);
    }
    return tape.scalar(loss);
}

double moco_forward_loss(const MoCoState& state, const TokenSequence& anchor,
                         const EncoderConfig& cfg, uint64_t noise_seed, ParamSet* grads) {
    const PackLayout& layout = anchor.layout;
    const std::vector<bool> valid = valid_from_roles(anchor);
    const TopoMaskDescriptor desc = build_descriptor(layout, &valid);
    const int D = cfg.model_dim;

    std::vector<int> summary_rows(layout.packs);
    for (int m = 0; m < layout.packs; ++m) summary_rows[m] = summary_token_index(layout, m);

    // Key pass: noise-injected positive through the momentum encoder, no grad.
    Matrix key_summaries;
    {
        Tape tape;
        const TapeParams reg = register_params(tape, state.key_params, false);
        TokenSequence positive = anchor;
        positive.embeddings = noise_positive(anchor.embeddings, state.sigma, noise_seed);
        Tape::NodeId x = encoder_forward_tape(tape, tape.leaf(positive.embeddings), desc, cfg, reg,
                                              "enc", &anchor.roles);
        Tape::NodeId s = tape.row_l2_normalize(tape.row_gather(x, summary_rows));
        key_summaries = tape.value(s);
    }

    // Query pass with InfoNCE against the current queue.
    Tape tape;
    const TapeParams reg = register_params(tape, state.query_params, grads != nullptr);
    Tape::NodeId x = encoder_forward_tape(tape, tape.leaf(anchor.embeddings), desc, cfg, reg, "enc",
                                          &anchor.roles);
    Tape::NodeId qs = tape.row_l2_normalize(tape.row_gather(x, summary_rows));

    const int n_neg = static_cast<int>(state.queue.size());
    Tape::NodeId total = tape.leaf(Matrix::zeros(1, 1));
    for (int m = 0; m < layout.packs; ++m) {
        Matrix keys(1 + n_neg, D);
        for (int d = 0; d < D; ++d) keys.at(0, d) = key_summaries.at(m, d);
        for (int a = 0; a < n_neg; ++a)
            for (int d = 0; d < D; ++d) keys.at(1 + a, d) = state.queue[a][d];
        Tape::NodeId qm = tape.row_gather(qs, {m});
        Tape::NodeId logits =
            tape.scale(tape.matmul(qm, tape.leaf(transpose(keys))), 1.0 / state.tau);
        total = tape.add(total, tape.cross_entropy_label0(logits));
    }
    Tape::NodeId loss = tape.scale(total, 1.0 / layout.packs);

    if (grads) {
        tape.backward(loss);
        collect_grads(tape, reg, grads);
    }
    return tape.scalar(loss);
}

MoCoStepResult moco_step(MoCoState& state, const TokenSequence& anchor, const EncoderConfig& cfg,
                         double lr, uint64_t seed) {
    ParamSet grads;
    for (const auto& [name, t] : state.query_params.tensors)
        grads.tensors[name] = Matrix::zeros(t.rows, t.cols);

    MoCoStepResult res;
    res.loss = moco_forward_loss(state, anchor, cfg, seed, &grads);
    if (!std::isfinite(res.loss)) throw std::runtime_error("moco_step: non-finite loss");

    for (auto& [name, t] : state.query_params.tensors) {
        const Matrix& g = grads.get(name);
        for (size_t i = 0; i < t.data.size(); ++i) t.data[i] -= lr * g.data[i];
    }

    // Key pass again for the queue push; key params are unchanged until the
    // momentum update below, so this matches the positives used in the loss.
    const PackLayout& layout = anchor.layout;
    const std::vector<bool> valid = [&] {
        std::vector<bool> v(static_cast<size_t>(layout.H) * layout.W, true);
        for (int t = 1; t < layout.seq_len; ++t)
            if (anchor.roles[t] == TokenRole::PaddedPatch) {
                auto [i, j] = token_to_coord(layout, t);
                v[static_cast<size_t>(i) * layout.W + j] = false;
            }
        return v;
    }();
    const TopoMaskDescriptor desc = build_descriptor(layout, &valid);
    std::vector<int> summary_rows(layout.packs);
    for (int m = 0; m < layout.packs; ++m) summary_rows[m] = summary_token_index(layout, m);

    Tape tape;
    const TapeParams reg = register_params(tape, state.key_params, false);
    TokenSequence positive = anchor;
    positive.embeddings = noise_positive(anchor.embeddings, state.sigma, seed);
    Tape::NodeId x = encoder_forward_tape(tape, tape.leaf(positive.embeddings), desc, cfg, reg,
                                          "enc", &anchor.roles);
    const Matrix key_summaries = tape.value(tape.row_l2_normalize(tape.row_gather(x, summary_rows)));

    for (int m = 0; m < layout.packs; ++m) {
        std::vector<double> row(key_summaries.row_ptr(m), key_summaries.row_ptr(m) + cfg.model_dim);
        state.queue.push_back(std::move(row));
    }
    while (static_cast<int>(state.queue.size()) > state.capacity) state.queue.pop_front();

    momentum_update(state);
    res.queue_len = static_cast<int>(state.queue.size());
    return res;
}

}  // namespace topopack
