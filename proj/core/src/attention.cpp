#include "topopack/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace topopack {

Matrix dense_oracle_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                              const TopoMaskDescriptor& desc, double scl) {
    const int N = q.rows;
    if (N != desc.layout.seq_len) throw std::invalid_argument("dense_oracle: descriptor/N mismatch");
    Matrix out(N, v.cols);
    std::vector<bool> allowed(N);
    std::vector<double> scores(N);
    for (int i = 0; i < N; ++i) {
        std::fill(allowed.begin(), allowed.end(), false);
        for (int j : desc.row_keys[i]) allowed[j] = true;
        for (int j = 0; j < N; ++j) scores[j] = scl * dot(q.row_ptr(i), k.row_ptr(j), q.cols);
        add_attention_score_evals(N);
        const std::vector<double> p = softmax_masked(scores, allowed);
        for (int j = 0; j < N; ++j) {
            if (p[j] == 0.0) continue;
            const double* vr = v.row_ptr(j);
            double* o = out.row_ptr(i);
            for (int c = 0; c < v.cols; ++c) o[c] += p[j] * vr[c];
        }
    }
    return out;
}

Matrix sparse_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const TopoMaskDescriptor& desc, double scl) {
    Tape tape;
    const Tape::NodeId qn = tape.leaf(q);
    const Tape::NodeId kn = tape.leaf(k);
    const Tape::NodeId vn = tape.leaf(v);
    return tape.value(tape.sparse_attention(qn, kn, vn, &desc, scl));
}

Tape::NodeId TapeParams::at(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) throw std::invalid_argument("unregistered parameter: " + name);
    return it->second;
}

TapeParams register_params(Tape& tape, const ParamSet& params, bool requires_grad) {
    TapeParams reg;
    for (const auto& [name, t] : params.tensors) reg.ids[name] = tape.leaf(t, requires_grad);
    return reg;
}

void collect_grads(const Tape& tape, const TapeParams& reg, ParamSet* grads) {
    for (const auto& [name, id] : reg.ids) {
        const Matrix& g = tape.grad(id);
        auto it = grads->tensors.find(name);
        if (it == grads->tensors.end())
            grads->tensors[name] = g;
        else
            it->second = add(it->second, g);
    }
}

ParamSet init_encoder_params(const EncoderConfig& cfg, const std::string& prefix,
                             std::mt19937_64& rng) {
    if (cfg.model_dim % cfg.heads != 0)
        throw std::invalid_argument("encoder: model_dim must divide by heads");
    const int D = cfg.model_dim;
    const int F = cfg.ff_dim;
    const double ws = 0.5 / std::sqrt(static_cast<double>(D));

    ParamSet p;
    if (cfg.positional) p[prefix + ".pos.role"] = Matrix::randn(4, D, 0.02, rng);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + ".L" + std::to_string(l) + ".";
        p[lp + "ln1.g"] = Matrix::ones(1, D);
        p[lp + "ln1.b"] = Matrix::zeros(1, D);
        p[lp + "wq"] = Matrix::randn(D, D, ws, rng);
        p[lp + "bq"] = Matrix::zeros(1, D);
        p[lp + "wk"] = Matrix::randn(D, D, ws, rng);
        p[lp + "bk"] = Matrix::zeros(1, D);
        p[lp + "wv"] = Matrix::randn(D, D, ws, rng);
        p[lp + "bv"] = Matrix::zeros(1, D);
        p[lp + "wo"] = Matrix::randn(D, D, ws, rng);
        p[lp + "bo"] = Matrix::zeros(1, D);
        p[lp + "ln2.g"] = Matrix::ones(1, D);
        p[lp + "ln2.b"] = Matrix::zeros(1, D);
        p[lp + "w1"] = Matrix::randn(D, F, ws, rng);
        p[lp + "b1"] = Matrix::zeros(1, F);
        p[lp + "w2"] = Matrix::randn(F, D, ws, rng);
        p[lp + "b2"] = Matrix::zeros(1, D);
    }
    return p;
}

Matrix positional_table(const PackLayout& layout, int D) {
    Matrix table(layout.seq_len, D);
    const int bands = D / 4;
    if (bands == 0) return table;
    for (int t = 1; t < layout.seq_len; ++t) {
        const int m = token_pack(layout, t);
        const double pr = static_cast<double>(m / layout.pack_cols);
        const double pc = static_cast<double>(m % layout.pack_cols);
        for (int b = 0; b < bands; ++b) {
            const double freq = std::pow(10000.0, -static_cast<double>(b) / bands);
            table.at(t, 4 * b + 0) = std::sin(pr * freq);
            table.at(t, 4 * b + 1) = std::cos(pr * freq);
            table.at(t, 4 * b + 2) = std::sin(pc * freq);
            table.at(t, 4 * b + 3) = std::cos(pc * freq);
        }
    }
    return table;
}

namespace {

std::vector<int> role_indices(const PackLayout& layout, const std::vector<TokenRole>* roles) {
    std::vector<int> idx(layout.seq_len);
    for (int t = 0; t < layout.seq_len; ++t) {
        const TokenRole r = roles ? (*roles)[t] : token_role(layout, t);
        idx[t] = static_cast<int>(r);
    }
    return idx;
}

}  // namespace

Tape::NodeId encoder_forward_tape(Tape& tape, Tape::NodeId input, const TopoMaskDescriptor& desc,
                                  const EncoderConfig& cfg, const TapeParams& reg,
                                  const std::string& prefix, const std::vector<TokenRole>* roles) {
    const PackLayout& layout = desc.layout;
    const int D = cfg.model_dim;
    const int hd = cfg.head_dim();
    const double scl = 1.0 / std::sqrt(static_cast<double>(hd));
    const double eps = 1e-6;

    Tape::NodeId x = input;
    if (cfg.positional) {
        Tape::NodeId role_emb =
            tape.row_gather(reg.at(prefix + ".pos.role"), role_indices(layout, roles));
        x = tape.add(x, role_emb);
        x = tape.add(x, tape.leaf(positional_table(layout, D)));
    }

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + ".L" + std::to_string(l) + ".";

        Tape::NodeId n1 = tape.layer_norm_rows(x, reg.at(lp + "ln1.g"), reg.at(lp + "ln1.b"), eps);
        Tape::NodeId q = tape.add_row_broadcast(tape.matmul(n1, reg.at(lp + "wq")), reg.at(lp + "bq"));
        Tape::NodeId k = tape.add_row_broadcast(tape.matmul(n1, reg.at(lp + "wk")), reg.at(lp + "bk"));
        Tape::NodeId v = tape.add_row_broadcast(tape.matmul(n1, reg.at(lp + "wv")), reg.at(lp + "bv"));

        std::vector<Tape::NodeId> heads;
        for (int h = 0; h < cfg.heads; ++h) {
            Tape::NodeId qh = tape.slice_cols(q, h * hd, hd);
            Tape::NodeId kh = tape.slice_cols(k, h * hd, hd);
            Tape::NodeId vh = tape.slice_cols(v, h * hd, hd);
            heads.push_back(tape.sparse_attention(qh, kh, vh, &desc, scl));
        }
        Tape::NodeId attn = tape.concat_cols(heads);
        attn = tape.add_row_broadcast(tape.matmul(attn, reg.at(lp + "wo")), reg.at(lp + "bo"));
        x = tape.add(x, attn);

        Tape::NodeId n2 = tape.layer_norm_rows(x, reg.at(lp + "ln2.g"), reg.at(lp + "ln2.b"), eps);
        Tape::NodeId ff =
            tape.gelu(tape.add_row_broadcast(tape.matmul(n2, reg.at(lp + "w1")), reg.at(lp + "b1")));
        ff = tape.add_row_broadcast(tape.matmul(ff, reg.at(lp + "w2")), reg.at(lp + "b2"));
        x = tape.add(x, ff);

        if (!all_finite(tape.value(x)))
            throw std::runtime_error("encoder: non-finite activation at layer " + std::to_string(l));
    }
    return x;
}

EncoderOutput encoder_forward(const TokenSequence& seq, const EncoderConfig& cfg,
                              const ParamSet& params, const std::string& prefix) {
    const PackLayout& layout = seq.layout;
    std::vector<bool> valid(static_cast<size_t>(layout.H) * layout.W, true);
    for (int t = 1; t < layout.seq_len; ++t) {
        if (seq.roles[t] == TokenRole::PaddedPatch) {
            auto [i, j] = token_to_coord(layout, t);
            valid[static_cast<size_t>(i) * layout.W + j] = false;
        }
    }
    const TopoMaskDescriptor desc = build_descriptor(layout, &valid);

    Tape tape;
    const TapeParams reg = register_params(tape, params, false);
    const Tape::NodeId input = tape.leaf(seq.embeddings);
    const Tape::NodeId out = encoder_forward_tape(tape, input, desc, cfg, reg, prefix, &seq.roles);

    EncoderOutput res;
    res.tokens = tape.value(out);
    res.summaries = Matrix(layout.packs, cfg.model_dim);
    for (int m = 0; m < layout.packs; ++m) {
        const int s = summary_token_index(layout, m);
        for (int d = 0; d < cfg.model_dim; ++d) res.summaries.at(m, d) = res.tokens.at(s, d);
    }
    res.global_out.assign(res.tokens.row_ptr(0), res.tokens.row_ptr(0) + cfg.model_dim);
    return res;
}

std::vector<double> toy_encode_region(const std::vector<Matrix>& channels, int D, uint64_t seed) {
    if (channels.empty()) throw std::invalid_argument("toy_encode_region: empty region");
    for (const auto& ch : channels)
        if (ch.rows < 1 || ch.cols < 1) throw std::invalid_argument("toy_encode_region: empty region");

    const int C = static_cast<int>(channels.size());
    std::vector<double> pooled;
    pooled.reserve(static_cast<size_t>(C) * 64);
    for (const auto& ch : channels) {
        for (int a = 0; a < 8; ++a) {
            const int r0 = a * ch.rows / 8;
            const int r1 = std::max(r0 + 1, (a + 1) * ch.rows / 8);
            for (int b = 0; b < 8; ++b) {
                const int c0 = b * ch.cols / 8;
                const int c1 = std::max(c0 + 1, (b + 1) * ch.cols / 8);
                double sum = 0.0;
                for (int i = r0; i < r1; ++i)
                    for (int j = c0; j < c1; ++j) sum += ch.at(i, j);
                pooled.push_back(sum / ((r1 - r0) * (c1 - c0)));
            }
        }
    }

    std::mt19937_64 rng(seed);
    const int in_dim = C * 64;
    const Matrix map = Matrix::randn(D, in_dim, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
    std::vector<double> out(D, 0.0);
    for (int d = 0; d < D; ++d) out[d] = dot(map.row_ptr(d), pooled.data(), in_dim);
    return out;
}

std::vector<double> summary_from_features(const FeatureGrid& grid, const PackLayout& layout, int m) {
    if (m < 0 || m >= layout.packs) throw std::out_of_range("summary_from_features: pack out of range");
    const int k = layout.k;
    const int pi = (m / layout.pack_cols) * k;
    const int pj = (m % layout.pack_cols) * k;
    std::vector<double> sum(grid.D, 0.0);
    int n = 0;
    for (int i = pi; i < pi + k; ++i) {
        for (int j = pj; j < pj + k; ++j) {
            if (!grid.is_valid(i, j)) continue;
            const double* f = grid.cell(i, j);
            for (int d = 0; d < grid.D; ++d) sum[d] += f[d];
            ++n;
        }
    }
    if (n > 0)
        for (auto& v : sum) v /= n;
    return sum;  // all-padded pack keeps the zero vector
}

std::vector<double> global_from_features(const FeatureGrid& grid) {
    std::vector<double> sum(grid.D, 0.0);
    int n = 0;
    for (int i = 0; i < grid.H; ++i) {
        for (int j = 0; j < grid.W; ++j) {
            if (!grid.is_valid(i, j)) continue;
            const double* f = grid.cell(i, j);
            for (int d = 0; d < grid.D; ++d) sum[d] += f[d];
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("global_from_features: no valid cells");
    for (auto& v : sum) v /= n;
    return sum;
}

Matrix summaries_from_features(const FeatureGrid& grid, const PackLayout& layout) {
    Matrix s(layout.packs, grid.D);
    for (int m = 0; m < layout.packs; ++m) {
        const std::vector<double> v = summary_from_features(grid, layout, m);
        for (int d = 0; d < grid.D; ++d) s.at(m, d) = v[d];
    }
    return s;
}

}  // namespace topopack
