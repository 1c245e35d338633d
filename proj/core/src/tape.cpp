#include "topopack/tape.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace topopack {

namespace {
std::atomic<long long> g_score_evals{0};
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

long long attention_score_evals() { return g_score_evals.load(); }
void reset_attention_score_evals() { g_score_evals.store(0); }
void add_attention_score_evals(long long n) { g_score_evals.fetch_add(n); }

Tape::NodeId Tape::push(Matrix value, bool requires_grad, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::leaf(Matrix value, bool requires_grad) {
    return push(std::move(value), requires_grad, {});
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    Matrix out = topopack::matmul(value(a), value(b));
    const bool rg = needs(a) || needs(b);
    NodeId id = push(std::move(out), rg, {});
    if (rg) {
        nodes_[id].back = [this, id, a, b]() {
            const Matrix& g = grad_ref(id);
            if (needs(a)) {
                Matrix da = topopack::matmul(g, topopack::transpose(value(b)));
                grad_ref(a) = topopack::add(grad_ref(a), da);
            }
            if (needs(b)) {
                Matrix db = topopack::matmul(topopack::transpose(value(a)), g);
                grad_ref(b) = topopack::add(grad_ref(b), db);
            }
        };
    }
    return id;
}

Tape::NodeId Tape::transpose(NodeId a) {
    NodeId id = push(topopack::transpose(value(a)), needs(a), {});
    if (needs(a)) {
        nodes_[id].back = [this, id, a]() {
            grad_ref(a) = topopack::add(grad_ref(a), topopack::transpose(grad_ref(id)));
        };
    }
    return id;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    NodeId id = push(topopack::add(value(a), value(b)), needs(a) || needs(b), {});
    if (needs(a) || needs(b)) {
        nodes_[id].back = [this, id, a, b]() {
            if (needs(a)) grad_ref(a) = topopack::add(grad_ref(a), grad_ref(id));
            if (needs(b)) grad_ref(b) = topopack::add(grad_ref(b), grad_ref(id));
        };
    }
    return id;
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    NodeId id = push(topopack::sub(value(a), value(b)), needs(a) || needs(b), {});
    if (needs(a) || needs(b)) {
        nodes_[id].back = [this, id, a, b]() {
            if (needs(a)) grad_ref(a) = topopack::add(grad_ref(a), grad_ref(id));
            if (needs(b)) grad_ref(b) = topopack::sub(grad_ref(b), grad_ref(id));
        };
    }
    return id;
}

Tape::NodeId Tape::hadamard(NodeId a, NodeId b) {
    NodeId id = push(topopack::hadamard(value(a), value(b)), needs(a) || needs(b), {});
    if (needs(a) || needs(b)) {
        nodes_[id].back = [this, id, a, b]() {
            const Matrix& g = grad_ref(id);
            if (needs(a)) grad_ref(a) = topopack::add(grad_ref(a), topopack::hadamard(g, value(b)));
            if (needs(b)) grad_ref(b) = topopack::add(grad_ref(b), topopack::hadamard(g, value(a)));
        };
    }
    return id;
}

Tape::NodeId Tape::scale(NodeId a, double s) {
    NodeId id = push(topopack::scale(value(a), s), needs(a), {});
    if (needs(a)) {
        nodes_[id].back = [this, id, a, s]() {
            grad_ref(a) = topopack::add(grad_ref(a), topopack::scale(grad_ref(id), s));
        };
    }
    return id;
}

Tape::NodeId Tape::add_row_broadcast(NodeId a, NodeId bias) {
    const Matrix& av = value(a);
    const Matrix& bv = value(bias);
    if (bv.rows != 1 || bv.cols != av.cols)
        throw std::invalid_argument("add_row_broadcast: bias must be 1 x cols(a)");
    Matrix out = av;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += bv.at(0, j);
    NodeId id = push(std::move(out), needs(a) || needs(bias), {});
    if (needs(a) || needs(bias)) {
        nodes_[id].back = [this, id, a, bias]() {
            const Matrix& g = grad_ref(id);
            if (needs(a)) grad_ref(a) = topopack::add(grad_ref(a), g);
            if (needs(bias)) {
                Matrix& gb = grad_ref(bias);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) gb.at(0, j) += g.at(i, j);
            }
        };
    }
    return id;
}

Tape::NodeId Tape::gelu(NodeId a) {
    const Matrix& av = value(a);
    Matrix out = av;
    for (auto& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    NodeId id = push(std::move(out), needs(a), {});
    if (needs(a)) {
        nodes_[id].back = [this, id, a]() {
            const Matrix& g = grad_ref(id);
            const Matrix& x = value(a);
            Matrix& ga = grad_ref(a);
            for (size_t i = 0; i < x.data.size(); ++i) {
                const double xi = x.data[i];
                const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
                ga.data[i] += g.data[i] * (cdf + xi * pdf);
            }
        };
    }
    return id;
}

Tape::NodeId Tape::layer_norm_rows(NodeId a, NodeId gain, NodeId bias, double eps) {
    const Matrix& x = value(a);
    const Matrix& gv = value(gain);
    const Matrix& bv = value(bias);
    if (gv.rows != 1 || gv.cols != x.cols || bv.rows != 1 || bv.cols != x.cols)
        throw std::invalid_argument("layer_norm_rows: gain/bias must be 1 x cols");
    if (eps <= 0.0) throw std::invalid_argument("layer_norm_rows: eps must be > 0");

    const int C = x.cols;
    Matrix xhat(x.rows, C);
    std::vector<double> inv_sigma(x.rows);
    Matrix out(x.rows, C);
    for (int i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < C; ++j) mean += x.at(i, j);
        mean /= C;
        double var = 0.0;
        for (int j = 0; j < C; ++j) {
            const double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= C;
        inv_sigma[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < C; ++j) {
            xhat.at(i, j) = (x.at(i, j) - mean) * inv_sigma[i];
            out.at(i, j) = gv.at(0, j) * xhat.at(i, j) + bv.at(0, j);
        }
    }
    const bool rg = needs(a) || needs(gain) || needs(bias);
    NodeId id = push(std::move(out), rg, {});
    if (rg) {
        nodes_[id].back = [this, id, a, gain, bias, xhat = std::move(xhat),
                           inv_sigma = std::move(inv_sigma)]() {
            const Matrix& g = grad_ref(id);
            const Matrix& gv = value(gain);
            const int C = g.cols;
            if (needs(gain)) {
                Matrix& gg = grad_ref(gain);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < C; ++j) gg.at(0, j) += g.at(i, j) * xhat.at(i, j);
            }
            if (needs(bias)) {
                Matrix& gb = grad_ref(bias);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < C; ++j) gb.at(0, j) += g.at(i, j);
            }
            if (needs(a)) {
                Matrix& ga = grad_ref(a);
                for (int i = 0; i < g.rows; ++i) {
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (int j = 0; j < C; ++j) {
                        const double dxh = g.at(i, j) * gv.at(0, j);
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xhat.at(i, j);
                    }
                    mean_dxh /= C;
                    mean_dxh_xh /= C;
                    for (int j = 0; j < C; ++j) {
                        const double dxh = g.at(i, j) * gv.at(0, j);
                        ga.at(i, j) += inv_sigma[i] * (dxh - mean_dxh - xhat.at(i, j) * mean_dxh_xh);
                    }
                }
            }
        };
    }
    return id;
}

Tape::NodeId Tape::row_gather(NodeId a, std::vector<int> rows) {
    const Matrix& av = value(a);
    Matrix out(static_cast<int>(rows.size()), av.cols);
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= av.rows) throw std::out_of_range("row_gather: bad index");
        for (int j = 0; j < av.cols; ++j) out.at(static_cast<int>(r), j) = av.at(rows[r], j);
    }
    NodeId id = push(std::move(out), needs(a), {});
    if (needs(a)) {
        nodes_[id].back = [this, id, a, rows = std::move(rows)]() {
            const Matrix& g = grad_ref(id);
            Matrix& ga = grad_ref(a);
            for (size_t r = 0; r < rows.size(); ++r)
                for (int j = 0; j < g.cols; ++j) ga.at(rows[r], j) += g.at(static_cast<int>(r), j);
        };
    }
    return id;
}

Tape::NodeId Tape::slice_cols(NodeId a, int start, int len) {
    const Matrix& av = value(a);
    if (start < 0 || len < 1 || start + len > av.cols)
        throw std::out_of_range("slice_cols: bad range");
    Matrix out(av.rows, len);
    for (int i = 0; i < av.rows; ++i)
        for (int j = 0; j < len; ++j) out.at(i, j) = av.at(i, start + j);
    NodeId id = push(std::move(out), needs(a), {});
    if (needs(a)) {
        nodes_[id].back = [this, id, a, start, len]() {
            const Matrix& g = grad_ref(id);
            Matrix& ga = grad_ref(a);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < len; ++j) ga.at(i, start + j) += g.at(i, j);
        };
    }
    return id;
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int total = 0;
    const int rows = value(parts[0]).rows;
    bool rg = false;
    for (NodeId p : parts) {
        if (value(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
        total += value(p).cols;
        rg = rg || needs(p);
    }
    Matrix out(rows, total);
    int off = 0;
    for (NodeId p : parts) {
        const Matrix& pv = value(p);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pv.cols; ++j) out.at(i, off + j) = pv.at(i, j);
        off += pv.cols;
    }
    NodeId id = push(std::move(out), rg, {});
    if (rg) {
        nodes_[id].back = [this, id, parts]() {
            const Matrix& g = grad_ref(id);
            int off = 0;
            for (NodeId p : parts) {
                const int c = value(p).cols;
                if (needs(p)) {
                    Matrix& gp = grad_ref(p);
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < c; ++j) gp.at(i, j) += g.at(i, off + j);
                }
                off += c;
            }
        };
    }
    return id;
}

Tape::NodeId Tape::row_l2_normalize(NodeId a) {
    const Matrix& x = value(a);
    Matrix out(x.rows, x.cols);
    std::vector<double> norms(x.rows);
    for (int i = 0; i < x.rows; ++i) {
        double n2 = 0.0;
        for (int j = 0; j < x.cols; ++j) n2 += x.at(i, j) * x.at(i, j);
        const double n = std::sqrt(n2);
        if (n == 0.0) throw std::runtime_error("row_l2_normalize: zero-norm row");
        norms[i] = n;
        for (int j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) / n;
    }
    NodeId id = push(std::move(out), needs(a), {});
    if (needs(a)) {
        nodes_[id].back = [this, id, a, norms = std::move(norms)]() {
            const Matrix& g = grad_ref(id);
            const Matrix& y = value(id);
            Matrix& ga = grad_ref(a);
            for (int i = 0; i < g.rows; ++i) {
                double gy = 0.0;
                for (int j = 0; j < g.cols; ++j) gy += g.at(i, j) * y.at(i, j);
                for (int j = 0; j < g.cols; ++j)
                    ga.at(i, j) += (g.at(i, j) - gy * y.at(i, j)) / norms[i];
            }
        };
    }
    return id;
}

Tape::NodeId Tape::sum_all(NodeId a) {
    double s = 0.0;
    for (double v : value(a).data) s += v;
    Matrix out(1, 1);
    out.at(0, 0) = s;
    NodeId id = push(std::move(out), needs(a), {});
    if (needs(a)) {
        nodes_[id].back = [this, id, a]() {
            const double g = grad_ref(id).at(0, 0);
            Matrix& ga = grad_ref(a);
            for (auto& v : ga.data) v += g;
        };
    }
    return id;
}

Tape::NodeId Tape::mean_all(NodeId a) {
    const double n = static_cast<double>(value(a).size());
    return scale(sum_all(a), 1.0 / n);
}

Tape::NodeId Tape::cross_entropy_label0(NodeId logits) {
    const Matrix& z = value(logits);
    if (z.rows != 1 || z.cols < 1) throw std::invalid_argument("cross_entropy_label0: need 1 x K");
    double mx = z.at(0, 0);
    for (int j = 1; j < z.cols; ++j) mx = std::max(mx, z.at(0, j));
    double lse = 0.0;
    for (int j = 0; j < z.cols; ++j) lse += std::exp(z.at(0, j) - mx);
    lse = mx + std::log(lse);
    Matrix out(1, 1);
    out.at(0, 0) = lse - z.at(0, 0);
    NodeId id = push(std::move(out), needs(logits), {});
    if (needs(logits)) {
        nodes_[id].back = [this, id, logits, lse]() {
            const double g = grad_ref(id).at(0, 0);
            const Matrix& z = value(logits);
            Matrix& gz = grad_ref(logits);
            for (int j = 0; j < z.cols; ++j) {
                const double p = std::exp(z.at(0, j) - lse);
                gz.at(0, j) += g * (p - (j == 0 ? 1.0 : 0.0));
            }
        };
    }
    return id;
}

namespace {

// Shared forward for both attention flavors; keys(i) yields the allowed key
// indices of row i. Saves per-row probabilities for the backward pass.
struct AttentionForward {
    Matrix out;
    std::vector<std::vector<double>> probs;
};

template <typename KeysFn>
AttentionForward attention_forward(const Matrix& q, const Matrix& k, const Matrix& v, double scl,
                                   KeysFn keys) {
    if (q.cols != k.cols || k.rows != v.rows)
        throw std::invalid_argument("attention: shape mismatch");
    AttentionForward fwd;
    fwd.out = Matrix(q.rows, v.cols);
    fwd.probs.resize(q.rows);
    std::vector<double> scores;
    for (int i = 0; i < q.rows; ++i) {
        const auto& ks = keys(i);
        if (ks.empty()) throw std::runtime_error("empty attention row");
        scores.resize(ks.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t a = 0; a < ks.size(); ++a) {
            scores[a] = scl * dot(q.row_ptr(i), k.row_ptr(ks[a]), q.cols);
            mx = std::max(mx, scores[a]);
        }
        g_score_evals.fetch_add(static_cast<long long>(ks.size()));
        double denom = 0.0;
        for (auto& s : scores) {
            s = std::exp(s - mx);
            denom += s;
        }
        auto& pi = fwd.probs[i];
        pi.resize(ks.size());
        for (size_t a = 0; a < ks.size(); ++a) {
            pi[a] = scores[a] / denom;
            const double* vr = v.row_ptr(ks[a]);
            double* o = fwd.out.row_ptr(i);
            for (int c = 0; c < v.cols; ++c) o[c] += pi[a] * vr[c];
        }
    }
    return fwd;
}

template <typename KeysFn>
void attention_backward(const Matrix& g, const Matrix& q, const Matrix& k, const Matrix& v,
                        const std::vector<std::vector<double>>& probs, double scl, KeysFn keys,
                        Matrix* gq, Matrix* gk, Matrix* gv) {
    const int d = q.cols;
    for (int i = 0; i < g.rows; ++i) {
        const auto& ks = keys(i);
        const auto& pi = probs[i];
        // dp_a = dy_i . v_a ; ds_a = p_a (dp_a - sum_b p_b dp_b)
        std::vector<double> dp(ks.size());
        double mix = 0.0;
        for (size_t a = 0; a < ks.size(); ++a) {
            dp[a] = dot(g.row_ptr(i), v.row_ptr(ks[a]), g.cols);
            mix += pi[a] * dp[a];
        }
        for (size_t a = 0; a < ks.size(); ++a) {
            const double ds = pi[a] * (dp[a] - mix);
            if (gq) {
                double* gqi = gq->row_ptr(i);
                const double* kr = k.row_ptr(ks[a]);
                for (int c = 0; c < d; ++c) gqi[c] += scl * ds * kr[c];
            }
            if (gk) {
                double* gka = gk->row_ptr(ks[a]);
                const double* qr = q.row_ptr(i);
                for (int c = 0; c < d; ++c) gka[c] += scl * ds * qr[c];
            }
            if (gv) {
                double* gva = gv->row_ptr(ks[a]);
                const double* gi = g.row_ptr(i);
                for (int c = 0; c < g.cols; ++c) gva[c] += pi[a] * gi[c];
            }
        }
    }
}

}  // namespace

Tape::NodeId Tape::sparse_attention(NodeId q, NodeId k, NodeId v, const TopoMaskDescriptor* desc,
                                    double scl) {
    const Matrix& qv = value(q);
    if (qv.rows != desc->layout.seq_len || value(k).rows != desc->layout.seq_len)
        throw std::invalid_argument("sparse_attention: descriptor/N mismatch");
    auto keys = [desc](int i) -> const std::vector<int>& { return desc->row_keys[i]; };
    AttentionForward fwd = attention_forward(qv, value(k), value(v), scl, keys);
    const bool rg = needs(q) || needs(k) || needs(v);
    NodeId id = push(std::move(fwd.out), rg, {});
    if (rg) {
        nodes_[id].back = [this, id, q, k, v, desc, scl, probs = std::move(fwd.probs)]() {
            auto keys = [desc](int i) -> const std::vector<int>& { return desc->row_keys[i]; };
            attention_backward(grad_ref(id), value(q), value(k), value(v), probs, scl, keys,
                               needs(q) ? &grad_ref(q) : nullptr,
                               needs(k) ? &grad_ref(k) : nullptr,
                               needs(v) ? &grad_ref(v) : nullptr);
        };
    }
    return id;
}

Tape::NodeId Tape::dense_attention(NodeId q, NodeId k, NodeId v, double scl) {
    const int L = value(k).rows;
    std::vector<int> all(L);
    for (int i = 0; i < L; ++i) all[i] = i;
    auto keys = [&all](int) -> const std::vector<int>& { return all; };
    AttentionForward fwd = attention_forward(value(q), value(k), value(v), scl, keys);
    const bool rg = needs(q) || needs(k) || needs(v);
    NodeId id = push(std::move(fwd.out), rg, {});
    if (rg) {
        nodes_[id].back = [this, id, q, k, v, scl, all = std::move(all),
                           probs = std::move(fwd.probs)]() {
            auto keys = [&all](int) -> const std::vector<int>& { return all; };
            attention_backward(grad_ref(id), value(q), value(k), value(v), probs, scl, keys,
                               needs(q) ? &grad_ref(q) : nullptr,
                               needs(k) ? &grad_ref(k) : nullptr,
                               needs(v) ? &grad_ref(v) : nullptr);
        };
    }
    return id;
}

void Tape::backward(NodeId loss) {
    const Matrix& lv = value(loss);
    if (lv.rows != 1 || lv.cols != 1) throw std::invalid_argument("backward: loss must be 1 x 1");
    for (auto& n : nodes_) n.grad = Matrix::zeros(n.value.rows, n.value.cols);
    nodes_[loss].grad.at(0, 0) = 1.0;
    for (NodeId id = loss; id >= 0; --id)
        if (nodes_[id].back && nodes_[id].requires_grad) nodes_[id].back();
}

}  // namespace topopack
