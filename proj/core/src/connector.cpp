#include "topopack/connector.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace topopack {

namespace {

Matrix input_positional(int L, int D) {
    Matrix table(L, D);
    const int bands = D / 2;
    if (bands == 0) return table;
    for (int i = 0; i < L; ++i) {
        for (int b = 0; b < bands; ++b) {
            const double freq = std::pow(10000.0, -static_cast<double>(b) / bands);
            table.at(i, 2 * b + 0) = std::sin(i * freq);
            table.at(i, 2 * b + 1) = std::cos(i * freq);
        }
    }
    return table;
}

}  // namespace

ParamSet init_resampler_params(const ResamplerConfig& cfg, std::mt19937_64& rng) {
    if (cfg.query_count < 1 || cfg.in_dim < 1 || cfg.out_dim < 1)
        throw std::invalid_argument("resampler: bad config");
    const int D = cfg.in_dim;
    const double ws = 0.5 / std::sqrt(static_cast<double>(D));

    ParamSet p;
    p["rs.queries"] = Matrix::randn(cfg.query_count, D, 0.5, rng);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = "rs.L" + std::to_string(l) + ".";
        p[lp + "lnq.g"] = Matrix::ones(1, D);
        p[lp + "lnq.b"] = Matrix::zeros(1, D);
        p[lp + "wq"] = Matrix::randn(D, D, ws, rng);
        p[lp + "bq"] = Matrix::zeros(1, D);
        p[lp + "wk"] = Matrix::randn(D, D, ws, rng);
        p[lp + "bk"] = Matrix::zeros(1, D);
        p[lp + "wv"] = Matrix::randn(D, D, ws, rng);
        p[lp + "bv"] = Matrix::zeros(1, D);
        p[lp + "wo"] = Matrix::randn(D, D, ws, rng);
        p[lp + "bo"] = Matrix::zeros(1, D);
        p[lp + "lnf.g"] = Matrix::ones(1, D);
        p[lp + "lnf.b"] = Matrix::zeros(1, D);
        p[lp + "w1"] = Matrix::randn(D, 2 * D, ws, rng);
        p[lp + "b1"] = Matrix::zeros(1, 2 * D);
        p[lp + "w2"] = Matrix::randn(2 * D, D, ws, rng);
        p[lp + "b2"] = Matrix::zeros(1, D);
    }
    p["rs.head.w"] = Matrix::randn(D, cfg.out_dim, ws, rng);
    p["rs.head.b"] = Matrix::zeros(1, cfg.out_dim);
    return p;
}

Tape::NodeId resample_tape(Tape& tape, const Matrix& summaries, const ResamplerConfig& cfg,
                           const TapeParams& reg) {
    if (summaries.rows < 1) throw std::invalid_argument("empty summary sequence");
    if (summaries.cols != cfg.in_dim) throw std::invalid_argument("resample: input dim mismatch");
    const int D = cfg.in_dim;
    const double scl = 1.0 / std::sqrt(static_cast<double>(D));
    const double eps = 1e-6;

    Matrix inputs = summaries;
    if (cfg.positional) inputs = add(inputs, input_positional(summaries.rows, D));
    const Tape::NodeId x = tape.leaf(std::move(inputs));

    Tape::NodeId q = reg.at("rs.queries");
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = "rs.L" + std::to_string(l) + ".";
        Tape::NodeId nq = tape.layer_norm_rows(q, reg.at(lp + "lnq.g"), reg.at(lp + "lnq.b"), eps);
        Tape::NodeId qp = tape.add_row_broadcast(tape.matmul(nq, reg.at(lp + "wq")), reg.at(lp + "bq"));
        Tape::NodeId kp = tape.add_row_broadcast(tape.matmul(x, reg.at(lp + "wk")), reg.at(lp + "bk"));
        Tape::NodeId vp = tape.add_row_broadcast(tape.matmul(x, reg.at(lp + "wv")), reg.at(lp + "bv"));
        Tape::NodeId attn = tape.dense_attention(qp, kp, vp, scl);
        attn = tape.add_row_broadcast(tape.matmul(attn, reg.at(lp + "wo")), reg.at(lp + "bo"));
        q = tape.add(q, attn);

        Tape::NodeId nf = tape.layer_norm_rows(q, reg.at(lp + "lnf.g"), reg.at(lp + "lnf.b"), eps);
        Tape::NodeId ff =
            tape.gelu(tape.add_row_broadcast(tape.matmul(nf, reg.at(lp + "w1")), reg.at(lp + "b1")));
        ff = tape.add_row_broadcast(tape.matmul(ff, reg.at(lp + "w2")), reg.at(lp + "b2"));
        q = tape.add(q, ff);
    }
    return tape.add_row_broadcast(tape.matmul(q, reg.at("rs.head.w")), reg.at("rs.head.b"));
}

Matrix resample(const Matrix& summaries, const ResamplerConfig& cfg, const ParamSet& params) {
    Tape tape;
    const TapeParams reg = register_params(tape, params, false);
    return tape.value(resample_tape(tape, summaries, cfg, reg));
}

double alignment_loss(const std::vector<AlignmentSample>& corpus, const ResamplerConfig& cfg,
                      const ParamSet& params, ParamSet* grads) {
    if (corpus.empty()) throw std::invalid_argument("alignment: empty corpus");

    Tape tape;
    const TapeParams reg = register_params(tape, params, grads != nullptr);
    Tape::NodeId total = tape.leaf(Matrix::zeros(1, 1));
    const Matrix pool(1, cfg.query_count, 1.0 / cfg.query_count);
    for (const auto& sample : corpus) {
        if (static_cast<int>(sample.target.size()) != cfg.out_dim)
            throw std::invalid_argument("alignment: target dim mismatch");
        Tape::NodeId out = resample_tape(tape, sample.summaries, cfg, reg);
        Tape::NodeId pooled = tape.matmul(tape.leaf(pool), out);  // 1 x out_dim
        Tape::NodeId diff = tape.sub(pooled, tape.leaf(Matrix::from_row(sample.target)));
        total = tape.add(total, tape.mean_all(tape.hadamard(diff, diff)));
    }
    Tape::NodeId loss = tape.scale(total, 1.0 / corpus.size());
    if (grads) {
        tape.backward(loss);
        collect_grads(tape, reg, grads);
    }
    return tape.scalar(loss);
}

AlignmentResult alignment_train(const std::vector<AlignmentSample>& corpus,
                                const ResamplerConfig& cfg, ParamSet params, int steps, double lr) {
    AlignmentResult res;
    for (int step = 0; step < steps; ++step) {
        ParamSet grads;
        for (const auto& [name, t] : params.tensors)
            grads.tensors[name] = Matrix::zeros(t.rows, t.cols);
        const double loss = alignment_loss(corpus, cfg, params, &grads);
        if (!std::isfinite(loss))
            throw std::runtime_error("alignment diverged at step " + std::to_string(step));
        res.loss_curve.push_back(loss);
        for (auto& [name, t] : params.tensors) {
            const Matrix& g = grads.get(name);
            for (size_t i = 0; i < t.data.size(); ++i) t.data[i] -= lr * g.data[i];
        }
    }
    res.params = std::move(params);
    return res;
}

}  // namespace topopack
