// Command-line harness: synthetic corpus generation, layout/mask inspection,
// invariant checks, benchmarks, the toy training stages, ROI proposals, and
// summary resampling. All stochastic subcommands are seed-driven; identical
// configurations produce byte-identical JSON (timestamps excluded via
// --no-timestamp).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "topopack/attention.hpp"
#include "topopack/connector.hpp"
#include "topopack/grid.hpp"
#include "topopack/numerics.hpp"
#include "topopack/pretrain.hpp"
#include "topopack/roi.hpp"
#include "topopack/synth.hpp"
#include "topopack/tape.hpp"
#include "topopack/topomask.hpp"

using json = nlohmann::json;
using namespace topopack;

namespace {

struct RunConfig {
    uint64_t seed = 0;
    int H = 12;
    int W = 12;
    int k = 3;
    int D = 16;
    int steps = 500;
    double lr = 0.02;
    double ratio = 0.5;
    double tau = 0.07;
    double momentum = 0.99;
    double sigma = 0.1;
    int queue = 1024;
    int queries = 32;
    std::string json_path;
    bool no_timestamp = false;
};

void add_common_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--seed", cfg.seed, "RNG seed");
    cmd->add_option("--H", cfg.H, "grid rows");
    cmd->add_option("--W", cfg.W, "grid cols");
    cmd->add_option("--k", cfg.k, "pack window size")->capture_default_str();
    cmd->add_option("--D", cfg.D, "feature dimension");
    cmd->add_option("--steps", cfg.steps, "training steps");
    cmd->add_option("--lr", cfg.lr, "learning rate");
    cmd->add_option("--ratio", cfg.ratio, "MAE mask ratio");
    cmd->add_option("--tau", cfg.tau, "InfoNCE temperature");
    cmd->add_option("--momentum", cfg.momentum, "key-encoder EMA momentum");
    cmd->add_option("--sigma", cfg.sigma, "positive-view noise scale");
    cmd->add_option("--queue", cfg.queue, "negative queue capacity");
    cmd->add_option("--queries", cfg.queries, "resampler query count")->capture_default_str();
    cmd->add_option("--json", cfg.json_path, "write JSON output to this path");
    cmd->add_flag("--no-timestamp", cfg.no_timestamp, "omit timestamp from JSON");
}

void emit(const RunConfig& cfg, json out) {
    if (!cfg.no_timestamp) {
        out["timestamp"] =
            std::chrono::duration_cast<std::chrono::seconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count();
    }
    const std::string text = out.dump(2) + "\n";
    if (cfg.json_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream os(cfg.json_path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + cfg.json_path);
        os << text;
    }
}

PackLayout padded_layout(const FeatureGrid& grid, int k) {
    return build_layout(grid.H, grid.W, k);
}

TokenSequence sequence_from_grid(const FeatureGrid& raw, int k) {
    const FeatureGrid grid = pad_grid(raw, k);
    const PackLayout layout = padded_layout(grid, k);
    return assemble_sequence(grid, layout, summaries_from_features(grid, layout),
                             global_from_features(grid));
}

EncoderConfig encoder_config(const RunConfig& cfg, int D) {
    EncoderConfig ec;
    ec.layers = 1;
    ec.heads = D % 2 == 0 ? 2 : 1;
    ec.model_dim = D;
    ec.ff_dim = 2 * D;
    ec.k = cfg.k;
    ec.seed = cfg.seed;
    return ec;
}

void sgd_step(ParamSet& params, const ParamSet& grads, double lr) {
    for (auto& [name, t] : params.tensors) {
        const Matrix& g = grads.get(name);
        for (size_t a = 0; a < t.data.size(); ++a) t.data[a] -= lr * g.data[a];
    }
}

ParamSet zeros_like(const ParamSet& params) {
    ParamSet z;
    for (const auto& [name, t] : params.tensors) z[name] = Matrix::zeros(t.rows, t.cols);
    return z;
}

int cmd_synth(const RunConfig& cfg, int blobs, double noise, const std::string& out_path) {
    SynthConfig sc;
    sc.H = cfg.H;
    sc.W = cfg.W;
    sc.D = cfg.D;
    sc.blobs = blobs;
    sc.noise = noise;
    sc.seed = cfg.seed;
    const FeatureGrid grid = synth_grid(sc);
    write_fgrid(out_path, grid);
    emit(cfg, json{{"path", out_path},
                   {"H", grid.H},
                   {"W", grid.W},
                   {"D", grid.D},
                   {"blobs", blobs},
                   {"seed", cfg.seed}});
    return 0;
}

int cmd_layout(const RunConfig& cfg) {
    if (cfg.H % cfg.k != 0 || cfg.W % cfg.k != 0) {
        std::cerr << "layout: H and W must be multiples of k (pad first)\n";
        return 2;
    }
    const PackLayout l = build_layout(cfg.H, cfg.W, cfg.k);
    emit(cfg, json{{"H", l.H},
                   {"W", l.W},
                   {"k", l.k},
                   {"pack_rows", l.pack_rows},
                   {"pack_cols", l.pack_cols},
                   {"M", l.packs},
                   {"tokens_per_pack", l.tokens_per_pack},
                   {"N", l.seq_len}});
    return 0;
}

int cmd_mask(const RunConfig& cfg) {
    if (cfg.H % cfg.k != 0 || cfg.W % cfg.k != 0) {
        std::cerr << "mask: H and W must be multiples of k (pad first)\n";
        return 2;
    }
    const PackLayout l = build_layout(cfg.H, cfg.W, cfg.k);
    const long long N = l.seq_len;
    emit(cfg, json{{"M", l.packs},
                   {"k", l.k},
                   {"N", N},
                   {"allowed", allowed_count(l.packs, l.k)},
                   {"dense", N * N},
                   {"ratio", sparsity_ratio(l.packs, l.k)}});
    return 0;
}

int cmd_check(const RunConfig& cfg) {
    json props = json::array();
    bool all_ok = true;
    auto record = [&](const std::string& name, bool ok, const json& measured) {
        props.push_back({{"property", name}, {"pass", ok}, {"measured", measured}});
        all_ok = all_ok && ok;
    };

    // Closed-form mask counting against brute force for small layouts.
    {
        bool ok = true;
        for (int k = 1; k <= 4 && ok; ++k)
            for (int M = 1; M <= 12 && ok; ++M) {
                const PackLayout l = build_layout(k, M * k, k);
                long long brute = 0;
                for (int i = 0; i < l.seq_len; ++i)
                    for (int j = 0; j < l.seq_len; ++j) brute += mask_entry(l, i, j) ? 1 : 0;
                ok = brute == allowed_count(M, k);
            }
        record("mask_counting", ok,
               json{{"allowed_1000_3", allowed_count(1000, 3)},
                    {"ratio_1000_3", sparsity_ratio(1000, 3)}});
    }

    // Sparse kernel vs dense oracle.
    {
        std::mt19937_64 rng(cfg.seed + 1);
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            const int k = 2 + static_cast<int>(rng() % 2);
            const int M = 1 + static_cast<int>(rng() % 6);
            const int d = 2 + static_cast<int>(rng() % 14);
            const PackLayout l = build_layout(k, M * k, k);
            const TopoMaskDescriptor desc = build_descriptor(l);
            const Matrix q = Matrix::randn(l.seq_len, d, 1.0, rng);
            const Matrix kk = Matrix::randn(l.seq_len, d, 1.0, rng);
            const Matrix v = Matrix::randn(l.seq_len, d, 1.0, rng);
            const double scl = 1.0 / std::sqrt(static_cast<double>(d));
            worst = std::max(worst, max_abs_diff(sparse_attention(q, kk, v, desc, scl),
                                                 dense_oracle_attention(q, kk, v, desc, scl)));
        }
        record("oracle_equivalence", worst < 1e-10, json{{"max_deviation", worst}});
    }

    // Gradient checks for every trainable module.
    {
        EncoderConfig ec;
        ec.layers = 1;
        ec.heads = 2;
        ec.model_dim = 4;
        ec.ff_dim = 6;
        ec.k = 2;
        const PackLayout l = build_layout(2, 4, 2);
        const TopoMaskDescriptor desc = build_descriptor(l);
        std::vector<TokenRole> roles(l.seq_len);
        for (int t = 0; t < l.seq_len; ++t) roles[t] = token_role(l, t);
        std::mt19937_64 rng(cfg.seed + 2);
        const Matrix x = Matrix::randn(l.seq_len, ec.model_dim, 0.7, rng);

        double worst = 0.0;
        {
            const ParamSet params = init_encoder_params(ec, "enc", rng);
            const Objective f = [&](const ParamSet& p, ParamSet* grads) {
                Tape tape;
                const TapeParams reg = register_params(tape, p, grads != nullptr);
                const auto out = encoder_forward_tape(tape, tape.leaf(x), desc, ec, reg, "enc", &roles);
                const auto loss = tape.mean_all(tape.hadamard(out, out));
                if (grads) {
                    tape.backward(loss);
                    collect_grads(tape, reg, grads);
                }
                return tape.scalar(loss);
            };
            worst = std::max(worst, grad_check(f, params, 1e-5));
        }
        {
            const ParamSet params = init_mae_params(ec, rng);
            TokenSequence seq{l, x, roles};
            const MaeMask mask = sample_mae_mask(
                l, MaePhase::PatchWise, 0.5,
                std::vector<bool>(static_cast<size_t>(l.H) * l.W, true), cfg.seed + 3);
            const Objective f = [&](const ParamSet& p, ParamSet* grads) {
                return mae_forward_loss(seq, mask, ec, p, grads);
            };
            worst = std::max(worst, grad_check(f, params, 1e-5));
        }
        {
            ResamplerConfig rc;
            rc.query_count = 3;
            rc.in_dim = 4;
            rc.out_dim = 4;
            rc.layers = 1;
            const ParamSet params = init_resampler_params(rc, rng);
            const Matrix s = Matrix::randn(3, 4, 0.8, rng);
            const Matrix readout = Matrix::randn(3, 4, 1.0, rng);
            const Objective f = [&](const ParamSet& p, ParamSet* grads) {
                Tape tape;
                const TapeParams reg = register_params(tape, p, grads != nullptr);
                const auto out = resample_tape(tape, s, rc, reg);
                const auto loss = tape.sum_all(tape.hadamard(out, tape.leaf(readout)));
                if (grads) {
                    tape.backward(loss);
                    collect_grads(tape, reg, grads);
                }
                return tape.scalar(loss);
            };
            worst = std::max(worst, grad_check(f, params, 1e-5));
        }
        record("grad_checks", worst < 1e-6, json{{"max_rel_error", worst}});
    }

    emit(cfg, json{{"properties", props}, {"all_pass", all_ok}});
    return all_ok ? 0 : 1;
}

int cmd_bench(const RunConfig& cfg) {
    if (cfg.H % cfg.k != 0 || cfg.W % cfg.k != 0) {
        std::cerr << "bench: H and W must be multiples of k (pad first)\n";
        return 2;
    }
    const PackLayout l = build_layout(cfg.H, cfg.W, cfg.k);
    const TopoMaskDescriptor desc = build_descriptor(l);
    std::mt19937_64 rng(cfg.seed);
    const Matrix q = Matrix::randn(l.seq_len, cfg.D, 1.0, rng);
    const Matrix k = Matrix::randn(l.seq_len, cfg.D, 1.0, rng);
    const Matrix v = Matrix::randn(l.seq_len, cfg.D, 1.0, rng);
    const double scl = 1.0 / std::sqrt(static_cast<double>(cfg.D));

    reset_attention_score_evals();
    const auto t0 = std::chrono::steady_clock::now();
    sparse_attention(q, k, v, desc, scl);
    const double sparse_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const long long sparse_evals = attention_score_evals();

    reset_attention_score_evals();
    const auto t1 = std::chrono::steady_clock::now();
    dense_oracle_attention(q, k, v, desc, scl);
    const double dense_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    const long long dense_evals = attention_score_evals();

    const FlopEstimate fe = flop_estimate(l, cfg.D);
    emit(cfg, json{{"M", l.packs},
                   {"k", l.k},
                   {"N", l.seq_len},
                   {"d", cfg.D},
                   {"allowed", allowed_count(l.packs, l.k)},
                   {"sparse_score_evals", sparse_evals},
                   {"dense_score_evals", dense_evals},
                   {"sparse_flops", fe.sparse_flops},
                   {"dense_flops", fe.dense_flops},
                   {"ratio", sparsity_ratio(l.packs, l.k)},
                   {"sparse_seconds", sparse_s},
                   {"dense_seconds", dense_s}});
    return sparse_evals == allowed_count(l.packs, l.k) ? 0 : 1;
}

int cmd_train(const RunConfig& cfg, const std::string& stage,
              const std::vector<std::string>& inputs, const std::string& init_path,
              const std::string& out_path) {
    std::vector<FeatureGrid> grids;
    std::vector<TokenSequence> corpus;
    for (const auto& path : inputs) {
        grids.push_back(pad_grid(read_fgrid(path), cfg.k));
        const PackLayout layout = padded_layout(grids.back(), cfg.k);
        corpus.push_back(assemble_sequence(grids.back(), layout,
                                           summaries_from_features(grids.back(), layout),
                                           global_from_features(grids.back())));
    }
    const int D = corpus.front().embeddings.cols;
    const EncoderConfig ec = encoder_config(cfg, D);
    std::mt19937_64 rng(cfg.seed);
    json log = json::array();

    auto append = [&](int step, double loss, int queue_len) {
        if (!std::isfinite(loss))
            throw std::runtime_error("non-finite loss at step " + std::to_string(step));
        log.push_back(
            {{"step", step}, {"loss", loss}, {"phase", stage}, {"queue_len", queue_len}});
    };

    ParamSet final_params;
    if (stage == "mae1" || stage == "mae2") {
        ParamSet params = init_path.empty() ? init_mae_params(ec, rng) : read_checkpoint(init_path);
        const MaePhase phase = stage == "mae1" ? MaePhase::PatchWise : MaePhase::PackWise;
        for (int step = 0; step < cfg.steps; ++step) {
            const size_t idx = step % corpus.size();
            const TokenSequence& seq = corpus[idx];
            const MaeMask mask = sample_mae_mask(seq.layout, phase, cfg.ratio, grids[idx].valid,
                                                 cfg.seed * 100003 + step);
            ParamSet grads = zeros_like(params);
            const double loss = mae_forward_loss(seq, mask, ec, params, &grads);
            append(step, loss, 0);
            sgd_step(params, grads, cfg.lr);
        }
        final_params = std::move(params);
    } else if (stage == "moco") {
        MoCoState state;
        state.query_params =
            init_path.empty() ? init_encoder_params(ec, "enc", rng) : ParamSet{};
        if (!init_path.empty()) {
            // Keep only the encoder tensors from an MAE checkpoint.
            for (auto& [name, t] : read_checkpoint(init_path).tensors)
                if (name.rfind("enc", 0) == 0) state.query_params[name] = std::move(t);
        }
        state.key_params = state.query_params;
        state.capacity = cfg.queue;
        state.tau = cfg.tau;
        state.momentum = cfg.momentum;
        state.sigma = cfg.sigma;
        for (int step = 0; step < cfg.steps; ++step) {
            const MoCoStepResult r = moco_step(state, corpus[step % corpus.size()], ec, cfg.lr,
                                              cfg.seed * 900007 + step);
            append(step, r.loss, r.queue_len);
        }
        final_params = std::move(state.query_params);
    } else if (stage == "connector") {
        ParamSet enc_params;
        if (!init_path.empty()) {
            for (auto& [name, t] : read_checkpoint(init_path).tensors)
                if (name.rfind("enc", 0) == 0) enc_params[name] = std::move(t);
        } else {
            enc_params = init_encoder_params(ec, "enc", rng);
        }
        // Align the pooled resampler output with each slide's encoded global
        // token.
        std::vector<AlignmentSample> samples;
        for (const TokenSequence& seq : corpus) {
            const EncoderOutput out = encoder_forward(seq, ec, enc_params);
            samples.push_back({out.summaries, out.global_out});
        }
        ResamplerConfig rc;
        rc.query_count = cfg.queries;
        rc.in_dim = D;
        rc.out_dim = D;
        rc.seed = cfg.seed;
        ParamSet params = init_resampler_params(rc, rng);
        const AlignmentResult res =
            alignment_train(samples, rc, std::move(params), cfg.steps, cfg.lr);
        for (int step = 0; step < cfg.steps; ++step)
            append(step, res.loss_curve[step], 0);
        final_params = res.params;
        for (auto& [name, t] : enc_params.tensors) final_params[name] = std::move(t);
    } else {
        std::cerr << "train: unknown stage " << stage << "\n";
        return 2;
    }

    if (!out_path.empty()) write_checkpoint(out_path, final_params);
    emit(cfg, json{{"stage", stage},
                   {"steps", cfg.steps},
                   {"log", log},
                   {"checkpoint", out_path},
                   {"final_loss", log.empty() ? 0.0 : log.back()["loss"].get<double>()}});
    return 0;
}

int cmd_roi(const RunConfig& cfg, const std::string& input, int target) {
    const FeatureGrid grid = read_fgrid(input);
    const RegionProposal prop = mst_cluster(build_similarity_graph(grid), target);
    const auto seeds = triangular_seeds(grid);
    json jr = json::array(), jc = json::array(), js = json::array();
    for (const auto& region : prop.regions) jr.push_back(region);
    for (const auto& [ci, cj] : prop.centroids) jc.push_back({ci, cj});
    for (const auto& [i, j] : seeds) js.push_back({i, j});
    emit(cfg, json{{"regions", jr},
                   {"centroids", jc},
                   {"seeds", js},
                   {"mean_internal_similarity", prop.mean_internal_similarity},
                   {"degraded", prop.degraded}});
    return 0;
}

int cmd_resample(const RunConfig& cfg, const std::string& input) {
    const FeatureGrid raw = read_fgrid(input);
    const FeatureGrid grid = pad_grid(raw, cfg.k);
    const PackLayout layout = padded_layout(grid, cfg.k);
    const Matrix summaries = summaries_from_features(grid, layout);

    ResamplerConfig rc;
    rc.query_count = cfg.queries;
    rc.in_dim = grid.D;
    rc.out_dim = grid.D;
    rc.seed = cfg.seed;
    std::mt19937_64 rng(cfg.seed);
    const Matrix out = resample(summaries, rc, init_resampler_params(rc, rng));

    json tokens = json::array();
    for (int r = 0; r < out.rows; ++r)
        tokens.push_back(std::vector<double>(out.row_ptr(r), out.row_ptr(r) + out.cols));
    emit(cfg, json{{"input_summaries", summaries.rows},
                   {"queries", out.rows},
                   {"dim", out.cols},
                   {"tokens", tokens}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse topo-pack attention toolkit"};
    app.require_subcommand(1);
    RunConfig cfg;

    int blobs = 3;
    double noise = 0.05;
    std::string out_path, input, init_path, stage;
    std::vector<std::string> inputs;
    int target = 3;

    auto* synth = app.add_subcommand("synth", "generate a synthetic FGRID corpus file");
    add_common_flags(synth, cfg);
    synth->add_option("--blobs", blobs, "planted cluster count")->capture_default_str();
    synth->add_option("--noise", noise, "per-cell noise scale")->capture_default_str();
    synth->add_option("--out", out_path, "output FGRID path")->required();

    auto* layout = app.add_subcommand("layout", "print the pack layout for H x W, k");
    add_common_flags(layout, cfg);

    auto* mask = app.add_subcommand("mask", "print mask sparsity stats");
    add_common_flags(mask, cfg);

    auto* check = app.add_subcommand("check", "run the invariant suite");
    add_common_flags(check, cfg);

    auto* bench = app.add_subcommand("bench", "time sparse vs dense attention");
    add_common_flags(bench, cfg);

    auto* train = app.add_subcommand("train", "run one training stage");
    add_common_flags(train, cfg);
    train->add_option("--stage", stage, "mae1 | mae2 | moco | connector")->required();
    train->add_option("--input", inputs, "FGRID corpus files")->required();
    train->add_option("--init", init_path, "checkpoint to resume from");
    train->add_option("--out", out_path, "checkpoint output path");

    auto* roi = app.add_subcommand("roi", "propose regions and seeds for a grid");
    add_common_flags(roi, cfg);
    roi->add_option("--input", input, "FGRID file")->required();
    roi->add_option("--target", target, "region count")->capture_default_str();

    auto* resample_cmd = app.add_subcommand("resample", "compress summaries to fixed queries");
    add_common_flags(resample_cmd, cfg);
    resample_cmd->add_option("--input", input, "FGRID file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(cfg, blobs, noise, out_path);
        if (layout->parsed()) return cmd_layout(cfg);
        if (mask->parsed()) return cmd_mask(cfg);
        if (check->parsed()) return cmd_check(cfg);
        if (bench->parsed()) return cmd_bench(cfg);
        if (train->parsed()) return cmd_train(cfg, stage, inputs, init_path, out_path);
        if (roi->parsed()) return cmd_roi(cfg, input, target);
        if (resample_cmd->parsed()) return cmd_resample(cfg, input);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
