// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each check is self-contained and re-derives its expectations
// independently of the library internals it exercises.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "topopack/attention.hpp"
#include "topopack/connector.hpp"
#include "topopack/grid.hpp"
#include "topopack/numerics.hpp"
#include "topopack/pretrain.hpp"
#include "topopack/roi.hpp"
#include "topopack/synth.hpp"
#include "topopack/tape.hpp"
#include "topopack/topomask.hpp"

using namespace topopack;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, double seconds) {
    std::printf("[%s] %-28s (%.2fs)\n", ok ? "PASS" : "FAIL", name.c_str(), seconds);
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

void run(const std::string& name, const std::function<bool()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    try {
        ok = body();
    } catch (const std::exception& e) {
        std::printf("       exception: %s\n", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(name, ok, secs);
}

// Rule-by-rule re-derivation of the mask, written against the layout helpers
// only (not mask_entry).
bool rules_allow(const PackLayout& layout, int i, int j) {
    if (j == 0) return true;  // global sink
    const TokenRole ri = token_role(layout, i);
    const TokenRole rj = token_role(layout, j);
    if (ri == TokenRole::Patch && rj == TokenRole::Patch)
        return token_pack(layout, i) == token_pack(layout, j);
    if (ri == TokenRole::Summary && rj == TokenRole::Patch)
        return token_pack(layout, i) == token_pack(layout, j);
    if (ri == TokenRole::Summary && rj == TokenRole::Summary) return true;
    return false;
}

TokenSequence synth_sequence(const SynthConfig& sc, int k) {
    const FeatureGrid grid = pad_grid(synth_grid(sc), k);
    const PackLayout layout = build_layout(grid.H, grid.W, k);
    return assemble_sequence(grid, layout, summaries_from_features(grid, layout),
                             global_from_features(grid));
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

bool criterion_sparsity() {
    // Closed form against brute-force enumeration for every layout with
    // N <= 1000, k from 1 to 8.
    for (int k = 1; k <= 8; ++k) {
        const int tpp = k * k + 1;
        for (int M = 1; 1 + M * tpp <= 1000; ++M) {
            const PackLayout layout = build_layout(k, M * k, k);
            const int N = layout.seq_len;
            long long brute = 0;
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j) brute += mask_entry(layout, i, j) ? 1 : 0;
            if (brute != allowed_count(M, k)) return false;
        }
    }
    // k = 3 ratio formula, the M = 1000 value, and the limit.
    for (long long M : {1ll, 10ll, 100ll, 1000ll, 100000ll}) {
        const double formula =
            static_cast<double>(100 * M + M * M + 1) / (static_cast<double>(10 * M + 1) * (10 * M + 1));
        if (std::abs(sparsity_ratio(M, 3) - formula) > 1e-15) return false;
    }
    if (std::abs(sparsity_ratio(1000, 3) - 0.0110) > 5e-4) return false;
    if (std::abs(sparsity_ratio(100000000, 3) - 0.01) > 1e-5) return false;
    return true;
}

bool criterion_oracle() {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 2);
        const int M = 1 + static_cast<int>(rng() % 8);
        const int d = 1 + static_cast<int>(rng() % 16);
        const PackLayout layout = build_layout(k, M * k, k);

        std::vector<bool> valid(static_cast<size_t>(layout.H) * layout.W, true);
        if (trial % 3 == 0)  // exercise padding overrides too
            for (auto&& b : valid)
                if (rng() % 5 == 0) b = false;

        const TopoMaskDescriptor desc = build_descriptor(layout, &valid);
        const Matrix q = Matrix::randn(layout.seq_len, d, 1.0, rng);
        const Matrix kk = Matrix::randn(layout.seq_len, d, 1.0, rng);
        const Matrix v = Matrix::randn(layout.seq_len, d, 1.0, rng);
        const double scl = 1.0 / std::sqrt(static_cast<double>(d));
        if (max_abs_diff(sparse_attention(q, kk, v, desc, scl),
                         dense_oracle_attention(q, kk, v, desc, scl)) > 1e-10)
            return false;
    }
    return true;
}

bool criterion_mask_rules() {
    for (int k = 1; k <= 6; ++k) {
        const int tpp = k * k + 1;
        for (int M = 1; 1 + M * tpp <= 500; ++M) {
            const PackLayout layout = build_layout(k, M * k, k);
            const int N = layout.seq_len;
            for (int i = 0; i < N; ++i) {
                bool row_has_global = false;
                for (int j = 0; j < N; ++j) {
                    if (mask_entry(layout, i, j) != rules_allow(layout, i, j)) return false;
                    if (j == 0 && mask_entry(layout, i, j)) row_has_global = true;
                }
                if (!row_has_global) return false;
            }
            // Patch -> Summary asymmetry: summary sees its patches, never the
            // other way around.
            for (int m = 0; m < layout.packs; ++m) {
                const int s = summary_token_index(layout, m);
                const int first = 1 + m * tpp;
                if (!mask_entry(layout, s, first)) return false;
                if (mask_entry(layout, first, s)) return false;
            }
        }
    }
    return true;
}

bool criterion_gradients() {
    EncoderConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.model_dim = 4;
    cfg.ff_dim = 6;
    cfg.k = 2;
    const PackLayout layout = build_layout(2, 4, 2);  // M = 2, N = 11
    const TopoMaskDescriptor desc = build_descriptor(layout);
    std::vector<TokenRole> roles(layout.seq_len);
    for (int t = 0; t < layout.seq_len; ++t) roles[t] = token_role(layout, t);

    for (uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        const Matrix x = Matrix::randn(layout.seq_len, cfg.model_dim, 0.7, rng);

        // Encoder.
        {
            const ParamSet params = init_encoder_params(cfg, "enc", rng);
            const Objective f = [&](const ParamSet& p, ParamSet* grads) {
                Tape tape;
                const TapeParams reg = register_params(tape, p, grads != nullptr);
                const auto out =
                    encoder_forward_tape(tape, tape.leaf(x), desc, cfg, reg, "enc", &roles);
                const auto loss = tape.mean_all(tape.hadamard(out, out));
                if (grads) {
                    tape.backward(loss);
                    collect_grads(tape, reg, grads);
                }
                return tape.scalar(loss);
            };
            if (grad_check(f, params, 1e-5) >= 1e-6) return false;
        }

        // MAE (encoder + decoder + mask embedding + head).
        {
            const ParamSet params = init_mae_params(cfg, rng);
            TokenSequence seq;
            seq.layout = layout;
            seq.embeddings = x;
            seq.roles = roles;
            const MaeMask mask =
                sample_mae_mask(layout, MaePhase::PatchWise, 0.5,
                                std::vector<bool>(static_cast<size_t>(layout.H) * layout.W, true),
                                seed);
            const Objective f = [&](const ParamSet& p, ParamSet* grads) {
                return mae_forward_loss(seq, mask, cfg, p, grads);
            };
            if (grad_check(f, params, 1e-5) >= 1e-6) return false;
        }

        // MoCo query encoder against a fixed key pass and queue.
        {
            MoCoState state;
            state.query_params = init_encoder_params(cfg, "enc", rng);
            state.key_params = init_encoder_params(cfg, "enc", rng);
            state.tau = 0.2;
            state.sigma = 0.05;
            for (int n = 0; n < 2; ++n) {
                std::vector<double> neg(cfg.model_dim);
                double norm = 0.0;
                for (auto& e : neg) {
                    e = Matrix::randn(1, 1, 1.0, rng).at(0, 0);
                    norm += e * e;
                }
                for (auto& e : neg) e /= std::sqrt(norm);
                state.queue.push_back(neg);
            }
            TokenSequence seq;
            seq.layout = layout;
            seq.embeddings = x;
            seq.roles = roles;
            const Objective f = [&](const ParamSet& p, ParamSet* grads) {
                MoCoState s = state;
                s.query_params = p;
                return moco_forward_loss(s, seq, cfg, 7, grads);
            };
            if (grad_check(f, state.query_params, 1e-5) >= 1e-6) return false;
        }

        // Resampler.
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
            if (grad_check(f, params, 1e-5) >= 1e-6) return false;
        }
    }
    return true;
}

bool criterion_curriculum() {
    std::mt19937_64 shape_rng(17);
    for (int draw = 0; draw < 1000; ++draw) {
        const int k = 2 + static_cast<int>(shape_rng() % 2);
        const int pr = 1 + static_cast<int>(shape_rng() % 3);
        const int pc = 1 + static_cast<int>(shape_rng() % 3);
        const PackLayout layout = build_layout(pr * k, pc * k, k);
        std::vector<bool> valid(static_cast<size_t>(layout.H) * layout.W, true);
        for (auto&& b : valid)
            if (shape_rng() % 6 == 0) b = false;
        const double ratio = static_cast<double>(shape_rng() % 101) / 100.0;

        for (MaePhase phase : {MaePhase::PatchWise, MaePhase::PackWise}) {
            const MaeMask mask = sample_mae_mask(layout, phase, ratio, valid, draw);
            if (!std::is_sorted(mask.masked_tokens.begin(), mask.masked_tokens.end())) return false;

            std::vector<int> visible_valid(layout.packs, 0);
            std::set<int> touched_packs;
            for (int t = 0; t < layout.seq_len; ++t) {
                const TokenRole role = token_role(layout, t, &valid);
                const bool masked = std::binary_search(mask.masked_tokens.begin(),
                                                       mask.masked_tokens.end(), t);
                if (masked && role != TokenRole::Patch) return false;  // never summary/global/pad
                if (role == TokenRole::Patch && !masked) ++visible_valid[token_pack(layout, t)];
                if (masked) touched_packs.insert(token_pack(layout, t));
            }
            if (phase == MaePhase::PatchWise) {
                for (int m = 0; m < layout.packs; ++m) {
                    int valid_patches = 0;
                    for (int o = 0; o < layout.tokens_per_pack - 1; ++o) {
                        const int t = 1 + m * layout.tokens_per_pack + o;
                        if (token_role(layout, t, &valid) == TokenRole::Patch) ++valid_patches;
                    }
                    if (valid_patches > 0 && visible_valid[m] < 1) return false;
                }
            } else {
                // Whole-pack unions: a touched pack has every valid patch masked.
                for (int m : touched_packs)
                    if (visible_valid[m] != 0) return false;
            }
        }
    }
    return true;
}

bool criterion_infonce() {
    // q = k+, two orthogonal unit negatives, tau = 1.
    const std::vector<double> q = {1.0, 0.0, 0.0};
    const std::deque<std::vector<double>> queue = {{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
    if (std::abs(infonce_loss(q, q, queue, 1.0) - std::log(1.0 + 2.0 * std::exp(-1.0))) > 1e-9)
        return false;

    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto unit = [&](int d) {
        std::vector<double> v(d);
        double norm = 0.0;
        for (auto& e : v) {
            e = gauss(rng);
            norm += e * e;
        }
        for (auto& e : v) e /= std::sqrt(norm);
        return v;
    };
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 8);
        const int negs = 1 + static_cast<int>(rng() % 6);
        const double tau = 0.05 + 0.5 * (static_cast<double>(rng() % 100) / 100.0);
        const std::vector<double> query = unit(d), pos = unit(d);
        std::deque<std::vector<double>> qu;
        for (int n = 0; n < negs; ++n) qu.push_back(unit(d));

        // Brute-force softmax cross-entropy with the positive as class 0.
        std::vector<double> logits;
        logits.push_back(std::inner_product(query.begin(), query.end(), pos.begin(), 0.0) / tau);
        for (const auto& neg : qu)
            logits.push_back(std::inner_product(query.begin(), query.end(), neg.begin(), 0.0) / tau);
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        const double ce = mx + std::log(z) - logits[0];
        if (std::abs(infonce_loss(query, pos, qu, tau) - ce) > 1e-12) return false;
    }
    return true;
}

bool criterion_connector() {
    ResamplerConfig cfg;
    cfg.in_dim = 6;
    cfg.out_dim = 6;
    std::mt19937_64 rng(29);
    const ParamSet params = init_resampler_params(cfg, rng);
    for (int L : {1, 7, 130, 4096}) {
        const Matrix out = resample(Matrix::randn(L, 6, 1.0, rng), cfg, params);
        if (out.rows != 32 || out.cols != 6) return false;
    }
    for (int trial = 0; trial < 10; ++trial) {
        const int L = 2 + static_cast<int>(rng() % 30);
        const Matrix x = Matrix::randn(L, 6, 1.0, rng);
        std::vector<int> perm(L);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix shuffled(L, 6);
        for (int i = 0; i < L; ++i)
            for (int c = 0; c < 6; ++c) shuffled.at(i, c) = x.at(perm[i], c);
        if (max_abs_diff(resample(x, cfg, params), resample(shuffled, cfg, params)) > 1e-12)
            return false;
    }
    return true;
}

bool criterion_training() {
    EncoderConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.model_dim = 8;
    cfg.ff_dim = 16;
    cfg.k = 3;

    SynthConfig sc;
    sc.H = 6;
    sc.W = 6;
    sc.D = cfg.model_dim;

    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        sc.seed = seed;
        const TokenSequence seq = synth_sequence(sc, cfg.k);
        const std::vector<bool> valid(static_cast<size_t>(seq.layout.H) * seq.layout.W, true);

        // mae1 / mae2: fresh mask per step; progress measured on the first
        // step's mask before and after.
        for (MaePhase phase : {MaePhase::PatchWise, MaePhase::PackWise}) {
            std::mt19937_64 rng(seed);
            ParamSet params = init_mae_params(cfg, rng);
            const double ratio = phase == MaePhase::PatchWise ? 0.5 : 0.5;
            const MaeMask probe = sample_mae_mask(seq.layout, phase, ratio, valid, seed * 1000);
            const double initial = mae_forward_loss(seq, probe, cfg, params, nullptr);
            for (int step = 0; step < 500; ++step) {
                const MaeMask mask =
                    sample_mae_mask(seq.layout, phase, ratio, valid, seed * 1000 + step);
                ParamSet grads = zeros_like(params);
                mae_forward_loss(seq, mask, cfg, params, &grads);
                sgd_step(params, grads, 0.02);
            }
            const double final_loss = mae_forward_loss(seq, probe, cfg, params, nullptr);
            if (!(final_loss < initial)) {
                std::printf("       mae%d seed %llu: initial %.6f final %.6f\n",
                            phase == MaePhase::PatchWise ? 1 : 2,
                            static_cast<unsigned long long>(seed), initial, final_loss);
                return false;
            }
        }

        // moco: a small multi-slide corpus so queue negatives come from other
        // slides; the queue is filled to capacity before the first
        // measurement so both measurements face the same loss floor.
        {
            std::vector<TokenSequence> corpus;
            for (int c = 0; c < 8; ++c) {
                SynthConfig slide = sc;
                slide.seed = seed * 100 + c;
                corpus.push_back(synth_sequence(slide, cfg.k));
            }
            std::mt19937_64 rng(seed);
            MoCoState state;
            state.query_params = init_encoder_params(cfg, "enc", rng);
            state.key_params = state.query_params;
            state.capacity = 64;
            state.tau = 0.2;
            state.sigma = 0.05;
            for (uint64_t warm = 0; warm < 16; ++warm)
                moco_step(state, corpus[warm % corpus.size()], cfg, 0.0, seed * 777 + warm);

            auto eval = [&]() {
                double total = 0.0;
                for (size_t c = 0; c < corpus.size(); ++c)
                    total += moco_forward_loss(state, corpus[c], cfg, 9000 + c, nullptr);
                return total / static_cast<double>(corpus.size());
            };
            const double initial = eval();
            for (int step = 0; step < 500; ++step)
                moco_step(state, corpus[step % corpus.size()], cfg, 0.05, seed * 4242 + step);
            const double final_loss = eval();
            if (!(final_loss < initial)) {
                std::printf("       moco seed %llu: initial %.6f final %.6f\n",
                            static_cast<unsigned long long>(seed), initial, final_loss);
                return false;
            }
        }

        // connector: full-batch alignment descent.
        {
            ResamplerConfig rc;
            rc.query_count = 8;
            rc.in_dim = cfg.model_dim;
            rc.out_dim = cfg.model_dim;
            rc.layers = 1;
            std::mt19937_64 rng(seed);
            ParamSet params = init_resampler_params(rc, rng);
            std::vector<AlignmentSample> corpus;
            for (int s = 0; s < 3; ++s) {
                AlignmentSample sample;
                sample.summaries = Matrix::randn(4 + s, rc.in_dim, 1.0, rng);
                sample.target.resize(rc.out_dim);
                std::uniform_real_distribution<double> u(-0.5, 0.5);
                for (auto& t : sample.target) t = u(rng);
                corpus.push_back(std::move(sample));
            }
            const AlignmentResult res = alignment_train(corpus, rc, std::move(params), 500, 0.05);
            if (!(res.loss_curve.back() < res.loss_curve.front())) {
                std::printf("       connector seed %llu: initial %.6f final %.6f\n",
                            static_cast<unsigned long long>(seed), res.loss_curve.front(),
                            res.loss_curve.back());
                return false;
            }
        }
    }
    return true;
}

// Brute-force best 2-edge cut of the maximum-similarity spanning tree; used
// only below, mirrors the unit-test helper.
std::vector<std::set<int>> brute_cut_partition(const SimilarityGraph& graph) {
    const int n = static_cast<int>(graph.nodes.size());
    std::vector<int> node_of(static_cast<size_t>(graph.H) * graph.W, -1);
    for (int a = 0; a < n; ++a) node_of[graph.nodes[a]] = a;

    std::vector<SimilarityEdge> sorted = graph.edges;
    std::sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) {
        if (x.weight != y.weight) return x.weight > y.weight;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    std::vector<SimilarityEdge> tree;
    for (const auto& e : sorted) {
        const int ra = find(node_of[e.a]), rb = find(node_of[e.b]);
        if (ra != rb) {
            parent[rb] = ra;
            tree.push_back(e);
        }
    }
    if (tree.size() < 2) return {};

    const int m = static_cast<int>(tree.size());
    double best = 1e300;
    std::pair<int, int> pick{0, 1};
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b)
            if (tree[a].weight + tree[b].weight < best) {
                best = tree[a].weight + tree[b].weight;
                pick = {a, b};
            }

    std::vector<std::vector<int>> adj(n);
    for (int e = 0; e < m; ++e) {
        if (e == pick.first || e == pick.second) continue;
        adj[node_of[tree[e].a]].push_back(node_of[tree[e].b]);
        adj[node_of[tree[e].b]].push_back(node_of[tree[e].a]);
    }
    std::vector<int> comp(n, -1);
    int nc = 0;
    for (int s = 0; s < n; ++s) {
        if (comp[s] != -1) continue;
        std::vector<int> stack = {s};
        comp[s] = nc;
        while (!stack.empty()) {
            const int x = stack.back();
            stack.pop_back();
            for (int y : adj[x])
                if (comp[y] == -1) {
                    comp[y] = nc;
                    stack.push_back(y);
                }
        }
        ++nc;
    }
    std::vector<std::set<int>> out(nc);
    for (int a = 0; a < n; ++a) out[comp[a]].insert(graph.nodes[a]);
    return out;
}

bool criterion_roi() {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const int H = 1 + static_cast<int>(rng() % 3);
        const int W = std::max(2, 1 + static_cast<int>(rng() % (12 / H)));
        FeatureGrid g(H, W, 4);
        for (auto& v : g.features) v = u(rng);
        const SimilarityGraph graph = build_similarity_graph(g);
        const auto want = brute_cut_partition(graph);
        if (want.empty()) continue;

        const RegionProposal prop = mst_cluster(graph, 3);
        std::set<std::set<int>> got_set, want_set;
        for (const auto& r : prop.regions) got_set.insert(std::set<int>(r.begin(), r.end()));
        for (const auto& r : want) want_set.insert(r);
        if (got_set != want_set) return false;
    }

    // Planted-blob recovery at low noise.
    SynthConfig sc;
    sc.noise = 0.02;
    int good = 0, usable = 0;
    for (uint64_t seed : {2ull, 3ull, 5ull, 8ull, 13ull}) {
        sc.seed = seed;
        const FeatureGrid grid = synth_grid(sc);
        const std::vector<int> labels = synth_labels(sc);
        if (std::set<int>(labels.begin(), labels.end()).size() != 3) continue;
        const RegionProposal prop = mst_cluster(build_similarity_graph(grid), 3);
        if (prop.regions.size() != 3) continue;
        ++usable;
        int agree = 0;
        for (const auto& region : prop.regions) {
            std::map<int, int> votes;
            for (int cell : region) ++votes[labels[cell]];
            int top = 0;
            for (const auto& [lbl, n] : votes) top = std::max(top, n);
            agree += top;
        }
        if (static_cast<double>(agree) / (sc.H * sc.W) >= 0.9) ++good;
    }
    return usable > 0 && good == usable;
}

bool criterion_formats() {
    std::mt19937_64 rng(37);
    auto slurp = [](const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        return std::vector<char>(std::istreambuf_iterator<char>(is),
                                 std::istreambuf_iterator<char>());
    };
    const std::string p1 = "/tmp/topopack_accept_1.bin";
    const std::string p2 = "/tmp/topopack_accept_2.bin";
    for (int trial = 0; trial < 50; ++trial) {
        FeatureGrid g(1 + static_cast<int>(rng() % 6), 1 + static_cast<int>(rng() % 6),
                      1 + static_cast<int>(rng() % 5));
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        for (auto& v : g.features) v = u(rng);
        for (auto&& b : g.valid)
            if (rng() % 4 == 0) b = false;
        write_fgrid(p1, g);
        write_fgrid(p2, read_fgrid(p1));
        if (slurp(p1) != slurp(p2)) return false;

        ParamSet params;
        for (int t = 0; t < 1 + static_cast<int>(rng() % 5); ++t)
            params["t" + std::to_string(t)] = Matrix::randn(
                1 + static_cast<int>(rng() % 4), 1 + static_cast<int>(rng() % 4), 1.0, rng);
        write_checkpoint(p1, params);
        write_checkpoint(p2, read_checkpoint(p1));
        if (slurp(p1) != slurp(p2)) return false;
    }
    std::remove(p1.c_str());
    std::remove(p2.c_str());
    return true;
}

}  // namespace

int main() {
    run("sparsity-closed-form", criterion_sparsity);
    run("oracle-equivalence", criterion_oracle);
    run("mask-rule-fidelity", criterion_mask_rules);
    run("gradient-correctness", criterion_gradients);
    run("curriculum-mask-laws", criterion_curriculum);
    run("infonce-analytics", criterion_infonce);
    run("connector-contract", criterion_connector);
    run("training-loop-sanity", criterion_training);
    run("roi-reconstruction", criterion_roi);
    run("format-round-trip", criterion_formats);
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
