#include "topopack/topomask.hpp"

#include <algorithm>
#include <stdexcept>

namespace topopack {

namespace {

bool is_padded_patch(const PackLayout& layout, const std::vector<bool>& valid, int t) {
    return token_role(layout, t, &valid) == TokenRole::PaddedPatch;
}

}  // namespace

bool mask_entry(const PackLayout& layout, int i, int j) {
    if (i < 0 || i >= layout.seq_len || j < 0 || j >= layout.seq_len)
        throw std::out_of_range("mask_entry: index out of range");

    if (j == 0) return true;  // Global Sink: every row keeps column 0

    const TokenRole ri = token_role(layout, i);
    const TokenRole rj = token_role(layout, j);
    if (ri == TokenRole::Patch && rj == TokenRole::Patch &&
        token_pack(layout, i) == token_pack(layout, j))
        return true;  // Intra-Pack Dense
    if (ri == TokenRole::Summary && rj == TokenRole::Patch &&
        token_pack(layout, i) == token_pack(layout, j))
        return true;  // Aggregation
    if (ri == TokenRole::Summary && rj == TokenRole::Summary)
        return true;  // Summary-Level Interaction
    return false;
}

bool mask_entry(const PackLayout& layout, const std::vector<bool>& valid, int i, int j) {
    if (is_padded_patch(layout, valid, i)) return j == 0;
    if (j != 0 && is_padded_patch(layout, valid, j)) return false;
    return mask_entry(layout, i, j);
}

TopoMaskDescriptor build_descriptor(const PackLayout& layout, const std::vector<bool>* valid) {
    TopoMaskDescriptor desc;
    desc.layout = layout;

    const int N = layout.seq_len;
    const int kk = layout.k * layout.k;

    std::vector<int> all_rows(N);
    for (int i = 0; i < N; ++i) all_rows[i] = i;
    desc.blocks.push_back({MaskRule::GlobalSink, all_rows, {0}});

    std::vector<int> summaries(layout.packs);
    for (int m = 0; m < layout.packs; ++m) {
        std::vector<int> patches(kk);
        for (int o = 0; o < kk; ++o) patches[o] = 1 + m * layout.tokens_per_pack + o;
        const int s = summary_token_index(layout, m);
        summaries[m] = s;
        desc.blocks.push_back({MaskRule::IntraPack, patches, patches});
        desc.blocks.push_back({MaskRule::Aggregation, {s}, patches});
    }
    desc.blocks.push_back({MaskRule::SummaryLevel, summaries, summaries});

    // Expand to CSR, applying padding overrides.
    desc.row_keys.assign(N, {});
    for (const auto& block : desc.blocks)
        for (int qi : block.query_rows)
            for (int kj : block.key_cols) desc.row_keys[qi].push_back(kj);

    if (valid) {
        for (int i = 0; i < N; ++i) {
            if (is_padded_patch(layout, *valid, i)) {
                desc.row_keys[i] = {0};
                continue;
            }
            auto& keys = desc.row_keys[i];
            keys.erase(std::remove_if(keys.begin(), keys.end(),
                                      [&](int j) {
                                          return j != 0 && is_padded_patch(layout, *valid, j);
                                      }),
                       keys.end());
        }
    }
    for (auto& keys : desc.row_keys) std::sort(keys.begin(), keys.end());
    return desc;
}

long long allowed_count(long long M, long long k) {
    if (M < 1 || k < 1) throw std::invalid_argument("allowed_count: M, k must be >= 1");
    const long long tpp = k * k + 1;
    return M * tpp * tpp + M * M + 1;
}

double sparsity_ratio(long long M, long long k) {
    const long long N = 1 + M * (k * k + 1);
    return static_cast<double>(allowed_count(M, k)) / (static_cast<double>(N) * static_cast<double>(N));
}

FlopEstimate flop_estimate(const PackLayout& layout, int d) {
    if (d < 1) throw std::invalid_argument("flop_estimate: d must be >= 1");
    const long long allowed = allowed_count(layout.packs, layout.k);
    const long long N = layout.seq_len;
    FlopEstimate e;
    e.sparse_flops = 4LL * d * allowed;
    e.dense_flops = 4LL * d * N * N;
    e.ratio = static_cast<double>(e.sparse_flops) / static_cast<double>(e.dense_flops);
    return e;
}

}  // namespace topopack
