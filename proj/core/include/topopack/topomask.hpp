#pragma once

#include <cstdint>
#include <vector>

#include "topopack/grid.hpp"

namespace topopack {

enum class MaskRule { GlobalSink, IntraPack, Aggregation, SummaryLevel };

// One rectangular (index-list) group of allowed entries, tagged by the rule
// that admits it. Blocks are pairwise disjoint in (query, key) space.
struct MaskBlock {
    MaskRule rule;
    std::vector<int> query_rows;
    std::vector<int> key_cols;
};

// Eq.-style hierarchical mask: explicit block list plus a CSR expansion with
// padding overrides applied, used by the sparse kernel.
struct TopoMaskDescriptor {
    PackLayout layout;
    std::vector<MaskBlock> blocks;
    std::vector<std::vector<int>> row_keys;  // allowed keys per query row, sorted ascending
};

// The four interaction rules, ignoring padding:
//   allowed iff j is the global token, or i and j are patches of the same
//   pack, or i is the summary of j's pack, or both are summaries.
bool mask_entry(const PackLayout& layout, int i, int j);

// Padding-aware variant (valid is the H*W cell bitmap): padded keys are
// blocked for every query; a padded query row keeps only the global column.
bool mask_entry(const PackLayout& layout, const std::vector<bool>& valid, int i, int j);

// Block list: one N x 1 global column, M intra-pack k^2 x k^2 blocks,
// M aggregation 1 x k^2 blocks, one M x M summary-summary block.
TopoMaskDescriptor build_descriptor(const PackLayout& layout,
                                    const std::vector<bool>* valid = nullptr);

// Closed forms, no padding: allowed = M(k^2+1)^2 + M^2 + 1, over N^2 dense.
long long allowed_count(long long M, long long k);
double sparsity_ratio(long long M, long long k);

struct FlopEstimate {
    long long sparse_flops;
    long long dense_flops;
    double ratio;
};

// 4*d flops per touched (query, key) entry for score + value aggregation.
FlopEstimate flop_estimate(const PackLayout& layout, int d);

}  // namespace topopack
