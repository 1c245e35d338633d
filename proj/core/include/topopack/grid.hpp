#pragma once

#include <string>
#include <utility>
#include <vector>

#include "topopack/matrix.hpp"

namespace topopack {

// H x W grid of D-dimensional patch embeddings plus a validity bitmap.
// Padded cells (valid = false) carry zero features.
struct FeatureGrid {
    int H = 0;
    int W = 0;
    int D = 0;
    std::vector<double> features;  // H*W*D, row-major by (i, j, d)
    std::vector<bool> valid;       // H*W, row-major

    FeatureGrid() = default;
    FeatureGrid(int h, int w, int d)
        : H(h), W(w), D(d),
          features(static_cast<size_t>(h) * w * d, 0.0),
          valid(static_cast<size_t>(h) * w, true) {}

    size_t cell_index(int i, int j) const { return static_cast<size_t>(i) * W + j; }
    double* cell(int i, int j) { return features.data() + cell_index(i, j) * D; }
    const double* cell(int i, int j) const { return features.data() + cell_index(i, j) * D; }
    bool is_valid(int i, int j) const { return valid[cell_index(i, j)]; }

    int valid_count() const {
        int n = 0;
        for (bool b : valid) n += b ? 1 : 0;
        return n;
    }
};

// Deterministic mapping between grid coordinates, pack indices, and
// token-sequence positions. Token 0 is the global token; pack m occupies
// [1 + m*(k^2+1), (m+1)*(k^2+1)] with the summary token last in its pack.
// Packs are row-major over the pack grid.
struct PackLayout {
    int H = 0;
    int W = 0;
    int k = 0;
    int pack_rows = 0;
    int pack_cols = 0;
    int packs = 0;            // M
    int tokens_per_pack = 0;  // k^2 + 1
    int seq_len = 0;          // N = 1 + M*(k^2+1)
};

enum class TokenRole { Global, Patch, Summary, PaddedPatch };

// Rounds H and W up to multiples of k; new cells are zero-featured with
// valid = false, original cells unchanged.
FeatureGrid pad_grid(const FeatureGrid& grid, int k);

// Requires H mod k = 0 and W mod k = 0 (pad first otherwise).
PackLayout build_layout(int H, int W, int k);

int coord_to_token(const PackLayout& layout, int i, int j);
std::pair<int, int> token_to_coord(const PackLayout& layout, int t);

int summary_token_index(const PackLayout& layout, int m);
inline int global_token_index(const PackLayout&) { return 0; }

// Pack index of a patch/summary token; -1 for the global token.
int token_pack(const PackLayout& layout, int t);

// Role is a pure function of index and layout; the optional validity bitmap
// (H*W, row-major) distinguishes Patch from PaddedPatch.
TokenRole token_role(const PackLayout& layout, int t, const std::vector<bool>* valid = nullptr);

struct TokenSequence {
    PackLayout layout;
    Matrix embeddings;  // N x D
    std::vector<TokenRole> roles;
};

// Places grid features, per-pack summaries (M x D) and the global vector
// into sequence positions per the layout, tagging roles.
TokenSequence assemble_sequence(const FeatureGrid& grid, const PackLayout& layout,
                                const Matrix& summaries, const std::vector<double>& global_vec);

// FGRID binary format, bit-exact: "FGRD", version u32=1, H, W, D (u32 LE),
// H*W*D binary32 LE row-major by (i, j, d), then ceil(H*W/8) bitmap bytes,
// LSB-first within each byte, cells row-major, final byte zero-padded.
void write_fgrid(const std::string& path, const FeatureGrid& grid);
FeatureGrid read_fgrid(const std::string& path);

}  // namespace topopack
