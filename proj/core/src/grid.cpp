#include "topopack/grid.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace topopack {

FeatureGrid pad_grid(const FeatureGrid& grid, int k) {
    if (k < 1) throw std::invalid_argument("pad_grid: k must be >= 1");
    if (grid.H < 1 || grid.W < 1) throw std::invalid_argument("pad_grid: empty grid");

    const int H = ((grid.H + k - 1) / k) * k;
    const int W = ((grid.W + k - 1) / k) * k;

    FeatureGrid out(H, W, grid.D);
    std::fill(out.valid.begin(), out.valid.end(), false);
    for (int i = 0; i < grid.H; ++i) {
        for (int j = 0; j < grid.W; ++j) {
            std::memcpy(out.cell(i, j), grid.cell(i, j), sizeof(double) * grid.D);
            out.valid[out.cell_index(i, j)] = grid.valid[grid.cell_index(i, j)];
        }
    }
    return out;
}

PackLayout build_layout(int H, int W, int k) {
    if (k < 1 || H < 1 || W < 1) throw std::invalid_argument("build_layout: bad dims");
    if (H % k != 0 || W % k != 0) throw std::invalid_argument("build_layout: pad first");

    PackLayout l;
    l.H = H;
    l.W = W;
    l.k = k;
    l.pack_rows = H / k;
    l.pack_cols = W / k;
    l.packs = l.pack_rows * l.pack_cols;
    l.tokens_per_pack = k * k + 1;
    l.seq_len = 1 + l.packs * l.tokens_per_pack;
    return l;
}

int coord_to_token(const PackLayout& layout, int i, int j) {
    if (i < 0 || i >= layout.H || j < 0 || j >= layout.W)
        throw std::out_of_range("coord_to_token: coordinate out of range");
    const int k = layout.k;
    const int m = (i / k) * layout.pack_cols + (j / k);
    const int offset = (i % k) * k + (j % k);
    return 1 + m * layout.tokens_per_pack + offset;
}

std::pair<int, int> token_to_coord(const PackLayout& layout, int t) {
    if (t < 1 || t >= layout.seq_len) throw std::out_of_range("token_to_coord: not a patch token");
    const int k = layout.k;
    const int m = (t - 1) / layout.tokens_per_pack;
    const int offset = (t - 1) % layout.tokens_per_pack;
    if (offset == k * k) throw std::out_of_range("token_to_coord: summary token has no coordinate");
    const int pi = m / layout.pack_cols;
    const int pj = m % layout.pack_cols;
    return {pi * k + offset / k, pj * k + offset % k};
}

int summary_token_index(const PackLayout& layout, int m) {
    if (m < 0 || m >= layout.packs) throw std::out_of_range("summary_token_index: pack out of range");
    return (m + 1) * layout.tokens_per_pack;
}

int token_pack(const PackLayout& layout, int t) {
    if (t < 0 || t >= layout.seq_len) throw std::out_of_range("token_pack: out of range");
    if (t == 0) return -1;
    return (t - 1) / layout.tokens_per_pack;
}

TokenRole token_role(const PackLayout& layout, int t, const std::vector<bool>* valid) {
    if (t < 0 || t >= layout.seq_len) throw std::out_of_range("token_role: out of range");
    if (t == 0) return TokenRole::Global;
    const int offset = (t - 1) % layout.tokens_per_pack;
    if (offset == layout.k * layout.k) return TokenRole::Summary;
    if (valid) {
        auto [i, j] = token_to_coord(layout, t);
        if (!(*valid)[static_cast<size_t>(i) * layout.W + j]) return TokenRole::PaddedPatch;
    }
    return TokenRole::Patch;
}

TokenSequence assemble_sequence(const FeatureGrid& grid, const PackLayout& layout,
                                const Matrix& summaries, const std::vector<double>& global_vec) {
    if (grid.H != layout.H || grid.W != layout.W)
        throw std::invalid_argument("assemble_sequence: grid/layout mismatch");
    if (summaries.rows != layout.packs || summaries.cols != grid.D)
        throw std::invalid_argument("assemble_sequence: summary shape mismatch");
    if (static_cast<int>(global_vec.size()) != grid.D)
        throw std::invalid_argument("assemble_sequence: global dim mismatch");

    TokenSequence seq;
    seq.layout = layout;
    seq.embeddings = Matrix(layout.seq_len, grid.D);
    seq.roles.resize(layout.seq_len);

    for (int d = 0; d < grid.D; ++d) seq.embeddings.at(0, d) = global_vec[d];
    seq.roles[0] = TokenRole::Global;

    for (int i = 0; i < grid.H; ++i) {
        for (int j = 0; j < grid.W; ++j) {
            const int t = coord_to_token(layout, i, j);
            std::memcpy(seq.embeddings.row_ptr(t), grid.cell(i, j), sizeof(double) * grid.D);
            seq.roles[t] = grid.is_valid(i, j) ? TokenRole::Patch : TokenRole::PaddedPatch;
        }
    }
    for (int m = 0; m < layout.packs; ++m) {
        const int t = summary_token_index(layout, m);
        std::memcpy(seq.embeddings.row_ptr(t), summaries.row_ptr(m), sizeof(double) * grid.D);
        seq.roles[t] = TokenRole::Summary;
    }
    return seq;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("fgrid: truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

float get_f32(std::istream& is) {
    uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void write_fgrid(const std::string& path, const FeatureGrid& grid) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("fgrid: cannot open for write: " + path);

    os.write("FGRD", 4);
    put_u32(os, 1u);
    put_u32(os, static_cast<uint32_t>(grid.H));
    put_u32(os, static_cast<uint32_t>(grid.W));
    put_u32(os, static_cast<uint32_t>(grid.D));
    for (double v : grid.features) put_f32(os, static_cast<float>(v));

    const size_t cells = grid.valid.size();
    for (size_t base = 0; base < cells; base += 8) {
        unsigned char byte = 0;
        for (size_t bit = 0; bit < 8 && base + bit < cells; ++bit)
            if (grid.valid[base + bit]) byte |= static_cast<unsigned char>(1u << bit);
        os.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!os) throw std::runtime_error("fgrid: write failed: " + path);
}

FeatureGrid read_fgrid(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("fgrid: cannot open: " + path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FGRD", 4) != 0) throw std::runtime_error("fgrid: bad magic");
    const uint32_t version = get_u32(is);
    if (version != 1) throw std::runtime_error("fgrid: unsupported version");

    const uint32_t H = get_u32(is);
    const uint32_t W = get_u32(is);
    const uint32_t D = get_u32(is);
    FeatureGrid grid(static_cast<int>(H), static_cast<int>(W), static_cast<int>(D));
    for (auto& v : grid.features) v = static_cast<double>(get_f32(is));

    const size_t cells = grid.valid.size();
    for (size_t base = 0; base < cells; base += 8) {
        unsigned char byte;
        is.read(reinterpret_cast<char*>(&byte), 1);
        if (!is) throw std::runtime_error("fgrid: truncated bitmap");
        for (size_t bit = 0; bit < 8 && base + bit < cells; ++bit)
            grid.valid[base + bit] = (byte >> bit) & 1u;
    }
    return grid;
}

}  // namespace topopack
