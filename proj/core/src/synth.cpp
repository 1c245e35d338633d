#include "topopack/synth.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace topopack {

namespace {

struct Centers {
    std::vector<std::pair<double, double>> pos;
    std::vector<std::vector<double>> proto;
};

Centers synth_centers(const SynthConfig& cfg, std::mt19937_64& rng) {
    Centers c;
    std::uniform_real_distribution<double> ui(0.0, 1.0);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (int b = 0; b < cfg.blobs; ++b) {
        c.pos.push_back({ui(rng) * cfg.H, ui(rng) * cfg.W});
        std::vector<double> p(cfg.D);
        double n2 = 0.0;
        for (auto& v : p) {
            v = unit(rng);
            n2 += v * v;
        }
        for (auto& v : p) v /= std::sqrt(n2);  // unit prototypes keep blobs separable
        c.proto.push_back(std::move(p));
    }
    return c;
}

int nearest_center(const Centers& c, int i, int j) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t b = 0; b < c.pos.size(); ++b) {
        const double di = i + 0.5 - c.pos[b].first;
        const double dj = j + 0.5 - c.pos[b].second;
        const double d = di * di + dj * dj;
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(b);
        }
    }
    return best;
}

}  // namespace

FeatureGrid synth_grid(const SynthConfig& cfg) {
    if (cfg.H < 1 || cfg.W < 1 || cfg.D < 1 || cfg.blobs < 1)
        throw std::invalid_argument("synth_grid: bad config");
    std::mt19937_64 rng(cfg.seed);
    const Centers centers = synth_centers(cfg, rng);

    FeatureGrid grid(cfg.H, cfg.W, cfg.D);
    std::normal_distribution<double> noise(0.0, cfg.noise);
    for (int i = 0; i < cfg.H; ++i) {
        for (int j = 0; j < cfg.W; ++j) {
            const auto& proto = centers.proto[nearest_center(centers, i, j)];
            double* f = grid.cell(i, j);
            for (int d = 0; d < cfg.D; ++d) f[d] = proto[d] + noise(rng);
        }
    }
    return grid;
}

std::vector<int> synth_labels(const SynthConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    const Centers centers = synth_centers(cfg, rng);
    std::vector<int> labels(static_cast<size_t>(cfg.H) * cfg.W);
    for (int i = 0; i < cfg.H; ++i)
        for (int j = 0; j < cfg.W; ++j)
            labels[static_cast<size_t>(i) * cfg.W + j] = nearest_center(centers, i, j);
    return labels;
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
    if (!is) throw std::runtime_error("tpck: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("tpck: truncated tensor data");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const ParamSet& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("tpck: cannot open for write: " + path);
    os.write("TPCK", 4);
    put_u32(os, 1u);
    put_u32(os, static_cast<uint32_t>(params.tensors.size()));
    for (const auto& [name, t] : params.tensors) {  // std::map keeps names sorted
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.rows));
        put_u32(os, static_cast<uint32_t>(t.cols));
        for (double v : t.data) put_f64(os, v);
    }
    if (!os) throw std::runtime_error("tpck: write failed: " + path);
}

ParamSet read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("tpck: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TPCK", 4) != 0) throw std::runtime_error("tpck: bad magic");
    if (get_u32(is) != 1) throw std::runtime_error("tpck: unsupported version");

    ParamSet params;
    const uint32_t count = get_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("tpck: truncated name");
        const uint32_t rows = get_u32(is);
        const uint32_t cols = get_u32(is);
        Matrix t(static_cast<int>(rows), static_cast<int>(cols));
        for (auto& v : t.data) v = get_f64(is);
        params.tensors[name] = std::move(t);
    }
    return params;
}

}  // namespace topopack
