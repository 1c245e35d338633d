#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topopack/grid.hpp"
#include "topopack/numerics.hpp"

namespace topopack {

struct SynthConfig {
    int H = 12;
    int W = 12;
    int D = 16;
    int blobs = 3;         // planted Gaussian cluster prototypes
    double noise = 0.05;   // per-cell feature noise scale
    uint64_t seed = 0;
};

// Seeded synthetic feature grid: each blob is a spatial disc around a random
// center carrying one cluster prototype; every cell gets the prototype of
// its nearest center plus Gaussian noise.
FeatureGrid synth_grid(const SynthConfig& cfg);

// Blob label per cell (nearest center), for agreement checks.
std::vector<int> synth_labels(const SynthConfig& cfg);

// TPCK checkpoint: magic "TPCK", version u32=1, tensor count u32, then per
// tensor: name length u32, name bytes, rows u32, cols u32, row-major IEEE-754
// binary64 little-endian values. All integers little-endian.
void write_checkpoint(const std::string& path, const ParamSet& params);
ParamSet read_checkpoint(const std::string& path);

}  // namespace topopack
