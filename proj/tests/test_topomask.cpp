#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "topopack/topomask.hpp"

using namespace topopack;

namespace {

std::set<std::pair<int, int>> expand(const TopoMaskDescriptor& desc) {
    std::set<std::pair<int, int>> entries;
    for (int i = 0; i < desc.layout.seq_len; ++i)
        for (int j : desc.row_keys[i]) entries.insert({i, j});
    return entries;
}

}  // namespace

TEST_CASE("mask_entry rule examples, k=3 M=2") {
    const PackLayout l = build_layout(3, 6, 3);
    REQUIRE(l.seq_len == 21);

    CHECK(mask_entry(l, 5, 0));    // Global Sink
    CHECK(mask_entry(l, 3, 7));    // Intra-Pack Dense
    CHECK(mask_entry(l, 10, 4));   // Aggregation
    CHECK(mask_entry(l, 10, 20));  // Summary-Level Interaction
    CHECK_FALSE(mask_entry(l, 3, 10));  // Patch -> Summary is blocked
    CHECK_FALSE(mask_entry(l, 2, 13));  // cross-pack patches
    CHECK_FALSE(mask_entry(l, 0, 5));   // global as query sees only itself
    CHECK(mask_entry(l, 0, 0));
}

TEST_CASE("descriptor expansion matches brute force and stays disjoint") {
    for (auto [H, W, k] : {std::tuple{2, 2, 2}, {3, 6, 3}, {6, 6, 3}, {4, 4, 2}, {6, 9, 3}}) {
        const PackLayout l = build_layout(H, W, k);
        const TopoMaskDescriptor desc = build_descriptor(l);

        std::set<std::pair<int, int>> brute;
        for (int i = 0; i < l.seq_len; ++i)
            for (int j = 0; j < l.seq_len; ++j)
                if (mask_entry(l, i, j)) brute.insert({i, j});
        CHECK(expand(desc) == brute);
        CHECK(static_cast<long long>(brute.size()) == allowed_count(l.packs, l.k));

        // Block list is pairwise disjoint.
        size_t total = 0;
        for (const auto& b : desc.blocks) total += b.query_rows.size() * b.key_cols.size();
        CHECK(total == brute.size());

        // Every row has the global column.
        for (int i = 0; i < l.seq_len; ++i) CHECK(desc.row_keys[i].front() == 0);
    }
}

TEST_CASE("mask asymmetry: Summary->Patch allowed, Patch->Summary blocked") {
    const PackLayout l = build_layout(6, 6, 3);  // N = 41
    for (int m = 0; m < l.packs; ++m) {
        const int s = summary_token_index(l, m);
        for (int o = 0; o < l.k * l.k; ++o) {
            const int p = 1 + m * l.tokens_per_pack + o;
            CHECK(mask_entry(l, s, p));
            CHECK_FALSE(mask_entry(l, p, s));
        }
    }
}

TEST_CASE("allowed_count and sparsity_ratio") {
    CHECK(allowed_count(1, 2) == 27);
    CHECK(sparsity_ratio(1, 2) == doctest::Approx(0.75));
    CHECK(allowed_count(4, 3) == 417);
    CHECK(sparsity_ratio(4, 3) == doctest::Approx(417.0 / 1681.0));
    CHECK(allowed_count(1000, 3) == 1100001);
    CHECK(sparsity_ratio(1000, 3) == doctest::Approx(0.0110).epsilon(1e-3));

    // Monotone decreasing in M at k=3, converging toward 1/(k^2+1)^2 = 1%.
    double prev = 1.0;
    for (long long M : {1, 2, 5, 10, 50, 100, 500, 1000, 5000}) {
        const double r = sparsity_ratio(M, 3);
        CHECK(r < prev);
        prev = r;
    }
    CHECK(sparsity_ratio(500, 3) == doctest::Approx(0.0120).epsilon(1e-2));
    CHECK(sparsity_ratio(5000, 3) == doctest::Approx(0.0102).epsilon(1e-2));
}

TEST_CASE("flop_estimate") {
    const PackLayout l = build_layout(2, 2, 2);
    auto e = flop_estimate(l, 1);
    CHECK(e.sparse_flops == 108);
    CHECK(e.dense_flops == 144);

    // Ratio independent of d.
    for (int d : {1, 3, 16, 64}) {
        auto ed = flop_estimate(l, d);
        CHECK(ed.ratio == doctest::Approx(sparsity_ratio(1, 2)).epsilon(1e-12));
    }
}

TEST_CASE("padding overrides") {
    const PackLayout l = build_layout(6, 6, 3);
    // Invalidate the whole bottom-right 3x3 pack plus one cell of pack 0.
    std::vector<bool> valid(36, true);
    for (int i = 3; i < 6; ++i)
        for (int j = 3; j < 6; ++j) valid[i * 6 + j] = false;
    valid[0] = false;

    const TopoMaskDescriptor desc = build_descriptor(l, &valid);
    std::set<std::pair<int, int>> brute;
    for (int i = 0; i < l.seq_len; ++i)
        for (int j = 0; j < l.seq_len; ++j)
            if (mask_entry(l, valid, i, j)) brute.insert({i, j});
    CHECK(expand(desc) == brute);

    for (int i = 0; i < l.seq_len; ++i) {
        CHECK_FALSE(desc.row_keys[i].empty());
        if (token_role(l, i, &valid) == TokenRole::PaddedPatch) {
            CHECK(desc.row_keys[i] == std::vector<int>{0});
        } else {
            // Padded keys never appear in live rows (besides column 0).
            for (int j : desc.row_keys[i])
                CHECK((j == 0 || token_role(l, j, &valid) != TokenRole::PaddedPatch));
        }
    }
}
