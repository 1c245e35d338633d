#include "topopack/roi.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace topopack {

namespace {

double cell_norm(const FeatureGrid& grid, int i, int j) {
    const double* f = grid.cell(i, j);
    double n2 = 0.0;
    for (int d = 0; d < grid.D; ++d) n2 += f[d] * f[d];
    return std::sqrt(n2);
}

double cosine(const double* a, const double* b, int d, double na, double nb) {
    return dot(a, b, d) / (na * nb);
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

}  // namespace

SimilarityGraph build_similarity_graph(const FeatureGrid& grid) {
    SimilarityGraph g;
    g.H = grid.H;
    g.W = grid.W;

    std::vector<double> norms(static_cast<size_t>(grid.H) * grid.W, 0.0);
    int skipped = 0;
    for (int i = 0; i < grid.H; ++i) {
        for (int j = 0; j < grid.W; ++j) {
            if (!grid.is_valid(i, j)) continue;
            const double n = cell_norm(grid, i, j);
            if (n == 0.0) {
                ++skipped;
                continue;
            }
            norms[grid.cell_index(i, j)] = n;
            g.nodes.push_back(static_cast<int>(grid.cell_index(i, j)));
        }
    }
    if (skipped > 0)
        std::cerr << "warning: excluded " << skipped << " zero-norm cells from similarity graph\n";
    if (g.nodes.empty()) throw std::invalid_argument("build_similarity_graph: no usable cells");

    for (int i = 0; i < grid.H; ++i) {
        for (int j = 0; j < grid.W; ++j) {
            const size_t a = grid.cell_index(i, j);
            if (norms[a] == 0.0) continue;
            // Right and down neighbors cover every 4-neighborhood pair once.
            if (j + 1 < grid.W && norms[a + 1] != 0.0)
                g.edges.push_back({static_cast<int>(a), static_cast<int>(a + 1),
                                   cosine(grid.cell(i, j), grid.cell(i, j + 1), grid.D, norms[a],
                                          norms[a + 1])});
            if (i + 1 < grid.H && norms[a + grid.W] != 0.0)
                g.edges.push_back({static_cast<int>(a), static_cast<int>(a + grid.W),
                                   cosine(grid.cell(i, j), grid.cell(i + 1, j), grid.D, norms[a],
                                          norms[a + grid.W])});
        }
    }
    return g;
}

RegionProposal mst_cluster(const SimilarityGraph& graph, int target_regions) {
    if (target_regions < 1) throw std::invalid_argument("mst_cluster: target must be >= 1");
    RegionProposal prop;
    const int n = static_cast<int>(graph.nodes.size());

    if (n < target_regions) {
        std::cerr << "warning: fewer cells than target regions, one region per cell\n";
        prop.degraded = true;
    }

    std::vector<int> node_of(static_cast<size_t>(graph.H) * graph.W, -1);
    for (int a = 0; a < n; ++a) node_of[graph.nodes[a]] = a;

    // Maximum-similarity spanning forest via Kruskal; lexicographic tie-break.
    std::vector<SimilarityEdge> sorted = graph.edges;
    std::sort(sorted.begin(), sorted.end(), [](const SimilarityEdge& x, const SimilarityEdge& y) {
        if (x.weight != y.weight) return x.weight > y.weight;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    UnionFind uf(n);
    std::vector<SimilarityEdge> tree;
    for (const auto& e : sorted)
        if (uf.unite(node_of[e.a], node_of[e.b])) tree.push_back(e);

    const int components = n - static_cast<int>(tree.size());
    const int cuts = std::max(0, std::min(target_regions - components, static_cast<int>(tree.size())));

    // Cut the lowest-similarity tree edges (lexicographic tie-break).
    std::vector<SimilarityEdge> kept = tree;
    std::sort(kept.begin(), kept.end(), [](const SimilarityEdge& x, const SimilarityEdge& y) {
        if (x.weight != y.weight) return x.weight < y.weight;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    kept.erase(kept.begin(), kept.begin() + cuts);

    UnionFind regions(n);
    for (const auto& e : kept) regions.unite(node_of[e.a], node_of[e.b]);

    std::vector<std::vector<int>> groups(n);
    for (int a = 0; a < n; ++a) groups[regions.find(a)].push_back(graph.nodes[a]);
    for (auto& g : groups) {
        if (g.empty()) continue;
        std::sort(g.begin(), g.end());
        prop.regions.push_back(std::move(g));
    }
    std::sort(prop.regions.begin(), prop.regions.end(),
              [](const auto& x, const auto& y) { return x.front() < y.front(); });

    for (const auto& region : prop.regions) {
        double ci = 0.0, cj = 0.0;
        for (int cell : region) {
            ci += cell / graph.W;
            cj += cell % graph.W;
        }
        prop.centroids.push_back({ci / region.size(), cj / region.size()});

        double sim = 0.0;
        int m = 0;
        for (const auto& e : graph.edges) {
            const bool ina = std::binary_search(region.begin(), region.end(), e.a);
            const bool inb = std::binary_search(region.begin(), region.end(), e.b);
            if (ina && inb) {
                sim += e.weight;
                ++m;
            }
        }
        prop.mean_internal_similarity.push_back(m > 0 ? sim / m : 1.0);
    }
    return prop;
}

std::vector<std::pair<int, int>> triangular_seeds(const FeatureGrid& grid) {
    std::vector<int> cells;
    std::vector<double> norms;
    for (int i = 0; i < grid.H; ++i) {
        for (int j = 0; j < grid.W; ++j) {
            if (!grid.is_valid(i, j)) continue;
            const double nrm = cell_norm(grid, i, j);
            if (nrm == 0.0) continue;
            cells.push_back(static_cast<int>(grid.cell_index(i, j)));
            norms.push_back(nrm);
        }
    }
    const int n = static_cast<int>(cells.size());
    if (n < 3) throw std::invalid_argument("triangular_seeds: need at least 3 usable cells");

    auto cdist = [&](int a, int b) {
        const int ca = cells[a], cb = cells[b];
        return 1.0 - cosine(grid.features.data() + static_cast<size_t>(ca) * grid.D,
                            grid.features.data() + static_cast<size_t>(cb) * grid.D, grid.D,
                            norms[a], norms[b]);
    };

    // Seed 1: medoid, min total cosine distance.
    int medoid = 0;
    double best_total = std::numeric_limits<double>::infinity();
    for (int a = 0; a < n; ++a) {
        double total = 0.0;
        for (int b = 0; b < n; ++b)
            if (b != a) total += cdist(a, b);
        if (total < best_total) {
            best_total = total;
            medoid = a;
        }
    }

    std::vector<int> chosen = {medoid};
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    for (int pick = 0; pick < 2; ++pick) {
        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < n; ++a) {
            if (std::find(chosen.begin(), chosen.end(), a) != chosen.end()) continue;
            min_dist[a] = std::min(min_dist[a], cdist(a, chosen.back()));
            if (min_dist[a] > best_score) {
                best_score = min_dist[a];
                best = a;
            }
        }
        chosen.push_back(best);
    }

    std::vector<std::pair<int, int>> seeds;
    for (int a : chosen) seeds.push_back({cells[a] / grid.W, cells[a] % grid.W});
    return seeds;
}

}  // namespace topopack
