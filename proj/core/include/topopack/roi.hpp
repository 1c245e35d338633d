#pragma once

#include <utility>
#include <vector>

#include "topopack/grid.hpp"

namespace topopack {

struct SimilarityEdge {
    int a;  // cell index, row-major
    int b;
    double weight;  // cosine similarity in [-1, 1]
};

// Nodes are valid cells, edges the 4-neighborhood pairs among them.
// Zero-norm features are excluded (their cells carry no edges).
struct SimilarityGraph {
    int H = 0;
    int W = 0;
    std::vector<int> nodes;            // cell indices
    std::vector<SimilarityEdge> edges; // a < b
};

struct RegionProposal {
    std::vector<std::vector<int>> regions;           // disjoint cell-index sets
    std::vector<std::pair<double, double>> centroids;
    std::vector<double> mean_internal_similarity;
    bool degraded = false;  // fewer cells/components than requested regions
};

SimilarityGraph build_similarity_graph(const FeatureGrid& grid);

// Maximum-similarity spanning forest (MST on distance 1 - cos), then removes
// the (target - 1) lowest-similarity tree edges; ties broken by lexicographic
// edge endpoint order. Components become the candidate regions.
RegionProposal mst_cluster(const SimilarityGraph& graph, int target_regions = 3);

// Farthest-point sampling in cosine-distance feature space: the medoid first,
// then two greedy max-min picks. Lexicographic tie-break on cell index.
std::vector<std::pair<int, int>> triangular_seeds(const FeatureGrid& grid);

}  // namespace topopack
