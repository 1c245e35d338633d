#pragma once

#include <functional>
#include <vector>

#include "topopack/matrix.hpp"
#include "topopack/topomask.hpp"

namespace topopack {

// Reverse-mode tape over a fixed primitive set (matmul, add, elementwise,
// masked attention, layer_norm, gather). Nodes are matrices; backward walks
// the tape in reverse creation order, so gradient accumulation is bitwise
// deterministic.
class Tape {
public:
    using NodeId = int;

    NodeId leaf(Matrix value, bool requires_grad = false);

    const Matrix& value(NodeId id) const { return nodes_[id].value; }
    const Matrix& grad(NodeId id) const { return nodes_[id].grad; }

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId hadamard(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    // Adds a 1 x C bias row to every row of a.
    NodeId add_row_broadcast(NodeId a, NodeId bias);
    NodeId gelu(NodeId a);
    // Per-row layer norm with 1 x C gain and bias, population variance.
    NodeId layer_norm_rows(NodeId a, NodeId gain, NodeId bias, double eps);
    NodeId row_gather(NodeId a, std::vector<int> rows);
    NodeId slice_cols(NodeId a, int start, int len);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId row_l2_normalize(NodeId a);
    NodeId sum_all(NodeId a);   // 1 x 1
    NodeId mean_all(NodeId a);  // 1 x 1
    // Softmax cross-entropy of a 1 x K logit row against label 0.
    NodeId cross_entropy_label0(NodeId logits);
    // Fused block-sparse attention: rows of q attend to descriptor-allowed
    // keys, scores scaled by `scl`. Touches only allowed entries.
    NodeId sparse_attention(NodeId q, NodeId k, NodeId v, const TopoMaskDescriptor* desc,
                            double scl);
    // Dense cross-attention: every query row attends to all key rows.
    NodeId dense_attention(NodeId q, NodeId k, NodeId v, double scl);

    // Seeds d(loss)/d(loss) = 1 at a 1 x 1 node and accumulates gradients
    // into every requires-grad leaf reachable from it.
    void backward(NodeId loss);

    double scalar(NodeId id) const { return nodes_[id].value.at(0, 0); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        std::function<void()> back;  // empty for leaves
    };

    NodeId push(Matrix value, bool requires_grad, std::function<void()> back);
    Matrix& grad_ref(NodeId id) { return nodes_[id].grad; }
    bool needs(NodeId id) const { return nodes_[id].requires_grad; }

    std::vector<Node> nodes_;
};

// Instrumentation: score evaluations performed by attention kernels since the
// last reset (tape and non-tape paths both count).
long long attention_score_evals();
void reset_attention_score_evals();
void add_attention_score_evals(long long n);

}  // namespace topopack
