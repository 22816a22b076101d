#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "otdg/tensor.hpp"

namespace otdg::diff {

// Error raised by graph construction, evaluation or backward, carrying the
// offending node index so callers can locate the bad op.
struct GraphError : std::runtime_error {
    int node = -1;
    GraphError(int node_idx, const std::string& msg)
        : std::runtime_error("node " + std::to_string(node_idx) + ": " + msg), node(node_idx) {}
    explicit GraphError(const std::string& msg) : std::runtime_error(msg) {}
};

using NodeId = int;

enum class Op : uint8_t {
    Leaf,         // bound at evaluation time by id; requires_grad selects Parameter vs plain input
    Const,        // value baked into the graph
    Add,          // broadcasting over rows/cols where one side has extent 1
    Sub,
    Mul,          // elementwise, same broadcasting as Add
    MatMul,
    Exp,
    Log,
    Relu,
    SoftmaxRows,
    SumAll,       // -> 1x1
    SumRows,      // n x m -> n x 1
    SumCols,      // n x m -> 1 x m
    LogSumExpRows,// n x m -> n x 1, max-shifted
    SliceRows,
    ConcatRows,
    Transpose,
    Scale,        // multiply by a compile-time scalar
    Detach,       // identity forward, zero gradient backward
};

const char* op_name(Op op);

struct Node {
    Op op = Op::Const;
    int rows = 0, cols = 0;
    NodeId a = -1, b = -1;
    std::vector<NodeId> parents;  // ConcatRows only
    double scalar = 0.0;          // Scale only
    int begin = 0, end = 0;       // SliceRows only
    Tensor value;                 // Const only
    std::string leaf_id;          // Leaf only
    bool requires_grad = false;   // Leaf only
};

using Bindings = std::unordered_map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

// Immutable-after-construction computation graph over dense 2-D tensors.
// Shapes are fixed at build time; every builder validates its operands and
// throws GraphError naming the node on mismatch. Graphs are safe to share
// across threads once built; all evaluation state lives in Evaluation.
class Graph {
 public:
    NodeId leaf(const std::string& id, int rows, int cols, bool requires_grad = true);
    NodeId constant(Tensor v);
    NodeId constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId relu(NodeId a);
    NodeId softmax_rows(NodeId a);
    NodeId sum_all(NodeId a);
    NodeId sum_rows(NodeId a);
    NodeId sum_cols(NodeId a);
    NodeId logsumexp_rows(NodeId a);
    NodeId slice_rows(NodeId a, int begin, int end);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId transpose(NodeId a);
    NodeId scale(NodeId a, double c);
    NodeId detach(NodeId a);
    NodeId neg(NodeId a) { return scale(a, -1.0); }

    int size() const { return static_cast<int>(nodes_.size()); }
    const Node& node(NodeId i) const { return nodes_[static_cast<size_t>(i)]; }
    std::pair<int, int> shape(NodeId i) const {
        const Node& n = nodes_[static_cast<size_t>(i)];
        return {n.rows, n.cols};
    }
    const std::vector<std::string>& param_ids() const { return param_ids_; }

 private:
    NodeId push(Node n);
    void check(NodeId i) const;

    std::vector<Node> nodes_;
    std::vector<std::string> param_ids_;                  // requires_grad leaves, in creation order
    std::unordered_map<std::string, NodeId> leaf_index_;  // enforces unique ids
};

// Per-call forward/backward state over an immutable Graph. Forward values
// are computed once and shared by value() and every backward() call.
class Evaluation {
 public:
    Evaluation(const Graph& g, const Bindings& bindings);

    const Tensor& value(NodeId id);
    // Gradient of the scalar node `out` with respect to every requires_grad
    // leaf. Leaves that do not reach `out` get zero tensors, never an error.
    GradMap backward(NodeId out);

 private:
    void forward_to(NodeId id);

    const Graph& g_;
    const Bindings& bindings_;
    std::vector<Tensor> values_;
    std::vector<bool> computed_;
};

// One-shot helpers matching the graph-level operations.
Tensor evaluate(const Graph& g, NodeId out, const Bindings& bindings);
GradMap backward(const Graph& g, NodeId out, const Bindings& bindings);

// Max over coordinates of |central difference - AD gradient| / (|AD| + 1e-8)
// for the scalar node `out` with respect to leaf `leaf_id`.
double finite_diff_check(const Graph& g, NodeId out, const Bindings& bindings,
                         const std::string& leaf_id, double step = 1e-5);

}  // namespace otdg::diff
