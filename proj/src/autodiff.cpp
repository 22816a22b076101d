#include "otdg/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace otdg::diff {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Const: return "const";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::MatMul: return "matmul";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Relu: return "relu";
        case Op::SoftmaxRows: return "softmax_rows";
        case Op::SumAll: return "sum_all";
        case Op::SumRows: return "sum_rows";
        case Op::SumCols: return "sum_cols";
        case Op::LogSumExpRows: return "logsumexp_rows";
        case Op::SliceRows: return "slice_rows";
        case Op::ConcatRows: return "concat_rows";
        case Op::Transpose: return "transpose";
        case Op::Scale: return "scale";
        case Op::Detach: return "detach";
    }
    return "?";
}

namespace {

bool broadcastable(int a, int b) { return a == b || a == 1 || b == 1; }

std::pair<int, int> broadcast_shape(int id, const Node& x, const Node& y, const char* what) {
    if (!broadcastable(x.rows, y.rows) || !broadcastable(x.cols, y.cols))
        throw GraphError(id, std::string(what) + ": incompatible shapes [" + std::to_string(x.rows) + " x " +
                                 std::to_string(x.cols) + "] vs [" + std::to_string(y.rows) + " x " +
                                 std::to_string(y.cols) + "]");
    return {std::max(x.rows, y.rows), std::max(x.cols, y.cols)};
}

// Read a possibly-broadcast operand at logical position (i, j).
inline double bread(const Tensor& t, int i, int j) {
    return t.at(t.rows == 1 ? 0 : i, t.cols == 1 ? 0 : j);
}

// Accumulate grad g (full output shape) into the operand-shaped buffer,
// summing over broadcast dimensions.
void accumulate_reduced(Tensor& dst, const Tensor& g) {
    for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j)
            dst.at(dst.rows == 1 ? 0 : i, dst.cols == 1 ? 0 : j) += g.at(i, j);
}

}  // namespace

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check(NodeId i) const {
    if (i < 0 || i >= size()) throw GraphError(i, "parent index out of range");
}

NodeId Graph::leaf(const std::string& id, int rows, int cols, bool requires_grad) {
    if (leaf_index_.count(id)) throw GraphError("duplicate leaf id '" + id + "'");
    Node n;
    n.op = Op::Leaf;
    n.rows = rows;
    n.cols = cols;
    n.leaf_id = id;
    n.requires_grad = requires_grad;
    NodeId nid = push(std::move(n));
    leaf_index_[id] = nid;
    if (requires_grad) param_ids_.push_back(id);
    return nid;
}

NodeId Graph::constant(Tensor v) {
    Node n;
    n.op = Op::Const;
    n.rows = v.rows;
    n.cols = v.cols;
    n.value = std::move(v);
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
    check(a);
    check(b);
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    auto [r, c] = broadcast_shape(size(), node(a), node(b), "add");
    n.rows = r;
    n.cols = c;
    return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    check(a);
    check(b);
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    auto [r, c] = broadcast_shape(size(), node(a), node(b), "sub");
    n.rows = r;
    n.cols = c;
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check(a);
    check(b);
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    auto [r, c] = broadcast_shape(size(), node(a), node(b), "mul");
    n.rows = r;
    n.cols = c;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    check(a);
    check(b);
    const Node& x = node(a);
    const Node& y = node(b);
    if (x.cols != y.rows)
        throw GraphError(size(), "matmul: inner dimensions disagree [" + std::to_string(x.rows) + " x " +
                                     std::to_string(x.cols) + "] * [" + std::to_string(y.rows) + " x " +
                                     std::to_string(y.cols) + "]");
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.rows = x.rows;
    n.cols = y.cols;
    return push(std::move(n));
}

#define OTDG_UNARY(fn, opv)                  \
    NodeId Graph::fn(NodeId a) {             \
        check(a);                            \
        Node n;                              \
        n.op = opv;                          \
        n.a = a;                             \
        n.rows = node(a).rows;               \
        n.cols = node(a).cols;               \
        return push(std::move(n));           \
    }

OTDG_UNARY(exp, Op::Exp)
OTDG_UNARY(log, Op::Log)
OTDG_UNARY(relu, Op::Relu)
OTDG_UNARY(softmax_rows, Op::SoftmaxRows)
OTDG_UNARY(detach, Op::Detach)
#undef OTDG_UNARY

NodeId Graph::transpose(NodeId a) {
    check(a);
    Node n;
    n.op = Op::Transpose;
    n.a = a;
    n.rows = node(a).cols;
    n.cols = node(a).rows;
    return push(std::move(n));
}

NodeId Graph::sum_all(NodeId a) {
    check(a);
    Node n;
    n.op = Op::SumAll;
    n.a = a;
    n.rows = 1;
    n.cols = 1;
    return push(std::move(n));
}

NodeId Graph::sum_rows(NodeId a) {
    check(a);
    Node n;
    n.op = Op::SumRows;
    n.a = a;
    n.rows = node(a).rows;
    n.cols = 1;
    return push(std::move(n));
}

NodeId Graph::sum_cols(NodeId a) {
    check(a);
    Node n;
    n.op = Op::SumCols;
    n.a = a;
    n.rows = 1;
    n.cols = node(a).cols;
    return push(std::move(n));
}

NodeId Graph::logsumexp_rows(NodeId a) {
    check(a);
    Node n;
    n.op = Op::LogSumExpRows;
    n.a = a;
    n.rows = node(a).rows;
    n.cols = 1;
    return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId a, int begin, int end) {
    check(a);
    const Node& x = node(a);
    if (begin < 0 || end > x.rows || begin >= end)
        throw GraphError(size(), "slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                     ") invalid for " + std::to_string(x.rows) + " rows");
    Node n;
    n.op = Op::SliceRows;
    n.a = a;
    n.begin = begin;
    n.end = end;
    n.rows = end - begin;
    n.cols = x.cols;
    return push(std::move(n));
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw GraphError(size(), "concat_rows: no operands");
    int cols = node(parts[0]).cols;
    int rows = 0;
    for (NodeId p : parts) {
        check(p);
        if (node(p).cols != cols) throw GraphError(size(), "concat_rows: column counts disagree");
        rows += node(p).rows;
    }
    Node n;
    n.op = Op::ConcatRows;
    n.parents = parts;
    n.rows = rows;
    n.cols = cols;
    return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
    check(a);
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.scalar = c;
    n.rows = node(a).rows;
    n.cols = node(a).cols;
    return push(std::move(n));
}

// transpose needs its own shape rule; fix up what the macro produced.
// (kept out of the macro for clarity)

Evaluation::Evaluation(const Graph& g, const Bindings& bindings)
    : g_(g), bindings_(bindings), values_(static_cast<size_t>(g.size())), computed_(static_cast<size_t>(g.size()), false) {}

const Tensor& Evaluation::value(NodeId id) {
    forward_to(id);
    return values_[static_cast<size_t>(id)];
}

void Evaluation::forward_to(NodeId target) {
    if (computed_[static_cast<size_t>(target)]) return;
    for (NodeId i = 0; i <= target; ++i) {
        if (computed_[static_cast<size_t>(i)]) continue;
        const Node& n = g_.node(i);
        Tensor out(n.rows, n.cols);
        switch (n.op) {
            case Op::Leaf: {
                auto it = bindings_.find(n.leaf_id);
                if (it == bindings_.end()) throw GraphError(i, "leaf '" + n.leaf_id + "' unbound");
                if (it->second.rows != n.rows || it->second.cols != n.cols)
                    throw GraphError(i, "leaf '" + n.leaf_id + "' bound with shape " + it->second.shape_str() +
                                            ", declared [" + std::to_string(n.rows) + " x " + std::to_string(n.cols) + "]");
                out = it->second;
                break;
            }
            case Op::Const:
                out = n.value;
                break;
            case Op::Add: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                const Tensor& y = values_[static_cast<size_t>(n.b)];
                for (int r = 0; r < n.rows; ++r)
                    for (int c = 0; c < n.cols; ++c) out.at(r, c) = bread(x, r, c) + bread(y, r, c);
                break;
            }
            case Op::Sub: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                const Tensor& y = values_[static_cast<size_t>(n.b)];
                for (int r = 0; r < n.rows; ++r)
                    for (int c = 0; c < n.cols; ++c) out.at(r, c) = bread(x, r, c) - bread(y, r, c);
                break;
            }
            case Op::Mul: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                const Tensor& y = values_[static_cast<size_t>(n.b)];
                for (int r = 0; r < n.rows; ++r)
                    for (int c = 0; c < n.cols; ++c) out.at(r, c) = bread(x, r, c) * bread(y, r, c);
                break;
            }
            case Op::MatMul: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                const Tensor& y = values_[static_cast<size_t>(n.b)];
                for (int r = 0; r < x.rows; ++r)
                    for (int k = 0; k < x.cols; ++k) {
                        double xv = x.at(r, k);
                        for (int c = 0; c < y.cols; ++c) out.at(r, c) += xv * y.at(k, c);
                    }
                break;
            }
            case Op::Exp: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                for (size_t k = 0; k < x.data.size(); ++k) out.data[k] = std::exp(x.data[k]);
                break;
            }
            case Op::Log: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                for (size_t k = 0; k < x.data.size(); ++k) out.data[k] = std::log(x.data[k]);
                break;
            }
            case Op::Relu: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                for (size_t k = 0; k < x.data.size(); ++k) out.data[k] = x.data[k] > 0.0 ? x.data[k] : 0.0;
                break;
            }
            case Op::SoftmaxRows: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                for (int r = 0; r < n.rows; ++r) {
                    double mx = x.at(r, 0);
                    for (int c = 1; c < n.cols; ++c) mx = std::max(mx, x.at(r, c));
                    double z = 0.0;
                    for (int c = 0; c < n.cols; ++c) z += std::exp(x.at(r, c) - mx);
                    for (int c = 0; c < n.cols; ++c) out.at(r, c) = std::exp(x.at(r, c) - mx) / z;
                }
                break;
            }
            case Op::SumAll: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                double s = 0.0;
                for (double v : x.data) s += v;
                out.data[0] = s;
                break;
            }
            case Op::SumRows: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                for (int r = 0; r < x.rows; ++r) {
                    double s = 0.0;
                    for (int c = 0; c < x.cols; ++c) s += x.at(r, c);
                    out.at(r, 0) = s;
                }
                break;
            }
            case Op::SumCols: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                for (int c = 0; c < x.cols; ++c) {
                    double s = 0.0;
                    for (int r = 0; r < x.rows; ++r) s += x.at(r, c);
                    out.at(0, c) = s;
                }
                break;
            }
            case Op::LogSumExpRows: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                for (int r = 0; r < x.rows; ++r) {
                    double mx = x.at(r, 0);
                    for (int c = 1; c < x.cols; ++c) mx = std::max(mx, x.at(r, c));
                    double s = 0.0;
                    for (int c = 0; c < x.cols; ++c) s += std::exp(x.at(r, c) - mx);
                    out.at(r, 0) = mx + std::log(s);
                }
                break;
            }
            case Op::SliceRows: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                for (int r = n.begin; r < n.end; ++r)
                    for (int c = 0; c < x.cols; ++c) out.at(r - n.begin, c) = x.at(r, c);
                break;
            }
            case Op::ConcatRows: {
                int r0 = 0;
                for (NodeId p : n.parents) {
                    const Tensor& x = values_[static_cast<size_t>(p)];
                    for (int r = 0; r < x.rows; ++r)
                        for (int c = 0; c < x.cols; ++c) out.at(r0 + r, c) = x.at(r, c);
                    r0 += x.rows;
                }
                break;
            }
            case Op::Transpose: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                out = Tensor(x.cols, x.rows);
                for (int r = 0; r < x.rows; ++r)
                    for (int c = 0; c < x.cols; ++c) out.at(c, r) = x.at(r, c);
                break;
            }
            case Op::Scale: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                for (size_t k = 0; k < x.data.size(); ++k) out.data[k] = n.scalar * x.data[k];
                break;
            }
            case Op::Detach:
                out = values_[static_cast<size_t>(n.a)];
                break;
        }
        if (!out.all_finite()) throw GraphError(i, std::string(op_name(n.op)) + ": non-finite value");
        values_[static_cast<size_t>(i)] = std::move(out);
        computed_[static_cast<size_t>(i)] = true;
    }
}

GradMap Evaluation::backward(NodeId out) {
    const Node& on = g_.node(out);
    if (on.rows != 1 || on.cols != 1) throw GraphError(out, "backward: output is not scalar");
    forward_to(out);

    std::vector<Tensor> grads(static_cast<size_t>(out) + 1);
    std::vector<bool> has_grad(static_cast<size_t>(out) + 1, false);
    auto grad_of = [&](NodeId id) -> Tensor& {
        if (!has_grad[static_cast<size_t>(id)]) {
            grads[static_cast<size_t>(id)] =
                Tensor(values_[static_cast<size_t>(id)].rows, values_[static_cast<size_t>(id)].cols);
            has_grad[static_cast<size_t>(id)] = true;
        }
        return grads[static_cast<size_t>(id)];
    };
    grad_of(out).data[0] = 1.0;

    for (NodeId i = out; i >= 0; --i) {
        if (!has_grad[static_cast<size_t>(i)]) continue;
        const Node& n = g_.node(i);
        const Tensor& g = grads[static_cast<size_t>(i)];
        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
            case Op::Detach:
                break;  // Detach: no propagation by contract
            case Op::Add: {
                accumulate_reduced(grad_of(n.a), g);
                accumulate_reduced(grad_of(n.b), g);
                break;
            }
            case Op::Sub: {
                accumulate_reduced(grad_of(n.a), g);
                Tensor neg(g.rows, g.cols);
                for (size_t k = 0; k < g.data.size(); ++k) neg.data[k] = -g.data[k];
                accumulate_reduced(grad_of(n.b), neg);
                break;
            }
            case Op::Mul: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                const Tensor& y = values_[static_cast<size_t>(n.b)];
                Tensor gx(g.rows, g.cols), gy(g.rows, g.cols);
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < g.cols; ++c) {
                        gx.at(r, c) = g.at(r, c) * bread(y, r, c);
                        gy.at(r, c) = g.at(r, c) * bread(x, r, c);
                    }
                accumulate_reduced(grad_of(n.a), gx);
                accumulate_reduced(grad_of(n.b), gy);
                break;
            }
            case Op::MatMul: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                const Tensor& y = values_[static_cast<size_t>(n.b)];
                Tensor& gx = grad_of(n.a);
                Tensor& gy = grad_of(n.b);
                // gx += g * y^T ; gy += x^T * g
                for (int r = 0; r < x.rows; ++r)
                    for (int c = 0; c < y.cols; ++c) {
                        double gv = g.at(r, c);
                        if (gv == 0.0) continue;
                        for (int k = 0; k < x.cols; ++k) {
                            gx.at(r, k) += gv * y.at(k, c);
                            gy.at(k, c) += gv * x.at(r, k);
                        }
                    }
                break;
            }
            case Op::Exp: {
                const Tensor& y = values_[static_cast<size_t>(i)];
                Tensor& gx = grad_of(n.a);
                for (size_t k = 0; k < g.data.size(); ++k) gx.data[k] += g.data[k] * y.data[k];
                break;
            }
            case Op::Log: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                Tensor& gx = grad_of(n.a);
                for (size_t k = 0; k < g.data.size(); ++k) gx.data[k] += g.data[k] / x.data[k];
                break;
            }
            case Op::Relu: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                Tensor& gx = grad_of(n.a);
                for (size_t k = 0; k < g.data.size(); ++k) gx.data[k] += x.data[k] > 0.0 ? g.data[k] : 0.0;
                break;
            }
            case Op::SoftmaxRows: {
                const Tensor& y = values_[static_cast<size_t>(i)];
                Tensor& gx = grad_of(n.a);
                for (int r = 0; r < y.rows; ++r) {
                    double dot = 0.0;
                    for (int c = 0; c < y.cols; ++c) dot += g.at(r, c) * y.at(r, c);
                    for (int c = 0; c < y.cols; ++c) gx.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
                }
                break;
            }
            case Op::SumAll: {
                Tensor& gx = grad_of(n.a);
                double gv = g.data[0];
                for (auto& v : gx.data) v += gv;
                break;
            }
            case Op::SumRows: {
                Tensor& gx = grad_of(n.a);
                for (int r = 0; r < gx.rows; ++r)
                    for (int c = 0; c < gx.cols; ++c) gx.at(r, c) += g.at(r, 0);
                break;
            }
            case Op::SumCols: {
                Tensor& gx = grad_of(n.a);
                for (int r = 0; r < gx.rows; ++r)
                    for (int c = 0; c < gx.cols; ++c) gx.at(r, c) += g.at(0, c);
                break;
            }
            case Op::LogSumExpRows: {
                const Tensor& x = values_[static_cast<size_t>(n.a)];
                const Tensor& y = values_[static_cast<size_t>(i)];
                Tensor& gx = grad_of(n.a);
                for (int r = 0; r < x.rows; ++r)
                    for (int c = 0; c < x.cols; ++c)
                        gx.at(r, c) += g.at(r, 0) * std::exp(x.at(r, c) - y.at(r, 0));
                break;
            }
            case Op::SliceRows: {
                Tensor& gx = grad_of(n.a);
                for (int r = n.begin; r < n.end; ++r)
                    for (int c = 0; c < gx.cols; ++c) gx.at(r, c) += g.at(r - n.begin, c);
                break;
            }
            case Op::ConcatRows: {
                int r0 = 0;
                for (NodeId p : n.parents) {
                    Tensor& gp = grad_of(p);
                    for (int r = 0; r < gp.rows; ++r)
                        for (int c = 0; c < gp.cols; ++c) gp.at(r, c) += g.at(r0 + r, c);
                    r0 += gp.rows;
                }
                break;
            }
            case Op::Transpose: {
                Tensor& gx = grad_of(n.a);
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < g.cols; ++c) gx.at(c, r) += g.at(r, c);
                break;
            }
            case Op::Scale: {
                Tensor& gx = grad_of(n.a);
                for (size_t k = 0; k < g.data.size(); ++k) gx.data[k] += n.scalar * g.data[k];
                break;
            }
        }
    }

    GradMap result;
    for (NodeId i = 0; i <= out; ++i) {
        const Node& n = g_.node(i);
        if (n.op == Op::Leaf && n.requires_grad) {
            if (has_grad[static_cast<size_t>(i)])
                result[n.leaf_id] = grads[static_cast<size_t>(i)];
            else
                result[n.leaf_id] = Tensor(n.rows, n.cols);
        }
    }
    // reachable params past `out` still deserve zero entries
    for (NodeId i = out + 1; i < g_.size(); ++i) {
        const Node& n = g_.node(i);
        if (n.op == Op::Leaf && n.requires_grad && !result.count(n.leaf_id)) result[n.leaf_id] = Tensor(n.rows, n.cols);
    }
    return result;
}

Tensor evaluate(const Graph& g, NodeId out, const Bindings& bindings) {
    Evaluation ev(g, bindings);
    return ev.value(out);
}

GradMap backward(const Graph& g, NodeId out, const Bindings& bindings) {
    Evaluation ev(g, bindings);
    return ev.backward(out);
}

double finite_diff_check(const Graph& g, NodeId out, const Bindings& bindings, const std::string& leaf_id,
                         double step) {
    GradMap grads = backward(g, out, bindings);
    auto git = grads.find(leaf_id);
    if (git == grads.end()) throw GraphError("finite_diff_check: '" + leaf_id + "' is not a requires_grad leaf");
    auto bit = bindings.find(leaf_id);
    if (bit == bindings.end()) throw GraphError("finite_diff_check: leaf '" + leaf_id + "' unbound");

    Bindings local = bindings;
    Tensor& point = local[leaf_id];
    double worst = 0.0;
    for (size_t k = 0; k < point.data.size(); ++k) {
        double orig = point.data[k];
        point.data[k] = orig + step;
        double fp = evaluate(g, out, local).item();
        point.data[k] = orig - step;
        double fm = evaluate(g, out, local).item();
        point.data[k] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw GraphError("finite_diff_check: non-finite function value");
        double cd = (fp - fm) / (2.0 * step);
        double ad = git->second.data[k];
        worst = std::max(worst, std::fabs(cd - ad) / (std::fabs(ad) + 1e-8));
    }
    return worst;
}

}  // namespace otdg::diff
