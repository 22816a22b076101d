#include "otdg/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "otdg/rng.hpp"

namespace otdg::ot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor sq_dist_matrix(const Tensor& x, const Tensor& y) {
    if (x.cols != y.cols) throw std::runtime_error("sinkhorn: point dimensions disagree");
    Tensor c(x.rows, y.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < y.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < x.cols; ++k) {
                double d = x.at(i, k) - y.at(j, k);
                s += d * d;
            }
            c.at(i, j) = s;
        }
    return c;
}

std::vector<double> log_weights(const std::vector<double>& w, const char* what) {
    std::vector<double> lw(w.size());
    for (size_t i = 0; i < w.size(); ++i) {
        if (w[i] <= 0.0) throw std::runtime_error(std::string(what) + ": zero-weight support point (degenerate measure)");
        lw[i] = std::log(w[i]);
    }
    return lw;
}

// f_i = -eps * LSE_j( lw_j + (g_j - C_ij)/eps )
void potential_update(const Tensor& c, const std::vector<double>& g, const std::vector<double>& lw, double eps,
                      std::vector<double>& f_out) {
    int n = c.rows, m = c.cols;
    for (int i = 0; i < n; ++i) {
        double mx = -kInf;
        for (int j = 0; j < m; ++j) {
            double v = lw[static_cast<size_t>(j)] + (g[static_cast<size_t>(j)] - c.at(i, j)) / eps;
            if (v > mx) mx = v;
        }
        double s = 0.0;
        for (int j = 0; j < m; ++j)
            s += std::exp(lw[static_cast<size_t>(j)] + (g[static_cast<size_t>(j)] - c.at(i, j)) / eps - mx);
        f_out[static_cast<size_t>(i)] = -eps * (mx + std::log(s));
    }
}

struct DualState {
    std::vector<double> f, g;
    int iterations = 0;
    bool converged = false;
    double violation = kInf;
};

// Alternating updates ending on f, so plan rows are exact for (f, g).
DualState solve_dual(const Tensor& c, const std::vector<double>& a, const std::vector<double>& b, double eps,
                     const SinkhornOptions& opt) {
    int n = c.rows, m = c.cols;
    std::vector<double> la = log_weights(a, "sinkhorn"), lb = log_weights(b, "sinkhorn");
    Tensor ct(m, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) ct.at(j, i) = c.at(i, j);

    DualState st;
    st.f.assign(static_cast<size_t>(n), 0.0);
    st.g.assign(static_cast<size_t>(m), 0.0);
    int check_period = (static_cast<long long>(n) * m > 10000) ? 10 : 1;

    auto col_violation = [&]() {
        // rows are exact after an f-update; measure the column error
        double worst = 0.0;
        for (int j = 0; j < m; ++j) {
            double mx = -kInf;
            for (int i = 0; i < n; ++i) {
                double v = la[static_cast<size_t>(i)] + (st.f[static_cast<size_t>(i)] - c.at(i, j)) / eps;
                if (v > mx) mx = v;
            }
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += std::exp(la[static_cast<size_t>(i)] + (st.f[static_cast<size_t>(i)] - c.at(i, j)) / eps - mx);
            double colsum = b[static_cast<size_t>(j)] * std::exp(mx + std::log(s) + st.g[static_cast<size_t>(j)] / eps);
            worst = std::max(worst, std::fabs(colsum - b[static_cast<size_t>(j)]));
        }
        return worst;
    };

    for (int it = 1; it <= opt.max_iter; ++it) {
        potential_update(ct, st.f, la, eps, st.g);  // g from f
        potential_update(c, st.g, lb, eps, st.f);   // f from g
        st.iterations = it;
        if (it % check_period == 0 || it == opt.max_iter) {
            st.violation = col_violation();
            if (st.violation < opt.tol) {
                st.converged = true;
                break;
            }
        }
    }
    return st;
}

double dual_value(const DualState& st, const std::vector<double>& a, const std::vector<double>& b) {
    double v = 0.0;
    for (size_t i = 0; i < a.size(); ++i) v += a[i] * st.f[i];
    for (size_t j = 0; j < b.size(); ++j) v += b[j] * st.g[j];
    return v;
}

// Symmetric fixed point for OT_eps(a,a): p <- (p + T(p))/2.
struct SelfDual {
    std::vector<double> p;
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

SelfDual solve_self_dual(const Tensor& c, const std::vector<double>& a, double eps, const SinkhornOptions& opt) {
    int n = c.rows;
    std::vector<double> la = log_weights(a, "sinkhorn");
    SelfDual st;
    st.p.assign(static_cast<size_t>(n), 0.0);
    std::vector<double> t(static_cast<size_t>(n));
    for (int it = 1; it <= opt.max_iter; ++it) {
        potential_update(c, st.p, la, eps, t);
        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
            double next = 0.5 * (st.p[static_cast<size_t>(i)] + t[static_cast<size_t>(i)]);
            delta = std::max(delta, std::fabs(next - st.p[static_cast<size_t>(i)]));
            st.p[static_cast<size_t>(i)] = next;
        }
        st.iterations = it;
        if (delta < opt.tol * eps) {
            st.converged = true;
            break;
        }
    }
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += a[static_cast<size_t>(i)] * st.p[static_cast<size_t>(i)];
    st.value = 2.0 * v;
    return st;
}

bool same_cloud(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b) {
    return a.points.same_shape(b.points) && a.points.data == b.points.data && a.weights == b.weights;
}

void require_positive_eps(double eps) {
    if (!(eps > 0.0)) throw std::runtime_error("sinkhorn: eps must be positive");
}

}  // namespace

TransportPlan sinkhorn_ot(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b, double eps,
                          const SinkhornOptions& opt) {
    require_positive_eps(eps);
    Tensor c = sq_dist_matrix(a.points, b.points);
    DualState st = solve_dual(c, a.weights, b.weights, eps, opt);

    TransportPlan out;
    out.eps = eps;
    out.iterations_used = st.iterations;
    out.converged = st.converged;
    int n = c.rows, m = c.cols;
    out.plan = Tensor(n, m);
    double lin = 0.0, kl = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double e = (st.f[static_cast<size_t>(i)] + st.g[static_cast<size_t>(j)] - c.at(i, j)) / eps;
            double pij = a.weights[static_cast<size_t>(i)] * b.weights[static_cast<size_t>(j)] * std::exp(e);
            out.plan.at(i, j) = pij;
            lin += pij * c.at(i, j);
            kl += pij * e;  // pij * log(pij / (a_i b_j))
        }
    out.cost = lin;
    out.entropic_term = eps * kl;
    out.dual_value = dual_value(st, a.weights, b.weights);

    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        double rs = 0.0;
        for (int j = 0; j < m; ++j) rs += out.plan.at(i, j);
        worst = std::max(worst, std::fabs(rs - a.weights[static_cast<size_t>(i)]));
    }
    for (int j = 0; j < m; ++j) {
        double cs = 0.0;
        for (int i = 0; i < n; ++i) cs += out.plan.at(i, j);
        worst = std::max(worst, std::fabs(cs - b.weights[static_cast<size_t>(j)]));
    }
    out.marginal_violation = worst;
    return out;
}

double hungarian_assignment(const Tensor& cost, std::vector<int>& row_to_col) {
    if (cost.rows != cost.cols) throw std::runtime_error("hungarian_assignment: matrix must be square");
    int n = cost.rows;
    std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n) + 1, kInf);
        std::vector<char> used(static_cast<size_t>(n) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            int i0 = p[static_cast<size_t>(j0)], j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                double cur = cost.at(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    row_to_col.assign(static_cast<size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (p[static_cast<size_t>(j)]) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)]) - 1] = j - 1;
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost.at(i, row_to_col[static_cast<size_t>(i)]);
    return total;
}

namespace {

double exact_assignment_cost(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b, int power) {
    if (a.size() != b.size())
        throw std::runtime_error("exact_ot: clouds must have equal sizes; use sinkhorn_ot for the general case");
    int n = a.size();
    for (int i = 0; i < n; ++i)
        if (std::fabs(a.weights[static_cast<size_t>(i)] - 1.0 / n) > 1e-12 ||
            std::fabs(b.weights[static_cast<size_t>(i)] - 1.0 / n) > 1e-12)
            throw std::runtime_error("exact_ot: weights must be uniform; use sinkhorn_ot for the general case");
    Tensor c = sq_dist_matrix(a.points, b.points);
    if (power == 1)
        for (auto& v : c.data) v = std::sqrt(v);
    std::vector<int> sol;
    return hungarian_assignment(c, sol) / n;
}

}  // namespace

double exact_ot(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b) {
    return exact_assignment_cost(a, b, 2);
}

double exact_w1(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b) {
    return exact_assignment_cost(a, b, 1);
}

double sinkhorn_divergence(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b, double eps,
                           const SinkhornOptions& opt) {
    require_positive_eps(eps);
    if (same_cloud(a, b)) return 0.0;  // debiasing identity, exact by construction
    // canonical argument order keeps the divergence bitwise symmetric
    const meas::EmpiricalMeasure* lo = &a;
    const meas::EmpiricalMeasure* hi = &b;
    if (std::lexicographical_compare(hi->points.data.begin(), hi->points.data.end(), lo->points.data.begin(),
                                     lo->points.data.end()))
        std::swap(lo, hi);
    Tensor caa = sq_dist_matrix(lo->points, lo->points);
    double self_a = solve_self_dual(caa, lo->weights, eps, opt).value;
    Tensor cbb = sq_dist_matrix(hi->points, hi->points);
    double self_b = solve_self_dual(cbb, hi->weights, eps, opt).value;
    Tensor cab = sq_dist_matrix(lo->points, hi->points);
    DualState st = solve_dual(cab, lo->weights, hi->weights, eps, opt);
    return dual_value(st, lo->weights, hi->weights) - 0.5 * self_a - 0.5 * self_b;
}

BarycenterResult free_support_barycenter(const std::vector<meas::EmpiricalMeasure>& measures,
                                         const std::vector<double>& weights, int k, double eps,
                                         const BarycenterOptions& opt) {
    if (measures.empty()) throw std::runtime_error("free_support_barycenter: empty measure list");
    if (k < 1) throw std::runtime_error("free_support_barycenter: k must be >= 1");
    if (weights.size() != measures.size())
        throw std::runtime_error("free_support_barycenter: one weight per measure required");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::runtime_error("free_support_barycenter: negative weight");
        wsum += w;
    }
    if (std::fabs(wsum - 1.0) > 1e-9) throw std::runtime_error("free_support_barycenter: weights must sum to 1");
    int d = measures[0].dim();
    for (const auto& m : measures)
        if (m.dim() != d) throw std::runtime_error("free_support_barycenter: dimension mismatch");

    // pooled-point initialization, seeded; exact duplicates add nothing to
    // the candidate pool, so keep first occurrences only
    std::vector<std::vector<double>> rows;
    for (const auto& m : measures)
        for (int i = 0; i < m.size(); ++i) rows.push_back(m.points.row_vec(i));
    std::vector<std::vector<double>> distinct;
    for (auto& r : rows) {
        bool seen = false;
        for (const auto& q : distinct)
            if (q == r) {
                seen = true;
                break;
            }
        if (!seen) distinct.push_back(r);
    }
    int total = static_cast<int>(distinct.size());
    Tensor pooled = Tensor::from_rows(distinct);
    auto rng = make_rng(opt.seed);
    std::vector<int> idx(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) idx[static_cast<size_t>(i)] = i;
    Tensor support(k, d);
    if (k <= total) {
        for (int i = 0; i < k; ++i) {  // partial Fisher-Yates
            int j = i + uniform_int(rng, total - i);
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
            for (int c = 0; c < d; ++c) support.at(i, c) = pooled.at(idx[static_cast<size_t>(i)], c);
        }
    } else {
        for (int i = 0; i < k; ++i) {
            int j = uniform_int(rng, total);
            for (int c = 0; c < d; ++c) support.at(i, c) = pooled.at(j, c);
        }
    }

    std::vector<double> unif(static_cast<size_t>(k), 1.0 / k);
    BarycenterResult res{meas::EmpiricalMeasure(support, unif), {}, {}};

    Tensor prev_support = support;
    for (int outer = 0; outer < opt.outer_iters; ++outer) {
        std::vector<TransportPlan> plans;
        plans.reserve(measures.size());
        double objective = 0.0;
        meas::EmpiricalMeasure bary(support, unif);
        for (size_t s = 0; s < measures.size(); ++s) {
            plans.push_back(sinkhorn_ot(bary, measures[s], eps, opt.sinkhorn));
            objective += weights[s] * plans.back().cost;
        }
        if (!res.objective_trace.empty() && objective > res.objective_trace.back() + 1e-6) {
            support = prev_support;  // reject the step that raised the objective
            break;
        }
        res.objective_trace.push_back(objective);

        Tensor next(k, d);
        for (size_t s = 0; s < measures.size(); ++s) {
            const Tensor& pts = measures[s].points;
            const Tensor& plan = plans[s].plan;
            for (int i = 0; i < k; ++i) {
                double rowsum = 0.0;
                for (int j = 0; j < plan.cols; ++j) rowsum += plan.at(i, j);
                if (rowsum <= 0.0) continue;
                for (int c = 0; c < d; ++c) {
                    double acc = 0.0;
                    for (int j = 0; j < plan.cols; ++j) acc += plan.at(i, j) * pts.at(j, c);
                    next.at(i, c) += weights[s] * acc / rowsum;
                }
            }
        }
        double shift = 0.0;
        for (int i = 0; i < k; ++i) {
            double s2 = 0.0;
            for (int c = 0; c < d; ++c) {
                double dd = next.at(i, c) - support.at(i, c);
                s2 += dd * dd;
            }
            shift = std::max(shift, std::sqrt(s2));
        }
        res.support_shift_trace.push_back(shift);
        prev_support = support;
        support = next;
        if (shift < opt.tol) break;
    }
    res.measure = meas::EmpiricalMeasure(support, unif);
    return res;
}

// ---- differentiable path ----

namespace {

using diff::Graph;
using diff::NodeId;

struct GraphCost {
    NodeId c;   // n x m
    NodeId ct;  // m x n
};

GraphCost cost_nodes(Graph& g, NodeId x, NodeId y) {
    NodeId xx = g.sum_rows(g.mul(x, x));                 // n x 1
    NodeId yy = g.transpose(g.sum_rows(g.mul(y, y)));    // 1 x m
    NodeId cross = g.scale(g.matmul(x, g.transpose(y)), -2.0);
    NodeId c = g.add(g.add(xx, yy), cross);
    return {c, g.transpose(c)};
}

NodeId log_weight_row(Graph& g, const std::vector<double>& w) {
    std::vector<double> lw(w.size());
    for (size_t i = 0; i < w.size(); ++i) {
        if (w[i] <= 0.0) throw std::runtime_error("sinkhorn graph: zero-weight support point");
        lw[i] = std::log(w[i]);
    }
    return g.constant(Tensor::row(lw));
}

// f = -eps * LSE_rows( (bcast(g^T) - C)/eps + log_w_row )
NodeId lse_update(Graph& g, NodeId cost, NodeId pot_col, NodeId log_w_row, double eps) {
    NodeId m = g.add(g.scale(g.sub(g.transpose(pot_col), cost), 1.0 / eps), log_w_row);
    return g.scale(g.logsumexp_rows(m), -eps);
}

NodeId weighted_sum_node(Graph& g, NodeId col, const std::vector<double>& w) {
    return g.sum_all(g.mul(col, g.constant(Tensor::column(w))));
}

}  // namespace

NodeId ot_dual_node(Graph& g, NodeId x, NodeId y, const std::vector<double>& wa, const std::vector<double>& wb,
                    const UnrolledParams& p) {
    if (p.iters < 1) throw std::runtime_error("sinkhorn graph: need at least one iteration");
    auto [n, dx] = g.shape(x);
    auto [m, dy] = g.shape(y);
    if (dx != dy) throw std::runtime_error("sinkhorn graph: point dimensions disagree");
    if (static_cast<int>(wa.size()) != n || static_cast<int>(wb.size()) != m)
        throw std::runtime_error("sinkhorn graph: weight count mismatch");
    GraphCost c = cost_nodes(g, x, y);
    NodeId la = log_weight_row(g, wa);
    NodeId lb = log_weight_row(g, wb);
    NodeId f = g.constant(Tensor(n, 1));
    NodeId gg = g.constant(Tensor(m, 1));
    for (int it = 0; it < p.iters; ++it) {
        gg = lse_update(g, c.ct, f, la, p.eps);  // g from f
        f = lse_update(g, c.c, gg, lb, p.eps);   // f from g; rows exact afterwards
    }
    return g.add(weighted_sum_node(g, f, wa), weighted_sum_node(g, gg, wb));
}

NodeId self_dual_node(Graph& g, NodeId x, const std::vector<double>& wa, const UnrolledParams& p) {
    auto [n, d] = g.shape(x);
    (void)d;
    if (static_cast<int>(wa.size()) != n) throw std::runtime_error("sinkhorn graph: weight count mismatch");
    GraphCost c = cost_nodes(g, x, x);
    NodeId la = log_weight_row(g, wa);
    NodeId pot = g.constant(Tensor(n, 1));
    for (int it = 0; it < p.iters; ++it) {
        NodeId t = lse_update(g, c.c, pot, la, p.eps);
        pot = g.scale(g.add(pot, t), 0.5);
    }
    return g.scale(weighted_sum_node(g, pot, wa), 2.0);
}

NodeId sinkhorn_divergence_node(Graph& g, NodeId x, NodeId y, const std::vector<double>& wa,
                                const std::vector<double>& wb, const UnrolledParams& p) {
    NodeId cross = ot_dual_node(g, x, y, wa, wb, p);
    NodeId sx = self_dual_node(g, x, wa, p);
    NodeId sy = self_dual_node(g, y, wb, p);
    return g.add(cross, g.scale(g.add(sx, sy), -0.5));
}

NodeId barycenter_loss_node(Graph& g, const std::vector<NodeId>& domain_features,
                            const std::vector<std::vector<double>>& feature_weights,
                            const meas::EmpiricalMeasure& bary, const UnrolledParams& p) {
    if (domain_features.empty()) throw std::runtime_error("barycenter_loss: no domains");
    if (feature_weights.size() != domain_features.size())
        throw std::runtime_error("barycenter_loss: one weight vector per domain required");
    NodeId bary_pts = g.constant(bary.points);
    // the barycenter self term is shared across domains and carries no gradient
    NodeId bary_self = self_dual_node(g, bary_pts, bary.weights, p);
    NodeId acc = g.constant_scalar(0.0);
    for (size_t s = 0; s < domain_features.size(); ++s) {
        NodeId cross = ot_dual_node(g, bary_pts, domain_features[s], bary.weights, feature_weights[s], p);
        NodeId self_z = self_dual_node(g, domain_features[s], feature_weights[s], p);
        NodeId div = g.add(cross, g.scale(g.add(bary_self, self_z), -0.5));
        acc = g.add(acc, div);
    }
    return g.scale(acc, 1.0 / static_cast<double>(domain_features.size()));
}

}  // namespace otdg::ot
