#pragma once

#include <cstdint>
#include <vector>

#include "otdg/autodiff.hpp"
#include "otdg/measures.hpp"
#include "otdg/tensor.hpp"

namespace otdg::ot {

// Entropic coupling between two empirical measures under squared-Euclidean
// cost. `cost` is the linear transport term <plan, C>; the entropic part
// eps * KL(plan || a (x) b) is reported separately in `entropic_term`, and
// dual_value = cost + entropic_term is the regularized objective.
struct TransportPlan {
    Tensor plan;          // n x m
    double cost = 0.0;
    double entropic_term = 0.0;
    double dual_value = 0.0;
    double eps = 0.0;
    int iterations_used = 0;
    bool converged = false;
    double marginal_violation = 0.0;  // max abs row/col constraint error
};

struct SinkhornOptions {
    int max_iter = 500;
    double tol = 1e-6;  // max marginal violation
};

// Log-domain Sinkhorn on C_ij = |x_i - y_j|^2. Stops when the marginal
// violation of the materialized plan drops below tol or max_iter is hit;
// non-convergence sets converged = false, never throws.
TransportPlan sinkhorn_ot(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b, double eps,
                          const SinkhornOptions& opt = {});

// Exact W2^2 between uniform clouds of equal size via min-cost assignment.
double exact_ot(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b);

// Exact W1 (linear cost assignment) between uniform clouds of equal size.
double exact_w1(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b);

// Min-cost assignment of a square cost matrix (O(n^3) potentials method).
double hungarian_assignment(const Tensor& cost, std::vector<int>& row_to_col);

// Debiased divergence S_eps(a,b) = OT_eps(a,b) - OT_eps(a,a)/2 - OT_eps(b,b)/2,
// with OT_eps the dual (entropy-included) value. Exactly zero when a and b
// hold identical data.
double sinkhorn_divergence(const meas::EmpiricalMeasure& a, const meas::EmpiricalMeasure& b, double eps,
                           const SinkhornOptions& opt = {});

struct BarycenterResult {
    meas::EmpiricalMeasure measure;            // k support points, uniform weights
    std::vector<double> objective_trace;       // weighted mean transport cost per outer iteration
    std::vector<double> support_shift_trace;   // max support displacement per outer iteration
};

struct BarycenterOptions {
    int outer_iters = 50;
    double tol = 1e-4;          // max support displacement
    SinkhornOptions sinkhorn{};
    uint64_t seed = 0;          // support initialization from pooled points
};

// Free-support barycenter: alternate entropic transport solves against each
// input with barycentric projection of the support. Updates that would
// increase the objective beyond 1e-6 slack are rejected and iteration stops,
// so the objective trace is non-increasing by construction.
BarycenterResult free_support_barycenter(const std::vector<meas::EmpiricalMeasure>& measures,
                                         const std::vector<double>& weights, int k, double eps,
                                         const BarycenterOptions& opt = {});

// ---- differentiable path (unrolled fixed-iteration graphs) ----

struct UnrolledParams {
    double eps = 0.5;
    int iters = 30;
};

// OT_eps dual value as a graph node; gradients flow into the point
// coordinates x (n x d) and y (m x d). Ends on a row-potential update so the
// dual value is exact for the final potentials.
diff::NodeId ot_dual_node(diff::Graph& g, diff::NodeId x, diff::NodeId y, const std::vector<double>& wa,
                          const std::vector<double>& wb, const UnrolledParams& p);

// Symmetric self term OT_eps(a,a) via averaged potential updates.
diff::NodeId self_dual_node(diff::Graph& g, diff::NodeId x, const std::vector<double>& wa, const UnrolledParams& p);

diff::NodeId sinkhorn_divergence_node(diff::Graph& g, diff::NodeId x, diff::NodeId y, const std::vector<double>& wa,
                                      const std::vector<double>& wb, const UnrolledParams& p);

// (1/S) sum_s S_eps(bary, feats_s) with the barycenter fixed as a constant;
// gradients reach only the domain feature nodes.
diff::NodeId barycenter_loss_node(diff::Graph& g, const std::vector<diff::NodeId>& domain_features,
                                  const std::vector<std::vector<double>>& feature_weights,
                                  const meas::EmpiricalMeasure& bary, const UnrolledParams& p);

}  // namespace otdg::ot
