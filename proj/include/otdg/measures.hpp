#pragma once

#include <cstdint>
#include <vector>

#include "otdg/tensor.hpp"

namespace otdg::meas {

// Weighted point cloud in R^d. Weights must sum to 1 within 1e-9; all
// coordinates finite. Value type, never mutated after construction.
struct EmpiricalMeasure {
    Tensor points;                 // n x d
    std::vector<double> weights;   // length n

    EmpiricalMeasure(Tensor pts, std::vector<double> w);
    static EmpiricalMeasure uniform(Tensor pts);

    int size() const { return points.rows; }
    int dim() const { return points.cols; }
};

// Gaussian with symmetric positive-definite covariance.
struct GaussianMeasure {
    std::vector<double> mean;
    Tensor cov;  // d x d

    GaussianMeasure(std::vector<double> m, Tensor c);
    static GaussianMeasure standard(int d);
    static GaussianMeasure iso(std::vector<double> m, double variance);

    int dim() const { return static_cast<int>(mean.size()); }
};

// Discrete distribution over fixed bin centers.
struct HistogramMeasure {
    Tensor support;               // k x d
    std::vector<double> probs;    // simplex, length k

    HistogramMeasure(Tensor sup, std::vector<double> p);

    int size() const { return support.rows; }
    int dim() const { return support.cols; }
};

// n i.i.d. draws with uniform weights; deterministic given seed.
EmpiricalMeasure sample(const GaussianMeasure& g, int n, uint64_t seed);

// KL divergence in nats. Gaussian-Gaussian closed form; histogram-histogram
// requires shared support and reports +infinity when q has a zero bin where
// p does not.
double kl_divergence(const GaussianMeasure& p, const GaussianMeasure& q);
double kl_divergence(const HistogramMeasure& p, const HistogramMeasure& q);

// L1 distance between densities/masses. Exact for histograms on shared
// support; adaptive quadrature (abs tol 1e-8) for 1-D Gaussians.
double l1_distance(const HistogramMeasure& p, const HistogramMeasure& q);
double l1_distance(const GaussianMeasure& p, const GaussianMeasure& q);

// Bures-Wasserstein closed form:
//   W2^2 = |m1-m2|^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}).
double w2_gaussian(const GaussianMeasure& p, const GaussianMeasure& q);

// Exact W2 between 1-D histograms via the quantile coupling.
double w2_histogram_1d(const HistogramMeasure& p, const HistogramMeasure& q);

// E |x|^2, exact per family.
double second_moment(const GaussianMeasure& m);
double second_moment(const EmpiricalMeasure& m);
double second_moment(const HistogramMeasure& m);

}  // namespace otdg::meas
