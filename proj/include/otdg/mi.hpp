#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otdg/autodiff.hpp"
#include "otdg/tensor.hpp"

namespace otdg::mi {

// I.i.d. spherical Gaussian perturbation scaled by delta; deterministic
// under seed. delta = 0 is the identity.
Tensor add_noise(const Tensor& features, double delta, uint64_t seed);

// The raw draws behind add_noise, needed by the conditional-score term.
Tensor gaussian_noise(int rows, int cols, uint64_t seed);

// Spectral Stein score estimate of grad_z log q(z) fit to a sample set.
// RBF-kernel Nystrom expansion folded into per-landmark coefficients.
struct ScoreEstimate {
    Tensor landmarks;     // L x d
    Tensor coeffs;        // L x d, score(z) = sum_u coeffs[u] * k(z, landmark_u)
    double bandwidth = 0.0;
    int num_eigen = 0;

    std::vector<double> eval(const std::vector<double>& z) const;
    Tensor eval_batch(const Tensor& z) const;
};

struct SsgeOptions {
    int num_eigen = 6;
    double bandwidth = 0.0;      // <= 0 means the median pairwise heuristic
    double jitter = 1e-6;
    int max_landmarks = 512;     // strided subsample beyond this
};

// Throws when the jittered kernel matrix is numerically singular.
ScoreEstimate ssge_score(const Tensor& samples, const SsgeOptions& opt = {});

// Surrogate scalar node whose backward pass yields the gradient of
// L_i = -sum_s I(X_s ; f(X_s) + delta N) with respect to everything feeding
// the feature nodes. For each domain the coefficients
//   c_i = score_marginal(z_i + delta n_i) + n_i / delta
// are fixed constants; the node is sum_s (1/m_s) sum_i <c_i, z_i>.
diff::NodeId mige_loss_node(diff::Graph& g, const std::vector<diff::NodeId>& feature_nodes,
                            const std::vector<Tensor>& feature_values, double delta, const SsgeOptions& opt,
                            uint64_t seed);

// Closed-form validation oracle for a 1-D linear-gain channel
// z = w x + delta n with x, n standard normal:
//   I = log(1 + w^2/delta^2) / 2,  dI/dw = w / (w^2 + delta^2).
struct GaussianMiOracle {
    double mi = 0.0;
    double d_mi_d_w = 0.0;
};
GaussianMiOracle gaussian_mi_oracle(double w, double delta);

}  // namespace otdg::mi
