#include "otdg/mi.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "otdg/linalg.hpp"
#include "otdg/rng.hpp"

namespace otdg::mi {

Tensor gaussian_noise(int rows, int cols, uint64_t seed) {
    auto rng = make_rng(seed);
    Tensor t(rows, cols);
    for (auto& v : t.data) v = std_normal(rng);
    return t;
}

Tensor add_noise(const Tensor& features, double delta, uint64_t seed) {
    if (delta < 0.0) throw std::runtime_error("add_noise: delta must be nonnegative");
    if (delta == 0.0) return features;
    Tensor noise = gaussian_noise(features.rows, features.cols, seed);
    Tensor out = features;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += delta * noise.data[i];
    return out;
}

namespace {

double sq_dist_rows(const Tensor& a, int i, const Tensor& b, int j) {
    double s = 0.0;
    for (int k = 0; k < a.cols; ++k) {
        double d = a.at(i, k) - b.at(j, k);
        s += d * d;
    }
    return s;
}

double median_pairwise_distance(const Tensor& pts) {
    std::vector<double> d2;
    for (int i = 0; i < pts.rows; ++i)
        for (int j = i + 1; j < pts.rows; ++j) d2.push_back(sq_dist_rows(pts, i, pts, j));
    if (d2.empty()) return 1.0;
    size_t mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + static_cast<long>(mid), d2.end());
    return std::sqrt(std::max(d2[mid], 1e-12));
}

}  // namespace

std::vector<double> ScoreEstimate::eval(const std::vector<double>& z) const {
    if (static_cast<int>(z.size()) != landmarks.cols) throw std::runtime_error("ScoreEstimate: dimension mismatch");
    std::vector<double> out(z.size(), 0.0);
    double inv2s2 = 1.0 / (2.0 * bandwidth * bandwidth);
    for (int u = 0; u < landmarks.rows; ++u) {
        double d2 = 0.0;
        for (int k = 0; k < landmarks.cols; ++k) {
            double d = z[static_cast<size_t>(k)] - landmarks.at(u, k);
            d2 += d * d;
        }
        double kv = std::exp(-d2 * inv2s2);
        for (int k = 0; k < landmarks.cols; ++k) out[static_cast<size_t>(k)] += coeffs.at(u, k) * kv;
    }
    return out;
}

Tensor ScoreEstimate::eval_batch(const Tensor& z) const {
    Tensor out(z.rows, z.cols);
    for (int i = 0; i < z.rows; ++i) {
        auto s = eval(z.row_vec(i));
        for (int k = 0; k < z.cols; ++k) out.at(i, k) = s[static_cast<size_t>(k)];
    }
    return out;
}

ScoreEstimate ssge_score(const Tensor& samples, const SsgeOptions& opt) {
    int n = samples.rows, d = samples.cols;
    if (opt.num_eigen < 1) throw std::runtime_error("ssge_score: num_eigen must be >= 1");
    if (n <= opt.num_eigen) throw std::runtime_error("ssge_score: need more samples than eigenfunctions");

    // landmark subset (strided, deterministic) when the sample set is large
    int L = std::min(n, opt.max_landmarks);
    Tensor lm(L, d);
    for (int i = 0; i < L; ++i) {
        int src = static_cast<int>((static_cast<long long>(i) * n) / L);
        for (int k = 0; k < d; ++k) lm.at(i, k) = samples.at(src, k);
    }

    double sigma = opt.bandwidth > 0.0 ? opt.bandwidth : median_pairwise_distance(lm);
    double inv2s2 = 1.0 / (2.0 * sigma * sigma);

    Tensor kmat(L, L);
    for (int i = 0; i < L; ++i) {
        kmat.at(i, i) = 1.0 + opt.jitter;
        for (int j = i + 1; j < L; ++j) {
            double kv = std::exp(-sq_dist_rows(lm, i, lm, j) * inv2s2);
            kmat.at(i, j) = kv;
            kmat.at(j, i) = kv;
        }
    }

    int J = opt.num_eigen;
    linalg::SymEig eg = L <= 64 ? [&] {
        linalg::SymEig full = linalg::eig_sym(kmat);  // ascending; flip to descending
        linalg::SymEig top;
        top.values.resize(static_cast<size_t>(L));
        top.vectors = Tensor(L, L);
        for (int c = 0; c < L; ++c) {
            top.values[static_cast<size_t>(c)] = full.values[static_cast<size_t>(L - 1 - c)];
            for (int r = 0; r < L; ++r) top.vectors.at(r, c) = full.vectors.at(r, L - 1 - c);
        }
        return top;
    }() : linalg::top_eig_sym(kmat, J);
    double lead = eg.values[0];
    if (!(lead > 0.0) || eg.values[static_cast<size_t>(J - 1)] <= lead * 1e-12)
        throw std::runtime_error("ssge_score: kernel matrix is numerically singular; increase jitter or bandwidth");

    // beta_{j,l} = -(1/n) sum_i d/dx_l psi_j(x_i), averaged over all samples
    double sqrt_l = std::sqrt(static_cast<double>(L));
    Tensor beta(J, d);
    for (int i = 0; i < n; ++i) {
        for (int u = 0; u < L; ++u) {
            double kv = std::exp(-sq_dist_rows(samples, i, lm, u) * inv2s2);
            for (int j = 0; j < J; ++j) {
                double lam = eg.values[static_cast<size_t>(j)];
                double uv = eg.vectors.at(u, j);
                double w = (sqrt_l / lam) * uv * kv;
                for (int k = 0; k < d; ++k) {
                    double dk = -(samples.at(i, k) - lm.at(u, k)) / (sigma * sigma);
                    beta.at(j, k) += -w * dk / n;
                }
            }
        }
    }

    // fold score(z) = sum_j beta_j psi_j(z) into per-landmark coefficients
    ScoreEstimate est;
    est.landmarks = lm;
    est.bandwidth = sigma;
    est.num_eigen = J;
    est.coeffs = Tensor(L, d);
    for (int u = 0; u < L; ++u)
        for (int j = 0; j < J; ++j) {
            double lam = eg.values[static_cast<size_t>(j)];
            double w = (sqrt_l / lam) * eg.vectors.at(u, j);
            for (int k = 0; k < d; ++k) est.coeffs.at(u, k) += w * beta.at(j, k);
        }
    return est;
}

diff::NodeId mige_loss_node(diff::Graph& g, const std::vector<diff::NodeId>& feature_nodes,
                            const std::vector<Tensor>& feature_values, double delta, const SsgeOptions& opt,
                            uint64_t seed) {
    if (!(delta > 0.0))
        throw std::runtime_error("mige: delta must be positive (mutual information of a noiseless map diverges)");
    if (feature_nodes.size() != feature_values.size())
        throw std::runtime_error("mige: one value tensor per feature node required");
    diff::NodeId acc = g.constant_scalar(0.0);
    for (size_t s = 0; s < feature_nodes.size(); ++s) {
        const Tensor& z = feature_values[s];
        auto [zr, zc] = g.shape(feature_nodes[s]);
        if (zr != z.rows || zc != z.cols) throw std::runtime_error("mige: feature node shape mismatch");
        Tensor noise = gaussian_noise(z.rows, z.cols, derive_seed(seed, "mige-noise-" + std::to_string(s)));
        Tensor z_noise = z;
        for (size_t i = 0; i < z_noise.data.size(); ++i) z_noise.data[i] += delta * noise.data[i];
        ScoreEstimate score = ssge_score(z_noise, opt);
        Tensor marg = score.eval_batch(z_noise);
        // c_i = marginal score + conditional score correction n_i/delta
        Tensor c(z.rows, z.cols);
        for (size_t i = 0; i < c.data.size(); ++i) c.data[i] = marg.data[i] + noise.data[i] / delta;
        diff::NodeId dot = g.sum_all(g.mul(feature_nodes[s], g.constant(c)));
        acc = g.add(acc, g.scale(dot, 1.0 / z.rows));
    }
    return acc;
}

GaussianMiOracle gaussian_mi_oracle(double w, double delta) {
    if (!(delta > 0.0)) throw std::runtime_error("gaussian_mi_oracle: delta must be positive");
    GaussianMiOracle out;
    out.mi = 0.5 * std::log(1.0 + (w * w) / (delta * delta));
    out.d_mi_d_w = w / (w * w + delta * delta);
    return out;
}

}  // namespace otdg::mi
