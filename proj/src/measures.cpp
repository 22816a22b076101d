#include "otdg/measures.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "otdg/linalg.hpp"
#include "otdg/rng.hpp"

namespace otdg::meas {

namespace {

void check_simplex(const std::vector<double>& w, const char* what) {
    double sum = 0.0;
    for (double v : w) {
        if (!(v >= 0.0)) throw std::runtime_error(std::string(what) + ": negative weight");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw std::runtime_error(std::string(what) + ": weights sum to " + std::to_string(sum) + ", expected 1");
}

double sq_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

bool same_support(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.data.size(); ++i)
        if (std::fabs(a.data[i] - b.data[i]) > 1e-12) return false;
    return true;
}

double log_det_from_cholesky(const Tensor& l) {
    double s = 0.0;
    for (int i = 0; i < l.rows; ++i) s += std::log(l.at(i, i));
    return 2.0 * s;
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(Tensor pts, std::vector<double> w) : points(std::move(pts)), weights(std::move(w)) {
    if (points.rows < 1) throw std::runtime_error("EmpiricalMeasure: need at least one point");
    if (static_cast<int>(weights.size()) != points.rows)
        throw std::runtime_error("EmpiricalMeasure: weight count does not match point count");
    if (!points.all_finite()) throw std::runtime_error("EmpiricalMeasure: non-finite point");
    check_simplex(weights, "EmpiricalMeasure");
}

EmpiricalMeasure EmpiricalMeasure::uniform(Tensor pts) {
    int n = pts.rows;
    return EmpiricalMeasure(std::move(pts), std::vector<double>(static_cast<size_t>(n), 1.0 / n));
}

GaussianMeasure::GaussianMeasure(std::vector<double> m, Tensor c) : mean(std::move(m)), cov(std::move(c)) {
    int d = static_cast<int>(mean.size());
    if (cov.rows != d || cov.cols != d) throw std::runtime_error("GaussianMeasure: covariance shape mismatch");
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < i; ++j)
            if (std::fabs(cov.at(i, j) - cov.at(j, i)) > 1e-10)
                throw std::runtime_error("GaussianMeasure: covariance not symmetric");
    linalg::cholesky(cov);  // throws when not PD
}

GaussianMeasure GaussianMeasure::standard(int d) {
    Tensor c(d, d);
    for (int i = 0; i < d; ++i) c.at(i, i) = 1.0;
    return GaussianMeasure(std::vector<double>(static_cast<size_t>(d), 0.0), std::move(c));
}

GaussianMeasure GaussianMeasure::iso(std::vector<double> m, double variance) {
    int d = static_cast<int>(m.size());
    Tensor c(d, d);
    for (int i = 0; i < d; ++i) c.at(i, i) = variance;
    return GaussianMeasure(std::move(m), std::move(c));
}

HistogramMeasure::HistogramMeasure(Tensor sup, std::vector<double> p) : support(std::move(sup)), probs(std::move(p)) {
    if (support.rows < 1) throw std::runtime_error("HistogramMeasure: empty support");
    if (static_cast<int>(probs.size()) != support.rows)
        throw std::runtime_error("HistogramMeasure: prob count does not match support size");
    check_simplex(probs, "HistogramMeasure");
}

EmpiricalMeasure sample(const GaussianMeasure& g, int n, uint64_t seed) {
    if (n < 1) throw std::runtime_error("sample: n must be >= 1");
    int d = g.dim();
    Tensor l = linalg::cholesky(g.cov);
    auto rng = make_rng(seed);
    Tensor pts(n, d);
    std::vector<double> z(static_cast<size_t>(d));
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) z[static_cast<size_t>(k)] = std_normal(rng);
        for (int r = 0; r < d; ++r) {
            double v = g.mean[static_cast<size_t>(r)];
            for (int k = 0; k <= r; ++k) v += l.at(r, k) * z[static_cast<size_t>(k)];
            pts.at(i, r) = v;
        }
    }
    return EmpiricalMeasure::uniform(std::move(pts));
}

double kl_divergence(const GaussianMeasure& p, const GaussianMeasure& q) {
    if (p.dim() != q.dim()) throw std::runtime_error("kl_divergence: dimension mismatch");
    int d = p.dim();
    Tensor lq = linalg::cholesky(q.cov);
    // tr(Sq^-1 Sp): solve per column
    double trace = 0.0;
    for (int j = 0; j < d; ++j) {
        std::vector<double> col(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) col[static_cast<size_t>(i)] = p.cov.at(i, j);
        std::vector<double> x = linalg::solve_spd(q.cov, col);
        trace += x[static_cast<size_t>(j)];
    }
    std::vector<double> dm(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) dm[static_cast<size_t>(i)] = q.mean[static_cast<size_t>(i)] - p.mean[static_cast<size_t>(i)];
    std::vector<double> qdm = linalg::solve_spd(q.cov, dm);
    double maha = 0.0;
    for (int i = 0; i < d; ++i) maha += dm[static_cast<size_t>(i)] * qdm[static_cast<size_t>(i)];
    Tensor lp = linalg::cholesky(p.cov);
    double logdet = log_det_from_cholesky(lq) - log_det_from_cholesky(lp);
    return 0.5 * (trace + maha - d + logdet);
}

double kl_divergence(const HistogramMeasure& p, const HistogramMeasure& q) {
    if (!same_support(p.support, q.support)) throw std::runtime_error("kl_divergence: histogram supports differ");
    double kl = 0.0;
    for (size_t i = 0; i < p.probs.size(); ++i) {
        double pi = p.probs[i], qi = q.probs[i];
        if (pi == 0.0) continue;
        if (qi == 0.0) return std::numeric_limits<double>::infinity();
        kl += pi * std::log(pi / qi);
    }
    return kl;
}

double l1_distance(const HistogramMeasure& p, const HistogramMeasure& q) {
    if (!same_support(p.support, q.support)) throw std::runtime_error("l1_distance: histogram supports differ");
    double s = 0.0;
    for (size_t i = 0; i < p.probs.size(); ++i) s += std::fabs(p.probs[i] - q.probs[i]);
    return s;
}

namespace {

double gauss_pdf_1d(double x, double m, double sd) {
    double z = (x - m) / sd;
    return std::exp(-0.5 * z * z) / (sd * 2.5066282746310005024);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace

double l1_distance(const GaussianMeasure& p, const GaussianMeasure& q) {
    if (p.dim() != 1 || q.dim() != 1)
        throw std::runtime_error("l1_distance: continuous L1 is supported for 1-D Gaussians only");
    double mp = p.mean[0], mq = q.mean[0];
    double sp = std::sqrt(p.cov.at(0, 0)), sq = std::sqrt(q.cov.at(0, 0));
    double lo = std::min(mp - 10.0 * sp, mq - 10.0 * sq);
    double hi = std::max(mp + 10.0 * sp, mq + 10.0 * sq);
    auto f = [&](double x) { return std::fabs(gauss_pdf_1d(x, mp, sp) - gauss_pdf_1d(x, mq, sq)); };
    return integrate(f, lo, hi, 1e-8);
}

double w2_gaussian(const GaussianMeasure& p, const GaussianMeasure& q) {
    if (p.dim() != q.dim()) throw std::runtime_error("w2_gaussian: dimension mismatch");
    int d = p.dim();
    double dm2 = 0.0;
    for (int i = 0; i < d; ++i) {
        double diff = p.mean[static_cast<size_t>(i)] - q.mean[static_cast<size_t>(i)];
        dm2 += diff * diff;
    }
    Tensor rq = linalg::spd_sqrt(q.cov);
    Tensor inner = linalg::matmul(linalg::matmul(rq, p.cov), rq);
    // symmetrize against roundoff before the second square root
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < i; ++j) {
            double v = 0.5 * (inner.at(i, j) + inner.at(j, i));
            inner.at(i, j) = v;
            inner.at(j, i) = v;
        }
    Tensor cross = linalg::spd_sqrt(inner);
    double tr = 0.0;
    for (int i = 0; i < d; ++i) tr += p.cov.at(i, i) + q.cov.at(i, i) - 2.0 * cross.at(i, i);
    double w2sq = dm2 + tr;
    if (w2sq < 0.0) w2sq = 0.0;  // roundoff guard near identical Gaussians
    return std::sqrt(w2sq);
}

double w2_histogram_1d(const HistogramMeasure& p, const HistogramMeasure& q) {
    if (p.dim() != 1 || q.dim() != 1) throw std::runtime_error("w2_histogram_1d: supports must be 1-D");
    auto sorted = [](const HistogramMeasure& h) {
        std::vector<std::pair<double, double>> v;
        for (int i = 0; i < h.size(); ++i) v.emplace_back(h.support.at(i, 0), h.probs[static_cast<size_t>(i)]);
        std::sort(v.begin(), v.end());
        return v;
    };
    auto a = sorted(p), b = sorted(q);
    size_t i = 0, j = 0;
    double ma = a[0].second, mb = b[0].second, acc = 0.0;
    while (i < a.size() && j < b.size()) {
        double step = std::min(ma, mb);
        double diff = a[i].first - b[j].first;
        acc += step * diff * diff;
        ma -= step;
        mb -= step;
        if (ma <= 1e-15 && i + 1 <= a.size()) {
            ++i;
            ma = i < a.size() ? a[i].second : 0.0;
        }
        if (mb <= 1e-15 && j + 1 <= b.size()) {
            ++j;
            mb = j < b.size() ? b[j].second : 0.0;
        }
    }
    return std::sqrt(acc);
}

double second_moment(const GaussianMeasure& m) {
    double tr = 0.0;
    for (int i = 0; i < m.dim(); ++i) tr += m.cov.at(i, i);
    return tr + sq_norm(m.mean);
}

double second_moment(const EmpiricalMeasure& m) {
    double s = 0.0;
    for (int i = 0; i < m.size(); ++i) {
        double n2 = 0.0;
        for (int j = 0; j < m.dim(); ++j) n2 += m.points.at(i, j) * m.points.at(i, j);
        s += m.weights[static_cast<size_t>(i)] * n2;
    }
    return s;
}

double second_moment(const HistogramMeasure& m) {
    double s = 0.0;
    for (int i = 0; i < m.size(); ++i) {
        double n2 = 0.0;
        for (int j = 0; j < m.dim(); ++j) n2 += m.support.at(i, j) * m.support.at(i, j);
        s += m.probs[static_cast<size_t>(i)] * n2;
    }
    return s;
}

}  // namespace otdg::meas
