#include "otdg/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace otdg::linalg {

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows) throw std::runtime_error("matmul: shape mismatch " + a.shape_str() + " * " + b.shape_str());
    Tensor out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    Tensor out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor cholesky(const Tensor& a) {
    if (a.rows != a.cols) throw std::runtime_error("cholesky: matrix not square");
    int n = a.rows;
    Tensor l(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a.at(i, j);
            for (int k = 0; k < j; ++k) sum -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (sum <= 0.0) throw std::runtime_error("cholesky: matrix not positive definite");
                l.at(i, i) = std::sqrt(sum);
            } else {
                l.at(i, j) = sum / l.at(j, j);
            }
        }
    }
    return l;
}

namespace {

double hypot2(double a, double b) { return std::sqrt(a * a + b * b); }

// Householder reduction of a symmetric matrix to tridiagonal form; the
// classic tred2 routine. `z` holds the accumulated transform on exit.
void tred2(Tensor& z, std::vector<double>& d, std::vector<double>& e) {
    int n = z.rows;
    d.assign(static_cast<size_t>(n), 0.0);
    e.assign(static_cast<size_t>(n), 0.0);
    for (int i = n - 1; i > 0; --i) {
        int l = i - 1;
        double h = 0.0, scale = 0.0;
        if (l > 0) {
            for (int k = 0; k <= l; ++k) scale += std::fabs(z.at(i, k));
            if (scale == 0.0) {
                e[static_cast<size_t>(i)] = z.at(i, l);
            } else {
                for (int k = 0; k <= l; ++k) {
                    z.at(i, k) /= scale;
                    h += z.at(i, k) * z.at(i, k);
                }
                double f = z.at(i, l);
                double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
                e[static_cast<size_t>(i)] = scale * g;
                h -= f * g;
                z.at(i, l) = f - g;
                f = 0.0;
                for (int j = 0; j <= l; ++j) {
                    z.at(j, i) = z.at(i, j) / h;
                    g = 0.0;
                    for (int k = 0; k <= j; ++k) g += z.at(j, k) * z.at(i, k);
                    for (int k = j + 1; k <= l; ++k) g += z.at(k, j) * z.at(i, k);
                    e[static_cast<size_t>(j)] = g / h;
                    f += e[static_cast<size_t>(j)] * z.at(i, j);
                }
                double hh = f / (h + h);
                for (int j = 0; j <= l; ++j) {
                    f = z.at(i, j);
                    e[static_cast<size_t>(j)] = g = e[static_cast<size_t>(j)] - hh * f;
                    for (int k = 0; k <= j; ++k)
                        z.at(j, k) -= f * e[static_cast<size_t>(k)] + g * z.at(i, k);
                }
            }
        } else {
            e[static_cast<size_t>(i)] = z.at(i, l);
        }
        d[static_cast<size_t>(i)] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for (int i = 0; i < n; ++i) {
        int l = i - 1;
        if (d[static_cast<size_t>(i)] != 0.0) {
            for (int j = 0; j <= l; ++j) {
                double g = 0.0;
                for (int k = 0; k <= l; ++k) g += z.at(i, k) * z.at(k, j);
                for (int k = 0; k <= l; ++k) z.at(k, j) -= g * z.at(k, i);
            }
        }
        d[static_cast<size_t>(i)] = z.at(i, i);
        z.at(i, i) = 1.0;
        for (int j = 0; j <= l; ++j) {
            z.at(j, i) = 0.0;
            z.at(i, j) = 0.0;
        }
    }
}

// Implicit-shift QL on the tridiagonal form, accumulating eigenvectors in z.
void tqli(std::vector<double>& d, std::vector<double>& e, Tensor& z) {
    int n = static_cast<int>(d.size());
    for (int i = 1; i < n; ++i) e[static_cast<size_t>(i - 1)] = e[static_cast<size_t>(i)];
    e[static_cast<size_t>(n - 1)] = 0.0;
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                double dd = std::fabs(d[static_cast<size_t>(m)]) + std::fabs(d[static_cast<size_t>(m + 1)]);
                if (std::fabs(e[static_cast<size_t>(m)]) <= 1e-300 + 2.3e-16 * dd) break;
            }
            if (m != l) {
                if (++iter == 50) throw std::runtime_error("eig_sym: QL iteration did not converge");
                double g = (d[static_cast<size_t>(l + 1)] - d[static_cast<size_t>(l)]) / (2.0 * e[static_cast<size_t>(l)]);
                double r = hypot2(g, 1.0);
                g = d[static_cast<size_t>(m)] - d[static_cast<size_t>(l)] +
                    e[static_cast<size_t>(l)] / (g + (g >= 0.0 ? std::fabs(r) : -std::fabs(r)));
                double s = 1.0, c = 1.0, p = 0.0;
                for (int i = m - 1; i >= l; --i) {
                    double f = s * e[static_cast<size_t>(i)];
                    double b = c * e[static_cast<size_t>(i)];
                    r = hypot2(f, g);
                    e[static_cast<size_t>(i + 1)] = r;
                    if (r == 0.0) {
                        d[static_cast<size_t>(i + 1)] -= p;
                        e[static_cast<size_t>(m)] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[static_cast<size_t>(i + 1)] - p;
                    r = (d[static_cast<size_t>(i)] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[static_cast<size_t>(i + 1)] = g + p;
                    g = c * r - b;
                    for (int k = 0; k < n; ++k) {
                        f = z.at(k, i + 1);
                        z.at(k, i + 1) = s * z.at(k, i) + c * f;
                        z.at(k, i) = c * z.at(k, i) - s * f;
                    }
                }
                if (r == 0.0 && m - 1 >= l) continue;
                d[static_cast<size_t>(l)] -= p;
                e[static_cast<size_t>(l)] = g;
                e[static_cast<size_t>(m)] = 0.0;
            }
        } while (m != l);
    }
}

}  // namespace

SymEig eig_sym(const Tensor& a) {
    if (a.rows != a.cols) throw std::runtime_error("eig_sym: matrix not square");
    SymEig out;
    out.vectors = a;
    std::vector<double> e;
    tred2(out.vectors, out.values, e);
    tqli(out.values, e, out.vectors);
    // sort ascending, permuting eigenvector columns
    int n = a.rows;
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (out.values[static_cast<size_t>(idx[static_cast<size_t>(j)])] <
                out.values[static_cast<size_t>(idx[static_cast<size_t>(i)])])
                std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    SymEig sorted;
    sorted.values.resize(static_cast<size_t>(n));
    sorted.vectors = Tensor(n, n);
    for (int j = 0; j < n; ++j) {
        sorted.values[static_cast<size_t>(j)] = out.values[static_cast<size_t>(idx[static_cast<size_t>(j)])];
        for (int i = 0; i < n; ++i) sorted.vectors.at(i, j) = out.vectors.at(i, idx[static_cast<size_t>(j)]);
    }
    return sorted;
}

Tensor spd_sqrt(const Tensor& a) {
    SymEig eg = eig_sym(a);
    int n = a.rows;
    for (double v : eg.values)
        if (v < -1e-9) throw std::runtime_error("spd_sqrt: matrix not positive semidefinite");
    Tensor out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) {
                double lam = eg.values[static_cast<size_t>(k)];
                if (lam < 0.0) lam = 0.0;
                s += eg.vectors.at(i, k) * std::sqrt(lam) * eg.vectors.at(j, k);
            }
            out.at(i, j) = s;
        }
    return out;
}

SymEig top_eig_sym(const Tensor& a, int j, int iters) {
    int n = a.rows;
    if (a.cols != n) throw std::runtime_error("top_eig_sym: matrix not square");
    if (j < 1 || j > n) throw std::runtime_error("top_eig_sym: bad eigenpair count");
    int block = std::min(n, j + 4);  // oversampling stabilizes trailing pairs

    // deterministic pseudo-random start block
    Tensor v(n, block);
    uint64_t state = 0x9e3779b97f4a7c15ULL;
    for (auto& x : v.data) {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        x = static_cast<double>(state >> 11) * 0x1.0p-53 - 0.5;
    }

    auto orthonormalize = [&](Tensor& m) {
        for (int c = 0; c < m.cols; ++c) {
            for (int p = 0; p < c; ++p) {
                double dot = 0.0;
                for (int r = 0; r < m.rows; ++r) dot += m.at(r, c) * m.at(r, p);
                for (int r = 0; r < m.rows; ++r) m.at(r, c) -= dot * m.at(r, p);
            }
            double norm = 0.0;
            for (int r = 0; r < m.rows; ++r) norm += m.at(r, c) * m.at(r, c);
            norm = std::sqrt(norm);
            if (norm < 1e-290) norm = 1.0;  // rank-deficient block; Ritz values stay ~0
            for (int r = 0; r < m.rows; ++r) m.at(r, c) /= norm;
        }
    };

    orthonormalize(v);
    for (int it = 0; it < iters; ++it) {
        v = matmul(a, v);
        orthonormalize(v);
    }

    // Rayleigh-Ritz on the converged block
    Tensor av = matmul(a, v);
    Tensor small(block, block);
    for (int i = 0; i < block; ++i)
        for (int k = 0; k < block; ++k) {
            double s = 0.0;
            for (int r = 0; r < n; ++r) s += v.at(r, i) * av.at(r, k);
            small.at(i, k) = s;
        }
    for (int i = 0; i < block; ++i)
        for (int k = 0; k < i; ++k) {
            double s = 0.5 * (small.at(i, k) + small.at(k, i));
            small.at(i, k) = s;
            small.at(k, i) = s;
        }
    SymEig se = eig_sym(small);  // ascending

    SymEig out;
    out.values.resize(static_cast<size_t>(j));
    out.vectors = Tensor(n, j);
    for (int c = 0; c < j; ++c) {
        int src = block - 1 - c;  // descending
        out.values[static_cast<size_t>(c)] = se.values[static_cast<size_t>(src)];
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int k = 0; k < block; ++k) s += v.at(r, k) * se.vectors.at(k, src);
            out.vectors.at(r, c) = s;
        }
    }
    return out;
}

std::vector<double> solve_spd(const Tensor& a, const std::vector<double>& b) {
    Tensor l = cholesky(a);
    int n = a.rows;
    std::vector<double> y(static_cast<size_t>(n)), x(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double s = b[static_cast<size_t>(i)];
        for (int k = 0; k < i; ++k) s -= l.at(i, k) * y[static_cast<size_t>(k)];
        y[static_cast<size_t>(i)] = s / l.at(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = y[static_cast<size_t>(i)];
        for (int k = i + 1; k < n; ++k) s -= l.at(k, i) * x[static_cast<size_t>(k)];
        x[static_cast<size_t>(i)] = s / l.at(i, i);
    }
    return x;
}

}  // namespace otdg::linalg
