#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace otdg {

// Dense row-major matrix of 64-bit floats. Scalars are 1x1, vectors are
// n x 1 or 1 x n. Every tensor in the project goes through this type.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }
    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double v) {
        Tensor t(r, c);
        for (auto& x : t.data) x = v;
        return t;
    }
    static Tensor row(const std::vector<double>& v) {
        Tensor t(1, static_cast<int>(v.size()));
        t.data = v;
        return t;
    }
    static Tensor column(const std::vector<double>& v) {
        Tensor t(static_cast<int>(v.size()), 1);
        t.data = v;
        return t;
    }
    static Tensor from_rows(const std::vector<std::vector<double>>& rs) {
        if (rs.empty()) return Tensor();
        Tensor t(static_cast<int>(rs.size()), static_cast<int>(rs[0].size()));
        for (int i = 0; i < t.rows; ++i)
            for (int j = 0; j < t.cols; ++j) t.at(i, j) = rs[static_cast<size_t>(i)][static_cast<size_t>(j)];
        return t;
    }

    double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    size_t size() const { return data.size(); }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    double item() const { return data[0]; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::vector<double> row_vec(int i) const {
        std::vector<double> out(static_cast<size_t>(cols));
        for (int j = 0; j < cols; ++j) out[static_cast<size_t>(j)] = at(i, j);
        return out;
    }

    std::string shape_str() const {
        return "[" + std::to_string(rows) + " x " + std::to_string(cols) + "]";
    }
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace otdg
