#pragma once

#include <vector>

#include "otdg/tensor.hpp"

namespace otdg::linalg {

// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
// Throws std::runtime_error if the matrix is not PD.
Tensor cholesky(const Tensor& a);

// Symmetric eigendecomposition, eigenvalues ascending, eigenvectors in the
// columns of `vectors`. Householder tridiagonalization + implicit-shift QL.
struct SymEig {
    std::vector<double> values;
    Tensor vectors;
};
SymEig eig_sym(const Tensor& a);

// Principal square root of a symmetric positive-semidefinite matrix.
Tensor spd_sqrt(const Tensor& a);

// Leading j eigenpairs (descending) of a symmetric PSD matrix via block
// power iteration with a Rayleigh-Ritz finish. Deterministic start vectors.
SymEig top_eig_sym(const Tensor& a, int j, int iters = 60);

// Solve A x = b for SPD A via Cholesky.
std::vector<double> solve_spd(const Tensor& a, const std::vector<double>& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

}  // namespace otdg::linalg
