// Dense linear algebra used by the synthetic generator.
#pragma once

#include <span>
#include <vector>

#include "connlab/matrix.hpp"

namespace connlab {

std::vector<double> matvec(const Matrix& a, std::span<const double> x);

struct EigenDecomposition {
  std::vector<double> values;  // unordered
  Matrix vectors;              // column j is the eigenvector for values[j]
};

// Cyclic Jacobi rotations for a symmetric matrix.
EigenDecomposition eigen_symmetric(const Matrix& sym, int max_sweeps = 64);

// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
Matrix cholesky_lower(const Matrix& spd);

// Replaces eigenvalues below min_eigenvalue and recomposes. Returns the
// number of eigenvalues clipped (0 when the input was already fine).
int clip_to_positive_definite(Matrix& sym, double min_eigenvalue);

}  // namespace connlab
