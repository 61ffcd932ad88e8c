#pragma once

#include <vector>

#include "seqdiff/tensor.hpp"

namespace seqdiff {

struct SymmetricEigen {
    std::vector<double> values; // ascending
    Tensor vectors;             // columns are eigenvectors, same order
};

// Cyclic Jacobi rotations on a symmetric matrix. Deterministic sweep order,
// converges to machine precision for the small (<=64) matrices used here.
SymmetricEigen symmetric_eigen(const Tensor& a);

// Q diag(f(lambda)) Qᵀ with eigenvalues clamped at zero; negative eigenvalues
// below -tol raise NumericError.
Tensor psd_sqrt(const Tensor& a, double tol = 1e-8);

} // namespace seqdiff
