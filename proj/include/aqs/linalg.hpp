#pragma once

#include <cstddef>
#include <vector>

namespace aqs {

/// Dense row-major matrix; sized for the small systems this project solves
/// (normal equations, propagation weights), not for scale.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

Matrix matmul(const Matrix& x, const Matrix& y);

/// Solves A x = b by Gaussian elimination with partial pivoting.
/// Throws RuntimeFailure on a vanishing pivot (singular system).
std::vector<double> solve_linear(Matrix a, std::vector<double> b);

/// Solves A X = B column-wise; B is rows x k.
Matrix solve_linear_multi(const Matrix& a, const Matrix& b);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace aqs
