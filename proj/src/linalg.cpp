#include "aqs/linalg.hpp"

#include <cmath>
#include <cstdlib>

#include "aqs/common.hpp"

namespace aqs {

Matrix matmul(const Matrix& x, const Matrix& y) {
    if (x.cols != y.rows) throw RuntimeFailure("matmul: inner dimensions disagree");
    Matrix out(x.rows, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t k = 0; k < x.cols; ++k) {
            double xv = x(i, k);
            if (xv == 0.0) continue;
            for (std::size_t j = 0; j < y.cols; ++j) out(i, j) += xv * y(k, j);
        }
    }
    return out;
}

std::vector<double> solve_linear(Matrix a, std::vector<double> b) {
    const std::size_t n = a.rows;
    if (a.cols != n || b.size() != n) throw RuntimeFailure("solve_linear: shape mismatch");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::fabs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            double v = std::fabs(a(r, col));
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best < 1e-300) throw RuntimeFailure("solve_linear: singular matrix");
        if (piv != col) {
            for (std::size_t c = col; c < n; ++c) std::swap(a(piv, c), a(col, c));
            std::swap(b[piv], b[col]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t ri = n; ri-- > 0;) {
        double s = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) s -= a(ri, c) * x[c];
        x[ri] = s / a(ri, ri);
    }
    return x;
}

Matrix solve_linear_multi(const Matrix& a, const Matrix& b) {
    if (b.rows != a.rows) throw RuntimeFailure("solve_linear_multi: shape mismatch");
    Matrix x(a.rows, b.cols);
    for (std::size_t j = 0; j < b.cols; ++j) {
        std::vector<double> col(a.rows);
        for (std::size_t i = 0; i < a.rows; ++i) col[i] = b(i, j);
        std::vector<double> sol = solve_linear(a, col);
        for (std::size_t i = 0; i < a.rows; ++i) x(i, j) = sol[i];
    }
    return x;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) throw RuntimeFailure("pearson: length mismatch");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nan("");  // caller decides how degenerate series rank
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace aqs
