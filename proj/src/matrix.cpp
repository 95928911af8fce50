#include "chf/matrix.hpp"

#include <cmath>
#include <string>

#include "chf/errors.hpp"

namespace chf {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ValidationError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ValidationError("matmul_at_b: row counts differ");
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ValidationError("matmul_a_bt: column counts differ");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
            ci[j] = s;
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix cholesky(const Matrix& a) {
    if (a.rows() != a.cols()) throw ValidationError("cholesky: matrix not square");
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag)) {
            throw RunError("cholesky: matrix not positive definite at pivot " +
                           std::to_string(j));
        }
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            const double* li = l.row(i);
            const double* lj = l.row(j);
            for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
            l(i, j) = s / ljj;
        }
    }
    return l;
}

void solve_lower_inplace(const Matrix& l, Matrix& b) {
    if (l.rows() != b.rows()) throw ValidationError("solve_lower: dimension mismatch");
    const std::size_t n = l.rows();
    const std::size_t m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* bi = b.row(i);
        const double* li = l.row(i);
        for (std::size_t k = 0; k < i; ++k) {
            const double lik = li[k];
            if (lik == 0.0) continue;
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < m; ++j) bi[j] -= lik * bk[j];
        }
        const double inv = 1.0 / li[i];
        for (std::size_t j = 0; j < m; ++j) bi[j] *= inv;
    }
}

void solve_lower_transpose_inplace(const Matrix& l, Matrix& b) {
    if (l.rows() != b.rows()) throw ValidationError("solve_lower_t: dimension mismatch");
    const std::size_t n = l.rows();
    const std::size_t m = b.cols();
    for (std::size_t ii = n; ii-- > 0;) {
        double* bi = b.row(ii);
        for (std::size_t k = ii + 1; k < n; ++k) {
            const double lki = l(k, ii);
            if (lki == 0.0) continue;
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < m; ++j) bi[j] -= lki * bk[j];
        }
        const double inv = 1.0 / l(ii, ii);
        for (std::size_t j = 0; j < m; ++j) bi[j] *= inv;
    }
}

}  // namespace chf
