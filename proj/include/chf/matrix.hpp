#pragma once

#include <cstddef>
#include <vector>

namespace chf {

/// Dense row-major matrix of doubles. Deliberately small: the pipeline's
/// linear algebra tops out at a few hundred rows and columns.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool operator==(const Matrix& other) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// C = A * B.
Matrix matmul(const Matrix& a, const Matrix& b);

/// C = A^T * B without forming the transpose.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);

/// C = A * B^T without forming the transpose.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

/// Lower Cholesky factor of a symmetric positive-definite matrix.
/// Throws RunError naming the pivot if the matrix is not positive definite.
Matrix cholesky(const Matrix& a);

/// B := L^{-1} B for lower-triangular L, in place.
void solve_lower_inplace(const Matrix& l, Matrix& b);

/// B := L^{-T} B for lower-triangular L, in place.
void solve_lower_transpose_inplace(const Matrix& l, Matrix& b);

}  // namespace chf
