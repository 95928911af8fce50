#include <doctest.h>

#include <cmath>

#include "chf/errors.hpp"
#include "chf/matrix.hpp"

using namespace chf;

namespace {

Matrix make(std::size_t rows, std::size_t cols, std::initializer_list<double> vals) {
    Matrix m(rows, cols);
    std::size_t k = 0;
    for (double v : vals) m.data()[k++] = v;
    REQUIRE(k == m.size());
    return m;
}

void check_close(const Matrix& a, const Matrix& b, double tol) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c)
            CHECK(a(r, c) == doctest::Approx(b(r, c)).epsilon(tol));
}

}  // namespace

TEST_CASE("matmul produces known products") {
    const Matrix a = make(2, 3, {1, 2, 3, 4, 5, 6});
    const Matrix b = make(3, 2, {7, 8, 9, 10, 11, 12});
    const Matrix c = matmul(a, b);
    REQUIRE(c.rows() == 2);
    REQUIRE(c.cols() == 2);
    CHECK(c(0, 0) == 58.0);
    CHECK(c(0, 1) == 64.0);
    CHECK(c(1, 0) == 139.0);
    CHECK(c(1, 1) == 154.0);
}

TEST_CASE("transpose swaps rows and columns") {
    const Matrix a = make(2, 3, {1, 2, 3, 4, 5, 6});
    const Matrix t = transpose(a);
    REQUIRE(t.rows() == 3);
    REQUIRE(t.cols() == 2);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) CHECK(t(c, r) == a(r, c));
}

TEST_CASE("fused transpose products agree with explicit transposes") {
    const Matrix a = make(3, 2, {0.5, -1.0, 2.0, 4.0, -3.0, 1.5});
    const Matrix b = make(3, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    check_close(matmul_at_b(a, b), matmul(transpose(a), b), 1e-12);

    const Matrix c = make(4, 2, {1, 0, 0, 1, 2, 3, -1, 1});
    check_close(matmul_a_bt(b, transpose(c)), matmul(b, c), 1e-12);
}

TEST_CASE("cholesky factors a known SPD matrix") {
    // A = L L^T with L = [[2,0,0],[6,1,0],[-8,5,3]]
    const Matrix a = make(3, 3, {4, 12, -16, 12, 37, -43, -16, -43, 98});
    const Matrix l = cholesky(a);
    REQUIRE(l.rows() == 3);
    REQUIRE(l.cols() == 3);
    CHECK(l(0, 0) == doctest::Approx(2.0));
    CHECK(l(1, 0) == doctest::Approx(6.0));
    CHECK(l(1, 1) == doctest::Approx(1.0));
    CHECK(l(2, 0) == doctest::Approx(-8.0));
    CHECK(l(2, 1) == doctest::Approx(5.0));
    CHECK(l(2, 2) == doctest::Approx(3.0));
    // strictly lower-triangular output
    CHECK(l(0, 1) == 0.0);
    CHECK(l(0, 2) == 0.0);
    CHECK(l(1, 2) == 0.0);
    // L L^T reproduces A
    check_close(matmul_a_bt(l, l), a, 1e-12);
}

TEST_CASE("cholesky rejects a matrix that is not positive definite") {
    const Matrix a = make(2, 2, {1, 2, 2, 1});
    CHECK_THROWS_AS(cholesky(a), RunError);
}

TEST_CASE("triangular solves invert multiplication by L and L^T") {
    const Matrix a = make(3, 3, {4, 12, -16, 12, 37, -43, -16, -43, 98});
    const Matrix l = cholesky(a);
    const Matrix x = make(3, 2, {1, -2, 0.5, 3, -1, 4});

    Matrix b = matmul(l, x);
    solve_lower_inplace(l, b);
    check_close(b, x, 1e-12);

    Matrix c = matmul_at_b(l, x);
    solve_lower_transpose_inplace(l, c);
    check_close(c, x, 1e-12);
}

TEST_CASE("solving with both triangles inverts the full matrix") {
    const Matrix a = make(3, 3, {4, 12, -16, 12, 37, -43, -16, -43, 98});
    const Matrix l = cholesky(a);
    const Matrix x = make(3, 1, {2.0, -1.0, 0.25});

    Matrix b = matmul(a, x);
    solve_lower_inplace(l, b);
    solve_lower_transpose_inplace(l, b);
    check_close(b, x, 1e-10);
}
