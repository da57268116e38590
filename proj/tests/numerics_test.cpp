#include <cmath>
#include <doctest.h>

#include "rismux/error.hpp"
#include "rismux/numerics.hpp"
#include "rismux/rng.hpp"
#include "test_util.hpp"

using namespace rismux;
using testutil::random_hpd;
using testutil::random_matrix;
using testutil::random_orthonormal_columns;

TEST_CASE("matmul by the identity returns the operand") {
    Rng rng(11);
    ComplexMatrix x = random_matrix(rng, 2, 3);
    ComplexMatrix y = matmul(ComplexMatrix::identity(2), x);
    CHECK(max_abs_diff(x, y) == 0.0);
}

TEST_CASE("matmul squares the imaginary unit to minus one") {
    ComplexMatrix j(1, 1);
    j(0, 0) = cplx(0.0, 1.0);
    ComplexMatrix p = matmul(j, j);
    CHECK(p(0, 0).real() == doctest::Approx(-1.0));
    CHECK(p(0, 0).imag() == doctest::Approx(0.0));
}

TEST_CASE("matmul agrees with an independent triple-loop sum") {
    Rng rng(12);
    ComplexMatrix x = random_matrix(rng, 3, 4);
    ComplexMatrix y = random_matrix(rng, 4, 2);
    ComplexMatrix got = matmul(x, y);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 2; ++c) {
            cplx s(0.0, 0.0);
            for (std::size_t k = 0; k < 4; ++k) s += x(r, k) * y(k, c);
            CHECK(std::abs(got(r, c) - s) < 1e-14);
        }
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    ComplexMatrix x(2, 3), y(2, 2);
    CHECK_THROWS_WITH_AS(matmul(x, y), doctest::Contains("2x3"), Error);
}

TEST_CASE("conjugate transpose flips shape and conjugates entries") {
    Rng rng(13);
    ComplexMatrix x = random_matrix(rng, 2, 5);
    ComplexMatrix xh = conjugate_transpose(x);
    REQUIRE(xh.rows == 5);
    REQUIRE(xh.cols == 2);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 5; ++c) CHECK(xh(c, r) == std::conj(x(r, c)));
}

TEST_CASE("hermitian solve on a scaled identity") {
    ComplexMatrix a = ComplexMatrix::identity(2);
    for (cplx& v : a.a) v *= 2.0;
    ComplexMatrix x = hermitian_solve(a, ComplexMatrix::identity(2));
    CHECK(max_abs_diff(x, [] {
              ComplexMatrix h = ComplexMatrix::identity(2);
              for (cplx& v : h.a) v *= 0.5;
              return h;
          }()) < 1e-14);
}

TEST_CASE("hermitian solve with the identity returns the right-hand side") {
    Rng rng(14);
    ComplexMatrix b = random_matrix(rng, 3, 2);
    ComplexMatrix x = hermitian_solve(ComplexMatrix::identity(3), b);
    CHECK(max_abs_diff(x, b) < 1e-14);
}

TEST_CASE("hermitian solve residual stays below 1e-10 on random positive definite systems") {
    Rng rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        ComplexMatrix a = random_hpd(rng, 4);
        ComplexMatrix b = random_matrix(rng, 4, 3);
        ComplexMatrix x = hermitian_solve(a, b);
        ComplexMatrix ax = matmul(a, x);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < b.a.size(); ++i) {
            num += std::norm(ax.a[i] - b.a[i]);
            den += std::norm(b.a[i]);
        }
        CHECK(std::sqrt(num / den) < 1e-10);
    }
}

TEST_CASE("hermitian solve names the failing pivot on an indefinite matrix") {
    ComplexMatrix a = ComplexMatrix::identity(3);
    a(2, 2) = cplx(-1.0, 0.0);
    CHECK_THROWS_WITH_AS(hermitian_solve(a, ComplexMatrix::identity(3)), doctest::Contains("at index 2"),
                         Error);
}

TEST_CASE("hermitian inverse composes to the identity") {
    Rng rng(16);
    ComplexMatrix a = random_hpd(rng, 5);
    ComplexMatrix inv = hermitian_inverse(a);
    CHECK(max_abs_diff(matmul(a, inv), ComplexMatrix::identity(5)) < 1e-10);
}

TEST_CASE("pseudoinverse of an invertible square matrix is the ordinary inverse") {
    ComplexMatrix a(2, 2);
    a(0, 0) = cplx(1.0, 1.0);
    a(0, 1) = cplx(2.0, 0.0);
    a(1, 0) = cplx(0.0, -1.0);
    a(1, 1) = cplx(1.0, 0.0);
    ComplexMatrix p = pseudoinverse(a);
    CHECK(max_abs_diff(matmul(a, p), ComplexMatrix::identity(2)) < 1e-12);
    CHECK(max_abs_diff(matmul(p, a), ComplexMatrix::identity(2)) < 1e-12);
}

TEST_CASE("pseudoinverse of orthonormal columns is the conjugate transpose") {
    Rng rng(17);
    ComplexMatrix q = random_orthonormal_columns(rng, 6, 3);
    ComplexMatrix p = pseudoinverse(q);
    CHECK(max_abs_diff(p, conjugate_transpose(q)) < 1e-12);
}

TEST_CASE("pseudoinverse is a left inverse at full column rank") {
    Rng rng(18);
    for (int trial = 0; trial < 20; ++trial) {
        ComplexMatrix h = random_matrix(rng, 6, 3);
        ComplexMatrix p = pseudoinverse(h);
        CHECK(max_abs_diff(matmul(p, h), ComplexMatrix::identity(3)) < 1e-10);
    }
}

TEST_CASE("pseudoinverse satisfies all four Moore-Penrose conditions") {
    Rng rng(19);
    // include a genuinely rank-deficient operand: two identical columns
    ComplexMatrix deficient = random_matrix(rng, 5, 3);
    for (std::size_t r = 0; r < 5; ++r) deficient(r, 2) = deficient(r, 1);
    const ComplexMatrix cases[] = {random_matrix(rng, 4, 4), random_matrix(rng, 6, 3),
                                   random_matrix(rng, 3, 6), deficient};
    for (const ComplexMatrix& a : cases) {
        ComplexMatrix p = pseudoinverse(a);
        REQUIRE(p.rows == a.cols);
        REQUIRE(p.cols == a.rows);
        ComplexMatrix ap = matmul(a, p);
        ComplexMatrix pa = matmul(p, a);
        CHECK(max_abs_diff(matmul(ap, a), a) < 1e-8);
        CHECK(max_abs_diff(matmul(pa, p), p) < 1e-8);
        CHECK(max_abs_diff(ap, conjugate_transpose(ap)) < 1e-8);
        CHECK(max_abs_diff(pa, conjugate_transpose(pa)) < 1e-8);
    }
}

TEST_CASE("pseudoinverse of the zero matrix is the zero matrix transposed") {
    ComplexMatrix z(3, 2);
    ComplexMatrix p = pseudoinverse(z);
    REQUIRE(p.rows == 2);
    REQUIRE(p.cols == 3);
    for (const cplx& v : p.a) CHECK(v == cplx(0.0, 0.0));
}

TEST_CASE("pseudoinverse truncates directions at the arithmetic noise floor") {
    // rank-one outer product contaminated at 1e-12: the junk direction must
    // not be inverted into a 1e12 blow-up
    Rng rng(20);
    ComplexMatrix u = random_matrix(rng, 6, 1), v = random_matrix(rng, 1, 4);
    ComplexMatrix a = matmul(u, v);
    a(3, 2) += cplx(1e-12, 0.0);
    ComplexMatrix p = pseudoinverse(a);
    double peak = 0.0;
    for (const cplx& x : p.a) peak = std::max(peak, std::abs(x));
    CHECK(peak < 1e3);
}

TEST_CASE("singular values come back sorted and match a known diagonal") {
    ComplexMatrix a(3, 3);
    a(0, 0) = cplx(2.0, 0.0);
    a(1, 1) = cplx(0.0, 5.0);  // modulus decides the singular value
    a(2, 2) = cplx(-1.0, 0.0);
    const std::vector<double> sv = singular_values(a);
    REQUIRE(sv.size() == 3);
    CHECK(sv[0] == doctest::Approx(5.0));
    CHECK(sv[1] == doctest::Approx(2.0));
    CHECK(sv[2] == doctest::Approx(1.0));
}

TEST_CASE("numeric rank counts only significant directions") {
    Rng rng(21);
    ComplexMatrix u = random_matrix(rng, 6, 2), v = random_matrix(rng, 2, 5);
    ComplexMatrix a = matmul(u, v);  // rank two by construction
    CHECK(numeric_rank(a) == 2);
    CHECK(numeric_rank(random_matrix(rng, 4, 3)) == 3);
    CHECK(numeric_rank(ComplexMatrix(3, 3)) == 0);
}

TEST_CASE("finite differences recover the derivative of a quadratic") {
    auto f = [](const std::vector<double>& x) { return x[0] * x[0]; };
    const std::vector<double> g = finite_difference_gradient(f, {3.0}, 1e-6);
    REQUIRE(g.size() == 1);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("finite differences of a constant vanish") {
    auto f = [](const std::vector<double>&) { return 4.2; };
    for (double g : finite_difference_gradient(f, {1.0, -2.0, 0.5}, 1e-6)) CHECK(g == 0.0);
}

TEST_CASE("finite differences report the coordinate of a non-finite value") {
    auto f = [](const std::vector<double>& x) { return std::log(x[1]); };
    CHECK_THROWS_WITH_AS(finite_difference_gradient(f, {1.0, 0.5}, 0.5), doctest::Contains("coordinate 1"),
                         Error);
}

TEST_CASE("numerics are pure functions of their inputs") {
    Rng rng(22);
    ComplexMatrix a = random_matrix(rng, 5, 3);
    ComplexMatrix p1 = pseudoinverse(a);
    ComplexMatrix p2 = pseudoinverse(a);
    CHECK(p1 == p2);
    ComplexMatrix h = random_hpd(rng, 4);
    ComplexMatrix b = random_matrix(rng, 4, 2);
    CHECK(hermitian_solve(h, b) == hermitian_solve(h, b));
}
