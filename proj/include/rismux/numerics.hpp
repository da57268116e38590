#pragma once

#include <functional>
#include <vector>

#include "rismux/complex_matrix.hpp"

namespace rismux {

// x * y, naive triple loop. Operand shapes must chain; mismatch is an Error
// naming both shapes.
ComplexMatrix matmul(const ComplexMatrix& x, const ComplexMatrix& y);

ComplexMatrix conjugate_transpose(const ComplexMatrix& x);

double frobenius_norm(const ComplexMatrix& x);

// max_ij |x_ij - y_ij|
double max_abs_diff(const ComplexMatrix& x, const ComplexMatrix& y);

// Solves a x = b for Hermitian positive definite a via an in-house complex
// Cholesky factorization, so a failed pivot can be reported by index rather
// than as a generic singular-matrix failure. b may have any column count.
ComplexMatrix hermitian_solve(const ComplexMatrix& a, const ComplexMatrix& b);

ComplexMatrix hermitian_inverse(const ComplexMatrix& a);

// Moore-Penrose pseudoinverse via SVD. Singular values at or below
// sigma_max * 1e-8 are treated as zero, which discards the arithmetic noise
// floor of synthesized planar-path links while keeping any genuine
// propagation direction; a zero matrix maps to a zero matrix of the
// transposed shape.
ComplexMatrix pseudoinverse(const ComplexMatrix& x);

// Singular values in descending order.
std::vector<double> singular_values(const ComplexMatrix& x);

// Count of singular values above the pseudoinverse cutoff.
std::size_t numeric_rank(const ComplexMatrix& x);

// Central differences (f(x+h e_i) - f(x - h e_i)) / 2h. The shared oracle for
// every analytic gradient in the project. A non-finite f value raises an
// Error naming the coordinate.
std::vector<double> finite_difference_gradient(const std::function<double(const std::vector<double>&)>& f,
                                               const std::vector<double>& x, double h = 1e-6);

}  // namespace rismux
