#include "rismux/numerics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <sstream>

#include "rismux/error.hpp"

namespace rismux {

namespace {

std::string shape_str(const ComplexMatrix& m) {
    std::ostringstream os;
    os << m.rows << "x" << m.cols;
    return os.str();
}

using EigenCMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EigenCMat> as_eigen(const ComplexMatrix& m) {
    return Eigen::Map<const EigenCMat>(m.a.data(), static_cast<Eigen::Index>(m.rows),
                                       static_cast<Eigen::Index>(m.cols));
}

ComplexMatrix from_eigen(const EigenCMat& e) {
    ComplexMatrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
    for (Eigen::Index r = 0; r < e.rows(); ++r)
        for (Eigen::Index c = 0; c < e.cols(); ++c) m(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = e(r, c);
    return m;
}

}  // namespace

ComplexMatrix matmul(const ComplexMatrix& x, const ComplexMatrix& y) {
    if (x.cols != y.rows)
        throw Error("matmul: shape mismatch " + shape_str(x) + " * " + shape_str(y));
    ComplexMatrix out(x.rows, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        cplx* orow = out.row(i);
        const cplx* xrow = x.row(i);
        for (std::size_t k = 0; k < x.cols; ++k) {
            const cplx xv = xrow[k];
            if (xv == cplx(0.0, 0.0)) continue;
            const cplx* yrow = y.row(k);
            for (std::size_t j = 0; j < y.cols; ++j) orow[j] += xv * yrow[j];
        }
    }
    return out;
}

ComplexMatrix conjugate_transpose(const ComplexMatrix& x) {
    ComplexMatrix out(x.cols, x.rows);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c) out(c, r) = std::conj(x(r, c));
    return out;
}

double frobenius_norm(const ComplexMatrix& x) {
    double s = 0.0;
    for (const cplx& v : x.a) s += std::norm(v);
    return std::sqrt(s);
}

double max_abs_diff(const ComplexMatrix& x, const ComplexMatrix& y) {
    if (!x.same_shape(y))
        throw Error("max_abs_diff: shape mismatch " + shape_str(x) + " vs " + shape_str(y));
    double m = 0.0;
    for (std::size_t i = 0; i < x.a.size(); ++i) m = std::max(m, std::abs(x.a[i] - y.a[i]));
    return m;
}

ComplexMatrix hermitian_solve(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows != a.cols)
        throw Error("hermitian_solve: matrix is " + shape_str(a) + ", expected square");
    if (b.rows != a.rows)
        throw Error("hermitian_solve: rhs is " + shape_str(b) + ", expected " + std::to_string(a.rows) + " rows");
    const std::size_t n = a.rows;

    // complex Cholesky a = L L^H; diagonal of L is real positive
    ComplexMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j).real();
        for (std::size_t k = 0; k < j; ++k) d -= std::norm(l(j, k));
        if (!(d > 0.0) || !std::isfinite(d)) {
            std::ostringstream os;
            os << "hermitian_solve: non-positive pivot " << d << " at index " << j
               << "; matrix is not positive definite";
            throw Error(os.str());
        }
        const double dj = std::sqrt(d);
        l(j, j) = cplx(dj, 0.0);
        for (std::size_t i = j + 1; i < n; ++i) {
            cplx s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
            l(i, j) = s / dj;
        }
    }

    // forward substitution L z = b, then back substitution L^H x = z
    ComplexMatrix x = b;
    for (std::size_t c = 0; c < x.cols; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            cplx s = x(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i).real();
        }
        for (std::size_t ii = n; ii-- > 0;) {
            cplx s = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) s -= std::conj(l(k, ii)) * x(k, c);
            x(ii, c) = s / l(ii, ii).real();
        }
    }
    return x;
}

ComplexMatrix hermitian_inverse(const ComplexMatrix& a) {
    return hermitian_solve(a, ComplexMatrix::identity(a.rows));
}

// Relative rank cutoff for the pseudoinverse and numeric_rank. Synthesized
// links are sums of planar paths whose entries carry phase-evaluation noise of
// order (wavenumber x path length) x eps, so their junk singular values land
// well above eps * sigma_max; 1e-8 discards that noise while keeping any real
// propagation path (secondary paths sit at 1e-2..1e-1 of sigma_max).
constexpr double kRankCutoff = 1e-8;

ComplexMatrix pseudoinverse(const ComplexMatrix& x) {
    if (x.rows == 0 || x.cols == 0) return ComplexMatrix(x.cols, x.rows);
    Eigen::JacobiSVD<EigenCMat> svd(as_eigen(x), Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = (sv.size() > 0 ? sv(0) : 0.0) * kRankCutoff;
    EigenCMat inv_s = EigenCMat::Zero(sv.size(), sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) inv_s(i, i) = cplx(1.0 / sv(i), 0.0);
    EigenCMat p = svd.matrixV() * inv_s * svd.matrixU().adjoint();
    return from_eigen(p);
}

std::vector<double> singular_values(const ComplexMatrix& x) {
    if (x.rows == 0 || x.cols == 0) return {};
    Eigen::JacobiSVD<EigenCMat> svd(as_eigen(x));
    const auto& sv = svd.singularValues();
    return std::vector<double>(sv.data(), sv.data() + sv.size());
}

std::size_t numeric_rank(const ComplexMatrix& x) {
    const std::vector<double> sv = singular_values(x);
    if (sv.empty()) return 0;
    const double cutoff = sv.front() * kRankCutoff;
    std::size_t r = 0;
    for (double s : sv)
        if (s > cutoff) ++r;
    return r;
}

std::vector<double> finite_difference_gradient(const std::function<double(const std::vector<double>&)>& f,
                                               const std::vector<double>& x, double h) {
    std::vector<double> g(x.size(), 0.0);
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw Error("finite_difference_gradient: non-finite value at coordinate " + std::to_string(i));
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace rismux
