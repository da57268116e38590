#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace rismux {

using cplx = std::complex<double>;

// Dense row-major complex matrix. Deliberately minimal: the solver and
// factorization entry points live in numerics.hpp so every call site that can
// fail goes through one audited path.
struct ComplexMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<cplx> a;

    ComplexMatrix() = default;
    ComplexMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, cplx(0.0, 0.0)) {}

    cplx& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    const cplx& operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    cplx* row(std::size_t r) { return a.data() + r * cols; }
    const cplx* row(std::size_t r) const { return a.data() + r * cols; }

    bool same_shape(const ComplexMatrix& o) const { return rows == o.rows && cols == o.cols; }

    static ComplexMatrix identity(std::size_t n) {
        ComplexMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = cplx(1.0, 0.0);
        return m;
    }
};

inline bool operator==(const ComplexMatrix& x, const ComplexMatrix& y) {
    return x.rows == y.rows && x.cols == y.cols && x.a == y.a;
}

// Rank-3 real tensor indexed (map, row, col), row-major within a map.
// Feature stacks and convolution activations use this layout.
struct RealTensor3 {
    std::size_t maps = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> v;

    RealTensor3() = default;
    RealTensor3(std::size_t k, std::size_t h, std::size_t w) : maps(k), height(h), width(w), v(k * h * w, 0.0) {}

    double& at(std::size_t k, std::size_t h, std::size_t w) { return v[(k * height + h) * width + w]; }
    const double& at(std::size_t k, std::size_t h, std::size_t w) const { return v[(k * height + h) * width + w]; }

    double* map(std::size_t k) { return v.data() + k * height * width; }
    const double* map(std::size_t k) const { return v.data() + k * height * width; }

    std::size_t plane() const { return height * width; }
};

inline bool operator==(const RealTensor3& x, const RealTensor3& y) {
    return x.maps == y.maps && x.height == y.height && x.width == y.width && x.v == y.v;
}

}  // namespace rismux
