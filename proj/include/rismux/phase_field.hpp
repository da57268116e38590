#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "rismux/complex_matrix.hpp"

namespace rismux {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

// Wraps to [-pi, pi). The upper endpoint maps to -pi so phase features and
// reconstructed unit-modulus values agree.
inline double wrap_pm_pi(double x) {
    double r = std::remainder(x, kTwoPi);
    if (r >= kPi) r -= kTwoPi;
    return r;
}

// Reflection phases over the element grid. Element n of the flat vector is
// grid cell (h, w) with n = h * width + w (rows scanned left to right, top
// row first), matching the feature-map layout exactly.
struct PhaseField {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> psi;

    PhaseField() = default;
    PhaseField(std::size_t h, std::size_t w) : height(h), width(w), psi(h * w, 0.0) {}

    std::size_t size() const { return psi.size(); }

    double& at(std::size_t h, std::size_t w) { return psi[h * width + w]; }
    const double& at(std::size_t h, std::size_t w) const { return psi[h * width + w]; }

    cplx unit(std::size_t n) const { return std::polar(1.0, psi[n]); }
};

inline bool operator==(const PhaseField& x, const PhaseField& y) {
    return x.height == y.height && x.width == y.width && x.psi == y.psi;
}

}  // namespace rismux
