#pragma once

#include <cstdint>
#include <vector>

#include "rismux/complex_matrix.hpp"
#include "rismux/phase_field.hpp"
#include "rismux/rng.hpp"

namespace rismux {

// rho is the transmit SNR (transmit power over noise power); e_tr the trace
// budget for the precoder. Both strictly positive.
struct LinkBudget {
    double rho = 1e11;
    double e_tr = 1.0;
};

void validate_link_budget(const LinkBudget& lb);

// Per-user priorities: each in [0, 1], summing to one within 1e-9.
struct UserWeights {
    std::vector<double> alpha;
};

UserWeights make_weights(std::vector<double> alpha);
void validate_weights(const UserWeights& w, std::size_t num_users);

// G diag(e^{j psi}) H + D, the downlink channel the precoder sees.
ComplexMatrix effective_channel(const ComplexMatrix& g, const ComplexMatrix& h, const ComplexMatrix& d,
                                const PhaseField& psi);

// Per-user achievable rates log2(1 + SINR_u) for the product c_eff * v; user
// u treats every other column as interference on top of noise 1/rho.
std::vector<double> user_rates(const ComplexMatrix& c_eff, const ComplexMatrix& v, const LinkBudget& lb);

// Weighted sum rate. Invariant under a common unit-modulus scalar applied to
// any row of c_eff * v, and zero when the product vanishes.
double wsr(const ComplexMatrix& c_eff, const ComplexMatrix& v, const UserWeights& w, const LinkBudget& lb);

/// Regularized zero-forcing closed form: V = beta (C^H C + I/rho)^{-1} C^H
// with beta chosen so tr(V V^H) equals e_tr exactly. An all-zero channel has
// no such scaling and raises an Error.
ComplexMatrix mmse_precoder(const ComplexMatrix& c_eff, const LinkBudget& lb);

struct WmmseOptions {
    double eps = 1e-4;          // stop when the weight sums of consecutive iterates differ by at most this
    std::size_t max_outer = 100;
    double power_rel_tol = 1e-10;  // multiplier search: achieved power within this of e_tr, never above
};

struct WmmseResult {
    ComplexMatrix v;                  // M x U
    std::vector<double> wsr_trace;    // objective at the initial point and after each outer iterate
    std::vector<double> power_trace;  // tr(V V^H) at the same points
    std::size_t iterations = 0;       // outer iterates executed
    double mu_last = 0.0;             // final power multiplier
    double power_last = 0.0;          // tr(V V^H) of the returned precoder
};

// Block-coordinate weighted MMSE ascent on the sum-rate objective: receive
// scalars, MSE weights, then transmit vectors under the power budget, the
// multiplier resolved by bisection over an eigendecomposition of the
// regularized normal matrix. The objective never decreases across iterates
// (up to roundoff) and the power budget holds at every iterate.
WmmseResult wmmse_precoder(const ComplexMatrix& c_eff, const UserWeights& w, const LinkBudget& lb,
                           const ComplexMatrix& v_init, const WmmseOptions& opts = {});

// Phases drawn uniformly from [0, 2 pi).
PhaseField random_phase_baseline(std::size_t height, std::size_t width, Rng& rng);

// Fixed-step gradient ascent on the sum rate with the closed-form precoder
// recomputed inside the objective at every step; returns the best iterate
// seen, so a too-large step can stall but never worsens the start point.
PhaseField alternating_gradient_baseline(const ComplexMatrix& g, const ComplexMatrix& h,
                                         const ComplexMatrix& d, const UserWeights& w,
                                         const LinkBudget& lb, const PhaseField& psi0, std::size_t steps,
                                         double step_size);

}  // namespace rismux
