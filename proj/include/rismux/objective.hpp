#pragma once

#include <vector>

#include "rismux/complex_matrix.hpp"
#include "rismux/phase_field.hpp"
#include "rismux/precoding.hpp"

namespace rismux {

// One sample's channels plus operating point, borrowed by the heads.
struct WsrHeadSetup {
    const ComplexMatrix* g = nullptr;
    const ComplexMatrix* h = nullptr;
    const ComplexMatrix* d = nullptr;
    const UserWeights* weights = nullptr;
    LinkBudget lb;
};

// Weighted sum rate of the closed-form precoder at the given phases. The
// precoder is recomputed inside, so the returned gradient (d objective /
// d psi_n, written over grad_psi when non-null) differentiates through the
// regularized inverse and the power normalization, not just the channel.
double mmse_head_objective(const WsrHeadSetup& s, const PhaseField& psi, std::vector<double>* grad_psi);

// Weighted sum rate at a fixed precoder v_bar; the gradient flows only
// through the phases.
double fixed_precoder_objective(const WsrHeadSetup& s, const ComplexMatrix& v_bar, const PhaseField& psi,
                                std::vector<double>* grad_psi);

}  // namespace rismux
