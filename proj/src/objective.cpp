#include "rismux/objective.hpp"

#include <cmath>

#include "rismux/error.hpp"
#include "rismux/numerics.hpp"

namespace rismux {

namespace {

constexpr double kLn2 = 0.6931471805599453094172321214582;

// f = sum_u alpha_u log2(1 + |p_uu|^2 / (sum_{t != u} |p_ut|^2 + 1/rho)) for
// the U x U product p = C V. When adj is non-null it receives d f / d conj(p).
double wsr_from_product(const ComplexMatrix& p, const UserWeights& w, double noise, ComplexMatrix* adj) {
    const std::size_t users = p.rows;
    if (adj) *adj = ComplexMatrix(users, users);
    double f = 0.0;
    for (std::size_t u = 0; u < users; ++u) {
        double total = noise;
        for (std::size_t t = 0; t < users; ++t) total += std::norm(p(u, t));
        const double sig = std::norm(p(u, u));
        const double interference = total - sig;
        f += w.alpha[u] * std::log2(total / interference);
        if (adj) {
            const double k_sig = w.alpha[u] / (kLn2 * total);
            const double k_int = w.alpha[u] / kLn2 * (1.0 / total - 1.0 / interference);
            for (std::size_t t = 0; t < users; ++t)
                (*adj)(u, t) = (t == u ? k_sig : k_int) * p(u, t);
        }
    }
    return f;
}

// d f / d psi_n = 2 Im(conj(phi_n) * a_phi_n) with
// a_phi_n = sum_{u,m} conj(g_un) adj_c_um conj(h_nm).
void phase_grad_from_channel_adjoint(const ComplexMatrix& g, const ComplexMatrix& h,
                                     const ComplexMatrix& adj_c, const PhaseField& psi,
                                     std::vector<double>& grad) {
    const std::size_t n_elems = g.cols;
    grad.assign(n_elems, 0.0);
    for (std::size_t n = 0; n < n_elems; ++n) {
        cplx a_phi(0.0, 0.0);
        const cplx* hrow = h.row(n);
        for (std::size_t u = 0; u < g.rows; ++u) {
            const cplx gc = std::conj(g(u, n));
            const cplx* arow = adj_c.row(u);
            for (std::size_t m = 0; m < h.cols; ++m) a_phi += gc * arow[m] * std::conj(hrow[m]);
        }
        grad[n] = 2.0 * std::imag(std::conj(psi.unit(n)) * a_phi);
    }
}

void check_setup(const WsrHeadSetup& s) {
    if (!s.g || !s.h || !s.d || !s.weights) throw Error("objective: incomplete head setup");
    validate_link_budget(s.lb);
    validate_weights(*s.weights, s.g->rows);
}

}  // namespace

double mmse_head_objective(const WsrHeadSetup& s, const PhaseField& psi, std::vector<double>* grad_psi) {
    check_setup(s);
    const ComplexMatrix c = effective_channel(*s.g, *s.h, *s.d, psi);
    const std::size_t m = c.cols;

    // forward: T = (C^H C + I/rho)^-1 C^H, V = beta T with beta = sqrt(E)/|T|_F
    const ComplexMatrix ch = conjugate_transpose(c);
    ComplexMatrix a_m = matmul(ch, c);
    const double noise = 1.0 / s.lb.rho;
    for (std::size_t i = 0; i < m; ++i) a_m(i, i) += noise;
    const ComplexMatrix w_inv = hermitian_inverse(a_m);
    const ComplexMatrix t = matmul(w_inv, ch);
    const double norm_t = frobenius_norm(t);
    if (!(norm_t > 0.0)) throw Error("mmse_head_objective: channel is zero, no power scaling exists");
    const double beta = std::sqrt(s.lb.e_tr) / norm_t;
    ComplexMatrix v = t;
    for (cplx& x : v.a) x *= beta;
    const ComplexMatrix p = matmul(c, v);

    ComplexMatrix adj_p;
    const double f = wsr_from_product(p, *s.weights, noise, grad_psi ? &adj_p : nullptr);
    if (!grad_psi) return f;

    // reverse pass in Wirtinger form; adj_x means d f / d conj(x)
    const ComplexMatrix adj_v = matmul(ch, adj_p);
    ComplexMatrix adj_c = matmul(adj_p, conjugate_transpose(v));

    double g_beta = 0.0;
    for (std::size_t i = 0; i < adj_v.a.size(); ++i)
        g_beta += 2.0 * std::real(std::conj(adj_v.a[i]) * t.a[i]);
    const double t_coef = -g_beta * beta / (2.0 * norm_t * norm_t);

    ComplexMatrix adj_t = t;
    for (std::size_t i = 0; i < adj_t.a.size(); ++i) adj_t.a[i] = beta * adj_v.a[i] + t_coef * t.a[i];

    const ComplexMatrix adj_w = matmul(adj_t, c);  // T = W C^H, W Hermitian
    ComplexMatrix adj_am = matmul(matmul(w_inv, adj_w), w_inv);
    for (cplx& x : adj_am.a) x = -x;

    // A_M = C^H C + I/rho contributes C (adj_am + adj_am^H)
    ComplexMatrix sym = conjugate_transpose(adj_am);
    for (std::size_t i = 0; i < sym.a.size(); ++i) sym.a[i] += adj_am.a[i];
    const ComplexMatrix extra = matmul(c, sym);

    const ComplexMatrix from_t = conjugate_transpose(matmul(w_inv, adj_t));
    for (std::size_t i = 0; i < adj_c.a.size(); ++i) adj_c.a[i] += from_t.a[i] + extra.a[i];

    phase_grad_from_channel_adjoint(*s.g, *s.h, adj_c, psi, *grad_psi);
    return f;
}

double fixed_precoder_objective(const WsrHeadSetup& s, const ComplexMatrix& v_bar, const PhaseField& psi,
                                std::vector<double>* grad_psi) {
    check_setup(s);
    if (v_bar.rows != s.h->cols || v_bar.cols != s.g->rows)
        throw Error("fixed_precoder_objective: precoder must be " + std::to_string(s.h->cols) + "x" +
                    std::to_string(s.g->rows));
    const ComplexMatrix c = effective_channel(*s.g, *s.h, *s.d, psi);
    const ComplexMatrix p = matmul(c, v_bar);
    ComplexMatrix adj_p;
    const double noise = 1.0 / s.lb.rho;
    const double f = wsr_from_product(p, *s.weights, noise, grad_psi ? &adj_p : nullptr);
    if (!grad_psi) return f;
    const ComplexMatrix adj_c = matmul(adj_p, conjugate_transpose(v_bar));
    phase_grad_from_channel_adjoint(*s.g, *s.h, adj_c, psi, *grad_psi);
    return f;
}

}  // namespace rismux
