#include "rismux/precoding.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <sstream>

#include "rismux/error.hpp"
#include "rismux/numerics.hpp"
#include "rismux/objective.hpp"

namespace rismux {

namespace {

double product_power(const ComplexMatrix& v) {
    double p = 0.0;
    for (const cplx& x : v.a) p += std::norm(x);
    return p;
}

}  // namespace

void validate_link_budget(const LinkBudget& lb) {
    if (!(lb.rho > 0.0) || !std::isfinite(lb.rho))
        throw Error("link budget: rho must be positive and finite");
    if (!(lb.e_tr > 0.0) || !std::isfinite(lb.e_tr))
        throw Error("link budget: e_tr must be positive and finite");
}

UserWeights make_weights(std::vector<double> alpha) {
    UserWeights w{std::move(alpha)};
    validate_weights(w, w.alpha.size());
    return w;
}

void validate_weights(const UserWeights& w, std::size_t num_users) {
    if (w.alpha.size() != num_users)
        throw Error("weights: got " + std::to_string(w.alpha.size()) + " entries for " +
                    std::to_string(num_users) + " users");
    double sum = 0.0;
    for (double a : w.alpha) {
        if (!(a >= 0.0 && a <= 1.0))
            throw Error("weights: entry " + std::to_string(a) + " outside [0, 1]");
        sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error("weights: entries sum to " + std::to_string(sum) + ", expected 1");
}

ComplexMatrix effective_channel(const ComplexMatrix& g, const ComplexMatrix& h, const ComplexMatrix& d,
                                const PhaseField& psi) {
    if (g.cols != h.rows)
        throw Error("effective_channel: G columns and H rows disagree");
    if (psi.size() != g.cols)
        throw Error("effective_channel: phase count " + std::to_string(psi.size()) + " does not match " +
                    std::to_string(g.cols) + " surface elements");
    if (d.rows != g.rows || d.cols != h.cols)
        throw Error("effective_channel: D shape does not match G * H");
    ComplexMatrix c = d;
    for (std::size_t u = 0; u < g.rows; ++u) {
        cplx* crow = c.row(u);
        const cplx* grow = g.row(u);
        for (std::size_t n = 0; n < g.cols; ++n) {
            const cplx gn = grow[n] * psi.unit(n);
            const cplx* hrow = h.row(n);
            for (std::size_t m = 0; m < h.cols; ++m) crow[m] += gn * hrow[m];
        }
    }
    return c;
}

std::vector<double> user_rates(const ComplexMatrix& c_eff, const ComplexMatrix& v, const LinkBudget& lb) {
    validate_link_budget(lb);
    const ComplexMatrix a = matmul(c_eff, v);  // U x U
    const double noise = 1.0 / lb.rho;
    std::vector<double> rates(a.rows, 0.0);
    for (std::size_t u = 0; u < a.rows; ++u) {
        double interference = noise;
        for (std::size_t t = 0; t < a.cols; ++t)
            if (t != u) interference += std::norm(a(u, t));
        rates[u] = std::log2(1.0 + std::norm(a(u, u)) / interference);
    }
    return rates;
}

double wsr(const ComplexMatrix& c_eff, const ComplexMatrix& v, const UserWeights& w, const LinkBudget& lb) {
    validate_weights(w, c_eff.rows);
    const std::vector<double> rates = user_rates(c_eff, v, lb);
    double f = 0.0;
    for (std::size_t u = 0; u < rates.size(); ++u) f += w.alpha[u] * rates[u];
    return f;
}

ComplexMatrix mmse_precoder(const ComplexMatrix& c_eff, const LinkBudget& lb) {
    validate_link_budget(lb);
    const ComplexMatrix ch = conjugate_transpose(c_eff);
    ComplexMatrix a_m = matmul(ch, c_eff);
    const double reg = 1.0 / lb.rho;
    for (std::size_t i = 0; i < a_m.rows; ++i) a_m(i, i) += reg;
    ComplexMatrix t = hermitian_solve(a_m, ch);
    const double n = frobenius_norm(t);
    if (!(n > 0.0))
        throw Error("mmse_precoder: channel is zero, no power scaling exists");
    const double beta = std::sqrt(lb.e_tr) / n;
    for (cplx& x : t.a) x *= beta;
    return t;
}

WmmseResult wmmse_precoder(const ComplexMatrix& c_eff, const UserWeights& w, const LinkBudget& lb,
                           const ComplexMatrix& v_init, const WmmseOptions& opts) {
    validate_link_budget(lb);
    const std::size_t users = c_eff.rows;
    const std::size_t m = c_eff.cols;
    validate_weights(w, users);
    if (v_init.rows != m || v_init.cols != users)
        throw Error("wmmse_precoder: v_init must be " + std::to_string(m) + "x" + std::to_string(users));
    if (product_power(v_init) > lb.e_tr * (1.0 + 1e-9))
        throw Error("wmmse_precoder: v_init exceeds the power budget");

    const double noise = 1.0 / lb.rho;
    ComplexMatrix v = v_init;
    WmmseResult res;
    res.wsr_trace.push_back(wsr(c_eff, v, w, lb));
    res.power_trace.push_back(product_power(v));
    res.power_last = res.power_trace.back();

    using EMat = Eigen::MatrixXcd;
    using EVec = Eigen::VectorXcd;
    EMat c_e(users, m);
    for (std::size_t u = 0; u < users; ++u)
        for (std::size_t j = 0; j < m; ++j) c_e(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j)) = c_eff(u, j);

    double prev_weight_sum = 0.0;  // weights of the fictitious previous iterate are all zero
    for (std::size_t it = 1; it <= opts.max_outer; ++it) {
        // receive scalars and MSE weights at the current precoder
        const ComplexMatrix a = matmul(c_eff, v);  // U x U
        std::vector<cplx> xi(users);
        std::vector<double> mse_w(users);
        double weight_sum = 0.0;
        for (std::size_t u = 0; u < users; ++u) {
            double total = noise;
            for (std::size_t t = 0; t < users; ++t) total += std::norm(a(u, t));
            const double interference = total - std::norm(a(u, u));
            xi[u] = a(u, u) / total;
            mse_w[u] = total / interference;  // 1 + SINR_u, always >= 1
            weight_sum += std::abs(mse_w[u]);
        }

        // transmit update: v_u = (R + mu I)^-1 b_u with
        // R = sum_u alpha_u w_u |xi_u|^2 c_u^H c_u, b_u = alpha_u w_u xi_u c_u^H
        EMat r = EMat::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        EMat b(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(users));
        for (std::size_t u = 0; u < users; ++u) {
            const double coef = w.alpha[u] * mse_w[u];
            const EVec cu_h = c_e.row(static_cast<Eigen::Index>(u)).adjoint();
            if (coef > 0.0) r.noalias() += coef * std::norm(xi[u]) * (cu_h * cu_h.adjoint());
            b.col(static_cast<Eigen::Index>(u)) = coef * xi[u] * cu_h;
        }

        Eigen::SelfAdjointEigenSolver<EMat> eig(r);
        if (eig.info() != Eigen::Success)
            throw Error("wmmse_precoder: eigendecomposition of the normal matrix failed");
        const Eigen::VectorXd lam = eig.eigenvalues();
        const EMat beta_coords = eig.eigenvectors().adjoint() * b;  // m x users

        const double lam_max = lam.size() > 0 ? std::max(0.0, lam(lam.size() - 1)) : 0.0;
        const double lam_tol = lam_max * static_cast<double>(m) * std::numeric_limits<double>::epsilon();
        double total_mass = 0.0, null_mass = 0.0;
        for (Eigen::Index i = 0; i < lam.size(); ++i)
            for (Eigen::Index uu = 0; uu < beta_coords.cols(); ++uu) {
                const double mass = std::norm(beta_coords(i, uu));
                total_mass += mass;
                if (lam(i) <= lam_tol) null_mass += mass;
            }

        auto power_at = [&](double mu) {
            double p = 0.0;
            for (Eigen::Index i = 0; i < lam.size(); ++i) {
                const double denom = std::max(lam(i), 0.0) + mu;
                if (denom <= 0.0) continue;
                double row_mass = 0.0;
                for (Eigen::Index uu = 0; uu < beta_coords.cols(); ++uu)
                    row_mass += std::norm(beta_coords(i, uu));
                p += row_mass / (denom * denom);
            }
            return p;
        };

        double mu = 0.0;
        bool zero_mu_ok = false;
        if (total_mass == 0.0) {
            zero_mu_ok = true;  // all transmit directions vanish; v = 0
        } else if (null_mass <= total_mass * 1e-24) {
            // b lies in the range of R, so mu = 0 solves the stationarity
            // condition; accept it when the resulting power fits the budget
            double p0 = 0.0;
            for (Eigen::Index i = 0; i < lam.size(); ++i) {
                if (lam(i) <= lam_tol) continue;
                double row_mass = 0.0;
                for (Eigen::Index uu = 0; uu < beta_coords.cols(); ++uu)
                    row_mass += std::norm(beta_coords(i, uu));
                p0 += row_mass / (lam(i) * lam(i));
            }
            zero_mu_ok = p0 <= lb.e_tr;
        }

        EMat v_new(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(users));
        if (zero_mu_ok) {
            EMat scaled = beta_coords;
            for (Eigen::Index i = 0; i < lam.size(); ++i)
                scaled.row(i) *= (lam(i) > lam_tol ? cplx(1.0 / lam(i), 0.0) : cplx(0.0, 0.0));
            v_new = eig.eigenvectors() * scaled;
            mu = 0.0;
        } else {
            // bracket: power(mu) is continuous and strictly decreasing, and
            // power(0+) exceeds the budget on this branch
            double hi = std::sqrt(total_mass / lb.e_tr);
            if (!(hi > 0.0)) hi = 1.0;
            std::size_t doublings = 0;
            while (power_at(hi) >= lb.e_tr) {
                hi *= 2.0;
                if (++doublings > 200) {
                    std::ostringstream os;
                    os << "wmmse_precoder: no bracket for the power multiplier after 200 doublings"
                       << " (power at mu=0 is " << (null_mass > total_mass * 1e-24 ? std::numeric_limits<double>::infinity() : power_at(lam_tol)) << ")";
                    throw Error(os.str());
                }
            }
            double lo = 0.0;
            // keep the feasible endpoint: power(hi) <= e_tr at all times, and
            // tighten until it is within the relative tolerance of the budget
            for (std::size_t step = 0; step < 300; ++step) {
                if (power_at(hi) >= lb.e_tr * (1.0 - opts.power_rel_tol)) break;
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;  // interval exhausted
                if (power_at(mid) >= lb.e_tr)
                    lo = mid;
                else
                    hi = mid;
            }
            mu = hi;
            const double achieved = power_at(mu);
            if (achieved < lb.e_tr * (1.0 - 1e-8) || achieved > lb.e_tr * (1.0 + 1e-9))
                throw Error("wmmse_precoder: power bisection stalled");
            EMat scaled = beta_coords;
            for (Eigen::Index i = 0; i < lam.size(); ++i)
                scaled.row(i) *= cplx(1.0 / (std::max(lam(i), 0.0) + mu), 0.0);
            v_new = eig.eigenvectors() * scaled;
        }

        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t u = 0; u < users; ++u) v(j, u) = v_new(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(u));

        res.iterations = it;
        res.mu_last = mu;
        res.power_last = product_power(v);
        res.power_trace.push_back(res.power_last);
        res.wsr_trace.push_back(wsr(c_eff, v, w, lb));
        if (std::abs(weight_sum - prev_weight_sum) <= opts.eps) break;
        prev_weight_sum = weight_sum;
    }
    res.v = std::move(v);
    return res;
}

PhaseField random_phase_baseline(std::size_t height, std::size_t width, Rng& rng) {
    PhaseField psi(height, width);
    for (double& p : psi.psi) p = rng.uniform01() * kTwoPi;
    return psi;
}

PhaseField alternating_gradient_baseline(const ComplexMatrix& g, const ComplexMatrix& h,
                                         const ComplexMatrix& d, const UserWeights& w,
                                         const LinkBudget& lb, const PhaseField& psi0, std::size_t steps,
                                         double step_size) {
    if (!(step_size > 0.0)) throw Error("alternating_gradient_baseline: step_size must be positive");
    WsrHeadSetup setup{&g, &h, &d, &w, lb};
    PhaseField psi = psi0;
    PhaseField best = psi0;
    std::vector<double> grad;
    double best_f = mmse_head_objective(setup, psi, nullptr);
    for (std::size_t s = 0; s < steps; ++s) {
        const double f = mmse_head_objective(setup, psi, &grad);
        if (f > best_f) {
            best_f = f;
            best = psi;
        }
        for (std::size_t n = 0; n < psi.size(); ++n) psi.psi[n] += step_size * grad[n];
    }
    const double f_final = mmse_head_objective(setup, psi, nullptr);
    if (f_final > best_f) best = psi;
    return best;
}

}  // namespace rismux
