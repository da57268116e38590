#include "rismux/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "rismux/error.hpp"
#include "rismux/numerics.hpp"
#include "rismux/objective.hpp"
#include "rismux/parallel.hpp"

namespace rismux {

namespace {

enum class HeadKind { ClosedForm, FrozenPrecoder };

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Mean objective over the batch, reduced in fixed chunks so the result is
// bit-identical for any thread count.
BatchObjective batch_objective(const FcnModel& model, const TrainData& data,
                               const std::vector<std::size_t>& batch, const TrainConfig& cfg, RunMode mode,
                               std::uint64_t epoch_seed, bool want_grads, HeadKind kind,
                               const std::vector<ComplexMatrix>* v_bar, double kappa) {
    if (batch.empty()) throw Error("objective: batch is empty");
    const ChannelDataset& ds = *data.ds;
    const bool with_penalty = !cfg.phase_codebook.empty() && kind == HeadKind::FrozenPrecoder;

    struct Partial {
        double value = 0.0, wsr = 0.0, pen = 0.0;
        ModelGrads grads;
    };
    const std::size_t chunks = chunk_count(batch.size());
    std::vector<Partial> partials(chunks);

    parallel_for(chunks, cfg.threads, [&](std::size_t ci) {
        Partial& part = partials[ci];
        if (want_grads) part.grads = zero_grads_like(model);
        const std::size_t begin = ci * kReduceChunk;
        const std::size_t end = std::min(batch.size(), begin + kReduceChunk);
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t i = batch[k];
            const ChannelSample& s = ds.samples[i];
            const WsrHeadSetup setup{&s.g, &ds.h, &s.d, &cfg.weights, cfg.link};
            double sample_wsr = 0.0, sample_pen = 0.0;
            auto head = [&](const PhaseField& psi, std::vector<double>& grad) {
                std::vector<double>* gp = want_grads ? &grad : nullptr;
                if (kind == HeadKind::ClosedForm) {
                    sample_wsr = mmse_head_objective(setup, psi, gp);
                } else {
                    if (!v_bar || v_bar->size() != ds.samples.size() || (*v_bar)[i].rows == 0)
                        throw Error("objective_wmmse: no frozen precoder for sample " + std::to_string(i));
                    sample_wsr = fixed_precoder_objective(setup, (*v_bar)[i], psi, gp);
                }
                double value = sample_wsr;
                if (with_penalty) {
                    std::vector<double> pgrad;
                    sample_pen = penalty(psi.psi, cfg.phase_codebook, gp ? &pgrad : nullptr);
                    value -= kappa * sample_pen;
                    if (gp)
                        for (std::size_t n = 0; n < grad.size(); ++n) grad[n] -= kappa * pgrad[n];
                }
                return value;
            };
            const std::uint64_t sample_seed = derive_seed(epoch_seed, "sample", i);
            double value;
            if (want_grads) {
                GradientResult r = fcn_gradient(model, data.features[i], head, mode, sample_seed);
                part.grads.accumulate(r.grads);
                value = r.value;
            } else {
                const PhaseField psi = fcn_forward(model, data.features[i], mode, sample_seed, nullptr);
                std::vector<double> unused;
                value = head(psi, unused);
            }
            part.value += value;
            part.wsr += sample_wsr;
            part.pen += sample_pen;
        }
    });

    BatchObjective out;
    if (want_grads) out.grads = zero_grads_like(model);
    for (const Partial& part : partials) {
        out.objective += part.value;
        out.wsr += part.wsr;
        out.penalty += part.pen;
        if (want_grads) out.grads.accumulate(part.grads);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.objective *= inv;
    out.wsr *= inv;
    out.penalty *= inv;
    if (want_grads) out.grads.scale(inv);
    return out;
}

void check_model_matches(const FcnModel& model, const ChannelDataset& ds) {
    if (model.arch.ris_width != ds.ris_width || model.arch.ris_height != ds.ris_height ||
        model.arch.num_users != ds.num_users)
        throw Error("train: model geometry does not match the dataset");
}

// relative improvement over the trailing window fell below tol
bool plateaued(const std::vector<double>& hist, std::size_t window, double tol) {
    if (hist.size() <= window) return false;
    const double prev = hist[hist.size() - 1 - window];
    const double cur = hist.back();
    return (cur - prev) / std::max(std::abs(prev), 1e-12) < tol;
}

double refresh_precoders(const FcnModel& model, const TrainData& data, const TrainConfig& cfg,
                         std::vector<ComplexMatrix>& v_bar, bool first) {
    const ChannelDataset& ds = *data.ds;
    WmmseOptions ro;
    ro.eps = 0.0;  // run the full inner budget
    ro.max_outer = cfg.wmmse_inner_iters;
    std::vector<double> gain(ds.train_count, 0.0);
    parallel_for(ds.train_count, cfg.threads, [&](std::size_t i) {
        const ChannelSample& s = ds.samples[i];
        const PhaseField psi = fcn_forward(model, data.features[i], RunMode::Eval, 0, nullptr);
        const ComplexMatrix c = effective_channel(s.g, ds.h, s.d, psi);
        const ComplexMatrix init = first ? mmse_precoder(c, cfg.link) : v_bar[i];
        v_bar[i] = wmmse_precoder(c, cfg.weights, cfg.link, init, ro).v;
        gain[i] = wsr(c, v_bar[i], cfg.weights, cfg.link) - wsr(c, init, cfg.weights, cfg.link);
    });
    double s = 0.0;
    for (double g : gain) s += g;
    return s / static_cast<double>(ds.train_count);
}

double mean_eval_penalty(const FcnModel& model, const TrainData& data, const TrainConfig& cfg,
                         std::size_t begin, std::size_t end) {
    if (begin >= end) throw Error("train_discrete: empty split for the penalty measurement");
    std::vector<double> vals(end - begin, 0.0);
    parallel_for(end - begin, cfg.threads, [&](std::size_t k) {
        const PhaseField psi = fcn_forward(model, data.features[begin + k], RunMode::Eval, 0, nullptr);
        vals[k] = penalty(psi.psi, cfg.phase_codebook, nullptr);
    });
    double s = 0.0;
    for (double v : vals) s += v;
    return s / static_cast<double>(vals.size());
}

struct EpochOutcome {
    double objective = 0.0, wsr = 0.0, pen = 0.0;
};

EpochOutcome run_train_epoch(FcnModel& model, AdamState& adam, const TrainData& data,
                             const TrainConfig& cfg, double lr, std::uint64_t shuffle_seed,
                             std::uint64_t epoch_seed, HeadKind kind,
                             const std::vector<ComplexMatrix>* v_bar, double kappa) {
    const std::size_t train_count = data.ds->train_count;
    std::vector<std::size_t> order(train_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(shuffle_seed);
    shuffle_rng.shuffle(order);

    EpochOutcome out;
    for (std::size_t start = 0; start < train_count; start += cfg.batch_size) {
        const std::size_t stop = std::min(train_count, start + cfg.batch_size);
        const std::vector<std::size_t> batch(order.begin() + start, order.begin() + stop);
        BatchObjective bo = batch_objective(model, data, batch, cfg, RunMode::Train, epoch_seed, true,
                                            kind, v_bar, kappa);
        adam_step(model, adam, bo.grads, lr);
        const double wgt = static_cast<double>(batch.size());
        out.objective += bo.objective * wgt;
        out.wsr += bo.wsr * wgt;
        out.pen += bo.penalty * wgt;
    }
    const double inv = 1.0 / static_cast<double>(train_count);
    out.objective *= inv;
    out.wsr *= inv;
    out.pen *= inv;
    return out;
}

}  // namespace

void validate_train_config(const TrainConfig& cfg, std::size_t num_users, bool discrete) {
    if (!(cfg.lr_phase1 > 0.0) || !(cfg.lr_phase2 > 0.0))
        throw Error("train config: learning rates must be positive");
    if (cfg.batch_size == 0) throw Error("train config: batch_size must be at least 1");
    if (cfg.wmmse_refresh_epochs == 0) throw Error("train config: wmmse_refresh_epochs must be at least 1");
    if (cfg.wmmse_inner_iters == 0) throw Error("train config: wmmse_inner_iters must be at least 1");
    if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0) || !(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0))
        throw Error("train config: adam betas must lie in [0, 1)");
    if (!(cfg.adam_eps > 0.0)) throw Error("train config: adam_eps must be positive");
    if (cfg.plateau_window == 0) throw Error("train config: plateau_window must be at least 1");
    if (!(cfg.plateau_tol > 0.0)) throw Error("train config: plateau_tol must be positive");
    validate_link_budget(cfg.link);
    validate_weights(cfg.weights, num_users);
    if (discrete) {
        if (cfg.phase_codebook.empty())
            throw Error("train config: discretization needs a nonempty phase codebook");
        if (!(cfg.penalty_threshold > 0.0))
            throw Error("train config: penalty_threshold must be positive");
        if (!(cfg.kappa_cap > 0.0)) throw Error("train config: kappa_cap must be positive");
        if (cfg.discrete_round_cap == 0)
            throw Error("train config: discrete_round_cap must be at least 1");
    }
}

void save_trace_csv(const TrainTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_trace_csv: cannot open '" + path + "' for writing");
    out << "epoch,phase,objective,wsr,penalty,kappa,seconds\n";
    char buf[256];
    for (const TraceRow& r : trace.rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.epoch, r.phase,
                      r.objective, r.wsr, r.penalty, r.kappa, r.seconds);
        out << buf;
    }
    if (!out) throw Error("save_trace_csv: write to '" + path + "' failed");
}

AdamState make_adam_state(const FcnModel& model, const TrainConfig& cfg) {
    AdamState s;
    s.beta1 = cfg.adam_beta1;
    s.beta2 = cfg.adam_beta2;
    s.eps = cfg.adam_eps;
    s.m.assign(parameter_count(model), 0.0);
    s.v.assign(parameter_count(model), 0.0);
    return s;
}

void adam_step(FcnModel& model, AdamState& state, const ModelGrads& grads, double lr) {
    if (grads.w.size() != model.layers.size())
        throw Error("adam_step: gradient layer count does not match the model");
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        if (grads.w[l].size() != model.layers[l].w.size() || grads.b[l].size() != model.layers[l].b.size())
            throw Error("adam_step: gradient shapes do not match the model at layer " + std::to_string(l));
    const std::vector<double> g = flatten_grads(grads);
    if (g.size() != state.m.size())
        throw Error("adam_step: optimizer state does not match the model");
    std::vector<double> p = flatten_parameters(model);
    state.t += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < g.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        p[i] += lr * mhat / (std::sqrt(vhat) + state.eps);  // ascent
    }
    assign_parameters(model, p);
}

TrainData prepare_train_data(const ChannelDataset& ds) {
    if (ds.samples.empty()) throw Error("prepare_train_data: dataset has no samples");
    TrainData data;
    data.ds = &ds;
    data.h_pinv = pseudoinverse(ds.h);
    data.features.resize(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        data.features[i] =
            build_features(ds.samples[i].g, ds.samples[i].d, data.h_pinv, ds.ris_height, ds.ris_width);
    return data;
}

BatchObjective objective_mmse(const FcnModel& model, const TrainData& data,
                              const std::vector<std::size_t>& batch, const TrainConfig& cfg, RunMode mode,
                              std::uint64_t epoch_seed, bool want_grads) {
    return batch_objective(model, data, batch, cfg, mode, epoch_seed, want_grads, HeadKind::ClosedForm,
                           nullptr, 0.0);
}

BatchObjective objective_wmmse(const FcnModel& model, const TrainData& data,
                               const std::vector<std::size_t>& batch,
                               const std::vector<ComplexMatrix>& v_bar, const TrainConfig& cfg,
                               RunMode mode, std::uint64_t epoch_seed, bool want_grads, double kappa) {
    return batch_objective(model, data, batch, cfg, mode, epoch_seed, want_grads,
                           HeadKind::FrozenPrecoder, &v_bar, kappa);
}

double penalty(const std::vector<double>& psi, const std::vector<double>& codebook,
               std::vector<double>* grad) {
    if (codebook.empty()) throw Error("penalty: codebook is empty");
    std::vector<double> codes = codebook;
    std::sort(codes.begin(), codes.end());
    std::vector<double> delta(psi.size(), 0.0);
    double sum_sq = 0.0;
    for (std::size_t n = 0; n < psi.size(); ++n) {
        double best = std::numeric_limits<double>::infinity();
        double best_delta = 0.0;
        for (double code : codes) {
            const double d = std::remainder(psi[n] - code, kTwoPi);  // signed, in [-pi, pi]
            if (std::abs(d) < best) {
                best = std::abs(d);
                best_delta = d;
            }
        }
        delta[n] = best_delta;
        sum_sq += best * best;
    }
    const double p = std::sqrt(sum_sq);
    if (grad) {
        grad->assign(psi.size(), 0.0);
        if (p > 0.0)
            for (std::size_t n = 0; n < psi.size(); ++n) (*grad)[n] = delta[n] / p;
    }
    return p;
}

PhaseField round_phases(const PhaseField& psi, const std::vector<double>& codebook) {
    if (codebook.empty()) throw Error("round_phases: codebook is empty");
    std::vector<double> codes = codebook;
    std::sort(codes.begin(), codes.end());
    PhaseField out = psi;
    for (std::size_t n = 0; n < psi.size(); ++n) {
        double best = std::numeric_limits<double>::infinity();
        double chosen = codes.front();
        for (double code : codes) {
            const double d = std::abs(std::remainder(psi.psi[n] - code, kTwoPi));
            if (d < best) {  // strict: ties keep the smaller codebook value
                best = d;
                chosen = code;
            }
        }
        out.psi[n] = chosen;
    }
    return out;
}

TrainResult train_two_phase(const ChannelDataset& ds, const ArchSpec& arch, const TrainConfig& cfg) {
    validate_train_config(cfg, ds.num_users, false);
    if (ds.train_count == 0) throw Error("train_two_phase: dataset has no train split");
    const TrainData data = prepare_train_data(ds);

    TrainResult res;
    res.model = init_model(arch, derive_seed(cfg.seed, "model-init"));
    check_model_matches(res.model, ds);

    AdamState adam = make_adam_state(res.model, cfg);
    std::size_t global_epoch = 0;
    std::vector<double> hist;
    for (std::size_t e = 0; e < cfg.epochs_phase1; ++e) {
        const double t0 = now_seconds();
        const EpochOutcome st =
            run_train_epoch(res.model, adam, data, cfg, cfg.lr_phase1, derive_seed(cfg.seed, "shuffle-p1", e),
                            derive_seed(cfg.seed, "dropout-p1", e), HeadKind::ClosedForm, nullptr, 0.0);
        res.trace.rows.push_back({global_epoch++, 1, st.objective, st.wsr, 0.0, 0.0, now_seconds() - t0});
        res.epochs_phase1 += 1;
        hist.push_back(st.wsr);
        if (plateaued(hist, cfg.plateau_window, cfg.plateau_tol)) break;
    }

    if (cfg.epochs_phase2 > 0) {
        adam = make_adam_state(res.model, cfg);  // fresh optimizer for the new objective
        std::vector<ComplexMatrix> v_bar(ds.samples.size());
        for (std::size_t pe = 0; pe < cfg.epochs_phase2; ++pe) {
            if (pe % cfg.wmmse_refresh_epochs == 0)
                res.refresh_deltas.push_back(refresh_precoders(res.model, data, cfg, v_bar, pe == 0));
            const double t0 = now_seconds();
            const EpochOutcome st = run_train_epoch(
                res.model, adam, data, cfg, cfg.lr_phase2, derive_seed(cfg.seed, "shuffle-p2", pe),
                derive_seed(cfg.seed, "dropout-p2", pe), HeadKind::FrozenPrecoder, &v_bar, 0.0);
            res.trace.rows.push_back({global_epoch++, 2, st.objective, st.wsr, st.pen, 0.0, now_seconds() - t0});
            res.epochs_phase2 += 1;
        }
    }
    return res;
}

DiscreteResult train_discrete(const ChannelDataset& ds, const ArchSpec& arch, const TrainConfig& cfg) {
    validate_train_config(cfg, ds.num_users, true);
    if (ds.train_count == 0) throw Error("train_discrete: dataset has no train split");
    if (ds.test_count() == 0)
        throw Error("train_discrete: dataset has no test split for the stopping rule");
    const TrainData data = prepare_train_data(ds);

    DiscreteResult res;
    res.model = init_model(arch, derive_seed(cfg.seed, "model-init"));
    check_model_matches(res.model, ds);

    AdamState adam = make_adam_state(res.model, cfg);
    std::size_t global_epoch = 0;
    {
        std::vector<double> hist;
        for (std::size_t e = 0; e < cfg.epochs_phase1; ++e) {
            const double t0 = now_seconds();
            const EpochOutcome st = run_train_epoch(
                res.model, adam, data, cfg, cfg.lr_phase1, derive_seed(cfg.seed, "shuffle-p1", e),
                derive_seed(cfg.seed, "dropout-p1", e), HeadKind::ClosedForm, nullptr, 0.0);
            res.trace.rows.push_back({global_epoch++, 1, st.objective, st.wsr, 0.0, 0.0, now_seconds() - t0});
            hist.push_back(st.wsr);
            if (plateaued(hist, cfg.plateau_window, cfg.plateau_tol)) break;
        }
    }

    adam = make_adam_state(res.model, cfg);
    std::vector<ComplexMatrix> v_bar(ds.samples.size());
    bool first_refresh = true;
    double kappa = 0.0;
    double prev_train_pen = std::numeric_limits<double>::infinity();
    for (;;) {
        res.test_penalty =
            mean_eval_penalty(res.model, data, cfg, ds.train_count, ds.samples.size());
        res.kappa_final = kappa;
        if (res.test_penalty < cfg.penalty_threshold) break;
        if (kappa > cfg.kappa_cap) {
            std::ostringstream os;
            os << "train_discrete: kappa " << kappa << " exceeded the cap " << cfg.kappa_cap
               << " with mean test penalty " << res.test_penalty << " still above the threshold "
               << cfg.penalty_threshold;
            throw Error(os.str());
        }
        if (cfg.kappa_step <= 0.0) {
            std::ostringstream os;
            os << "train_discrete: kappa_step " << cfg.kappa_step
               << " cannot anneal the penalty (mean test penalty " << res.test_penalty
               << " above the threshold " << cfg.penalty_threshold << ")";
            throw Error(os.str());
        }

        std::vector<double> hist;
        for (std::size_t re = 0; re < cfg.discrete_round_cap; ++re) {
            if (re % cfg.wmmse_refresh_epochs == 0) {
                refresh_precoders(res.model, data, cfg, v_bar, first_refresh);
                first_refresh = false;
            }
            const double t0 = now_seconds();
            const EpochOutcome st = run_train_epoch(
                res.model, adam, data, cfg, cfg.lr_phase2,
                derive_seed(cfg.seed, "shuffle-discrete", global_epoch),
                derive_seed(cfg.seed, "dropout-discrete", global_epoch), HeadKind::FrozenPrecoder, &v_bar,
                kappa);
            res.trace.rows.push_back(
                {global_epoch++, 2, st.objective, st.wsr, st.pen, kappa, now_seconds() - t0});
            hist.push_back(st.objective);
            if (plateaued(hist, cfg.plateau_window, cfg.plateau_tol)) break;
        }
        res.rounds += 1;

        const double train_pen = mean_eval_penalty(res.model, data, cfg, 0, ds.train_count);
        if (train_pen > prev_train_pen * 1.05 + 1e-12) {
            std::ostringstream os;
            os << "train_discrete: train penalty regressed from " << prev_train_pen << " to " << train_pen
               << " at kappa " << kappa;
            throw Error(os.str());
        }
        prev_train_pen = train_pen;
        kappa += cfg.kappa_step;
    }
    return res;
}

}  // namespace rismux
