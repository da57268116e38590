#include "rismux/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rismux/error.hpp"
#include "rismux/numerics.hpp"
#include "rismux/parallel.hpp"
#include "rismux/rng.hpp"
#include "rismux/training.hpp"

namespace rismux {

namespace {

const char* source_label(PhaseSource s) {
    switch (s) {
        case PhaseSource::Model: return "fcn";
        case PhaseSource::RandomBaseline: return "random";
        case PhaseSource::AltGradBaseline: return "altgrad";
    }
    return "unknown";
}

void split_range(const ChannelDataset& ds, Split split, std::size_t& begin, std::size_t& count) {
    switch (split) {
        case Split::Train:
            begin = 0;
            count = ds.train_count;
            break;
        case Split::Test:
            begin = ds.train_count;
            count = ds.test_count();
            break;
        case Split::All:
            begin = 0;
            count = ds.samples.size();
            break;
    }
}

std::vector<EcdfPoint> ecdf_from_records(const std::vector<SampleRecord>& records) {
    if (records.empty()) throw Error("ecdf: no sample rates to aggregate");
    std::vector<double> values;
    values.reserve(records.size());
    for (const SampleRecord& r : records) {
        double s = 0.0;
        for (double x : r.rates) s += x;
        values.push_back(s);
    }
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    std::vector<EcdfPoint> points;
    std::size_t i = 0;
    while (i < values.size()) {
        std::size_t j = i;
        while (j < values.size() && values[j] == values[i]) ++j;
        points.emplace_back(values[i], static_cast<double>(i) / n);
        points.emplace_back(values[i], static_cast<double>(j) / n);
        i = j;
    }
    return points;
}

struct Aggregates {
    double mean_wsr = 0.0, mean_sum = 0.0;
    std::vector<double> mean_user;
};

Aggregates aggregate(const std::vector<SampleRecord>& records, const UserWeights& w) {
    Aggregates a;
    if (records.empty()) return a;
    a.mean_user.assign(w.alpha.size(), 0.0);
    for (const SampleRecord& r : records) {
        for (std::size_t u = 0; u < r.rates.size(); ++u) {
            a.mean_user[u] += r.rates[u];
            a.mean_sum += r.rates[u];
            a.mean_wsr += w.alpha[u] * r.rates[u];
        }
    }
    const double inv = 1.0 / static_cast<double>(records.size());
    for (double& x : a.mean_user) x *= inv;
    a.mean_sum *= inv;
    a.mean_wsr *= inv;
    return a;
}

SweepEntry entry_from(EvalReport&& sub, double axis) {
    SweepEntry e;
    e.axis = axis;
    e.weights = sub.weights;
    e.rho = sub.rho;
    e.gamma = sub.gamma;
    e.mean_wsr = sub.mean_wsr;
    e.mean_sum_rate = sub.mean_sum_rate;
    e.mean_user_rates = std::move(sub.mean_user_rates);
    e.records = std::move(sub.records);
    return e;
}

char* fmt(char* buf, std::size_t cap, double v) {
    std::snprintf(buf, cap, "%.17g", v);
    return buf;
}

}  // namespace

EvalReport evaluate(const FcnModel* model, PhaseSource source, const ChannelDataset& ds,
                    const UserWeights& w, const LinkBudget& lb, const EvalOptions& opt) {
    validate_weights(w, ds.num_users);
    validate_link_budget(lb);
    if (!(opt.gamma >= 0.0)) throw Error("evaluate: gamma must be nonnegative");
    std::size_t begin = 0, count = 0;
    split_range(ds, opt.split, begin, count);
    if (count == 0) throw Error("evaluate: the requested split is empty");
    if (source == PhaseSource::Model) {
        if (!model) throw Error("evaluate: no model supplied for the model phase source");
        if (model->arch.ris_width != ds.ris_width || model->arch.ris_height != ds.ris_height ||
            model->arch.num_users != ds.num_users)
            throw Error("evaluate: model geometry does not match the dataset");
    }

    const ChannelDataset* est = &ds;
    ChannelDataset perturbed;
    if (opt.gamma > 0.0) {
        // H is quasi-static and shared across samples; estimation error hits the
        // per-sample matrices G and D only.
        perturbed = perturb(ds, opt.gamma, derive_seed(opt.seed, "estimate", opt.perturb_stream));
        est = &perturbed;
    }
    ComplexMatrix h_pinv_est;
    if (source == PhaseSource::Model) h_pinv_est = pseudoinverse(est->h);

    std::vector<SampleRecord> records(count);
    parallel_for(count, opt.threads, [&](std::size_t k) {
        const std::size_t idx = begin + k;
        const ChannelSample& est_s = est->samples[idx];
        PhaseField psi;
        switch (source) {
            case PhaseSource::Model: {
                const RealTensor3 feat =
                    build_features(est_s.g, est_s.d, h_pinv_est, ds.ris_height, ds.ris_width);
                psi = fcn_forward(*model, feat, RunMode::Eval, 0, nullptr);
                break;
            }
            case PhaseSource::RandomBaseline: {
                Rng rng(derive_seed(opt.seed, "random-phase", idx));
                psi = random_phase_baseline(ds.ris_height, ds.ris_width, rng);
                break;
            }
            case PhaseSource::AltGradBaseline: {
                Rng rng(derive_seed(opt.seed, "altgrad", idx));
                const PhaseField psi0 = random_phase_baseline(ds.ris_height, ds.ris_width, rng);
                psi = alternating_gradient_baseline(est_s.g, est->h, est_s.d, w, lb, psi0,
                                                    opt.altgrad_steps, opt.altgrad_step_size);
                break;
            }
        }
        if (!opt.rounding_codebook.empty()) psi = round_phases(psi, opt.rounding_codebook);

        const ComplexMatrix c_est = effective_channel(est_s.g, est->h, est_s.d, psi);
        const ComplexMatrix v0 = mmse_precoder(c_est, lb);
        const WmmseResult wm = wmmse_precoder(c_est, w, lb, v0, opt.wmmse);
        const ChannelSample& true_s = ds.samples[idx];
        const ComplexMatrix c_true =
            opt.gamma > 0.0 ? effective_channel(true_s.g, ds.h, true_s.d, psi) : c_est;
        records[k] = SampleRecord{idx, user_rates(c_true, wm.v, lb)};
    });

    EvalReport rep;
    rep.records = std::move(records);
    const Aggregates a = aggregate(rep.records, w);
    rep.mean_wsr = a.mean_wsr;
    rep.mean_sum_rate = a.mean_sum;
    rep.mean_user_rates = a.mean_user;
    rep.ecdf_points = ecdf_from_records(rep.records);
    rep.algorithm = source_label(source);
    rep.weights = w;
    rep.gamma = opt.gamma;
    rep.rho = lb.rho;
    rep.seed = opt.seed;
    return rep;
}

std::string weights_key(const UserWeights& w) {
    std::string key = "(";
    char buf[64];
    for (std::size_t u = 0; u < w.alpha.size(); ++u) {
        if (u) key += ",";
        key += fmt(buf, sizeof(buf), w.alpha[u]);
    }
    key += ")";
    return key;
}

EvalReport rate_region(const std::vector<RateRegionEntry>& registry, const ChannelDataset& ds,
                       const std::vector<UserWeights>& weight_list, const LinkBudget& lb,
                       const EvalOptions& opt) {
    if (weight_list.empty()) throw Error("rate_region: empty weight list");
    EvalReport rep;
    rep.algorithm = "fcn";
    rep.rho = lb.rho;
    rep.gamma = opt.gamma;
    rep.seed = opt.seed;
    for (std::size_t wi = 0; wi < weight_list.size(); ++wi) {
        const UserWeights& w = weight_list[wi];
        validate_weights(w, ds.num_users);
        const FcnModel* model = nullptr;
        for (const RateRegionEntry& e : registry)
            if (weights_key(e.weights) == weights_key(w)) {
                model = e.model;
                break;
            }
        if (!model) {
            std::ostringstream os;
            os << "rate_region: no model registered for weights " << weights_key(w) << "; available:";
            if (registry.empty()) os << " none";
            for (std::size_t i = 0; i < registry.size(); ++i)
                os << (i ? ", " : " ") << weights_key(registry[i].weights);
            throw Error(os.str());
        }
        EvalReport sub = evaluate(model, PhaseSource::Model, ds, w, lb, opt);
        rep.sweep.push_back(entry_from(std::move(sub), static_cast<double>(wi)));
    }
    return rep;
}

EvalReport tsnr_sweep(const FcnModel* model, PhaseSource source, const ChannelDataset& ds,
                      const UserWeights& w, const LinkBudget& lb, const std::vector<double>& rho_list,
                      const EvalOptions& opt) {
    if (rho_list.empty()) throw Error("tsnr_sweep: empty rho list");
    for (double rho : rho_list)
        if (!(rho > 0.0)) throw Error("tsnr_sweep: rho values must be positive");
    EvalReport rep;
    rep.algorithm = source_label(source);
    rep.weights = w;
    rep.gamma = opt.gamma;
    rep.seed = opt.seed;
    for (double rho : rho_list) {
        LinkBudget lb2 = lb;
        lb2.rho = rho;
        EvalReport sub = evaluate(model, source, ds, w, lb2, opt);
        rep.sweep.push_back(entry_from(std::move(sub), rho));
    }
    rep.rho = rho_list.front();
    return rep;
}

std::vector<double> default_tsnr_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 90; ++i) grid.push_back(1e11 + 1e10 * static_cast<double>(i));
    return grid;
}

std::vector<EcdfPoint> ecdf(const EvalReport& report) {
    if (!report.records.empty()) return ecdf_from_records(report.records);
    std::vector<SampleRecord> all;
    for (const SweepEntry& e : report.sweep)
        all.insert(all.end(), e.records.begin(), e.records.end());
    return ecdf_from_records(all);
}

EvalReport robustness_curve(const FcnModel* model, PhaseSource source, const ChannelDataset& ds,
                            const UserWeights& w, const LinkBudget& lb,
                            const std::vector<double>& gamma_list, const EvalOptions& opt) {
    if (gamma_list.empty()) throw Error("robustness_curve: empty gamma list");
    for (double g : gamma_list)
        if (!(g >= 0.0)) throw Error("robustness_curve: gamma values must be nonnegative");

    EvalReport rep;
    rep.algorithm = source_label(source);
    rep.weights = w;
    rep.rho = lb.rho;
    rep.seed = opt.seed;

    EvalOptions clean_opt = opt;
    clean_opt.gamma = 0.0;
    const EvalReport clean = evaluate(model, source, ds, w, lb, clean_opt);
    const double base = clean.mean_wsr;

    for (std::size_t gi = 0; gi < gamma_list.size(); ++gi) {
        const double g = gamma_list[gi];
        EvalReport sub;
        if (g == 0.0) {
            sub = clean;
        } else {
            EvalOptions o = opt;
            o.gamma = g;
            o.perturb_stream = gi;
            sub = evaluate(model, source, ds, w, lb, o);
        }
        SweepEntry e = entry_from(std::move(sub), g);
        e.degradation = base > 0.0 ? 1.0 - e.mean_wsr / base : 0.0;
        rep.sweep.push_back(std::move(e));
    }
    return rep;
}

void save_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_report_csv: cannot open '" + path + "' for writing");
    out << "sample_id,user,rate,weight,algorithm,gamma,rho\n";
    char b1[64], b2[64], b3[64], b4[64];
    auto emit = [&](const std::vector<SampleRecord>& records, const UserWeights& w, double gamma,
                    double rho) {
        for (const SampleRecord& r : records)
            for (std::size_t u = 0; u < r.rates.size(); ++u)
                out << r.sample_id << ',' << (u + 1) << ',' << fmt(b1, sizeof(b1), r.rates[u]) << ','
                    << fmt(b2, sizeof(b2), w.alpha[u]) << ',' << report.algorithm << ','
                    << fmt(b3, sizeof(b3), gamma) << ',' << fmt(b4, sizeof(b4), rho) << '\n';
    };
    if (report.sweep.empty()) {
        emit(report.records, report.weights, report.gamma, report.rho);
    } else {
        for (const SweepEntry& e : report.sweep) emit(e.records, e.weights, e.gamma, e.rho);
    }
    if (!out) throw Error("save_report_csv: write to '" + path + "' failed");
}

void save_summary_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_summary_csv: cannot open '" + path + "' for writing");
    const std::size_t users = report.sweep.empty() ? report.weights.alpha.size()
                                                   : report.sweep.front().weights.alpha.size();
    out << "axis,rho,gamma";
    for (std::size_t u = 1; u <= users; ++u) out << ",w" << u;
    for (std::size_t u = 1; u <= users; ++u) out << ",mean_rate_u" << u;
    out << ",mean_wsr,mean_sum_rate,degradation\n";
    char buf[64];
    auto emit = [&](double axis, const UserWeights& w, double rho, double gamma,
                    const std::vector<double>& user_rates_mean, double mean_wsr, double mean_sum,
                    double degradation) {
        out << fmt(buf, sizeof(buf), axis);
        out << ',' << fmt(buf, sizeof(buf), rho);
        out << ',' << fmt(buf, sizeof(buf), gamma);
        for (std::size_t u = 0; u < users; ++u)
            out << ',' << fmt(buf, sizeof(buf), u < w.alpha.size() ? w.alpha[u] : 0.0);
        for (std::size_t u = 0; u < users; ++u)
            out << ',' << fmt(buf, sizeof(buf), u < user_rates_mean.size() ? user_rates_mean[u] : 0.0);
        out << ',' << fmt(buf, sizeof(buf), mean_wsr);
        out << ',' << fmt(buf, sizeof(buf), mean_sum);
        out << ',' << fmt(buf, sizeof(buf), degradation) << '\n';
    };
    if (report.sweep.empty()) {
        emit(report.rho, report.weights, report.rho, report.gamma, report.mean_user_rates,
             report.mean_wsr, report.mean_sum_rate, 0.0);
    } else {
        for (const SweepEntry& e : report.sweep)
            emit(e.axis, e.weights, e.rho, e.gamma, e.mean_user_rates, e.mean_wsr, e.mean_sum_rate,
                 e.degradation);
    }
    if (!out) throw Error("save_summary_csv: write to '" + path + "' failed");
}

void save_ecdf_csv(const std::vector<EcdfPoint>& points, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_ecdf_csv: cannot open '" + path + "' for writing");
    out << "value,cum_prob\n";
    char b1[64], b2[64];
    for (const EcdfPoint& p : points)
        out << fmt(b1, sizeof(b1), p.first) << ',' << fmt(b2, sizeof(b2), p.second) << '\n';
    if (!out) throw Error("save_ecdf_csv: write to '" + path + "' failed");
}

}  // namespace rismux
