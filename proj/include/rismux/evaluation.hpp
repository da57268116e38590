#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rismux/channel.hpp"
#include "rismux/fcn.hpp"
#include "rismux/precoding.hpp"

namespace rismux {

// Where the surface phases come from during an evaluation.
enum class PhaseSource { Model, RandomBaseline, AltGradBaseline };

enum class Split { Train, Test, All };

struct EvalOptions {
    Split split = Split::Test;
    std::vector<double> rounding_codebook;  // empty: phases used as produced
    double gamma = 0.0;                     // channel-estimate error scale
    std::uint64_t seed = 1;
    std::uint64_t perturb_stream = 0;  // distinguishes perturbation draws that share a seed
    WmmseOptions wmmse;                // standalone convergence settings
    int threads = 0;
    // baseline knobs
    std::size_t altgrad_steps = 100;
    double altgrad_step_size = 0.1;
};

struct SampleRecord {
    std::size_t sample_id = 0;  // index into the dataset
    std::vector<double> rates;  // per user, measured on the true channel
};

// One evaluated operating point (a rho, a gamma, or a weight vector).
struct SweepEntry {
    double axis = 0.0;  // rho for tsnr sweeps, gamma for robustness, index for regions
    UserWeights weights;
    double rho = 0.0;
    double gamma = 0.0;
    double mean_wsr = 0.0;
    double mean_sum_rate = 0.0;
    std::vector<double> mean_user_rates;
    double degradation = 0.0;  // 1 - mean_wsr / clean mean_wsr (robustness only)
    std::vector<SampleRecord> records;
};

using EcdfPoint = std::pair<double, double>;  // (value, cumulative probability)

struct EvalReport {
    std::vector<SampleRecord> records;  // single-evaluation view
    double mean_wsr = 0.0;
    double mean_sum_rate = 0.0;
    std::vector<double> mean_user_rates;
    std::vector<EcdfPoint> ecdf_points;
    std::vector<SweepEntry> sweep;  // filled by the sweep-style operations
    // metadata
    std::string algorithm;
    UserWeights weights;
    double gamma = 0.0;
    double rho = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
};

// Per sample: perturb the channels when gamma > 0, produce phases from the
// model (eval mode) or a baseline, optionally snap them to the rounding
// codebook, then run the standalone precoder from its closed-form start on
// the estimated channel and record per-user rates on the true channel.
// Deterministic in (model, split, options).
EvalReport evaluate(const FcnModel* model, PhaseSource source, const ChannelDataset& ds,
                    const UserWeights& w, const LinkBudget& lb, const EvalOptions& opt);

struct RateRegionEntry {
    UserWeights weights;
    const FcnModel* model = nullptr;
};

std::string weights_key(const UserWeights& w);

// One evaluation per weight vector, each using the model registered for that
// exact weight vector. A missing registration raises an Error listing the
// available keys.
EvalReport rate_region(const std::vector<RateRegionEntry>& registry, const ChannelDataset& ds,
                       const std::vector<UserWeights>& weight_list, const LinkBudget& lb,
                       const EvalOptions& opt);

// One evaluation per rho, lb supplying everything but the noise level. A
// single-entry rho list reproduces evaluate() exactly.
EvalReport tsnr_sweep(const FcnModel* model, PhaseSource source, const ChannelDataset& ds,
                      const UserWeights& w, const LinkBudget& lb, const std::vector<double>& rho_list,
                      const EvalOptions& opt);

// Table-default sweep grid: 1e11 through 1e12 in steps of 1e10.
std::vector<double> default_tsnr_grid();

// Empirical CDF of the per-sample sum rates as vertical step pairs: each
// observed value contributes (v, p_before) and (v, p_after).
std::vector<EcdfPoint> ecdf(const EvalReport& report);

// One evaluation per gamma with perturbation draws fresh per gamma; the
// clean reference (gamma = 0) anchors each entry's degradation.
EvalReport robustness_curve(const FcnModel* model, PhaseSource source, const ChannelDataset& ds,
                            const UserWeights& w, const LinkBudget& lb,
                            const std::vector<double>& gamma_list, const EvalOptions& opt);

// One row per sample per user: sample_id,user,rate,weight,algorithm,gamma,rho.
void save_report_csv(const EvalReport& report, const std::string& path);

// One row per operating point with the aggregate means.
void save_summary_csv(const EvalReport& report, const std::string& path);

// Columns: value,cum_prob.
void save_ecdf_csv(const std::vector<EcdfPoint>& points, const std::string& path);

}  // namespace rismux
