#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rismux/channel.hpp"
#include "rismux/fcn.hpp"
#include "rismux/precoding.hpp"

namespace rismux {

struct TrainConfig {
    double lr_phase1 = 1e-4;
    double lr_phase2 = 2e-6;
    std::size_t epochs_phase1 = 4000;
    std::size_t epochs_phase2 = 4000;
    std::size_t batch_size = 256;
    std::size_t wmmse_refresh_epochs = 10;  // phase-2 precoder refresh cadence
    std::size_t wmmse_inner_iters = 5;      // iterations per refresh
    UserWeights weights;
    LinkBudget link;
    std::uint64_t seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    // discretization
    std::vector<double> phase_codebook;
    double kappa_step = 0.05;
    double kappa_cap = 5.0;
    double penalty_threshold = 0.5;
    std::size_t discrete_round_cap = 200;  // epoch cap per annealing round
    // plateau rule: stop when the epoch-mean objective improved relatively by
    // less than plateau_tol over the last plateau_window epochs
    std::size_t plateau_window = 20;
    double plateau_tol = 1e-4;
    int threads = 0;
};

void validate_train_config(const TrainConfig& cfg, std::size_t num_users, bool discrete);

struct TraceRow {
    std::size_t epoch = 0;  // global, counted across phases and rounds
    int phase = 1;
    double objective = 0.0;
    double wsr = 0.0;
    double penalty = 0.0;
    double kappa = 0.0;
    double seconds = 0.0;
};

struct TrainTrace {
    std::vector<TraceRow> rows;
};

// Columns: epoch, phase, objective, wsr, penalty, kappa, seconds.
void save_trace_csv(const TrainTrace& trace, const std::string& path);

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t t = 0;
    std::vector<double> m, v;  // flat parameter order
};

AdamState make_adam_state(const FcnModel& model, const TrainConfig& cfg);

// Bias-corrected ascent step: parameters move along +grad.
void adam_step(FcnModel& model, AdamState& state, const ModelGrads& grads, double lr);

// Features and the shared pinv(H), computed once per dataset.
struct TrainData {
    const ChannelDataset* ds = nullptr;
    ComplexMatrix h_pinv;
    std::vector<RealTensor3> features;
};

TrainData prepare_train_data(const ChannelDataset& ds);

struct BatchObjective {
    double objective = 0.0;  // mean wsr minus kappa times mean penalty
    double wsr = 0.0;
    double penalty = 0.0;
    ModelGrads grads;        // populated when want_grads
};

// Mean weighted sum rate over the batch with the closed-form precoder inside
// the differentiated graph.
BatchObjective objective_mmse(const FcnModel& model, const TrainData& data,
                              const std::vector<std::size_t>& batch, const TrainConfig& cfg, RunMode mode,
                              std::uint64_t epoch_seed, bool want_grads);

// Mean weighted sum rate at per-sample frozen precoders v_bar (indexed by
// dataset sample), optionally minus kappa times the mean codebook penalty.
// Gradients flow only through the phases.
BatchObjective objective_wmmse(const FcnModel& model, const TrainData& data,
                               const std::vector<std::size_t>& batch,
                               const std::vector<ComplexMatrix>& v_bar, const TrainConfig& cfg,
                               RunMode mode, std::uint64_t epoch_seed, bool want_grads, double kappa = 0.0);

// sqrt of the summed squared circular distances to the nearest codebook
// phase; grad (when non-null) receives d penalty / d psi_n.
double penalty(const std::vector<double>& psi, const std::vector<double>& codebook,
               std::vector<double>* grad = nullptr);

// Each phase snapped to the circularly nearest codebook value; ties go to the
// smaller codebook entry.
PhaseField round_phases(const PhaseField& psi, const std::vector<double>& codebook);

struct TrainResult {
    FcnModel model;
    TrainTrace trace;
    std::size_t epochs_phase1 = 0;
    std::size_t epochs_phase2 = 0;
    // Per refresh: mean train-sample gain of the refreshed precoders over
    // their warm start, measured at the eval-mode phases.
    std::vector<double> refresh_deltas;
};

// Phase 1: shuffled mini-batch ascent on the closed-form objective at
// lr_phase1 until the plateau rule or the epoch cap. Phase 2: exactly
// epochs_phase2 epochs at lr_phase2 on the frozen-precoder objective, the
// precoders refreshed every wmmse_refresh_epochs by wmmse_inner_iters
// iterations warm-started from the previous refresh (closed-form start on
// the first). Deterministic in cfg.seed.
TrainResult train_two_phase(const ChannelDataset& ds, const ArchSpec& arch, const TrainConfig& cfg);

struct DiscreteResult {
    FcnModel model;
    TrainTrace trace;
    double kappa_final = 0.0;
    double test_penalty = 0.0;
    std::size_t rounds = 0;
};

// Phase 1 as above, then annealing rounds of frozen-precoder training with a
// growing codebook-attraction term: kappa starts at 0 and grows by
// kappa_step after each round (a round ends on the plateau rule or
// discrete_round_cap). Stops when the mean test-split penalty drops below
// penalty_threshold; raises an Error when kappa passes kappa_cap first, or
// when the train-split penalty regresses by more than 5% across an
// increment.
DiscreteResult train_discrete(const ChannelDataset& ds, const ArchSpec& arch, const TrainConfig& cfg);

}  // namespace rismux
