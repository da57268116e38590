#include <cmath>
#include <cstdio>
#include <doctest.h>
#include <fstream>
#include <sstream>
#include <vector>

#include "rismux/error.hpp"
#include "rismux/numerics.hpp"
#include "rismux/objective.hpp"
#include "rismux/training.hpp"
#include "test_util.hpp"

using namespace rismux;

namespace {

// 4x4 surface, two users, six train and two test draws
ChannelDataset micro_dataset(std::uint64_t seed = 90) { return testutil::tiny_dataset(2, 4, 4, 6, 2, seed); }

ArchSpec micro_arch() {
    ArchSpec a;
    a.ris_width = 4;
    a.ris_height = 4;
    a.num_users = 2;
    a.layers = 2;
    a.hidden_maps = 3;
    a.kernel = 5;
    a.dropout = 0.1;
    return a;
}

TrainConfig micro_config() {
    TrainConfig cfg;
    cfg.lr_phase1 = 1e-3;
    cfg.lr_phase2 = 1e-3;
    cfg.epochs_phase1 = 3;
    cfg.epochs_phase2 = 4;
    cfg.batch_size = 4;
    cfg.wmmse_refresh_epochs = 2;
    cfg.wmmse_inner_iters = 2;
    cfg.weights = make_weights({0.5, 0.5});
    cfg.link = LinkBudget{20.0, 1.0};
    cfg.seed = 5;
    return cfg;
}

constexpr double kQuarterPi = kPi / 4.0;

}  // namespace

TEST_CASE("penalty measures circular distance to the nearest codebook phase") {
    const std::vector<double> book{0.0, kPi};
    CHECK(penalty({kQuarterPi}, book) == doctest::Approx(kQuarterPi).epsilon(1e-12));
    CHECK(penalty({kTwoPi}, book) == doctest::Approx(0.0));
    CHECK(penalty({0.0, kPi}, book) == doctest::Approx(0.0));
    CHECK(penalty({-3.0}, book) ==
          doctest::Approx(kPi - 3.0).epsilon(1e-9));  // wraps to the pi side
    CHECK(penalty({kQuarterPi, -kQuarterPi}, book) ==
          doctest::Approx(kQuarterPi * std::sqrt(2.0)).epsilon(1e-12));
    // equidistant between the two codes: the distance itself is unambiguous
    CHECK(penalty({kPi / 2.0}, book) == doctest::Approx(kPi / 2.0).epsilon(1e-12));
}

TEST_CASE("penalty is invariant under full-turn shifts") {
    const std::vector<double> book{0.0, kPi / 2.0, kPi, -kPi / 2.0};
    const std::vector<double> psi{0.3, 1.1, -0.8, 2.9};
    std::vector<double> shifted = psi;
    for (double& x : shifted) x += kTwoPi;
    CHECK(penalty(shifted, book) == doctest::Approx(penalty(psi, book)).epsilon(1e-12));
}

TEST_CASE("penalty gradient has unit norm away from codebook points") {
    const std::vector<double> book{0.0, kPi / 2.0, kPi, -kPi / 2.0};
    const std::vector<double> psi{0.3, 1.1, -0.8, 2.9};
    std::vector<double> grad;
    penalty(psi, book, &grad);
    REQUIRE(grad.size() == psi.size());
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    CHECK(norm2 == doctest::Approx(1.0).epsilon(1e-12));  // grad = delta / ||delta||

    auto f = [&](const std::vector<double>& x) { return penalty(x, book, nullptr); };
    const std::vector<double> fd = finite_difference_gradient(f, psi, 1e-6);
    for (std::size_t n = 0; n < psi.size(); ++n)
        CHECK(grad[n] == doctest::Approx(fd[n]).epsilon(1e-6));
}

TEST_CASE("penalty gradient is zero exactly on the codebook") {
    std::vector<double> grad;
    CHECK(penalty({0.0, kPi}, {0.0, kPi}, &grad) == 0.0);
    for (double g : grad) CHECK(g == 0.0);
    CHECK_THROWS_WITH_AS(penalty({0.1}, {}, nullptr), doctest::Contains("codebook is empty"), Error);
}

TEST_CASE("rounding snaps each phase to the circularly nearest code") {
    const std::vector<double> book{0.0, kPi};
    PhaseField psi(1, 4);
    psi.psi = {0.1, 3.0, -3.0, kTwoPi + 0.1};
    const PhaseField snapped = round_phases(psi, book);
    CHECK(snapped.psi[0] == 0.0);
    CHECK(snapped.psi[1] == kPi);
    CHECK(snapped.psi[2] == kPi);  // -3.0 is 0.14 from pi around the circle
    CHECK(snapped.psi[3] == 0.0);
}

TEST_CASE("rounding ties go to the smaller codebook value") {
    const std::vector<double> book{kPi, 0.0};  // deliberately unsorted
    PhaseField psi(1, 2);
    psi.psi = {kPi / 2.0, -kPi / 2.0};
    const PhaseField snapped = round_phases(psi, book);
    CHECK(snapped.psi[0] == 0.0);
    CHECK(snapped.psi[1] == 0.0);
    CHECK_THROWS_WITH_AS(round_phases(psi, {}), doctest::Contains("codebook is empty"), Error);
}

TEST_CASE("optimizer steps are ascent steps of roughly the learning rate") {
    const FcnModel m0 = init_model(micro_arch(), 1);
    FcnModel m = m0;
    TrainConfig cfg = micro_config();
    AdamState st = make_adam_state(m, cfg);
    REQUIRE(st.m.size() == parameter_count(m));
    REQUIRE(st.v.size() == parameter_count(m));

    ModelGrads ones = zero_grads_like(m);
    for (auto& lw : ones.w)
        for (double& g : lw) g = 1.0;
    for (auto& lb : ones.b)
        for (double& g : lb) g = 1.0;
    adam_step(m, st, ones, 1e-3);
    const std::vector<double> before = flatten_parameters(m0);
    const std::vector<double> after = flatten_parameters(m);
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(after[i] - before[i] == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("optimizer leaves parameters alone on a zero gradient") {
    FcnModel m = init_model(micro_arch(), 2);
    const std::vector<double> before = flatten_parameters(m);
    AdamState st = make_adam_state(m, micro_config());
    adam_step(m, st, zero_grads_like(m), 0.5);
    CHECK(flatten_parameters(m) == before);
    CHECK(st.t == 1);
}

TEST_CASE("optimizer rejects gradients shaped for another model") {
    FcnModel m = init_model(micro_arch(), 3);
    ArchSpec other = micro_arch();
    other.layers = 3;
    const FcnModel m3 = init_model(other, 3);
    AdamState st = make_adam_state(m, micro_config());
    CHECK_THROWS_WITH_AS(adam_step(m, st, zero_grads_like(m3), 1e-3),
                         doctest::Contains("gradient layer count"), Error);
}

TEST_CASE("config validation catches out-of-range settings") {
    TrainConfig cfg = micro_config();
    cfg.lr_phase1 = -1.0;
    CHECK_THROWS_WITH_AS(validate_train_config(cfg, 2, false),
                         doctest::Contains("learning rates must be positive"), Error);
    cfg = micro_config();
    cfg.batch_size = 0;
    CHECK_THROWS_WITH_AS(validate_train_config(cfg, 2, false),
                         doctest::Contains("batch_size"), Error);
    cfg = micro_config();
    cfg.adam_beta1 = 1.0;
    CHECK_THROWS_WITH_AS(validate_train_config(cfg, 2, false), doctest::Contains("adam betas"), Error);
    cfg = micro_config();
    CHECK_THROWS_AS(validate_train_config(cfg, 3, false), Error);  // weights are for two users
    cfg = micro_config();
    CHECK_THROWS_WITH_AS(validate_train_config(cfg, 2, true),
                         doctest::Contains("nonempty phase codebook"), Error);
    cfg.phase_codebook = {0.0, kPi};
    cfg.penalty_threshold = 0.0;
    CHECK_THROWS_WITH_AS(validate_train_config(cfg, 2, true),
                         doctest::Contains("penalty_threshold"), Error);
}

TEST_CASE("train data carries one feature tensor per sample") {
    const ChannelDataset ds = micro_dataset();
    const TrainData data = prepare_train_data(ds);
    REQUIRE(data.features.size() == ds.samples.size());
    CHECK(data.h_pinv.rows == ds.bs_antennas);
    CHECK(data.h_pinv.cols == ds.h.rows);
    const RealTensor3 direct =
        build_features(ds.samples[0].g, ds.samples[0].d, data.h_pinv, ds.ris_height, ds.ris_width);
    CHECK(data.features[0].v == direct.v);
}

TEST_CASE("closed-form batch objective averages the per-sample heads") {
    const ChannelDataset ds = micro_dataset();
    const TrainData data = prepare_train_data(ds);
    const FcnModel m = init_model(micro_arch(), 7);
    const TrainConfig cfg = micro_config();

    const double o0 = objective_mmse(m, data, {0}, cfg, RunMode::Eval, 0, false).objective;
    const double o1 = objective_mmse(m, data, {1}, cfg, RunMode::Eval, 0, false).objective;
    const BatchObjective both = objective_mmse(m, data, {0, 1}, cfg, RunMode::Eval, 0, false);
    CHECK(both.objective == doctest::Approx(0.5 * (o0 + o1)).epsilon(1e-14));
    CHECK(both.wsr == doctest::Approx(both.objective).epsilon(1e-14));  // no penalty term here

    const PhaseField psi = fcn_forward(m, data.features[0], RunMode::Eval, 0);
    const WsrHeadSetup setup{&ds.samples[0].g, &ds.h, &ds.samples[0].d, &cfg.weights, cfg.link};
    CHECK(o0 == doctest::Approx(mmse_head_objective(setup, psi, nullptr)).epsilon(1e-14));

    CHECK_THROWS_WITH_AS(objective_mmse(m, data, {}, cfg, RunMode::Eval, 0, false),
                         doctest::Contains("batch is empty"), Error);
}

TEST_CASE("frozen-precoder objective needs a precoder for every sample") {
    const ChannelDataset ds = micro_dataset();
    const TrainData data = prepare_train_data(ds);
    const FcnModel m = init_model(micro_arch(), 8);
    const TrainConfig cfg = micro_config();
    std::vector<ComplexMatrix> v_bar(ds.samples.size());  // all empty
    CHECK_THROWS_WITH_AS(objective_wmmse(m, data, {0}, v_bar, cfg, RunMode::Eval, 0, false),
                         doctest::Contains("no frozen precoder for sample 0"), Error);
}

TEST_CASE("the attraction weight subtracts the mean penalty from the objective") {
    const ChannelDataset ds = micro_dataset();
    const TrainData data = prepare_train_data(ds);
    const FcnModel m = init_model(micro_arch(), 9);
    TrainConfig cfg = micro_config();
    cfg.phase_codebook = {0.0, kPi};

    std::vector<ComplexMatrix> v_bar(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const PhaseField psi = fcn_forward(m, data.features[i], RunMode::Eval, 0);
        v_bar[i] = mmse_precoder(effective_channel(ds.samples[i].g, ds.h, ds.samples[i].d, psi), cfg.link);
    }
    const std::vector<std::size_t> batch{0, 1, 2};
    const BatchObjective base = objective_wmmse(m, data, batch, v_bar, cfg, RunMode::Eval, 0, false, 0.0);
    const BatchObjective tight = objective_wmmse(m, data, batch, v_bar, cfg, RunMode::Eval, 0, false, 2.0);
    CHECK(tight.wsr == doctest::Approx(base.wsr).epsilon(1e-14));
    CHECK(tight.penalty == doctest::Approx(base.penalty).epsilon(1e-14));
    CHECK(base.penalty > 0.0);
    CHECK(tight.objective ==
          doctest::Approx(base.objective - 2.0 * base.penalty).epsilon(1e-12));
}

TEST_CASE("two-phase training walks both schedules and logs every epoch") {
    const ChannelDataset ds = micro_dataset();
    const TrainConfig cfg = micro_config();
    const TrainResult res = train_two_phase(ds, micro_arch(), cfg);
    CHECK(res.epochs_phase1 == 3);  // window larger than the run: no plateau exit
    CHECK(res.epochs_phase2 == 4);
    REQUIRE(res.trace.rows.size() == 7);
    for (std::size_t e = 0; e < 7; ++e) {
        CHECK(res.trace.rows[e].epoch == e);
        CHECK(res.trace.rows[e].phase == (e < 3 ? 1 : 2));
        CHECK(res.trace.rows[e].kappa == 0.0);
    }
    // refreshes at the start of epochs 0 and 2; monotone optimizer never
    // loses rate against its own warm start
    REQUIRE(res.refresh_deltas.size() == 2);
    for (double d : res.refresh_deltas) CHECK(d >= -1e-8);
}

TEST_CASE("training is a pure function of the configured seed") {
    const ChannelDataset ds = micro_dataset();
    const TrainConfig cfg = micro_config();
    const TrainResult a = train_two_phase(ds, micro_arch(), cfg);
    const TrainResult b = train_two_phase(ds, micro_arch(), cfg);
    CHECK(flatten_parameters(a.model) == flatten_parameters(b.model));
    REQUIRE(a.trace.rows.size() == b.trace.rows.size());
    for (std::size_t e = 0; e < a.trace.rows.size(); ++e)
        CHECK(a.trace.rows[e].objective == b.trace.rows[e].objective);
}

TEST_CASE("a zero-epoch refinement phase leaves only warm-up rows") {
    const ChannelDataset ds = micro_dataset();
    TrainConfig cfg = micro_config();
    cfg.epochs_phase2 = 0;
    const TrainResult res = train_two_phase(ds, micro_arch(), cfg);
    CHECK(res.epochs_phase2 == 0);
    CHECK(res.refresh_deltas.empty());
    for (const TraceRow& r : res.trace.rows) CHECK(r.phase == 1);
}

TEST_CASE("training rejects mismatched geometry and empty splits") {
    const ChannelDataset ds = micro_dataset();
    ArchSpec small = micro_arch();
    small.ris_width = small.ris_height = 3;
    CHECK_THROWS_WITH_AS(train_two_phase(ds, small, micro_config()),
                         doctest::Contains("does not match the dataset"), Error);
    ChannelDataset unsplit = micro_dataset();
    unsplit.train_count = 0;
    CHECK_THROWS_WITH_AS(train_two_phase(unsplit, micro_arch(), micro_config()),
                         doctest::Contains("no train split"), Error);
}

TEST_CASE("trace rows round-trip through the CSV writer") {
    TrainTrace t;
    t.rows.push_back({0, 1, 1.25, 1.25, 0.0, 0.0, 0.5});
    t.rows.push_back({1, 2, 2.5, 2.75, 0.125, 3.0, 0.25});
    const std::string path = testutil::temp_path("trace.csv");
    save_trace_csv(t, path);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "epoch,phase,objective,wsr,penalty,kappa,seconds");
    REQUIRE(std::getline(in, line));
    CHECK(line == "0,1,1.25,1.25,0,0,0.500");
    REQUIRE(std::getline(in, line));
    CHECK(line == "1,2,2.5,2.75,0.125,3,0.250");
    CHECK_FALSE(std::getline(in, line));
    std::remove(path.c_str());
}

TEST_CASE("annealing stops immediately once the test split is on the codebook") {
    const ChannelDataset ds = micro_dataset();
    TrainConfig cfg = micro_config();
    cfg.phase_codebook = {0.0, kPi};
    // 4x4 surface: the penalty can never exceed 4 * pi / 2, so this threshold
    // is met before the first annealing round
    cfg.penalty_threshold = 10.0;
    const DiscreteResult res = train_discrete(ds, micro_arch(), cfg);
    CHECK(res.rounds == 0);
    CHECK(res.kappa_final == 0.0);
    CHECK(res.test_penalty < 10.0);
    for (const TraceRow& r : res.trace.rows) CHECK(r.phase == 1);
}

TEST_CASE("annealing reports failure when the weight cap arrives first") {
    const ChannelDataset ds = micro_dataset();
    TrainConfig cfg = micro_config();
    cfg.phase_codebook = {0.0, kPi};
    cfg.penalty_threshold = 1e-9;  // unreachable
    cfg.kappa_step = 5.0;
    cfg.kappa_cap = 4.0;
    cfg.discrete_round_cap = 2;
    CHECK_THROWS_WITH_AS(train_discrete(ds, micro_arch(), cfg), doctest::Contains("exceeded the cap"),
                         Error);
}

TEST_CASE("annealing reports failure when the weight cannot grow") {
    const ChannelDataset ds = micro_dataset();
    TrainConfig cfg = micro_config();
    cfg.phase_codebook = {0.0, kPi};
    cfg.penalty_threshold = 1e-9;
    cfg.kappa_step = 0.0;
    CHECK_THROWS_WITH_AS(train_discrete(ds, micro_arch(), cfg), doctest::Contains("cannot anneal"),
                         Error);
}

TEST_CASE("annealing requires a test split for its stopping rule") {
    ChannelDataset ds = testutil::tiny_dataset(2, 4, 4, 6, 0, 91);
    TrainConfig cfg = micro_config();
    cfg.phase_codebook = {0.0, kPi};
    CHECK_THROWS_WITH_AS(train_discrete(ds, micro_arch(), cfg), doctest::Contains("no test split"),
                         Error);
}
