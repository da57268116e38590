#include <cmath>
#include <cstdio>
#include <doctest.h>
#include <fstream>
#include <vector>

#include "rismux/error.hpp"
#include "rismux/fcn.hpp"
#include "rismux/numerics.hpp"
#include "rismux/rng.hpp"
#include "test_util.hpp"

using namespace rismux;

namespace {

// Tiny surface so full-parameter finite differences stay cheap. Two 5x5
// layers reach 4 cells, enough for the 4x4 grid.
ArchSpec tiny_arch() {
    ArchSpec a;
    a.ris_width = 4;
    a.ris_height = 4;
    a.num_users = 1;
    a.layers = 2;
    a.hidden_maps = 3;
    a.kernel = 5;
    a.dropout = 0.0;
    return a;
}

RealTensor3 random_features(std::uint64_t seed, std::size_t maps, std::size_t h, std::size_t w) {
    RealTensor3 t(maps, h, w);
    Rng rng(seed);
    for (double& v : t.v) v = rng.normal();
    return t;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

// Smooth fixed head: f = sum_n (0.1 + 0.01 n) sin(psi_n).
double sine_head(const PhaseField& psi, std::vector<double>& grad) {
    grad.assign(psi.size(), 0.0);
    double f = 0.0;
    for (std::size_t n = 0; n < psi.size(); ++n) {
        const double w = 0.1 + 0.01 * static_cast<double>(n);
        f += w * std::sin(psi.psi[n]);
        grad[n] = w * std::cos(psi.psi[n]);
    }
    return f;
}

ConvLayer single_layer(std::size_t k) {
    ConvLayer l;
    l.in_maps = l.out_maps = 1;
    l.kh = l.kw = k;
    l.pad_h = l.pad_w = (k - 1) / 2;
    l.w.assign(k * k, 0.0);
    l.b.assign(1, 0.0);
    return l;
}

}  // namespace

TEST_CASE("ones kernel on a ones grid counts the covered neighborhood") {
    ConvLayer l = single_layer(3);
    for (double& w : l.w) w = 1.0;
    RealTensor3 in(1, 3, 3);
    for (double& v : in.v) v = 1.0;
    const RealTensor3 out = conv2d_padded(l, in);
    CHECK(out.at(0, 1, 1) == doctest::Approx(9.0));  // full window
    CHECK(out.at(0, 0, 0) == doctest::Approx(4.0));  // corner keeps a 2x2 window
    CHECK(out.at(0, 0, 1) == doctest::Approx(6.0));  // edge keeps a 2x3 window
}

TEST_CASE("delta kernel reproduces the input and the bias shifts it") {
    ConvLayer l = single_layer(3);
    l.wt(0, 0, 1, 1) = 1.0;
    l.b[0] = 0.25;
    const RealTensor3 in = random_features(11, 1, 4, 5);
    const RealTensor3 out = conv2d_padded(l, in);
    for (std::size_t i = 0; i < in.v.size(); ++i)
        CHECK(out.v[i] == doctest::Approx(in.v[i] + 0.25).epsilon(1e-15));
}

TEST_CASE("an off-center kernel tap reads the neighbor above") {
    // Cross-correlation: weight at kernel row 0 pairs output cell (y, x)
    // with input cell (y - 1, x); rows that would read outside stay at bias.
    ConvLayer l = single_layer(3);
    l.wt(0, 0, 0, 1) = 1.0;
    RealTensor3 in(1, 3, 3);
    in.at(0, 1, 1) = 1.0;
    const RealTensor3 out = conv2d_padded(l, in);
    for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x)
            CHECK(out.at(0, y, x) == doctest::Approx(y == 2 && x == 1 ? 1.0 : 0.0));
}

TEST_CASE("convolution rejects an input with the wrong map count") {
    const ConvLayer l = single_layer(3);
    const RealTensor3 in(2, 3, 3);
    CHECK_THROWS_WITH_AS(conv2d_padded(l, in),
                         doctest::Contains("input has 2 maps, layer expects 1"), Error);
}

TEST_CASE("architecture validation rejects malformed specs") {
    ArchSpec a = tiny_arch();
    a.kernel = 4;
    CHECK_THROWS_WITH_AS(init_model(a, 1), doctest::Contains("must be odd"), Error);
    a = tiny_arch();
    a.layers = 0;
    CHECK_THROWS_WITH_AS(init_model(a, 1), doctest::Contains("at least one layer"), Error);
    a = tiny_arch();
    a.dropout = 1.0;
    CHECK_THROWS_WITH_AS(init_model(a, 1), doctest::Contains("dropout"), Error);
    a = tiny_arch();
    a.ris_width = a.ris_height = 16;
    a.layers = 2;
    a.kernel = 3;  // reach 2 cannot cover 16 cells
    CHECK_THROWS_WITH_AS(init_model(a, 1), doctest::Contains("receptive reach 2"), Error);
}

TEST_CASE("surface-size defaults widen for large grids") {
    CHECK(default_kernel_for(16, 16) == 5);
    CHECK(default_dropout_for(16, 16) == doctest::Approx(0.1));
    CHECK(default_kernel_for(32, 32) == 13);
    CHECK(default_dropout_for(32, 32) == doctest::Approx(0.35));
    CHECK(default_kernel_for(8, 32) == 13);  // the longer side decides
}

TEST_CASE("initial weights are fan-balanced uniform draws with zero biases") {
    ArchSpec a;
    a.ris_width = a.ris_height = 16;
    a.num_users = 2;
    a.layers = 8;
    a.hidden_maps = 16;
    a.kernel = 5;
    const FcnModel m = init_model(a, 42);
    REQUIRE(m.layers.size() == 8);
    CHECK(m.layers.front().in_maps == 8);  // 4 maps per user
    CHECK(m.layers.back().out_maps == 1);
    for (const ConvLayer& l : m.layers) {
        const double fan_in = static_cast<double>(l.in_maps * l.kh * l.kw);
        const double fan_out = static_cast<double>(l.out_maps * l.kh * l.kw);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        double peak = 0.0;
        for (double w : l.w) {
            CHECK(std::abs(w) <= bound);
            peak = std::max(peak, std::abs(w));
        }
        CHECK(peak > 0.5 * bound);  // draws fill the admissible range
        for (double b : l.b) CHECK(b == 0.0);
    }
    const FcnModel again = init_model(a, 42);
    CHECK(flatten_parameters(m) == flatten_parameters(again));
    const FcnModel other = init_model(a, 43);
    CHECK(flatten_parameters(m) != flatten_parameters(other));
}

TEST_CASE("forward pass rejects mismatched feature tensors") {
    const FcnModel m = init_model(tiny_arch(), 5);
    CHECK_THROWS_WITH_AS(fcn_forward(m, random_features(1, 3, 4, 4), RunMode::Eval, 0),
                         doctest::Contains("features have 3 maps, expected 4"), Error);
    CHECK_THROWS_WITH_AS(fcn_forward(m, random_features(1, 4, 5, 4), RunMode::Eval, 0),
                         doctest::Contains("does not match the model surface"), Error);
}

TEST_CASE("evaluation mode ignores the dropout seed entirely") {
    ArchSpec a = tiny_arch();
    a.dropout = 0.5;
    const FcnModel m = init_model(a, 6);
    const RealTensor3 feat = random_features(7, 4, 4, 4);
    const PhaseField p1 = fcn_forward(m, feat, RunMode::Eval, 1);
    const PhaseField p2 = fcn_forward(m, feat, RunMode::Eval, 999);
    CHECK(p1.psi == p2.psi);
}

TEST_CASE("training mode dropout is seed-deterministic and seed-sensitive") {
    ArchSpec a = tiny_arch();
    a.dropout = 0.5;
    const FcnModel m = init_model(a, 8);
    const RealTensor3 feat = random_features(9, 4, 4, 4);
    const PhaseField s1a = fcn_forward(m, feat, RunMode::Train, 1);
    const PhaseField s1b = fcn_forward(m, feat, RunMode::Train, 1);
    CHECK(s1a.psi == s1b.psi);
    const PhaseField s2 = fcn_forward(m, feat, RunMode::Train, 2);
    CHECK(s1a.psi != s2.psi);
    // with the rate at zero, training and evaluation coincide
    const FcnModel plain = init_model(tiny_arch(), 8);
    const PhaseField t = fcn_forward(plain, feat, RunMode::Train, 1);
    const PhaseField e = fcn_forward(plain, feat, RunMode::Eval, 3);
    CHECK(t.psi == e.psi);
}

TEST_CASE("output map is linear: no rectifier after the last layer") {
    // Hand-built one-layer model (too shallow for init_model's coverage
    // rule): output = conv(input). Negative cells must survive.
    FcnModel m;
    m.arch = tiny_arch();
    m.arch.layers = 1;
    ConvLayer l;
    l.in_maps = 4;
    l.out_maps = 1;
    l.kh = l.kw = 5;
    l.pad_h = l.pad_w = 2;
    l.b.assign(1, 0.1);
    l.w.resize(4 * 25);
    Rng wrng(10);
    for (double& w : l.w) w = wrng.uniform(-0.3, 0.3);
    m.layers.push_back(l);
    const RealTensor3 feat = random_features(12, 4, 4, 4);
    const PhaseField psi = fcn_forward(m, feat, RunMode::Eval, 0);
    const RealTensor3 direct = conv2d_padded(m.layers[0], feat);
    bool any_negative = false;
    for (std::size_t i = 0; i < psi.size(); ++i) {
        CHECK(psi.psi[i] == doctest::Approx(direct.v[i]).epsilon(1e-15));
        any_negative = any_negative || psi.psi[i] < 0.0;
    }
    CHECK(any_negative);
}

TEST_CASE("model gradients match finite differences over every parameter") {
    const FcnModel m = init_model(tiny_arch(), 20);
    const RealTensor3 feat = random_features(21, 4, 4, 4);
    const GradientResult res = fcn_gradient(m, feat, sine_head, RunMode::Eval, 0);
    const std::vector<double> analytic = flatten_grads(res.grads);

    FcnModel probe = m;
    auto f = [&](const std::vector<double>& flat) {
        assign_parameters(probe, flat);
        PhaseField psi = fcn_forward(probe, feat, RunMode::Eval, 0);
        std::vector<double> unused;
        return sine_head(psi, unused);
    };
    const std::vector<double> x0 = flatten_parameters(m);
    REQUIRE(x0.size() == parameter_count(m));
    const std::vector<double> fd = finite_difference_gradient(f, x0, 1e-6);
    CHECK(max_rel_err(analytic, fd) < 1e-5);

    std::vector<double> unused;
    PhaseField psi = fcn_forward(m, feat, RunMode::Eval, 0);
    CHECK(res.value == doctest::Approx(sine_head(psi, unused)).epsilon(1e-12));
}

TEST_CASE("gradient respects a fixed dropout mask in training mode") {
    ArchSpec a = tiny_arch();
    a.dropout = 0.3;
    const FcnModel m = init_model(a, 22);
    const RealTensor3 feat = random_features(23, 4, 4, 4);
    const std::uint64_t mask_seed = 77;
    const GradientResult res = fcn_gradient(m, feat, sine_head, RunMode::Train, mask_seed);

    FcnModel probe = m;
    auto f = [&](const std::vector<double>& flat) {
        assign_parameters(probe, flat);
        PhaseField psi = fcn_forward(probe, feat, RunMode::Train, mask_seed);
        std::vector<double> unused;
        return sine_head(psi, unused);
    };
    const std::vector<double> fd = finite_difference_gradient(f, flatten_parameters(m), 1e-6);
    CHECK(max_rel_err(flatten_grads(res.grads), fd) < 1e-5);
}

TEST_CASE("gradient rejects a head that reports the wrong grid size") {
    const FcnModel m = init_model(tiny_arch(), 24);
    const RealTensor3 feat = random_features(25, 4, 4, 4);
    auto bad_head = [](const PhaseField&, std::vector<double>& g) {
        g.assign(3, 0.0);
        return 0.0;
    };
    CHECK_THROWS_WITH_AS(fcn_gradient(m, feat, bad_head, RunMode::Eval, 0),
                         doctest::Contains("head returned 3 phase gradients"), Error);
}

TEST_CASE("flat parameters assign back losslessly and reject bad lengths") {
    const FcnModel m = init_model(tiny_arch(), 26);
    FcnModel other = init_model(tiny_arch(), 27);
    REQUIRE(flatten_parameters(m) != flatten_parameters(other));
    assign_parameters(other, flatten_parameters(m));
    CHECK(flatten_parameters(other) == flatten_parameters(m));
    std::vector<double> short_flat(parameter_count(m) - 1, 0.0);
    const std::string expect = "expected " + std::to_string(parameter_count(m));
    CHECK_THROWS_WITH_AS(assign_parameters(other, short_flat), doctest::Contains(expect.c_str()),
                         Error);
}

TEST_CASE("checkpoints round-trip bit for bit") {
    ArchSpec a = tiny_arch();
    a.dropout = 0.15;
    const FcnModel m = init_model(a, 30);
    const std::string path = testutil::temp_path("model_roundtrip.bin");
    save_model(m, path);
    const FcnModel back = load_model(path);
    CHECK(back.arch.ris_width == a.ris_width);
    CHECK(back.arch.ris_height == a.ris_height);
    CHECK(back.arch.num_users == a.num_users);
    CHECK(back.arch.layers == a.layers);
    CHECK(back.arch.hidden_maps == a.hidden_maps);
    CHECK(back.arch.kernel == a.kernel);
    CHECK(back.arch.dropout == a.dropout);
    CHECK(back.init_seed == 30);
    CHECK(flatten_parameters(back) == flatten_parameters(m));
    std::ifstream in(path, std::ios::binary);
    char magic[13];
    in.read(magic, 13);
    CHECK(std::string(magic, 13) == "RISMUXMODEL1\n");
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects damaged files") {
    const FcnModel m = init_model(tiny_arch(), 31);
    const std::string path = testutil::temp_path("model_damage.bin");

    CHECK_THROWS_WITH_AS(load_model(testutil::temp_path("no_such_model.bin")),
                         doctest::Contains("cannot open"), Error);

    save_model(m, path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("BOGUS", 5);
    }
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("expected magic"), Error);

    save_model(m, path);
    std::string bytes;
    {
        std::ifstream f(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    }
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
    }
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("payload truncated"), Error);

    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        f.put('\0');
    }
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("trailing bytes"), Error);
    std::remove(path.c_str());
}
