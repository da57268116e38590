#include "rismux/channel.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <sstream>

#include "rismux/error.hpp"
#include "rismux/numerics.hpp"

namespace rismux {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr double kLightSpeed = 299792458.0;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double length(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(const Vec3& a) {
    const double l = length(a);
    return {a.x / l, a.y / l, a.z / l};
}

std::size_t integer_sqrt(std::size_t m) {
    std::size_t s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(m))));
    while (s * s > m) --s;
    while ((s + 1) * (s + 1) <= m) ++s;
    return s;
}

std::vector<Vec3> surface_positions(const ChannelSpec& spec, double lambda) {
    const double s = spec.ris_spacing * lambda;
    const double xc = (static_cast<double>(spec.ris_width) - 1.0) / 2.0;
    const double zc = (static_cast<double>(spec.ris_height) - 1.0) / 2.0;
    std::vector<Vec3> r(spec.ris_width * spec.ris_height);
    for (std::size_t h = 0; h < spec.ris_height; ++h)
        for (std::size_t w = 0; w < spec.ris_width; ++w)
            r[h * spec.ris_width + w] = {(static_cast<double>(w) - xc) * s, 0.0,
                                         (zc - static_cast<double>(h)) * s};
    return r;
}

std::vector<Vec3> bs_positions(const ChannelSpec& spec, double lambda, std::size_t side) {
    const double s = spec.bs_spacing * lambda;
    const double c = (static_cast<double>(side) - 1.0) / 2.0;
    std::vector<Vec3> b(side * side);
    for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j)
            b[i * side + j] = {spec.bs_x + (static_cast<double>(j) - c) * s, spec.bs_y,
                               spec.bs_z + (c - static_cast<double>(i)) * s};
    return b;
}

// Planar two-path BS-to-surface link: line of sight plus one ground bounce.
ComplexMatrix build_h(const ChannelSpec& spec, double k, const std::vector<Vec3>& r,
                      const std::vector<Vec3>& b) {
    const Vec3 bs_center{spec.bs_x, spec.bs_y, spec.bs_z};
    const Vec3 bs_image{spec.bs_x, spec.bs_y, 2.0 * spec.ground_z - spec.bs_z};
    ComplexMatrix h(r.size(), b.size());
    const Vec3 sources[2] = {bs_center, bs_image};
    const double amps[2] = {1.0, spec.reflection_amplitude};
    for (int p = 0; p < 2; ++p) {
        const Vec3 src = sources[p];
        const double l0 = length(src);  // to the surface center at the origin
        const Vec3 u = normalized(Vec3{0.0, 0.0, 0.0} - src);
        for (std::size_t n = 0; n < r.size(); ++n)
            for (std::size_t m = 0; m < b.size(); ++m) {
                const double path = l0 + dot(r[n], u) - dot(b[m] - bs_center, u);
                h(n, m) += amps[p] * std::polar(1.0, -k * path);
            }
    }
    return h;
}

std::vector<Vec3> draw_users(const ChannelSpec& spec, Rng& rng) {
    std::vector<Vec3> q;
    q.reserve(spec.num_users);
    std::size_t attempts = 0;
    const std::size_t max_attempts = 10000 * spec.num_users;
    while (q.size() < spec.num_users) {
        if (++attempts > max_attempts)
            throw Error("synthesize_dataset: could not place " + std::to_string(spec.num_users) +
                        " users with min separation " + std::to_string(spec.min_separation));
        Vec3 c{rng.uniform(-spec.area_width / 2.0, spec.area_width / 2.0),
               rng.uniform(spec.area_distance, spec.area_distance + spec.area_depth), spec.user_height};
        bool ok = true;
        for (const Vec3& other : q)
            if (length(c - other) < spec.min_separation) {
                ok = false;
                break;
            }
        if (ok) q.push_back(c);
    }
    return q;
}

json matrix_to_json(const ComplexMatrix& m) {
    json arr = json::array();
    for (const cplx& v : m.a) arr.push_back(json::array({v.real(), v.imag()}));
    return arr;
}

ComplexMatrix matrix_from_json(const json& arr, std::size_t rows, std::size_t cols, const std::string& field) {
    if (!arr.is_array())
        throw Error("channel file: field '" + field + "' must be an array of [re, im] pairs");
    if (arr.size() != rows * cols) {
        std::ostringstream os;
        os << "channel file: field '" << field << "' has " << arr.size() << " entries, expected "
           << rows * cols;
        throw Error(os.str());
    }
    ComplexMatrix m(rows, cols);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const json& e = arr[i];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
            throw Error("channel file: field '" + field + "' entry " + std::to_string(i) +
                        " is not an [re, im] pair");
        m.a[i] = cplx(e[0].get<double>(), e[1].get<double>());
    }
    return m;
}

std::size_t require_count(const json& j, const char* name) {
    if (!j.contains(name)) throw Error(std::string("channel file: missing field '") + name + "'");
    const json& v = j.at(name);
    if (!v.is_number_unsigned())
        throw Error(std::string("channel file: field '") + name + "' must be a nonnegative integer");
    return v.get<std::size_t>();
}

}  // namespace

bool operator==(const ChannelDataset& x, const ChannelDataset& y) {
    return x.num_users == y.num_users && x.bs_antennas == y.bs_antennas && x.ris_width == y.ris_width &&
           x.ris_height == y.ris_height && x.h == y.h && x.samples == y.samples;
}

ChannelDataset synthesize_dataset(const ChannelSpec& spec) {
    if (spec.num_users == 0) throw Error("synthesize_dataset: num_users must be positive");
    if (spec.ris_width == 0 || spec.ris_height == 0)
        throw Error("synthesize_dataset: surface dimensions must be positive");
    const std::size_t side = integer_sqrt(spec.bs_antennas);
    if (side == 0 || side * side != spec.bs_antennas)
        throw Error("synthesize_dataset: bs_antennas = " + std::to_string(spec.bs_antennas) +
                    " is not a positive perfect square");
    const std::size_t total = spec.train_samples + spec.test_samples;
    if (total == 0) throw Error("synthesize_dataset: sample count must be positive");
    if (!(spec.carrier_hz > 0.0)) throw Error("synthesize_dataset: carrier_hz must be positive");

    const double lambda = kLightSpeed / spec.carrier_hz;
    const double k = kTwoPi / lambda;
    const std::vector<Vec3> r = surface_positions(spec, lambda);
    const std::vector<Vec3> b = bs_positions(spec, lambda, side);

    ChannelDataset ds;
    ds.num_users = spec.num_users;
    ds.bs_antennas = spec.bs_antennas;
    ds.ris_width = spec.ris_width;
    ds.ris_height = spec.ris_height;
    ds.h = build_h(spec, k, r, b);
    ds.train_count = std::min(spec.train_samples, total);

    const double df = spec.diffuse_fraction;
    const double diffuse_scale = std::sqrt(df);
    const double norm_scale = 1.0 / std::sqrt(1.0 + df);
    const double direct_amp = std::sqrt(spec.direct_path_fraction);

    ds.samples.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        Rng rng(derive_seed(spec.seed, "channel-sample", i));
        const std::vector<Vec3> q = draw_users(spec, rng);
        ChannelSample& s = ds.samples[i];
        s.g = ComplexMatrix(spec.num_users, r.size());
        for (std::size_t u = 0; u < spec.num_users; ++u)
            for (std::size_t n = 0; n < r.size(); ++n) {
                cplx los = std::polar(1.0, -k * length(q[u] - r[n]));
                if (df > 0.0) los = (los + diffuse_scale * rng.cnormal()) * norm_scale;
                s.g(u, n) = los;
            }
        s.d = ComplexMatrix(spec.num_users, b.size());
        for (std::size_t u = 0; u < spec.num_users; ++u)
            for (std::size_t m = 0; m < b.size(); ++m)
                s.d(u, m) = direct_amp * std::polar(1.0, -k * length(q[u] - b[m]));
    }
    return ds;
}

void save_dataset(const ChannelDataset& ds, const std::string& path) {
    ordered_json j;
    j["format_version"] = 1;
    j["U"] = ds.num_users;
    j["M"] = ds.bs_antennas;
    j["N"] = ds.n_elements();
    j["W_ris"] = ds.ris_width;
    j["H_ris"] = ds.ris_height;
    j["sample_count"] = ds.samples.size();
    j["H"] = matrix_to_json(ds.h);
    ordered_json samples = ordered_json::array();
    for (const ChannelSample& s : ds.samples) {
        ordered_json e;
        e["G"] = matrix_to_json(s.g);
        e["D"] = matrix_to_json(s.d);
        samples.push_back(std::move(e));
    }
    j["samples"] = std::move(samples);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_dataset: cannot open '" + path + "' for writing");
    out << j.dump(1, '\t') << "\n";
    if (!out) throw Error("save_dataset: write to '" + path + "' failed");
}

ChannelDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_dataset: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("channel file '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw Error("channel file '" + path + "': top level must be an object");

    const std::size_t version = require_count(j, "format_version");
    if (version != 1)
        throw Error("channel file: unsupported format_version " + std::to_string(version));
    ChannelDataset ds;
    ds.num_users = require_count(j, "U");
    ds.bs_antennas = require_count(j, "M");
    const std::size_t n = require_count(j, "N");
    ds.ris_width = require_count(j, "W_ris");
    ds.ris_height = require_count(j, "H_ris");
    const std::size_t count = require_count(j, "sample_count");
    if (n != ds.ris_width * ds.ris_height) {
        std::ostringstream os;
        os << "channel file: N = " << n << " does not equal W_ris * H_ris = "
           << ds.ris_width * ds.ris_height;
        throw Error(os.str());
    }
    if (!j.contains("H")) throw Error("channel file: missing field 'H'");
    ds.h = matrix_from_json(j.at("H"), n, ds.bs_antennas, "H");
    if (!j.contains("samples")) throw Error("channel file: missing field 'samples'");
    const json& samples = j.at("samples");
    if (!samples.is_array()) throw Error("channel file: field 'samples' must be an array");
    if (samples.size() != count) {
        std::ostringstream os;
        os << "channel file: sample_count = " << count << " but 'samples' has " << samples.size()
           << " entries";
        throw Error(os.str());
    }
    ds.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const json& e = samples[i];
        const std::string tag = "samples[" + std::to_string(i) + "]";
        if (!e.is_object()) throw Error("channel file: " + tag + " must be an object");
        if (!e.contains("G")) throw Error("channel file: " + tag + " missing field 'G'");
        if (!e.contains("D")) throw Error("channel file: " + tag + " missing field 'D'");
        ds.samples[i].g = matrix_from_json(e.at("G"), ds.num_users, n, tag + ".G");
        ds.samples[i].d = matrix_from_json(e.at("D"), ds.num_users, ds.bs_antennas, tag + ".D");
    }
    ds.train_count = 0;  // split is configuration, not file content
    return ds;
}

ComplexMatrix perturb_matrix(const ComplexMatrix& m, double gamma, Rng& rng) {
    if (gamma < 0.0) throw Error("perturb: gamma must be nonnegative");
    if (gamma == 0.0 || m.a.empty()) return m;
    double mean_abs = 0.0;
    for (const cplx& v : m.a) mean_abs += std::abs(v);
    mean_abs /= static_cast<double>(m.a.size());
    const double sigma = gamma * mean_abs;
    ComplexMatrix out = m;
    for (cplx& v : out.a) v += rng.cnormal(sigma);
    return out;
}

ChannelSample perturb_sample(const ChannelSample& s, double gamma, Rng& rng) {
    ChannelSample out;
    out.g = perturb_matrix(s.g, gamma, rng);
    out.d = perturb_matrix(s.d, gamma, rng);
    return out;
}

ChannelDataset perturb(const ChannelDataset& ds, double gamma, std::uint64_t seed, bool include_h) {
    ChannelDataset out = ds;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        Rng rng(derive_seed(seed, "perturb", i));
        out.samples[i] = perturb_sample(ds.samples[i], gamma, rng);
    }
    if (include_h) {
        Rng rng(derive_seed(seed, "perturb-h"));
        out.h = perturb_matrix(ds.h, gamma, rng);
    }
    return out;
}

RealTensor3 build_features(const ComplexMatrix& g, const ComplexMatrix& d, const ComplexMatrix& h_pinv,
                           std::size_t ris_height, std::size_t ris_width) {
    const std::size_t n = ris_height * ris_width;
    const std::size_t users = g.rows;
    if (g.cols != n)
        throw Error("build_features: G has " + std::to_string(g.cols) + " columns, expected " +
                    std::to_string(n));
    if (d.rows != users) throw Error("build_features: G and D disagree on the user count");
    if (h_pinv.rows != d.cols || h_pinv.cols != n)
        throw Error("build_features: pinv(H) must be " + std::to_string(d.cols) + "x" + std::to_string(n));
    const ComplexMatrix j = matmul(d, h_pinv);
    RealTensor3 f(4 * users, ris_height, ris_width);
    auto fill = [&](std::size_t base, const ComplexMatrix& src, std::size_t u) {
        double* mag = f.map(base);
        double* ph = f.map(base + 1);
        const cplx* row = src.row(u);
        for (std::size_t i = 0; i < n; ++i) {
            mag[i] = std::abs(row[i]);
            ph[i] = row[i] == cplx(0.0, 0.0) ? 0.0 : wrap_pm_pi(std::arg(row[i]));
        }
    };
    for (std::size_t u = 0; u < users; ++u) fill(2 * u, g, u);
    for (std::size_t u = 0; u < users; ++u) fill(2 * users + 2 * u, j, u);
    return f;
}

double equivalent_channel_check(const ComplexMatrix& g, const ComplexMatrix& h, const ComplexMatrix& d,
                                const PhaseField& psi) {
    if (psi.size() != g.cols || h.rows != g.cols)
        throw Error("equivalent_channel_check: dimension mismatch between G, H, and psi");
    const std::size_t rank = numeric_rank(h);
    if (rank < h.cols)
        throw Error("equivalent_channel_check: H has rank " + std::to_string(rank) + " < " +
                    std::to_string(h.cols) + ", the equivalent form needs full column rank");
    ComplexMatrix g_phi = g;
    for (std::size_t u = 0; u < g.rows; ++u)
        for (std::size_t n = 0; n < g.cols; ++n) g_phi(u, n) *= psi.unit(n);
    ComplexMatrix direct = matmul(g_phi, h);
    for (std::size_t i = 0; i < direct.a.size(); ++i) direct.a[i] += d.a[i];

    ComplexMatrix sum = matmul(d, pseudoinverse(h));
    for (std::size_t i = 0; i < sum.a.size(); ++i) sum.a[i] += g_phi.a[i];
    const ComplexMatrix other = matmul(sum, h);
    ComplexMatrix diff = other;
    for (std::size_t i = 0; i < diff.a.size(); ++i) diff.a[i] -= direct.a[i];
    const double denom = frobenius_norm(direct);
    if (denom == 0.0) return frobenius_norm(diff) == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return frobenius_norm(diff) / denom;
}

}  // namespace rismux
