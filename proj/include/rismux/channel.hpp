#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rismux/complex_matrix.hpp"
#include "rismux/phase_field.hpp"
#include "rismux/rng.hpp"

namespace rismux {

// Scene layout, desk defaults. The reflecting surface is a width x height
// grid in the x-z plane centered at the origin; the base station array is a
// square grid parallel to it; users are dropped uniformly in a rectangle on
// the far side. Distances in meters, spacings in wavelengths.
struct ChannelSpec {
    std::size_t num_users = 2;
    std::size_t bs_antennas = 9;  // must be a perfect square
    std::size_t ris_width = 16;
    std::size_t ris_height = 16;
    double carrier_hz = 5.8e9;
    double bs_spacing = 0.5;
    double ris_spacing = 0.25;
    double bs_x = -15.0, bs_y = 25.0, bs_z = 0.0;
    double reflection_amplitude = 0.6;  // ground bounce of the BS-surface link
    double ground_z = -2.0;
    double diffuse_fraction = 0.1;      // scattered power on the surface-user links
    double direct_path_fraction = 0.01; // residual power of the blocked BS-user link
    double area_width = 20.0;
    double area_depth = 20.0;
    double area_distance = 20.0;        // users have y in [distance, distance + depth]
    double user_height = -1.5;
    double min_separation = 2.0;
    std::size_t train_samples = 5000;
    std::size_t test_samples = 1024;
    std::uint64_t seed = 1;
};

// One channel draw: surface-to-user link G (U x N) and the residual direct
// link D (U x M). The BS-to-surface link H is fixed per dataset.
struct ChannelSample {
    ComplexMatrix g;
    ComplexMatrix d;
};

inline bool operator==(const ChannelSample& x, const ChannelSample& y) { return x.g == y.g && x.d == y.d; }

struct ChannelDataset {
    std::size_t num_users = 0;
    std::size_t bs_antennas = 0;
    std::size_t ris_width = 0;
    std::size_t ris_height = 0;
    ComplexMatrix h;  // N x M
    std::vector<ChannelSample> samples;
    // First train_count samples form the train split. This tag is in-memory
    // only: the file format stores channels, and loaders re-apply the split
    // from their configuration.
    std::size_t train_count = 0;

    std::size_t n_elements() const { return ris_width * ris_height; }
    std::size_t test_count() const { return samples.size() - train_count; }
    const ChannelSample& test_sample(std::size_t i) const { return samples[train_count + i]; }
};

// Split tags are excluded: equality means the same physical channels.
bool operator==(const ChannelDataset& x, const ChannelDataset& y);

ChannelDataset synthesize_dataset(const ChannelSpec& spec);

// Structured text format, one JSON document: header fields {format_version,
// U, M, N, W_ris, H_ris, sample_count}, the shared H, then per-sample G and
// D. Every matrix is a flat row-major array of [re, im] pairs. Doubles
// round-trip exactly.
void save_dataset(const ChannelDataset& ds, const std::string& path);
ChannelDataset load_dataset(const std::string& path);

// Channel estimation error: i.i.d. complex Gaussian noise per entry with
// per-matrix deviation gamma * mean |entry|. gamma = 0 returns the input
// unchanged.
ComplexMatrix perturb_matrix(const ComplexMatrix& m, double gamma, Rng& rng);
ChannelSample perturb_sample(const ChannelSample& s, double gamma, Rng& rng);
// H is left untouched unless include_h is set.
ChannelDataset perturb(const ChannelDataset& ds, double gamma, std::uint64_t seed, bool include_h = false);

// Network input stack: 4U maps of height x width, ordered
// |g_1|, arg g_1, ..., |g_U|, arg g_U, |j_1|, arg j_1, ..., |j_U|, arg j_U,
// where j_u is row u of D * pinv(H). Magnitudes are nonnegative, phases lie
// in [-pi, pi), and element n of a row maps to grid cell (n / width,
// n % width).
RealTensor3 build_features(const ComplexMatrix& g, const ComplexMatrix& d, const ComplexMatrix& h_pinv,
                           std::size_t ris_height, std::size_t ris_width);

// Relative Frobenius gap between (G diag(e^{j psi}) + J) H and
// G diag(e^{j psi}) H + D with J = D pinv(H). The identity needs pinv(H) H =
// I, so H must have full column rank; a rank-deficient H raises an Error.
double equivalent_channel_check(const ComplexMatrix& g, const ComplexMatrix& h, const ComplexMatrix& d,
                                const PhaseField& psi);

}  // namespace rismux
