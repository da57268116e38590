#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rismux/complex_matrix.hpp"
#include "rismux/phase_field.hpp"

namespace rismux {

// Shape of the phase network: a stack of same-padding convolutions over the
// surface grid, 4 * num_users input maps, one output map, leaky-rectified
// hidden layers and a linear output. Kernels are odd so padding (k - 1) / 2
// preserves the grid.
struct ArchSpec {
    std::size_t ris_width = 16;
    std::size_t ris_height = 16;
    std::size_t num_users = 2;
    std::size_t layers = 8;       // convolution count including the output layer
    std::size_t hidden_maps = 32;
    std::size_t kernel = 5;
    double dropout = 0.1;         // hidden layers only, inverted scaling
    double leaky_slope = 0.01;
};

// Surface-size-dependent defaults: compact kernels for a 16 x 16 surface,
// wider kernels and heavier dropout for larger grids.
std::size_t default_kernel_for(std::size_t ris_width, std::size_t ris_height);
double default_dropout_for(std::size_t ris_width, std::size_t ris_height);

struct ConvLayer {
    std::size_t in_maps = 0, out_maps = 0;
    std::size_t kh = 0, kw = 0;
    std::size_t pad_h = 0, pad_w = 0;
    std::vector<double> w;  // [out][in][kh][kw]
    std::vector<double> b;  // [out]

    double& wt(std::size_t o, std::size_t i, std::size_t r, std::size_t c) {
        return w[((o * in_maps + i) * kh + r) * kw + c];
    }
    const double& wt(std::size_t o, std::size_t i, std::size_t r, std::size_t c) const {
        return w[((o * in_maps + i) * kh + r) * kw + c];
    }
};

struct FcnModel {
    ArchSpec arch;
    std::vector<ConvLayer> layers;
    std::uint64_t init_seed = 0;
};

// Validates the architecture (odd kernel, at least one layer, cumulative
// receptive reach sum_i (k_i - 1) / 2 covering max(width, height)) and draws
// uniform fan-balanced weights with zero biases.
FcnModel init_model(const ArchSpec& arch, std::uint64_t seed);

// Zero-padded cross-correlation plus bias, one layer.
RealTensor3 conv2d_padded(const ConvLayer& layer, const RealTensor3& in);

enum class RunMode { Train, Eval };

struct ForwardCache {
    const RealTensor3* input = nullptr;
    std::vector<RealTensor3> pre;                     // preactivation per layer
    std::vector<RealTensor3> act;                     // layer outputs after activation and dropout
    std::vector<std::vector<std::uint8_t>> keep;      // dropout keep mask per hidden layer
};

// Runs the stack on a 4U x H x W feature tensor. Train mode draws fresh
// dropout masks from dropout_seed; Eval mode is deterministic with no
// dropout. The single output map is returned as a phase field (raw values,
// not wrapped).
PhaseField fcn_forward(const FcnModel& model, const RealTensor3& features, RunMode mode,
                       std::uint64_t dropout_seed, ForwardCache* cache = nullptr);

struct ModelGrads {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;

    void accumulate(const ModelGrads& o);
    void scale(double s);
};

ModelGrads zero_grads_like(const FcnModel& model);

// A head maps the network output to a scalar objective and fills
// d objective / d psi. fcn_gradient composes forward, head, and the
// hand-written reverse pass over the stack.
using PhaseHead = std::function<double(const PhaseField& psi, std::vector<double>& grad_psi)>;

struct GradientResult {
    double value = 0.0;
    ModelGrads grads;
};

GradientResult fcn_gradient(const FcnModel& model, const RealTensor3& features, const PhaseHead& head,
                            RunMode mode, std::uint64_t dropout_seed);

// Flat parameter order: per layer, kernel block then biases. Shared by the
// optimizer state, the checkpoint format, and the finite-difference harness.
std::size_t parameter_count(const FcnModel& model);
std::vector<double> flatten_parameters(const FcnModel& model);
void assign_parameters(FcnModel& model, const std::vector<double>& flat);
std::vector<double> flatten_grads(const ModelGrads& g);

// Binary checkpoint: magic line, length-prefixed JSON header describing the
// architecture and seed lineage, then raw little-endian doubles in flat
// parameter order. Loading verifies magic, header consistency, and the exact
// payload length.
void save_model(const FcnModel& model, const std::string& path);
FcnModel load_model(const std::string& path);

}  // namespace rismux
