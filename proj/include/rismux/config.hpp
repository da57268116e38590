#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rismux/channel.hpp"
#include "rismux/fcn.hpp"
#include "rismux/training.hpp"

namespace rismux {

// Flat-key run configuration. Every field has a working default, so an empty
// config file is a valid experiment description.
struct RunConfig {
    ChannelSpec channel;

    // network shape; kernel 0 and dropout < 0 mean "pick by surface size"
    std::size_t conv_layers = 8;
    std::size_t hidden_maps = 32;
    std::size_t kernel = 0;
    double dropout = -1.0;
    double leaky_slope = 0.01;

    TrainConfig train;

    LinkBudget link;
    std::vector<double> weights = {0.5, 0.5};

    // evaluation
    std::string algorithm = "fcn";  // fcn | random | altgrad
    std::string eval_split = "test";
    double gamma = 0.0;
    bool round_to_codebook = false;
    double eval_wmmse_eps = 1e-4;
    std::size_t eval_wmmse_max_outer = 100;
    std::size_t altgrad_steps = 100;
    double altgrad_step_size = 0.1;
    std::vector<double> tsnr_grid;  // empty: the default sweep grid
    std::vector<double> gamma_list = {0.0, 0.1, 0.2};
    std::vector<std::vector<double>> rate_region_weights = {
        {0.0, 1.0}, {0.25, 0.75}, {0.5, 0.5}, {0.75, 0.25}, {1.0, 0.0}};
    std::vector<std::string> rate_region_models;

    std::uint64_t seed = 1;
    int threads = 0;
};

// "0,pi" or "0,1.5708,-pi,0.5pi" -> phases; each token is a decimal number,
// "pi", or a decimal multiple of pi.
double parse_phase_token(const std::string& token);
std::vector<double> parse_codebook(const std::string& csv);

// JSON object of flat keys; whitespace-only input means all defaults.
// Unknown keys, wrong types, and out-of-range values raise an Error naming
// the key, the expected type, and the line.
RunConfig parse_config_text(const std::string& text, const std::string& name);
RunConfig parse_config(const std::string& path);

// Bakes the cross-field defaults: surface-sized kernel and dropout, and the
// training-side copies of weights, link, seed, and threads.
void resolve_config(RunConfig& cfg);

ArchSpec arch_spec(const RunConfig& cfg);

// Canonical (sorted-key) echo of the fully resolved config.
nlohmann::json effective_config_json(const RunConfig& cfg);

// FNV-1a over the canonical echo; equal effective configs hash equally.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace rismux
