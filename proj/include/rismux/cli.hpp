#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rismux {

struct CliArgs {
    std::string command;
    std::string config_path;  // empty: all defaults
    std::string out;          // output file (gen-channels) or directory (eval family)
    bool has_seed = false;
    std::uint64_t seed = 0;
    int threads = -1;  // negative: from config
    std::string channels;
    std::vector<std::string> models;
    std::string out_model;
    std::string trace;
    std::string codebook;  // comma list, overrides the config codebook
    bool has_penalty_threshold = false;
    double penalty_threshold = 0.0;
};

// Runs one subcommand end to end and writes its artifacts plus a manifest.
// Throws Error on any failure.
void run_command(const CliArgs& args);

}  // namespace rismux
