#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rismux/cli.hpp"
#include "rismux/error.hpp"

namespace {

void add_common(CLI::App* cmd, rismux::CliArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment configuration file (JSON)");
    cmd->add_option("--seed", args.seed, "override the config seed")
        ->each([&args](const std::string&) { args.has_seed = true; });
    cmd->add_option("--threads", args.threads, "worker thread cap (0: machine parallelism)");
    cmd->add_option("--out", args.out, "output path");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint surface-phase and precoder optimizer for a multi-user downlink"};
    app.require_subcommand(1);

    rismux::CliArgs args;

    CLI::App* gen = app.add_subcommand("gen-channels", "synthesize a channel dataset file");
    add_common(gen, args);

    CLI::App* train = app.add_subcommand("train", "two-phase training run");
    add_common(train, args);
    train->add_option("--channels", args.channels, "channel dataset file");
    train->add_option("--out-model", args.out_model, "checkpoint output file");
    train->add_option("--trace", args.trace, "per-epoch trace CSV output");

    CLI::App* traind = app.add_subcommand("train-discrete", "training with codebook annealing");
    add_common(traind, args);
    traind->add_option("--channels", args.channels, "channel dataset file");
    traind->add_option("--out-model", args.out_model, "checkpoint output file");
    traind->add_option("--trace", args.trace, "per-epoch trace CSV output");
    traind->add_option("--codebook", args.codebook, "comma list of phases, e.g. 0,pi");
    traind->add_option("--penalty-threshold", args.penalty_threshold, "stop when mean test penalty drops below this")
        ->each([&args](const std::string&) { args.has_penalty_threshold = true; });

    const char* eval_names[] = {"eval", "rate-region", "tsnr-sweep", "ecdf", "robustness"};
    const char* eval_descs[] = {"evaluate a model or baseline on a dataset split",
                                "per-user mean rates across the configured weight vectors",
                                "mean rates across a transmit-SNR grid",
                                "empirical CDF of per-sample sum rates",
                                "performance under channel-estimate errors"};
    for (int i = 0; i < 5; ++i) {
        CLI::App* cmd = app.add_subcommand(eval_names[i], eval_descs[i]);
        add_common(cmd, args);
        cmd->add_option("--channels", args.channels, "channel dataset file");
        cmd->add_option("--model", args.models, "model checkpoint (repeatable for rate-region)");
    }

    CLI11_PARSE(app, argc, argv);

    args.command = app.get_subcommands().front()->get_name();
    try {
        rismux::run_command(args);
    } catch (const rismux::Error& e) {
        std::fprintf(stderr, "ris-muxer: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ris-muxer: unexpected failure: %s\n", e.what());
        return 1;
    }
    return 0;
}
