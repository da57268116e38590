#include "rismux/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rismux/config.hpp"
#include "rismux/error.hpp"
#include "rismux/evaluation.hpp"
#include "rismux/training.hpp"

namespace rismux {

namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "1.0.0";

double wall_now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

RunConfig load_config(const CliArgs& a) {
    RunConfig cfg;
    if (!a.config_path.empty()) cfg = parse_config(a.config_path);
    if (a.has_seed) cfg.seed = a.seed;
    if (a.threads >= 0) cfg.threads = a.threads;
    if (!a.codebook.empty()) cfg.train.phase_codebook = parse_codebook(a.codebook);
    if (a.has_penalty_threshold) {
        if (!(a.penalty_threshold > 0.0))
            throw Error("--penalty-threshold must be positive");
        cfg.train.penalty_threshold = a.penalty_threshold;
    }
    resolve_config(cfg);
    return cfg;
}

void ensure_parent_dir(const std::string& file) {
    const fs::path parent = fs::path(file).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

ChannelDataset load_split_dataset(const std::string& path, const RunConfig& cfg, const std::string& cmd) {
    if (path.empty()) throw Error(cmd + ": --channels <file> is required");
    ChannelDataset ds = load_dataset(path);
    const ChannelSpec& ch = cfg.channel;
    if (ds.num_users != ch.num_users || ds.bs_antennas != ch.bs_antennas ||
        ds.ris_width != ch.ris_width || ds.ris_height != ch.ris_height) {
        std::ostringstream os;
        os << cmd << ": dataset geometry (users " << ds.num_users << ", antennas " << ds.bs_antennas
           << ", surface " << ds.ris_width << "x" << ds.ris_height << ") does not match the config (users "
           << ch.num_users << ", antennas " << ch.bs_antennas << ", surface " << ch.ris_width << "x"
           << ch.ris_height << ")";
        throw Error(os.str());
    }
    if (ch.train_samples > ds.samples.size()) {
        std::ostringstream os;
        os << cmd << ": train_samples " << ch.train_samples << " exceeds the dataset's "
           << ds.samples.size() << " samples";
        throw Error(os.str());
    }
    ds.train_count = ch.train_samples;
    return ds;
}

void write_manifest(const std::string& path, const std::string& command, const RunConfig& cfg,
                    double wall_seconds, const std::vector<std::string>& artifacts,
                    const nlohmann::json& summary = nlohmann::json()) {
    nlohmann::ordered_json m;
    m["command"] = command;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
    m["config_hash"] = std::string(hex);
    m["seed"] = cfg.seed;
    m["versions"] = {{"ris_muxer", kVersion}, {"channel_format", 1}, {"model_format", 1}};
    m["wall_seconds"] = wall_seconds;
    m["artifacts"] = artifacts;
    if (!summary.is_null()) m["summary"] = summary;
    m["config"] = effective_config_json(cfg);
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("manifest: cannot open '" + path + "' for writing");
    out << m.dump(1, '\t') << '\n';
    if (!out) throw Error("manifest: write to '" + path + "' failed");
}

PhaseSource source_of(const RunConfig& cfg) {
    if (cfg.algorithm == "random") return PhaseSource::RandomBaseline;
    if (cfg.algorithm == "altgrad") return PhaseSource::AltGradBaseline;
    return PhaseSource::Model;
}

EvalOptions eval_options(const RunConfig& cfg, const std::string& cmd) {
    EvalOptions o;
    o.split = cfg.eval_split == "train" ? Split::Train
              : cfg.eval_split == "all" ? Split::All
                                        : Split::Test;
    o.gamma = cfg.gamma;
    if (cfg.round_to_codebook) {
        if (cfg.train.phase_codebook.empty())
            throw Error(cmd + ": round_to_codebook needs a nonempty phase_codebook");
        o.rounding_codebook = cfg.train.phase_codebook;
    }
    o.seed = cfg.seed;
    o.wmmse.eps = cfg.eval_wmmse_eps;
    o.wmmse.max_outer = cfg.eval_wmmse_max_outer;
    o.threads = cfg.threads;
    o.altgrad_steps = cfg.altgrad_steps;
    o.altgrad_step_size = cfg.altgrad_step_size;
    return o;
}

struct EvalSetup {
    ChannelDataset ds;
    EvalOptions opt;
    PhaseSource source = PhaseSource::Model;
    FcnModel model;  // valid only when source == Model
    std::string out_dir;
};

EvalSetup eval_setup(const CliArgs& a, const RunConfig& cfg) {
    EvalSetup s;
    s.ds = load_split_dataset(a.channels, cfg, a.command);
    s.opt = eval_options(cfg, a.command);
    s.source = source_of(cfg);
    if (s.source == PhaseSource::Model) {
        if (a.models.empty())
            throw Error(a.command + ": --model <file> is required for the fcn algorithm");
        s.model = load_model(a.models.front());
    }
    if (a.out.empty()) throw Error(a.command + ": --out <dir> is required");
    fs::create_directories(a.out);
    s.out_dir = a.out;
    return s;
}

std::string join_path(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

void run_gen_channels(const CliArgs& a, const RunConfig& cfg, double t0) {
    if (a.out.empty()) throw Error("gen-channels: --out <file> is required");
    const ChannelDataset ds = synthesize_dataset(cfg.channel);
    ensure_parent_dir(a.out);
    save_dataset(ds, a.out);
    nlohmann::json summary;
    summary["samples"] = ds.samples.size();
    write_manifest(a.out + ".manifest.json", a.command, cfg, wall_now() - t0, {a.out}, summary);
}

void run_train(const CliArgs& a, const RunConfig& cfg, double t0) {
    if (a.out_model.empty()) throw Error(a.command + ": --out-model <file> is required");
    const ChannelDataset ds = load_split_dataset(a.channels, cfg, a.command);
    const ArchSpec arch = arch_spec(cfg);
    std::vector<std::string> artifacts = {a.out_model};
    nlohmann::json summary;
    if (a.command == "train-discrete") {
        if (cfg.train.phase_codebook.empty())
            throw Error("train-discrete: a phase codebook is required (config phase_codebook or --codebook)");
        const DiscreteResult r = train_discrete(ds, arch, cfg.train);
        ensure_parent_dir(a.out_model);
        save_model(r.model, a.out_model);
        if (!a.trace.empty()) {
            ensure_parent_dir(a.trace);
            save_trace_csv(r.trace, a.trace);
            artifacts.push_back(a.trace);
        }
        summary["rounds"] = r.rounds;
        summary["kappa_final"] = r.kappa_final;
        summary["test_penalty"] = r.test_penalty;
        summary["epochs"] = r.trace.rows.size();
    } else {
        const TrainResult r = train_two_phase(ds, arch, cfg.train);
        ensure_parent_dir(a.out_model);
        save_model(r.model, a.out_model);
        if (!a.trace.empty()) {
            ensure_parent_dir(a.trace);
            save_trace_csv(r.trace, a.trace);
            artifacts.push_back(a.trace);
        }
        summary["epochs_phase1"] = r.epochs_phase1;
        summary["epochs_phase2"] = r.epochs_phase2;
        if (!r.trace.rows.empty()) summary["final_wsr"] = r.trace.rows.back().wsr;
    }
    write_manifest(a.out_model + ".manifest.json", a.command, cfg, wall_now() - t0, artifacts, summary);
}

void write_eval_outputs(const EvalSetup& s, const EvalReport& rep, const CliArgs& a,
                        const RunConfig& cfg, double t0, bool with_ecdf) {
    const std::string report_path = join_path(s.out_dir, "report.csv");
    const std::string summary_path = join_path(s.out_dir, "summary.csv");
    save_report_csv(rep, report_path);
    save_summary_csv(rep, summary_path);
    std::vector<std::string> artifacts = {report_path, summary_path};
    if (with_ecdf) {
        const std::string ecdf_path = join_path(s.out_dir, "ecdf.csv");
        save_ecdf_csv(rep.records.empty() ? ecdf(rep) : rep.ecdf_points, ecdf_path);
        artifacts.push_back(ecdf_path);
    }
    nlohmann::json summary;
    if (rep.sweep.empty()) {
        summary["mean_wsr"] = rep.mean_wsr;
        summary["mean_sum_rate"] = rep.mean_sum_rate;
    } else {
        summary["points"] = rep.sweep.size();
    }
    write_manifest(join_path(s.out_dir, "manifest.json"), a.command, cfg, wall_now() - t0, artifacts,
                   summary);
}

void run_eval(const CliArgs& a, const RunConfig& cfg, double t0) {
    EvalSetup s = eval_setup(a, cfg);
    const FcnModel* mp = s.source == PhaseSource::Model ? &s.model : nullptr;
    const EvalReport rep = evaluate(mp, s.source, s.ds, cfg.train.weights, cfg.link, s.opt);
    write_eval_outputs(s, rep, a, cfg, t0, true);
}

void run_ecdf(const CliArgs& a, const RunConfig& cfg, double t0) {
    EvalSetup s = eval_setup(a, cfg);
    const FcnModel* mp = s.source == PhaseSource::Model ? &s.model : nullptr;
    const EvalReport rep = evaluate(mp, s.source, s.ds, cfg.train.weights, cfg.link, s.opt);
    const std::string ecdf_path = join_path(s.out_dir, "ecdf.csv");
    save_ecdf_csv(rep.ecdf_points, ecdf_path);
    nlohmann::json summary;
    summary["mean_sum_rate"] = rep.mean_sum_rate;
    write_manifest(join_path(s.out_dir, "manifest.json"), a.command, cfg, wall_now() - t0, {ecdf_path},
                   summary);
}

void run_tsnr_sweep(const CliArgs& a, const RunConfig& cfg, double t0) {
    EvalSetup s = eval_setup(a, cfg);
    const FcnModel* mp = s.source == PhaseSource::Model ? &s.model : nullptr;
    const std::vector<double> grid = cfg.tsnr_grid.empty() ? default_tsnr_grid() : cfg.tsnr_grid;
    const EvalReport rep = tsnr_sweep(mp, s.source, s.ds, cfg.train.weights, cfg.link, grid, s.opt);
    write_eval_outputs(s, rep, a, cfg, t0, false);
}

void run_rate_region(const CliArgs& a, const RunConfig& cfg, double t0) {
    if (a.channels.empty()) throw Error(a.command + ": --channels <file> is required");
    const ChannelDataset ds = load_split_dataset(a.channels, cfg, a.command);
    const EvalOptions opt = eval_options(cfg, a.command);
    if (a.out.empty()) throw Error(a.command + ": --out <dir> is required");
    fs::create_directories(a.out);

    const std::vector<std::string>& paths = a.models.empty() ? cfg.rate_region_models : a.models;
    if (paths.size() != cfg.rate_region_weights.size()) {
        std::ostringstream os;
        os << a.command << ": got " << paths.size() << " model paths for "
           << cfg.rate_region_weights.size() << " weight vectors";
        throw Error(os.str());
    }
    std::vector<FcnModel> models;
    models.reserve(paths.size());
    for (const std::string& p : paths) models.push_back(load_model(p));
    std::vector<RateRegionEntry> registry;
    std::vector<UserWeights> weight_list;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        weight_list.push_back(make_weights(cfg.rate_region_weights[i]));
        registry.push_back(RateRegionEntry{weight_list.back(), &models[i]});
    }
    const EvalReport rep = rate_region(registry, ds, weight_list, cfg.link, opt);

    const std::string report_path = join_path(a.out, "report.csv");
    const std::string summary_path = join_path(a.out, "summary.csv");
    save_report_csv(rep, report_path);
    save_summary_csv(rep, summary_path);
    nlohmann::json summary;
    summary["points"] = rep.sweep.size();
    write_manifest(join_path(a.out, "manifest.json"), a.command, cfg, wall_now() - t0,
                   {report_path, summary_path}, summary);
}

void run_robustness(const CliArgs& a, const RunConfig& cfg, double t0) {
    EvalSetup s = eval_setup(a, cfg);
    const FcnModel* mp = s.source == PhaseSource::Model ? &s.model : nullptr;
    const EvalReport rep =
        robustness_curve(mp, s.source, s.ds, cfg.train.weights, cfg.link, cfg.gamma_list, s.opt);
    write_eval_outputs(s, rep, a, cfg, t0, false);
}

}  // namespace

void run_command(const CliArgs& args) {
    const double t0 = wall_now();
    const RunConfig cfg = load_config(args);
    if (args.command == "gen-channels") return run_gen_channels(args, cfg, t0);
    if (args.command == "train" || args.command == "train-discrete") return run_train(args, cfg, t0);
    if (args.command == "eval") return run_eval(args, cfg, t0);
    if (args.command == "ecdf") return run_ecdf(args, cfg, t0);
    if (args.command == "tsnr-sweep") return run_tsnr_sweep(args, cfg, t0);
    if (args.command == "rate-region") return run_rate_region(args, cfg, t0);
    if (args.command == "robustness") return run_robustness(args, cfg, t0);
    throw Error("unknown command '" + args.command + "'");
}

}  // namespace rismux
