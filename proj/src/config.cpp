#include "rismux/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rismux/error.hpp"
#include "rismux/phase_field.hpp"

namespace rismux {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

int line_of_key(const std::string& text, const std::string& key) {
    const std::string needle = "\"" + key + "\"";
    const std::size_t pos = text.find(needle);
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

std::string at_line(int line) {
    if (line <= 0) return "";
    return " (line " + std::to_string(line) + ")";
}

[[noreturn]] void fail(const std::string& key, const std::string& expected, int line) {
    throw Error("config: key '" + key + "' expects " + expected + at_line(line));
}

double need_number(const json& v, const std::string& key, int line) {
    if (!v.is_number()) fail(key, "a number", line);
    return v.get<double>();
}

double need_pos(const json& v, const std::string& key, int line) {
    const double x = v.is_number() ? v.get<double>() : -1.0;
    if (!v.is_number() || !(x > 0.0)) fail(key, "a positive number", line);
    return x;
}

double need_nonneg(const json& v, const std::string& key, int line) {
    const double x = v.is_number() ? v.get<double>() : -1.0;
    if (!v.is_number() || !(x >= 0.0)) fail(key, "a nonnegative number", line);
    return x;
}

double need_unit(const json& v, const std::string& key, int line) {
    const double x = v.is_number() ? v.get<double>() : -1.0;
    if (!v.is_number() || !(x >= 0.0 && x < 1.0)) fail(key, "a number in [0, 1)", line);
    return x;
}

std::size_t need_count(const json& v, const std::string& key, int line, std::size_t min_value) {
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min_value))
        fail(key, "an integer of at least " + std::to_string(min_value), line);
    return static_cast<std::size_t>(v.get<long long>());
}

std::uint64_t need_seed(const json& v, const std::string& key, int line) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0)
        return static_cast<std::uint64_t>(v.get<long long>());
    fail(key, "a nonnegative integer", line);
}

bool need_bool(const json& v, const std::string& key, int line) {
    if (!v.is_boolean()) fail(key, "a boolean", line);
    return v.get<bool>();
}

std::string need_string(const json& v, const std::string& key, int line) {
    if (!v.is_string()) fail(key, "a string", line);
    return v.get<std::string>();
}

std::vector<double> need_number_array(const json& v, const std::string& key, int line,
                                      const std::string& expected, bool (*ok)(double)) {
    if (!v.is_array()) fail(key, expected, line);
    std::vector<double> out;
    for (const json& e : v) {
        if (!e.is_number() || !ok(e.get<double>())) fail(key, expected, line);
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<double> need_codebook(const json& v, const std::string& key, int line) {
    if (!v.is_array()) fail(key, "an array of phases (numbers or pi expressions)", line);
    std::vector<double> out;
    for (const json& e : v) {
        if (e.is_number()) {
            out.push_back(e.get<double>());
        } else if (e.is_string()) {
            try {
                out.push_back(parse_phase_token(e.get<std::string>()));
            } catch (const Error& err) {
                throw Error("config: key '" + key + "': " + err.what() + at_line(line));
            }
        } else {
            fail(key, "an array of phases (numbers or pi expressions)", line);
        }
    }
    return out;
}

}  // namespace

double parse_phase_token(const std::string& token) {
    const std::string s = trim(token);
    if (s.empty()) throw Error("empty phase token");
    auto full_double = [&](const std::string& t, double& out) {
        char* end = nullptr;
        out = std::strtod(t.c_str(), &end);
        return end == t.c_str() + t.size() && !t.empty();
    };
    if (s.size() >= 2 && s.compare(s.size() - 2, 2, "pi") == 0) {
        const std::string head = s.substr(0, s.size() - 2);
        if (head.empty() || head == "+") return kPi;
        if (head == "-") return -kPi;
        double m = 0.0;
        if (full_double(head, m)) return m * kPi;
        throw Error("cannot parse phase token '" + s + "'");
    }
    double v = 0.0;
    if (full_double(s, v)) return v;
    throw Error("cannot parse phase token '" + s + "'");
}

std::vector<double> parse_codebook(const std::string& csv) {
    std::vector<double> out;
    std::string token;
    std::istringstream in(csv);
    while (std::getline(in, token, ',')) out.push_back(parse_phase_token(token));
    return out;
}

RunConfig parse_config_text(const std::string& text, const std::string& name) {
    RunConfig cfg;
    const std::string body = trim(text);
    if (body.empty()) {
        resolve_config(cfg);
        return cfg;
    }
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw Error("config: " + name + ": " + e.what());
    }
    if (!j.is_object()) throw Error("config: " + name + ": top level must be a JSON object");

    for (const auto& item : j.items()) {
        const std::string& k = item.key();
        const json& v = item.value();
        const int line = line_of_key(text, k);
        ChannelSpec& ch = cfg.channel;
        TrainConfig& tr = cfg.train;
        if (k == "num_users") ch.num_users = need_count(v, k, line, 1);
        else if (k == "bs_antennas") ch.bs_antennas = need_count(v, k, line, 1);
        else if (k == "ris_width") ch.ris_width = need_count(v, k, line, 1);
        else if (k == "ris_height") ch.ris_height = need_count(v, k, line, 1);
        else if (k == "carrier_hz") ch.carrier_hz = need_pos(v, k, line);
        else if (k == "bs_spacing") ch.bs_spacing = need_pos(v, k, line);
        else if (k == "ris_spacing") ch.ris_spacing = need_pos(v, k, line);
        else if (k == "bs_x") ch.bs_x = need_number(v, k, line);
        else if (k == "bs_y") ch.bs_y = need_number(v, k, line);
        else if (k == "bs_z") ch.bs_z = need_number(v, k, line);
        else if (k == "reflection_amplitude") ch.reflection_amplitude = need_nonneg(v, k, line);
        else if (k == "ground_z") ch.ground_z = need_number(v, k, line);
        else if (k == "diffuse_fraction") ch.diffuse_fraction = need_nonneg(v, k, line);
        else if (k == "direct_path_fraction") ch.direct_path_fraction = need_nonneg(v, k, line);
        else if (k == "area_width") ch.area_width = need_pos(v, k, line);
        else if (k == "area_depth") ch.area_depth = need_pos(v, k, line);
        else if (k == "area_distance") ch.area_distance = need_pos(v, k, line);
        else if (k == "user_height") ch.user_height = need_number(v, k, line);
        else if (k == "min_separation") ch.min_separation = need_nonneg(v, k, line);
        else if (k == "train_samples") ch.train_samples = need_count(v, k, line, 0);
        else if (k == "test_samples") ch.test_samples = need_count(v, k, line, 0);
        else if (k == "conv_layers") cfg.conv_layers = need_count(v, k, line, 1);
        else if (k == "hidden_maps") cfg.hidden_maps = need_count(v, k, line, 1);
        else if (k == "kernel_size") {
            cfg.kernel = need_count(v, k, line, 1);
            if (cfg.kernel % 2 == 0) fail(k, "an odd integer", line);
        } else if (k == "dropout") cfg.dropout = need_unit(v, k, line);
        else if (k == "leaky_slope") cfg.leaky_slope = need_nonneg(v, k, line);
        else if (k == "lr_phase1") tr.lr_phase1 = need_pos(v, k, line);
        else if (k == "lr_phase2") tr.lr_phase2 = need_pos(v, k, line);
        else if (k == "epochs_phase1") tr.epochs_phase1 = need_count(v, k, line, 0);
        else if (k == "epochs_phase2") tr.epochs_phase2 = need_count(v, k, line, 0);
        else if (k == "batch_size") tr.batch_size = need_count(v, k, line, 1);
        else if (k == "wmmse_refresh_epochs") tr.wmmse_refresh_epochs = need_count(v, k, line, 1);
        else if (k == "wmmse_inner_iters") tr.wmmse_inner_iters = need_count(v, k, line, 1);
        else if (k == "adam_beta1") tr.adam_beta1 = need_unit(v, k, line);
        else if (k == "adam_beta2") tr.adam_beta2 = need_unit(v, k, line);
        else if (k == "adam_eps") tr.adam_eps = need_pos(v, k, line);
        else if (k == "plateau_window") tr.plateau_window = need_count(v, k, line, 1);
        else if (k == "plateau_tol") tr.plateau_tol = need_pos(v, k, line);
        else if (k == "phase_codebook") tr.phase_codebook = need_codebook(v, k, line);
        else if (k == "kappa_step") tr.kappa_step = need_number(v, k, line);
        else if (k == "kappa_cap") tr.kappa_cap = need_pos(v, k, line);
        else if (k == "penalty_threshold") tr.penalty_threshold = need_pos(v, k, line);
        else if (k == "discrete_round_cap") tr.discrete_round_cap = need_count(v, k, line, 1);
        else if (k == "tsnr") cfg.link.rho = need_pos(v, k, line);
        else if (k == "e_tr") cfg.link.e_tr = need_pos(v, k, line);
        else if (k == "weights")
            cfg.weights = need_number_array(v, k, line, "an array of nonnegative numbers",
                                            [](double x) { return x >= 0.0; });
        else if (k == "algorithm") {
            cfg.algorithm = need_string(v, k, line);
            if (cfg.algorithm != "fcn" && cfg.algorithm != "random" && cfg.algorithm != "altgrad")
                fail(k, "one of \"fcn\", \"random\", \"altgrad\"", line);
        } else if (k == "eval_split") {
            cfg.eval_split = need_string(v, k, line);
            if (cfg.eval_split != "train" && cfg.eval_split != "test" && cfg.eval_split != "all")
                fail(k, "one of \"train\", \"test\", \"all\"", line);
        } else if (k == "gamma") cfg.gamma = need_nonneg(v, k, line);
        else if (k == "round_to_codebook") cfg.round_to_codebook = need_bool(v, k, line);
        else if (k == "eval_wmmse_eps") cfg.eval_wmmse_eps = need_nonneg(v, k, line);
        else if (k == "eval_wmmse_max_outer") cfg.eval_wmmse_max_outer = need_count(v, k, line, 1);
        else if (k == "altgrad_steps") cfg.altgrad_steps = need_count(v, k, line, 1);
        else if (k == "altgrad_step_size") cfg.altgrad_step_size = need_pos(v, k, line);
        else if (k == "tsnr_grid")
            cfg.tsnr_grid = need_number_array(v, k, line, "an array of positive numbers",
                                              [](double x) { return x > 0.0; });
        else if (k == "gamma_list")
            cfg.gamma_list = need_number_array(v, k, line, "an array of nonnegative numbers",
                                               [](double x) { return x >= 0.0; });
        else if (k == "rate_region_weights") {
            if (!v.is_array()) fail(k, "an array of weight vectors", line);
            cfg.rate_region_weights.clear();
            for (const json& e : v)
                cfg.rate_region_weights.push_back(need_number_array(
                    e, k, line, "an array of weight vectors (nonnegative numbers)",
                    [](double x) { return x >= 0.0; }));
        } else if (k == "rate_region_models") {
            if (!v.is_array()) fail(k, "an array of file paths", line);
            cfg.rate_region_models.clear();
            for (const json& e : v) cfg.rate_region_models.push_back(need_string(e, k, line));
        } else if (k == "seed") cfg.seed = need_seed(v, k, line);
        else if (k == "threads") cfg.threads = static_cast<int>(need_count(v, k, line, 0));
        else throw Error("config: unknown key '" + k + "'" + at_line(line));
    }
    resolve_config(cfg);
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

void resolve_config(RunConfig& cfg) {
    if (cfg.kernel == 0) cfg.kernel = default_kernel_for(cfg.channel.ris_width, cfg.channel.ris_height);
    if (cfg.dropout < 0.0) cfg.dropout = default_dropout_for(cfg.channel.ris_width, cfg.channel.ris_height);
    cfg.channel.seed = cfg.seed;
    cfg.train.weights = make_weights(cfg.weights);
    cfg.train.link = cfg.link;
    cfg.train.seed = cfg.seed;
    cfg.train.threads = cfg.threads;
}

ArchSpec arch_spec(const RunConfig& cfg) {
    ArchSpec a;
    a.ris_width = cfg.channel.ris_width;
    a.ris_height = cfg.channel.ris_height;
    a.num_users = cfg.channel.num_users;
    a.layers = cfg.conv_layers;
    a.hidden_maps = cfg.hidden_maps;
    a.kernel = cfg.kernel;
    a.dropout = cfg.dropout;
    a.leaky_slope = cfg.leaky_slope;
    return a;
}

nlohmann::json effective_config_json(const RunConfig& cfg) {
    json j;  // sorted keys: the canonical echo
    const ChannelSpec& ch = cfg.channel;
    j["num_users"] = ch.num_users;
    j["bs_antennas"] = ch.bs_antennas;
    j["ris_width"] = ch.ris_width;
    j["ris_height"] = ch.ris_height;
    j["carrier_hz"] = ch.carrier_hz;
    j["bs_spacing"] = ch.bs_spacing;
    j["ris_spacing"] = ch.ris_spacing;
    j["bs_x"] = ch.bs_x;
    j["bs_y"] = ch.bs_y;
    j["bs_z"] = ch.bs_z;
    j["reflection_amplitude"] = ch.reflection_amplitude;
    j["ground_z"] = ch.ground_z;
    j["diffuse_fraction"] = ch.diffuse_fraction;
    j["direct_path_fraction"] = ch.direct_path_fraction;
    j["area_width"] = ch.area_width;
    j["area_depth"] = ch.area_depth;
    j["area_distance"] = ch.area_distance;
    j["user_height"] = ch.user_height;
    j["min_separation"] = ch.min_separation;
    j["train_samples"] = ch.train_samples;
    j["test_samples"] = ch.test_samples;
    j["conv_layers"] = cfg.conv_layers;
    j["hidden_maps"] = cfg.hidden_maps;
    j["kernel_size"] = cfg.kernel;
    j["dropout"] = cfg.dropout;
    j["leaky_slope"] = cfg.leaky_slope;
    const TrainConfig& tr = cfg.train;
    j["lr_phase1"] = tr.lr_phase1;
    j["lr_phase2"] = tr.lr_phase2;
    j["epochs_phase1"] = tr.epochs_phase1;
    j["epochs_phase2"] = tr.epochs_phase2;
    j["batch_size"] = tr.batch_size;
    j["wmmse_refresh_epochs"] = tr.wmmse_refresh_epochs;
    j["wmmse_inner_iters"] = tr.wmmse_inner_iters;
    j["adam_beta1"] = tr.adam_beta1;
    j["adam_beta2"] = tr.adam_beta2;
    j["adam_eps"] = tr.adam_eps;
    j["plateau_window"] = tr.plateau_window;
    j["plateau_tol"] = tr.plateau_tol;
    j["phase_codebook"] = tr.phase_codebook;
    j["kappa_step"] = tr.kappa_step;
    j["kappa_cap"] = tr.kappa_cap;
    j["penalty_threshold"] = tr.penalty_threshold;
    j["discrete_round_cap"] = tr.discrete_round_cap;
    j["tsnr"] = cfg.link.rho;
    j["e_tr"] = cfg.link.e_tr;
    j["weights"] = cfg.weights;
    j["algorithm"] = cfg.algorithm;
    j["eval_split"] = cfg.eval_split;
    j["gamma"] = cfg.gamma;
    j["round_to_codebook"] = cfg.round_to_codebook;
    j["eval_wmmse_eps"] = cfg.eval_wmmse_eps;
    j["eval_wmmse_max_outer"] = cfg.eval_wmmse_max_outer;
    j["altgrad_steps"] = cfg.altgrad_steps;
    j["altgrad_step_size"] = cfg.altgrad_step_size;
    j["tsnr_grid"] = cfg.tsnr_grid;
    j["gamma_list"] = cfg.gamma_list;
    j["rate_region_weights"] = cfg.rate_region_weights;
    j["rate_region_models"] = cfg.rate_region_models;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    return j;
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(effective_config_json(cfg).dump()); }

}  // namespace rismux
