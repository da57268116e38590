#include "rismux/fcn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rismux/error.hpp"
#include "rismux/rng.hpp"

namespace rismux {

namespace {

constexpr char kMagic[] = "RISMUXMODEL1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

void validate_arch(const ArchSpec& a) {
    if (a.ris_width == 0 || a.ris_height == 0)
        throw Error("init_model: surface dimensions must be positive");
    if (a.num_users == 0) throw Error("init_model: num_users must be positive");
    if (a.layers == 0) throw Error("init_model: at least one layer required");
    if (a.kernel == 0 || a.kernel % 2 == 0)
        throw Error("init_model: kernel size " + std::to_string(a.kernel) +
                    " must be odd for same padding");
    if (!(a.dropout >= 0.0 && a.dropout < 1.0))
        throw Error("init_model: dropout rate must lie in [0, 1)");
    const std::size_t reach = a.layers * ((a.kernel - 1) / 2);
    const std::size_t span = std::max(a.ris_width, a.ris_height);
    if (reach < span) {
        std::ostringstream os;
        os << "init_model: receptive reach " << reach << " (" << a.layers << " layers of "
           << a.kernel << "x" << a.kernel << " kernels) does not cover a " << a.ris_width << "x"
           << a.ris_height << " surface; add layers or widen kernels";
        throw Error(os.str());
    }
}

ConvLayer make_layer(std::size_t in_maps, std::size_t out_maps, std::size_t k) {
    ConvLayer l;
    l.in_maps = in_maps;
    l.out_maps = out_maps;
    l.kh = l.kw = k;
    l.pad_h = l.pad_w = (k - 1) / 2;
    l.w.assign(out_maps * in_maps * k * k, 0.0);
    l.b.assign(out_maps, 0.0);
    return l;
}

void apply_leaky(RealTensor3& t, double slope) {
    for (double& x : t.v)
        if (x < 0.0) x *= slope;
}

}  // namespace

std::size_t default_kernel_for(std::size_t ris_width, std::size_t ris_height) {
    return std::max(ris_width, ris_height) <= 16 ? 5 : 13;
}

double default_dropout_for(std::size_t ris_width, std::size_t ris_height) {
    return std::max(ris_width, ris_height) <= 16 ? 0.1 : 0.35;
}

FcnModel init_model(const ArchSpec& arch, std::uint64_t seed) {
    validate_arch(arch);
    FcnModel m;
    m.arch = arch;
    m.init_seed = seed;
    const std::size_t in0 = 4 * arch.num_users;
    for (std::size_t l = 0; l < arch.layers; ++l) {
        const std::size_t in_maps = l == 0 ? in0 : arch.hidden_maps;
        const std::size_t out_maps = l + 1 == arch.layers ? 1 : arch.hidden_maps;
        ConvLayer layer = make_layer(in_maps, out_maps, arch.kernel);
        const double fan_in = static_cast<double>(in_maps * arch.kernel * arch.kernel);
        const double fan_out = static_cast<double>(out_maps * arch.kernel * arch.kernel);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng(derive_seed(seed, "init", l));
        for (double& w : layer.w) w = rng.uniform(-bound, bound);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

RealTensor3 conv2d_padded(const ConvLayer& layer, const RealTensor3& in) {
    if (in.maps != layer.in_maps)
        throw Error("conv2d_padded: input has " + std::to_string(in.maps) + " maps, layer expects " +
                    std::to_string(layer.in_maps));
    const std::size_t height = in.height, width = in.width;
    RealTensor3 out(layer.out_maps, height, width);
    for (std::size_t o = 0; o < layer.out_maps; ++o) {
        double* omap = out.map(o);
        const double bias = layer.b[o];
        for (std::size_t i = 0; i < height * width; ++i) omap[i] = bias;
        for (std::size_t im = 0; im < layer.in_maps; ++im) {
            const double* imap = in.map(im);
            for (std::size_t r = 0; r < layer.kh; ++r) {
                const long dy = static_cast<long>(r) - static_cast<long>(layer.pad_h);
                const std::size_t y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                const std::size_t y1 = dy > 0 ? height - static_cast<std::size_t>(dy) : height;
                for (std::size_t c = 0; c < layer.kw; ++c) {
                    const double wv = layer.wt(o, im, r, c);
                    if (wv == 0.0) continue;
                    const long dx = static_cast<long>(c) - static_cast<long>(layer.pad_w);
                    const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
                    const std::size_t x1 = dx > 0 ? width - static_cast<std::size_t>(dx) : width;
                    for (std::size_t y = y0; y < y1; ++y) {
                        double* orow = omap + y * width;
                        const double* irow = imap + (y + dy) * width;
                        for (std::size_t x = x0; x < x1; ++x) orow[x] += wv * irow[x + dx];
                    }
                }
            }
        }
    }
    return out;
}

PhaseField fcn_forward(const FcnModel& model, const RealTensor3& features, RunMode mode,
                       std::uint64_t dropout_seed, ForwardCache* cache) {
    if (model.layers.empty()) throw Error("fcn_forward: model has no layers");
    if (features.maps != 4 * model.arch.num_users)
        throw Error("fcn_forward: features have " + std::to_string(features.maps) + " maps, expected " +
                    std::to_string(4 * model.arch.num_users));
    if (features.height != model.arch.ris_height || features.width != model.arch.ris_width)
        throw Error("fcn_forward: feature grid does not match the model surface");
    if (cache) {
        cache->input = &features;
        cache->pre.clear();
        cache->act.clear();
        cache->keep.clear();
        cache->pre.reserve(model.layers.size());
        cache->act.reserve(model.layers.size());
        cache->keep.reserve(model.layers.size());
    }
    const double p_drop = model.arch.dropout;
    const bool drop = mode == RunMode::Train && p_drop > 0.0;
    const double keep_scale = drop ? 1.0 / (1.0 - p_drop) : 1.0;
    Rng rng(derive_seed(dropout_seed, "dropout"));

    const RealTensor3* cur = &features;
    RealTensor3 buf;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        RealTensor3 z = conv2d_padded(model.layers[l], *cur);
        if (cache) cache->pre.push_back(z);
        const bool last = l + 1 == model.layers.size();
        if (!last) {
            apply_leaky(z, model.arch.leaky_slope);
            std::vector<std::uint8_t> keep;
            if (drop) {
                keep.resize(z.v.size());
                for (std::size_t i = 0; i < z.v.size(); ++i) {
                    const bool k = rng.uniform01() >= p_drop;
                    keep[i] = k ? 1 : 0;
                    z.v[i] = k ? z.v[i] * keep_scale : 0.0;
                }
            }
            if (cache) cache->keep.push_back(std::move(keep));
        } else if (cache) {
            cache->keep.emplace_back();  // no dropout after the output layer
        }
        if (cache) {
            cache->act.push_back(z);
            cur = &cache->act.back();
        } else {
            buf = std::move(z);
            cur = &buf;
        }
    }

    PhaseField psi(model.arch.ris_height, model.arch.ris_width);
    psi.psi.assign(cur->v.begin(), cur->v.end());
    return psi;
}

void ModelGrads::accumulate(const ModelGrads& o) {
    for (std::size_t l = 0; l < w.size(); ++l) {
        for (std::size_t i = 0; i < w[l].size(); ++i) w[l][i] += o.w[l][i];
        for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] += o.b[l][i];
    }
}

void ModelGrads::scale(double s) {
    for (auto& lw : w)
        for (double& x : lw) x *= s;
    for (auto& lb : b)
        for (double& x : lb) x *= s;
}

ModelGrads zero_grads_like(const FcnModel& model) {
    ModelGrads g;
    for (const ConvLayer& l : model.layers) {
        g.w.emplace_back(l.w.size(), 0.0);
        g.b.emplace_back(l.b.size(), 0.0);
    }
    return g;
}

GradientResult fcn_gradient(const FcnModel& model, const RealTensor3& features, const PhaseHead& head,
                            RunMode mode, std::uint64_t dropout_seed) {
    ForwardCache cache;
    const PhaseField psi = fcn_forward(model, features, mode, dropout_seed, &cache);

    GradientResult res;
    std::vector<double> dpsi;
    res.value = head(psi, dpsi);
    if (dpsi.size() != psi.size())
        throw Error("fcn_gradient: head returned " + std::to_string(dpsi.size()) + " phase gradients for " +
                    std::to_string(psi.size()) + " elements");
    res.grads = zero_grads_like(model);

    const std::size_t height = model.arch.ris_height, width = model.arch.ris_width;
    RealTensor3 d_out(1, height, width);
    d_out.v = dpsi;

    const double keep_scale = 1.0 / (1.0 - model.arch.dropout);
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const ConvLayer& layer = model.layers[li];
        const RealTensor3& in = li == 0 ? *cache.input : cache.act[li - 1];
        std::vector<double>& dw = res.grads.w[li];
        std::vector<double>& db = res.grads.b[li];

        // bias and kernel gradients against this layer's input
        for (std::size_t o = 0; o < layer.out_maps; ++o) {
            const double* dmap = d_out.map(o);
            double acc = 0.0;
            for (std::size_t i = 0; i < height * width; ++i) acc += dmap[i];
            db[o] = acc;
            for (std::size_t im = 0; im < layer.in_maps; ++im) {
                const double* imap = in.map(im);
                for (std::size_t r = 0; r < layer.kh; ++r) {
                    const long dy = static_cast<long>(r) - static_cast<long>(layer.pad_h);
                    const std::size_t y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                    const std::size_t y1 = dy > 0 ? height - static_cast<std::size_t>(dy) : height;
                    for (std::size_t c = 0; c < layer.kw; ++c) {
                        const long dx = static_cast<long>(c) - static_cast<long>(layer.pad_w);
                        const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
                        const std::size_t x1 = dx > 0 ? width - static_cast<std::size_t>(dx) : width;
                        double s = 0.0;
                        for (std::size_t y = y0; y < y1; ++y) {
                            const double* drow = dmap + y * width;
                            const double* irow = imap + (y + dy) * width;
                            for (std::size_t x = x0; x < x1; ++x) s += drow[x] * irow[x + dx];
                        }
                        dw[((o * layer.in_maps + im) * layer.kh + r) * layer.kw + c] = s;
                    }
                }
            }
        }

        if (li == 0) break;

        // gradient w.r.t. this layer's input, then through dropout and the
        // rectifier of the layer below
        RealTensor3 d_in(layer.in_maps, height, width);
        for (std::size_t o = 0; o < layer.out_maps; ++o) {
            const double* dmap = d_out.map(o);
            for (std::size_t im = 0; im < layer.in_maps; ++im) {
                double* tmap = d_in.map(im);
                for (std::size_t r = 0; r < layer.kh; ++r) {
                    const long dy = static_cast<long>(r) - static_cast<long>(layer.pad_h);
                    const std::size_t y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                    const std::size_t y1 = dy > 0 ? height - static_cast<std::size_t>(dy) : height;
                    for (std::size_t c = 0; c < layer.kw; ++c) {
                        const double wv = layer.wt(o, im, r, c);
                        if (wv == 0.0) continue;
                        const long dx = static_cast<long>(c) - static_cast<long>(layer.pad_w);
                        const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
                        const std::size_t x1 = dx > 0 ? width - static_cast<std::size_t>(dx) : width;
                        for (std::size_t y = y0; y < y1; ++y) {
                            const double* drow = dmap + y * width;
                            double* trow = tmap + (y + dy) * width;
                            for (std::size_t x = x0; x < x1; ++x) trow[x + dx] += wv * drow[x];
                        }
                    }
                }
            }
        }

        const std::size_t below = li - 1;
        const std::vector<std::uint8_t>& keep = cache.keep[below];
        const RealTensor3& pre_below = cache.pre[below];
        for (std::size_t i = 0; i < d_in.v.size(); ++i) {
            double gv = d_in.v[i];
            if (!keep.empty()) gv = keep[i] ? gv * keep_scale : 0.0;
            if (pre_below.v[i] < 0.0) gv *= model.arch.leaky_slope;
            d_in.v[i] = gv;
        }
        d_out = std::move(d_in);
    }
    return res;
}

std::size_t parameter_count(const FcnModel& model) {
    std::size_t n = 0;
    for (const ConvLayer& l : model.layers) n += l.w.size() + l.b.size();
    return n;
}

std::vector<double> flatten_parameters(const FcnModel& model) {
    std::vector<double> flat;
    flat.reserve(parameter_count(model));
    for (const ConvLayer& l : model.layers) {
        flat.insert(flat.end(), l.w.begin(), l.w.end());
        flat.insert(flat.end(), l.b.begin(), l.b.end());
    }
    return flat;
}

void assign_parameters(FcnModel& model, const std::vector<double>& flat) {
    if (flat.size() != parameter_count(model))
        throw Error("assign_parameters: got " + std::to_string(flat.size()) + " values, expected " +
                    std::to_string(parameter_count(model)));
    std::size_t off = 0;
    for (ConvLayer& l : model.layers) {
        std::copy(flat.begin() + off, flat.begin() + off + l.w.size(), l.w.begin());
        off += l.w.size();
        std::copy(flat.begin() + off, flat.begin() + off + l.b.size(), l.b.begin());
        off += l.b.size();
    }
}

std::vector<double> flatten_grads(const ModelGrads& g) {
    std::vector<double> flat;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        flat.insert(flat.end(), g.w[l].begin(), g.w[l].end());
        flat.insert(flat.end(), g.b[l].begin(), g.b[l].end());
    }
    return flat;
}

void save_model(const FcnModel& model, const std::string& path) {
    nlohmann::ordered_json header;
    header["format_version"] = 1;
    header["ris_width"] = model.arch.ris_width;
    header["ris_height"] = model.arch.ris_height;
    header["num_users"] = model.arch.num_users;
    header["layers"] = model.arch.layers;
    header["hidden_maps"] = model.arch.hidden_maps;
    header["kernel"] = model.arch.kernel;
    header["dropout"] = model.arch.dropout;
    header["leaky_slope"] = model.arch.leaky_slope;
    header["init_seed"] = model.init_seed;
    header["param_count"] = parameter_count(model);
    const std::string head = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_model: cannot open '" + path + "' for writing");
    out.write(kMagic, static_cast<std::streamsize>(kMagicLen));
    const std::uint64_t len = head.size();
    unsigned char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(lenb), 8);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    const std::vector<double> flat = flatten_parameters(model);
    out.write(reinterpret_cast<const char*>(flat.data()),
              static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!out) throw Error("save_model: write to '" + path + "' failed");
}

FcnModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_model: cannot open '" + path + "'");
    char magic[kMagicLen];
    in.read(magic, static_cast<std::streamsize>(kMagicLen));
    if (in.gcount() != static_cast<std::streamsize>(kMagicLen) ||
        std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw Error("load_model: '" + path + "' does not start with the expected magic 'RISMUXMODEL1'");
    unsigned char lenb[8];
    in.read(reinterpret_cast<char*>(lenb), 8);
    if (in.gcount() != 8) throw Error("load_model: truncated header length");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(lenb[i]) << (8 * i);
    if (len == 0 || len > (1u << 20)) throw Error("load_model: implausible header length");
    std::string head(len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(len));
    if (in.gcount() != static_cast<std::streamsize>(len)) throw Error("load_model: truncated header");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(head);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("load_model: bad header: ") + e.what());
    }
    ArchSpec a;
    try {
        if (j.at("format_version").get<int>() != 1) throw Error("load_model: unsupported format_version");
        a.ris_width = j.at("ris_width").get<std::size_t>();
        a.ris_height = j.at("ris_height").get<std::size_t>();
        a.num_users = j.at("num_users").get<std::size_t>();
        a.layers = j.at("layers").get<std::size_t>();
        a.hidden_maps = j.at("hidden_maps").get<std::size_t>();
        a.kernel = j.at("kernel").get<std::size_t>();
        a.dropout = j.at("dropout").get<double>();
        a.leaky_slope = j.at("leaky_slope").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("load_model: bad header field: ") + e.what());
    }
    FcnModel m = init_model(a, j.value("init_seed", std::uint64_t{0}));
    const std::size_t count = j.value("param_count", std::size_t{0});
    if (count != parameter_count(m))
        throw Error("load_model: header claims " + std::to_string(count) + " parameters, architecture has " +
                    std::to_string(parameter_count(m)));
    std::vector<double> flat(count);
    in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
        throw Error("load_model: parameter payload truncated");
    char extra;
    if (in.read(&extra, 1))
        throw Error("load_model: trailing bytes after the parameter payload");
    assign_parameters(m, flat);
    return m;
}

}  // namespace rismux
