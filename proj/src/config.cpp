#include "leaf/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace leaf {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_real(Real v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(v));
    return buf;
}

template <std::size_t N>
std::string fmt_list(const std::array<Index, N>& values) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(values[i]);
    return s;
}

Index parse_index(const std::string& key, const std::string& v) {
    Index out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

Real parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return static_cast<Real>(out);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::array<Index, 4> parse_list4(const std::string& key, const std::string& v) {
    std::array<Index, 4> out{};
    std::stringstream ss(v);
    std::string item;
    std::size_t n = 0;
    while (std::getline(ss, item, ',')) {
        if (n == 4) throw ConfigError(key + ": expected 4 comma-separated integers, got '" + v + "'");
        out[n++] = parse_index(key, trim(item));
    }
    if (n != 4) throw ConfigError(key + ": expected 4 comma-separated integers, got '" + v + "'");
    return out;
}

std::string mixer_name(ScanKind k) {
    switch (k) {
        case ScanKind::MultiScaleWindow: return "msw";
        case ScanKind::SS2D: return "ss2d";
        case ScanKind::Continuous: return "continuous";
        case ScanKind::FixedWindow: return "fixed";
    }
    return "msw";
}

ScanKind parse_mixer(const std::string& v) {
    if (v == "msw") return ScanKind::MultiScaleWindow;
    if (v == "ss2d") return ScanKind::SS2D;
    if (v == "continuous") return ScanKind::Continuous;
    if (v == "fixed") return ScanKind::FixedWindow;
    throw ConfigError("mixer: expected msw, ss2d, continuous or fixed, got '" + v + "'");
}

const std::vector<std::string>& model_keys() {
    static const std::vector<std::string> keys = {
        "input_size",     "channels",        "blocks",        "mixer",         "fixed_window",
        "msw_windows",    "afm",             "afm_paths",     "csop_size",     "csop_channels",
        "csop_similarity", "csop_pooling",   "state_dim",     "mlp_ratio",     "decoder_channels",
        "stem_stride",    "cbam_reduction",  "upsample",      "seed"};
    return keys;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (lr_decay_epochs <= 0) throw ConfigError("lr_decay_epochs must be positive");
    if (!(lr_decay_factor > 0)) throw ConfigError("lr_decay_factor must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must lie in [0,1)");
    if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
    if (iterations < 0) throw ConfigError("iterations must be non-negative");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (val_count < 0) throw ConfigError("val_count must be non-negative");
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        const RunConfig d;
        const ConfigMap m = run_config_to_map(d);
        std::vector<ConfigKey> out = {
            {"input_size", "", "square input side in pixels"},
            {"channels", "", "stage widths, 4 comma-separated integers"},
            {"blocks", "", "blocks per stage; the last one uses `mixer`"},
            {"mixer", "", "msw | ss2d | continuous | fixed"},
            {"fixed_window", "", "window side for mixer = fixed"},
            {"msw_windows", "", "per-branch windows for mixer = msw"},
            {"afm", "", "fuse with AFM (true) or by addition (false)"},
            {"afm_paths", "", "1 = single raster path inside AFM, 4 = multi-scale set"},
            {"csop_size", "", "side of the pooled token grid"},
            {"csop_channels", "", "token width after the shared 1x1 projection"},
            {"csop_similarity", "", "covariance | cosine"},
            {"csop_pooling", "", "conv | avg | max reduction of the similarity matrix"},
            {"state_dim", "", "SSM state size N"},
            {"mlp_ratio", "", "hidden width multiplier of block MLPs"},
            {"decoder_channels", "", "decoder width"},
            {"stem_stride", "", "patch-embedding stride"},
            {"cbam_reduction", "", "CBAM channel reduction ratio"},
            {"upsample", "", "nearest | bilinear resizing of decoder maps"},
            {"seed", "", "seed for parameter init, shuffling and augmentation"},
            {"lr", "", "initial Adam learning rate"},
            {"lr_decay_epochs", "", "epochs between learning-rate decays"},
            {"lr_decay_factor", "", "multiplier applied at each decay"},
            {"beta1", "", "Adam first-moment decay"},
            {"beta2", "", "Adam second-moment decay"},
            {"adam_eps", "", "Adam denominator epsilon"},
            {"iterations", "", "optimizer steps"},
            {"batch_size", "", "images per step"},
            {"augment", "", "random horizontal flip and 90-degree rotation"},
            {"val_count", "", "trailing training samples held out for validation"},
            {"data_dir", "", "training directory (overridden by --data)"},
            {"val_dir", "", "optional separate validation directory"},
        };
        for (auto& k : out) k.default_value = m.at(k.name);
        return out;
    }();
    return keys;
}

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap out;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second) {
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
    }
    return out;
}

ConfigMap model_config_to_map(const ModelConfig& c) {
    ConfigMap m;
    m["input_size"] = std::to_string(c.input_size);
    m["channels"] = fmt_list(c.channels);
    m["blocks"] = fmt_list(c.blocks);
    m["mixer"] = mixer_name(c.mixer.kind);
    m["fixed_window"] = std::to_string(c.mixer.fixed_window);
    m["msw_windows"] = fmt_list(c.mixer.windows);
    m["afm"] = c.afm ? "true" : "false";
    m["afm_paths"] = std::to_string(c.afm_paths);
    m["csop_size"] = std::to_string(c.csop.height);
    m["csop_channels"] = std::to_string(c.csop.channels);
    m["csop_similarity"] = c.csop.similarity == Similarity::Covariance ? "covariance" : "cosine";
    m["csop_pooling"] = c.csop.pooling == Pooling::Conv ? "conv" : c.csop.pooling == Pooling::Avg ? "avg" : "max";
    m["state_dim"] = std::to_string(c.state_dim);
    m["mlp_ratio"] = fmt_real(c.mlp_ratio);
    m["decoder_channels"] = std::to_string(c.decoder_channels);
    m["stem_stride"] = std::to_string(c.stem_stride);
    m["cbam_reduction"] = std::to_string(c.cbam_reduction);
    m["upsample"] = c.upsample == Interp::Nearest ? "nearest" : "bilinear";
    m["seed"] = std::to_string(c.seed);
    return m;
}

namespace {

void apply_model_key(ModelConfig& c, const std::string& k, const std::string& v) {
    if (k == "input_size") c.input_size = parse_index(k, v);
    else if (k == "channels") c.channels = parse_list4(k, v);
    else if (k == "blocks") c.blocks = parse_list4(k, v);
    else if (k == "mixer") c.mixer.kind = parse_mixer(v);
    else if (k == "fixed_window") c.mixer.fixed_window = parse_index(k, v);
    else if (k == "msw_windows") c.mixer.windows = parse_list4(k, v);
    else if (k == "afm") c.afm = parse_bool(k, v);
    else if (k == "afm_paths") c.afm_paths = parse_index(k, v);
    else if (k == "csop_size") c.csop.height = c.csop.width = parse_index(k, v);
    else if (k == "csop_channels") c.csop.channels = parse_index(k, v);
    else if (k == "csop_similarity") {
        if (v == "covariance") c.csop.similarity = Similarity::Covariance;
        else if (v == "cosine") c.csop.similarity = Similarity::Cosine;
        else throw ConfigError("csop_similarity: expected covariance or cosine, got '" + v + "'");
    } else if (k == "csop_pooling") {
        if (v == "conv") c.csop.pooling = Pooling::Conv;
        else if (v == "avg") c.csop.pooling = Pooling::Avg;
        else if (v == "max") c.csop.pooling = Pooling::Max;
        else throw ConfigError("csop_pooling: expected conv, avg or max, got '" + v + "'");
    } else if (k == "state_dim") c.state_dim = parse_index(k, v);
    else if (k == "mlp_ratio") c.mlp_ratio = parse_real(k, v);
    else if (k == "decoder_channels") c.decoder_channels = parse_index(k, v);
    else if (k == "stem_stride") c.stem_stride = parse_index(k, v);
    else if (k == "cbam_reduction") c.cbam_reduction = parse_index(k, v);
    else if (k == "upsample") {
        if (v == "nearest") c.upsample = Interp::Nearest;
        else if (v == "bilinear") c.upsample = Interp::Bilinear;
        else throw ConfigError("upsample: expected nearest or bilinear, got '" + v + "'");
    } else if (k == "seed") {
        const Index s = parse_index(k, v);
        if (s < 0) throw ConfigError("seed must be non-negative");
        c.seed = static_cast<std::uint64_t>(s);
    } else {
        throw ConfigError("unknown config key '" + k + "'");
    }
}

}  // namespace

ModelConfig model_config_from_map(const ConfigMap& map) {
    ModelConfig c;
    for (const auto& [k, v] : map) apply_model_key(c, k, v);
    c.validate();
    return c;
}

ConfigMap run_config_to_map(const RunConfig& cfg) {
    ConfigMap m = model_config_to_map(cfg.model);
    const TrainConfig& t = cfg.train;
    m["lr"] = fmt_real(t.lr);
    m["lr_decay_epochs"] = std::to_string(t.lr_decay_epochs);
    m["lr_decay_factor"] = fmt_real(t.lr_decay_factor);
    m["beta1"] = fmt_real(t.beta1);
    m["beta2"] = fmt_real(t.beta2);
    m["adam_eps"] = fmt_real(t.adam_eps);
    m["iterations"] = std::to_string(t.iterations);
    m["batch_size"] = std::to_string(t.batch_size);
    m["augment"] = t.augment ? "true" : "false";
    m["val_count"] = std::to_string(t.val_count);
    m["data_dir"] = t.data_dir;
    m["val_dir"] = t.val_dir;
    return m;
}

RunConfig run_config_from_map(const ConfigMap& map) {
    RunConfig cfg;
    const std::set<std::string> model(model_keys().begin(), model_keys().end());
    TrainConfig& t = cfg.train;
    for (const auto& [k, v] : map) {
        if (model.count(k)) apply_model_key(cfg.model, k, v);
        else if (k == "lr") t.lr = parse_real(k, v);
        else if (k == "lr_decay_epochs") t.lr_decay_epochs = parse_index(k, v);
        else if (k == "lr_decay_factor") t.lr_decay_factor = parse_real(k, v);
        else if (k == "beta1") t.beta1 = parse_real(k, v);
        else if (k == "beta2") t.beta2 = parse_real(k, v);
        else if (k == "adam_eps") t.adam_eps = parse_real(k, v);
        else if (k == "iterations") t.iterations = parse_index(k, v);
        else if (k == "batch_size") t.batch_size = parse_index(k, v);
        else if (k == "augment") t.augment = parse_bool(k, v);
        else if (k == "val_count") t.val_count = parse_index(k, v);
        else if (k == "data_dir") t.data_dir = v;
        else if (k == "val_dir") t.val_dir = v;
        else throw ConfigError("unknown config key '" + k + "'");
    }
    cfg.model.validate();
    t.validate();
    return cfg;
}

RunConfig parse_run_config(const std::string& text) { return run_config_from_map(parse_config_text(text)); }

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_run_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string format_config(const ConfigMap& map) {
    std::string out;
    for (const auto& [k, v] : map) out += k + " = " + v + "\n";
    return out;
}

}  // namespace leaf
