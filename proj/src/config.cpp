#include "fusenas/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include "fusenas/errors.hpp"
#include "fusenas/rng.hpp"

namespace fusenas {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void apply_config_entry(SearchConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "epochs_search") cfg.epochs_search = parse_int(key, value);
    else if (key == "epochs_train") cfg.epochs_train = parse_int(key, value);
    else if (key == "lr_w") cfg.lr_w = parse_double(key, value);
    else if (key == "lr_arch") cfg.lr_arch = parse_double(key, value);
    else if (key == "batch") cfg.batch = parse_int(key, value);
    else if (key == "k_nodes") cfg.k_nodes = parse_int(key, value);
    else if (key == "channels") cfg.channels = parse_int(key, value);
    else if (key == "image_size") cfg.image_size = parse_int(key, value);
    else if (key == "n_train") cfg.n_train = parse_int(key, value);
    else if (key == "n_test") cfg.n_test = parse_int(key, value);
    else if (key == "anomaly_area_min") cfg.anomaly_area_min = parse_double(key, value);
    else if (key == "anomaly_area_max") cfg.anomaly_area_max = parse_double(key, value);
    else if (key == "keep_normal") cfg.keep_normal = parse_double(key, value);
    else if (key == "fpr_cap") cfg.fpr_cap = parse_double(key, value);
    else if (key == "lambda_rec") cfg.lambda_rec = parse_double(key, value);
    else if (key == "lambda_seg") cfg.lambda_seg = parse_double(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

void load_config_file(SearchConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        apply_config_entry(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    }
    validate_config(cfg);
}

void validate_config(const SearchConfig& cfg) {
    auto positive = [](const char* key, double v) {
        if (!(v > 0)) throw ConfigError(std::string("config key '") + key + "' must be positive");
    };
    positive("epochs_search", cfg.epochs_search);
    positive("epochs_train", cfg.epochs_train);
    positive("lr_w", cfg.lr_w);
    positive("lr_arch", cfg.lr_arch);
    positive("batch", cfg.batch);
    positive("k_nodes", cfg.k_nodes);
    positive("channels", cfg.channels);
    positive("image_size", cfg.image_size);
    positive("n_train", cfg.n_train);
    positive("n_test", cfg.n_test);
    positive("fpr_cap", cfg.fpr_cap);
    if (cfg.image_size % 8 != 0)
        throw ConfigError("image_size must be divisible by 8, got " + std::to_string(cfg.image_size));
    if (!(cfg.anomaly_area_min > 0.0 && cfg.anomaly_area_max < 1.0 &&
          cfg.anomaly_area_min <= cfg.anomaly_area_max))
        throw ConfigError("anomaly area fractions must satisfy 0 < min <= max < 1");
    if (cfg.keep_normal < 0.0 || cfg.keep_normal > 1.0)
        throw ConfigError("keep_normal must lie in [0, 1]");
    if (cfg.fpr_cap > 1.0) throw ConfigError("fpr_cap must lie in (0, 1]");
    if (cfg.lambda_rec < 0.0 || cfg.lambda_seg < 0.0)
        throw ConfigError("loss weights must be non-negative");
    if (cfg.n_test < 2) throw ConfigError("n_test must be at least 2");
    if (cfg.modules.empty()) throw ConfigError("module subset must be non-empty");
}

std::string config_canonical(const SearchConfig& cfg) {
    std::string out;
    out += "anomaly_area_max = " + fmt_double(cfg.anomaly_area_max) + "\n";
    out += "anomaly_area_min = " + fmt_double(cfg.anomaly_area_min) + "\n";
    out += "batch = " + std::to_string(cfg.batch) + "\n";
    out += "channels = " + std::to_string(cfg.channels) + "\n";
    out += "epochs_search = " + std::to_string(cfg.epochs_search) + "\n";
    out += "epochs_train = " + std::to_string(cfg.epochs_train) + "\n";
    out += "fpr_cap = " + fmt_double(cfg.fpr_cap) + "\n";
    out += "image_size = " + std::to_string(cfg.image_size) + "\n";
    out += "k_nodes = " + std::to_string(cfg.k_nodes) + "\n";
    out += "keep_normal = " + fmt_double(cfg.keep_normal) + "\n";
    out += "lambda_rec = " + fmt_double(cfg.lambda_rec) + "\n";
    out += "lambda_seg = " + fmt_double(cfg.lambda_seg) + "\n";
    out += "lr_arch = " + fmt_double(cfg.lr_arch) + "\n";
    out += "lr_w = " + fmt_double(cfg.lr_w) + "\n";
    out += "n_test = " + std::to_string(cfg.n_test) + "\n";
    out += "n_train = " + std::to_string(cfg.n_train) + "\n";
    std::string mods = "modules =";
    for (const MsmKind k : cfg.modules) mods += " " + msm_name(k);
    out += mods + "\n";
    return out;
}

std::string config_hash(const SearchConfig& cfg) {
    const uint64_t h = Rng::fnv1a(config_canonical(cfg));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fusenas
