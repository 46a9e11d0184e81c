#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusenas/search_space.hpp"

namespace fusenas {

// Run configuration. The named keys form the external config surface
// (key = value file plus command-line overrides); `seed` arrives via --seed
// and `modules` is set programmatically by the ablation driver.
struct SearchConfig {
    int epochs_search = 30;
    int epochs_train = 60;
    double lr_w = 0.01;
    double lr_arch = 0.05;
    int batch = 8;
    int k_nodes = 2;
    int channels = 8;
    int image_size = 32;
    int n_train = 200;
    int n_test = 80;
    double anomaly_area_min = 0.01;
    double anomaly_area_max = 0.08;
    double keep_normal = 0.3;
    double fpr_cap = 0.3;
    double lambda_rec = 1.0;
    double lambda_seg = 1.0;

    uint64_t seed = 0;
    std::vector<MsmKind> modules{MsmKind::Early, MsmKind::Middle, MsmKind::Late};
};

// Applies one "key = value" assignment; unknown keys or bad values raise
// ConfigError.
void apply_config_entry(SearchConfig& cfg, const std::string& key, const std::string& value);

// Parses a config file: one `key = value` per line, '#' comments, blank
// lines ignored.
void load_config_file(SearchConfig& cfg, const std::string& path);

// Range checks (positivity, divisibility, area bounds); raises ConfigError.
void validate_config(const SearchConfig& cfg);

// Canonical "key = value" listing of the externally settable keys.
std::string config_canonical(const SearchConfig& cfg);

// FNV-1a hex digest of the canonical listing; stored in genotypes/reports.
std::string config_hash(const SearchConfig& cfg);

}  // namespace fusenas
