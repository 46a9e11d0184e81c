#pragma once

#include <string>

#include "fusenas/search_space.hpp"

namespace fusenas {

// Genotype files are JSON with keys msm_early/msm_middle/msm_late (each
// {inputs:[j,h], nodes:[{op, preds:[a,b]}]}), wiring, and meta
// {seed, config_hash}. Serialization is canonical: fixed key order, so
// identical genotypes produce identical bytes.
std::string serialize_genotype(const Genotype& g);

// Strict parse: exact lowercase op names, in-range indices, required keys.
// Malformed input raises ParseError.
Genotype parse_genotype(const std::string& text);

Genotype load_genotype_file(const std::string& path);
void save_genotype_file(const Genotype& g, const std::string& path);

}  // namespace fusenas
