#include "fusenas/genotype.hpp"

#include <fstream>
#include <sstream>

#include "fusenas/errors.hpp"
#include "json.hpp"

namespace fusenas {

namespace {

using json = nlohmann::ordered_json;

json msm_to_json(const GenotypeMsm& m) {
    json nodes = json::array();
    for (const auto& n : m.nodes)
        nodes.push_back(json{{"op", to_string(n.op)}, {"preds", {n.preds[0], n.preds[1]}}});
    return json{{"inputs", {m.inputs[0], m.inputs[1]}}, {"nodes", std::move(nodes)}};
}

MsmKind msm_kind_from_string(const std::string& s) {
    if (s == "early") return MsmKind::Early;
    if (s == "middle") return MsmKind::Middle;
    if (s == "late") return MsmKind::Late;
    throw ParseError("unknown module name '" + s + "'");
}

GenotypeMsm msm_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("inputs") || !j.contains("nodes"))
        throw ParseError(where + ": expected object with 'inputs' and 'nodes'");
    const auto& inputs = j.at("inputs");
    if (!inputs.is_array() || inputs.size() != 2)
        throw ParseError(where + ": 'inputs' must be a 2-element array");
    GenotypeMsm m;
    for (int slot = 0; slot < 2; ++slot) {
        if (!inputs[slot].is_number_integer())
            throw ParseError(where + ": input index must be an integer");
        m.inputs[slot] = inputs[slot].get<int>();
        if (m.inputs[slot] < 0)
            throw ParseError(where + ": input index " + std::to_string(m.inputs[slot]) +
                             " out of range");
    }
    const auto& nodes = j.at("nodes");
    if (!nodes.is_array()) throw ParseError(where + ": 'nodes' must be an array");
    for (size_t k = 0; k < nodes.size(); ++k) {
        const auto& nj = nodes[k];
        const std::string nw = where + " node " + std::to_string(k);
        if (!nj.is_object() || !nj.contains("op") || !nj.contains("preds"))
            throw ParseError(nw + ": expected object with 'op' and 'preds'");
        if (!nj.at("op").is_string()) throw ParseError(nw + ": 'op' must be a string");
        const auto op = fusion_op_from_string(nj.at("op").get<std::string>());
        if (!op) throw ParseError(nw + ": unknown op '" + nj.at("op").get<std::string>() + "'");
        const auto& preds = nj.at("preds");
        if (!preds.is_array() || preds.size() != 2)
            throw ParseError(nw + ": 'preds' must be a 2-element array");
        GenotypeNode node;
        node.op = *op;
        for (int slot = 0; slot < 2; ++slot) {
            if (!preds[slot].is_number_integer())
                throw ParseError(nw + ": predecessor must be an integer");
            node.preds[slot] = preds[slot].get<int>();
            // candidates at node k: two cell inputs plus the k earlier nodes
            if (node.preds[slot] < 0 || node.preds[slot] >= 2 + static_cast<int>(k))
                throw ParseError(nw + ": predecessor " + std::to_string(node.preds[slot]) +
                                 " out of range");
        }
        m.nodes.push_back(node);
    }
    return m;
}

}  // namespace

std::string serialize_genotype(const Genotype& g) {
    json j = json::object();
    for (const auto& [kind, m] : g.msms) j["msm_" + msm_name(kind)] = msm_to_json(m);
    json wiring = json::array();
    for (const auto& w : g.wiring)
        wiring.push_back(json{{"from", msm_name(w.from)},
                              {"to", msm_name(w.to)},
                              {"pool_index", w.pool_index},
                              {"selected", w.selected}});
    j["wiring"] = std::move(wiring);
    j["meta"] = json{{"seed", g.seed}, {"config_hash", g.config_hash}};
    return j.dump(2) + "\n";
}

Genotype parse_genotype(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("genotype JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("genotype JSON: top level must be an object");

    Genotype g;
    for (const MsmKind kind : {MsmKind::Early, MsmKind::Middle, MsmKind::Late}) {
        const std::string key = "msm_" + msm_name(kind);
        if (j.contains(key)) g.msms.emplace_back(kind, msm_from_json(j.at(key), key));
    }
    if (g.msms.empty()) throw ParseError("genotype JSON: no msm_* entries");
    for (const auto& [key, value] : j.items()) {
        if (key != "wiring" && key != "meta" && key.rfind("msm_", 0) != 0)
            throw ParseError("genotype JSON: unknown key '" + key + "'");
        if (key.rfind("msm_", 0) == 0) msm_kind_from_string(key.substr(4));
    }
    if (j.contains("wiring")) {
        const auto& wiring = j.at("wiring");
        if (!wiring.is_array()) throw ParseError("genotype JSON: 'wiring' must be an array");
        for (const auto& wj : wiring) {
            if (!wj.is_object() || !wj.contains("from") || !wj.contains("to") ||
                !wj.contains("pool_index") || !wj.contains("selected"))
                throw ParseError("genotype JSON: malformed wiring entry");
            WiringEntry w;
            w.from = msm_kind_from_string(wj.at("from").get<std::string>());
            w.to = msm_kind_from_string(wj.at("to").get<std::string>());
            w.pool_index = wj.at("pool_index").get<int>();
            if (w.pool_index < 0) throw ParseError("genotype JSON: wiring pool_index out of range");
            w.selected = wj.at("selected").get<bool>();
            g.wiring.push_back(w);
        }
    }
    if (j.contains("meta")) {
        const auto& meta = j.at("meta");
        if (!meta.is_object()) throw ParseError("genotype JSON: 'meta' must be an object");
        if (meta.contains("seed")) g.seed = meta.at("seed").get<uint64_t>();
        if (meta.contains("config_hash")) g.config_hash = meta.at("config_hash").get<std::string>();
    }
    return g;
}

Genotype load_genotype_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open genotype file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_genotype(ss.str());
}

void save_genotype_file(const Genotype& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write genotype file: " + path);
    out << serialize_genotype(g);
}

}  // namespace fusenas
