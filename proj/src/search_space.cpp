#include "fusenas/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fusenas/errors.hpp"

namespace fusenas {

std::string msm_name(MsmKind kind) {
    switch (kind) {
        case MsmKind::Early: return "early";
        case MsmKind::Middle: return "middle";
        case MsmKind::Late: return "late";
    }
    throw std::invalid_argument("unknown msm kind");
}

bool MfnLayout::has(MsmKind kind) const {
    for (const auto& m : msms)
        if (m.kind == kind) return true;
    return false;
}

const MsmLayout& MfnLayout::get(MsmKind kind) const {
    for (const auto& m : msms)
        if (m.kind == kind) return m;
    throw ConfigError("layout has no " + msm_name(kind) + " module");
}

bool Genotype::has(MsmKind kind) const {
    for (const auto& [k, m] : msms)
        if (k == kind) return true;
    return false;
}

const GenotypeMsm& Genotype::get(MsmKind kind) const {
    for (const auto& [k, m] : msms)
        if (k == kind) return m;
    throw ConfigError("genotype has no " + msm_name(kind) + " module");
}

MfnLayout make_mfn_layout(int channels, int height, int width, int k_nodes,
                          const std::vector<MsmKind>& subset) {
    if (subset.empty()) throw std::invalid_argument("module subset must be non-empty");
    if (height % 8 != 0 || width % 8 != 0)
        throw ConfigError("image size must be divisible by 8, got " + std::to_string(height) + "x" +
                          std::to_string(width));
    auto want = [&](MsmKind k) { return std::find(subset.begin(), subset.end(), k) != subset.end(); };

    const int h2 = height / 2, w2 = width / 2;
    const int h4 = height / 4, w4 = width / 4;
    const int h8 = height / 8, w8 = width / 8;
    const int c = channels;

    MfnLayout layout;
    if (want(MsmKind::Early)) {
        MsmLayout m;
        m.kind = MsmKind::Early;
        m.cell = {k_nodes, c, height, width};
        m.pool.push_back({"a.early", PoolEntry::Source::FeatureA, 0, c, height, width});
        m.pool.push_back({"b.early", PoolEntry::Source::FeatureB, 0, c, height, width});
        layout.msms.push_back(std::move(m));
    }
    if (want(MsmKind::Middle)) {
        MsmLayout m;
        m.kind = MsmKind::Middle;
        m.cell = {k_nodes, c, h2, w2};
        m.pool.push_back({"a.mid1", PoolEntry::Source::FeatureA, 1, c, h2, w2});
        m.pool.push_back({"a.mid2", PoolEntry::Source::FeatureA, 2, c, h4, w4});
        m.pool.push_back({"a.mid3", PoolEntry::Source::FeatureA, 3, c, h8, w8});
        m.pool.push_back({"b.mid1", PoolEntry::Source::FeatureB, 1, c, h2, w2});
        m.pool.push_back({"b.mid2", PoolEntry::Source::FeatureB, 2, c, h4, w4});
        m.pool.push_back({"b.mid3", PoolEntry::Source::FeatureB, 3, c, h8, w8});
        if (layout.has(MsmKind::Early))
            m.pool.push_back({"early_out", PoolEntry::Source::MsmOutput,
                              static_cast<int>(MsmKind::Early), c, height, width});
        layout.msms.push_back(std::move(m));
    }
    if (want(MsmKind::Late)) {
        MsmLayout m;
        m.kind = MsmKind::Late;
        m.cell = {k_nodes, c, h8, w8};
        m.pool.push_back({"a.late", PoolEntry::Source::FeatureA, 4, c, h8, w8});
        m.pool.push_back({"b.late", PoolEntry::Source::FeatureB, 4, c, h8, w8});
        if (layout.has(MsmKind::Early))
            m.pool.push_back({"early_out", PoolEntry::Source::MsmOutput,
                              static_cast<int>(MsmKind::Early), c, height, width});
        if (layout.has(MsmKind::Middle))
            m.pool.push_back({"middle_out", PoolEntry::Source::MsmOutput,
                              static_cast<int>(MsmKind::Middle), c, h2, w2});
        layout.msms.push_back(std::move(m));
    }
    for (const auto& m : layout.msms)
        if (m.pool.size() < 2)
            throw ConfigError(msm_name(m.kind) + " pool needs at least 2 entries, has " +
                              std::to_string(m.pool.size()));
    return layout;
}

std::string adapter_key(const MsmLayout& m, int entry, const char* which) {
    return "msm." + msm_name(m.kind) + ".ad" + std::to_string(entry) + "." + which;
}

std::string op_param_key(const MsmLayout& m, int node, FusionOpKind kind, const std::string& pname) {
    return "msm." + msm_name(m.kind) + ".node" + std::to_string(node) + "." + to_string(kind) +
           "." + pname;
}

std::string arch_key(const MsmLayout& m, const char* group, int node, int slot) {
    std::string key = "arch." + msm_name(m.kind);
    if (node >= 0) key += ".node" + std::to_string(node);
    key += std::string(".") + group;
    if (slot >= 0) key += std::to_string(slot);
    return key;
}

void init_msm_weights(const MsmLayout& m, ParamSet& weights, Rng& rng) {
    for (size_t i = 0; i < m.pool.size(); ++i) {
        const PoolEntry& e = m.pool[i];
        const double s = 1.0 / std::sqrt(static_cast<double>(e.src_channels));
        Tensor w({m.cell.channels, e.src_channels});
        for (int j = 0; j < w.numel(); ++j) w[j] = rng.uniform(-s, s);
        weights.add(adapter_key(m, static_cast<int>(i), "w"), std::move(w));
        weights.add(adapter_key(m, static_cast<int>(i), "b"), Tensor({m.cell.channels}));
    }
    for (int k = 0; k < m.cell.k_nodes; ++k)
        for (int op = 0; op < kFusionOpCount; ++op) {
            const auto kind = static_cast<FusionOpKind>(op);
            OpParams p = init_op_params(kind, m.cell.channels, rng);
            for (auto& [pname, t] : p.tensors)
                weights.add(op_param_key(m, k, kind, pname), std::move(t));
        }
}

void init_msm_arch(const MsmLayout& m, ParamSet& arch, Rng& rng) {
    auto noise_vec = [&](int n) {
        Tensor t({n});
        for (int i = 0; i < n; ++i) t[i] = rng.uniform(-1e-3, 1e-3);
        return t;
    };
    const int pool_n = static_cast<int>(m.pool.size());
    arch.add(arch_key(m, "alpha_ex", -1, 0), noise_vec(pool_n));
    arch.add(arch_key(m, "alpha_ex", -1, 1), noise_vec(pool_n));
    for (int k = 0; k < m.cell.k_nodes; ++k) {
        arch.add(arch_key(m, "alpha_in", k, 0), noise_vec(2 + k));
        arch.add(arch_key(m, "alpha_in", k, 1), noise_vec(2 + k));
        arch.add(arch_key(m, "beta", k), noise_vec(kFusionOpCount));
    }
}

std::array<Graph::NodeId, 2> relax_inputs(Graph& g, const std::vector<Graph::NodeId>& adapted,
                                          const std::array<Graph::NodeId, 2>& alpha_ex) {
    std::array<Graph::NodeId, 2> out{-1, -1};
    for (int slot = 0; slot < 2; ++slot) {
        const Tensor& alpha = g.value(alpha_ex[static_cast<size_t>(slot)]);
        if (alpha.numel() != static_cast<int>(adapted.size()))
            throw ConfigError("alpha_ex slot " + std::to_string(slot) + " has length " +
                              std::to_string(alpha.numel()) + " for pool of " +
                              std::to_string(adapted.size()));
        const Graph::NodeId w = g.softmax(alpha_ex[static_cast<size_t>(slot)]);
        Graph::NodeId acc = -1;
        for (size_t s = 0; s < adapted.size(); ++s) {
            const Graph::NodeId term = g.mul(adapted[s], g.pick(w, static_cast<int>(s)));
            acc = acc < 0 ? term : g.add(acc, term);
        }
        out[static_cast<size_t>(slot)] = acc;
    }
    return out;
}

std::array<Graph::NodeId, 2> mixed_edge(Graph& g, const std::array<Graph::NodeId, 2>& alpha_in,
                                        const std::vector<Graph::NodeId>& candidates) {
    std::array<Graph::NodeId, 2> out{-1, -1};
    for (int slot = 0; slot < 2; ++slot) {
        const Tensor& alpha = g.value(alpha_in[static_cast<size_t>(slot)]);
        if (alpha.numel() != static_cast<int>(candidates.size()))
            throw ConfigError("alpha_in slot " + std::to_string(slot) + " has length " +
                              std::to_string(alpha.numel()) + " for " +
                              std::to_string(candidates.size()) + " candidates");
        const Graph::NodeId w = g.softmax(alpha_in[static_cast<size_t>(slot)]);
        Graph::NodeId acc = -1;
        for (size_t s = 0; s < candidates.size(); ++s) {
            const Graph::NodeId term = g.mul(candidates[s], g.pick(w, static_cast<int>(s)));
            acc = acc < 0 ? term : g.add(acc, term);
        }
        out[static_cast<size_t>(slot)] = acc;
    }
    return out;
}

Graph::NodeId mixed_op(Graph& g, Graph::NodeId beta,
                       const std::array<std::vector<Graph::NodeId>, kFusionOpCount>& op_params,
                       Graph::NodeId t_y, Graph::NodeId t_z) {
    if (g.value(beta).numel() != kFusionOpCount)
        throw ConfigError("beta_op must have length " + std::to_string(kFusionOpCount));
    const Graph::NodeId w = g.softmax(beta);
    Graph::NodeId acc = -1;
    for (int op = 0; op < kFusionOpCount; ++op) {
        const auto kind = static_cast<FusionOpKind>(op);
        const Graph::NodeId out = apply_fusion_op(g, kind, op_params[static_cast<size_t>(op)], t_y, t_z);
        const Graph::NodeId term = g.mul(out, g.pick(w, op));
        acc = acc < 0 ? term : g.add(acc, term);
    }
    return acc;
}

Graph::NodeId adapt_entry(Graph& g, Binder& binder, const ParamSet& weights, const MsmLayout& m,
                          int entry, Graph::NodeId raw) {
    const Graph::NodeId w = binder.bind(weights, adapter_key(m, entry, "w"));
    const Graph::NodeId b = binder.bind(weights, adapter_key(m, entry, "b"));
    Graph::NodeId x = g.linear_map(raw, w, b);
    if (g.value(x).dim(1) != m.cell.height || g.value(x).dim(2) != m.cell.width)
        x = g.resize_nearest(x, m.cell.height, m.cell.width);
    return x;
}

namespace {

std::vector<Graph::NodeId> adapt_pool(Graph& g, Binder& binder, const ParamSet& weights,
                                      const MsmLayout& m, const std::vector<Graph::NodeId>& raw) {
    if (raw.size() != m.pool.size())
        throw ConfigError(msm_name(m.kind) + " pool expects " + std::to_string(m.pool.size()) +
                          " features, got " + std::to_string(raw.size()));
    std::vector<Graph::NodeId> adapted;
    adapted.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i)
        adapted.push_back(adapt_entry(g, binder, weights, m, static_cast<int>(i), raw[i]));
    return adapted;
}

std::array<std::vector<Graph::NodeId>, kFusionOpCount> bind_node_ops(Binder& binder,
                                                                     const ParamSet& weights,
                                                                     const MsmLayout& m, int node) {
    std::array<std::vector<Graph::NodeId>, kFusionOpCount> out;
    for (int op = 0; op < kFusionOpCount; ++op) {
        const auto kind = static_cast<FusionOpKind>(op);
        std::vector<std::string> names;
        switch (kind) {
            case FusionOpKind::WeightedSum: names = {"lambda1", "lambda2"}; break;
            case FusionOpKind::ConcatProject: names = {"w", "b"}; break;
            case FusionOpKind::Glu: names = {"wv", "bv", "wg", "bg"}; break;
            case FusionOpKind::GuidedAttention: names = {"wg", "bg"}; break;
        }
        for (const auto& pname : names)
            out[static_cast<size_t>(op)].push_back(
                binder.bind(weights, op_param_key(m, node, kind, pname)));
    }
    return out;
}

Graph::NodeId sum_nodes(Graph& g, const std::vector<Graph::NodeId>& nodes) {
    Graph::NodeId acc = -1;
    for (const Graph::NodeId n : nodes) acc = acc < 0 ? n : g.add(acc, n);
    return acc;
}

}  // namespace

Graph::NodeId msm_forward_relaxed(Graph& g, Binder& binder, const ParamSet& weights,
                                  const ParamSet& arch, const MsmLayout& m,
                                  const std::vector<Graph::NodeId>& raw_pool) {
    const auto adapted = adapt_pool(g, binder, weights, m, raw_pool);
    const std::array<Graph::NodeId, 2> alpha_ex{
        binder.bind(arch, arch_key(m, "alpha_ex", -1, 0)),
        binder.bind(arch, arch_key(m, "alpha_ex", -1, 1))};
    const auto inputs = relax_inputs(g, adapted, alpha_ex);

    std::vector<Graph::NodeId> node_values{inputs[0], inputs[1]};
    std::vector<Graph::NodeId> intermediates;
    for (int k = 0; k < m.cell.k_nodes; ++k) {
        const std::array<Graph::NodeId, 2> alpha_in{
            binder.bind(arch, arch_key(m, "alpha_in", k, 0)),
            binder.bind(arch, arch_key(m, "alpha_in", k, 1))};
        const auto edge = mixed_edge(g, alpha_in, node_values);
        const Graph::NodeId beta = binder.bind(arch, arch_key(m, "beta", k));
        const Graph::NodeId out =
            mixed_op(g, beta, bind_node_ops(binder, weights, m, k), edge[0], edge[1]);
        node_values.push_back(out);
        intermediates.push_back(out);
    }
    return sum_nodes(g, intermediates);
}

int argmax_index(const Tensor& v) {
    int best = 0;
    for (int i = 1; i < v.numel(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

int runner_up_index(const Tensor& v, int exclude) {
    int best = -1;
    for (int i = 0; i < v.numel(); ++i) {
        if (i == exclude) continue;
        if (best < 0 || v[i] > v[best]) best = i;
    }
    if (best < 0) throw std::invalid_argument("runner_up_index needs at least 2 entries");
    return best;
}

Genotype discretize(const MfnLayout& layout, const ParamSet& arch, uint64_t seed,
                    const std::string& config_hash) {
    Genotype geno;
    geno.seed = seed;
    geno.config_hash = config_hash;
    for (const auto& m : layout.msms) {
        GenotypeMsm gm;
        const Tensor& a0 = arch.at(arch_key(m, "alpha_ex", -1, 0));
        const Tensor& a1 = arch.at(arch_key(m, "alpha_ex", -1, 1));
        gm.inputs[0] = argmax_index(a0);
        gm.inputs[1] = argmax_index(a1);
        if (gm.inputs[1] == gm.inputs[0]) gm.inputs[1] = runner_up_index(a1, gm.inputs[0]);
        for (int k = 0; k < m.cell.k_nodes; ++k) {
            GenotypeNode node;
            node.preds[0] = argmax_index(arch.at(arch_key(m, "alpha_in", k, 0)));
            node.preds[1] = argmax_index(arch.at(arch_key(m, "alpha_in", k, 1)));
            node.op = static_cast<FusionOpKind>(argmax_index(arch.at(arch_key(m, "beta", k))));
            gm.nodes.push_back(node);
        }
        geno.msms.emplace_back(m.kind, std::move(gm));
    }
    // record which upstream outputs were offered and whether they were taken
    for (const auto& m : layout.msms)
        for (size_t i = 0; i < m.pool.size(); ++i) {
            const PoolEntry& e = m.pool[i];
            if (e.source != PoolEntry::Source::MsmOutput) continue;
            const GenotypeMsm& gm = geno.get(m.kind);
            WiringEntry we;
            we.from = static_cast<MsmKind>(e.feature_index);
            we.to = m.kind;
            we.pool_index = static_cast<int>(i);
            we.selected = gm.inputs[0] == we.pool_index || gm.inputs[1] == we.pool_index;
            geno.wiring.push_back(we);
        }
    return geno;
}

Graph::NodeId msm_forward_discrete(Graph& g, Binder& binder, const ParamSet& weights,
                                   const MsmLayout& m, const GenotypeMsm& geno,
                                   const std::vector<Graph::NodeId>& raw_pool) {
    if (raw_pool.size() != m.pool.size())
        throw ConfigError(msm_name(m.kind) + " pool expects " + std::to_string(m.pool.size()) +
                          " features, got " + std::to_string(raw_pool.size()));
    for (int slot = 0; slot < 2; ++slot) {
        const int idx = geno.inputs[static_cast<size_t>(slot)];
        if (idx < 0 || idx >= static_cast<int>(m.pool.size()))
            throw ConfigError(msm_name(m.kind) + " genotype input " + std::to_string(idx) +
                              " out of range for pool of " + std::to_string(m.pool.size()));
    }
    if (static_cast<int>(geno.nodes.size()) != m.cell.k_nodes)
        throw ConfigError(msm_name(m.kind) + " genotype has " + std::to_string(geno.nodes.size()) +
                          " nodes, layout expects " + std::to_string(m.cell.k_nodes));

    std::vector<Graph::NodeId> node_values;
    node_values.push_back(
        adapt_entry(g, binder, weights, m, geno.inputs[0], raw_pool[static_cast<size_t>(geno.inputs[0])]));
    node_values.push_back(
        adapt_entry(g, binder, weights, m, geno.inputs[1], raw_pool[static_cast<size_t>(geno.inputs[1])]));

    std::vector<Graph::NodeId> intermediates;
    for (size_t k = 0; k < geno.nodes.size(); ++k) {
        const GenotypeNode& node = geno.nodes[k];
        for (int pred : node.preds)
            if (pred < 0 || pred >= static_cast<int>(node_values.size()))
                throw ConfigError(msm_name(m.kind) + " node " + std::to_string(k) +
                                  " predecessor " + std::to_string(pred) + " out of range");
        std::vector<std::string> names;
        switch (node.op) {
            case FusionOpKind::WeightedSum: names = {"lambda1", "lambda2"}; break;
            case FusionOpKind::ConcatProject: names = {"w", "b"}; break;
            case FusionOpKind::Glu: names = {"wv", "bv", "wg", "bg"}; break;
            case FusionOpKind::GuidedAttention: names = {"wg", "bg"}; break;
        }
        std::vector<Graph::NodeId> params;
        for (const auto& pname : names)
            params.push_back(binder.bind(weights, op_param_key(m, static_cast<int>(k), node.op, pname)));
        const Graph::NodeId out =
            apply_fusion_op(g, node.op, params, node_values[static_cast<size_t>(node.preds[0])],
                            node_values[static_cast<size_t>(node.preds[1])]);
        node_values.push_back(out);
        intermediates.push_back(out);
    }
    return sum_nodes(g, intermediates);
}

namespace {

std::vector<Graph::NodeId> resolve_pool(const MsmLayout& m, const ModalityFeatureNodes& mod_a,
                                        const ModalityFeatureNodes& mod_b,
                                        const std::array<Graph::NodeId, 3>& msm_outputs) {
    auto feature = [](const ModalityFeatureNodes& f, int index) -> Graph::NodeId {
        if (index == 0) return f.early;
        if (index >= 1 && index <= 3) return f.middle[static_cast<size_t>(index - 1)];
        if (index == 4) return f.late;
        throw ConfigError("bad feature index " + std::to_string(index));
    };
    std::vector<Graph::NodeId> raw;
    for (const PoolEntry& e : m.pool) {
        switch (e.source) {
            case PoolEntry::Source::FeatureA: raw.push_back(feature(mod_a, e.feature_index)); break;
            case PoolEntry::Source::FeatureB: raw.push_back(feature(mod_b, e.feature_index)); break;
            case PoolEntry::Source::MsmOutput: {
                const Graph::NodeId up = msm_outputs[static_cast<size_t>(e.feature_index)];
                if (up < 0)
                    throw ConfigError("pool entry " + e.name + " requires an absent upstream module");
                raw.push_back(up);
                break;
            }
        }
    }
    return raw;
}

}  // namespace

MfnResult mfn_forward_relaxed(Graph& g, Binder& binder, const ParamSet& weights,
                              const ParamSet& arch, const MfnLayout& layout,
                              const ModalityFeatureNodes& mod_a, const ModalityFeatureNodes& mod_b) {
    MfnResult res;
    res.msm_outputs = {-1, -1, -1};
    res.result = -1;
    for (const auto& m : layout.msms) {
        const auto raw = resolve_pool(m, mod_a, mod_b, res.msm_outputs);
        const Graph::NodeId out = msm_forward_relaxed(g, binder, weights, arch, m, raw);
        res.msm_outputs[static_cast<size_t>(m.kind)] = out;
        res.result = out;
    }
    return res;
}

MfnResult mfn_forward_discrete(Graph& g, Binder& binder, const ParamSet& weights,
                               const Genotype& genotype, const MfnLayout& layout,
                               const ModalityFeatureNodes& mod_a, const ModalityFeatureNodes& mod_b) {
    MfnResult res;
    res.msm_outputs = {-1, -1, -1};
    res.result = -1;
    for (const auto& m : layout.msms) {
        const auto raw = resolve_pool(m, mod_a, mod_b, res.msm_outputs);
        const Graph::NodeId out =
            msm_forward_discrete(g, binder, weights, m, genotype.get(m.kind), raw);
        res.msm_outputs[static_cast<size_t>(m.kind)] = out;
        res.result = out;
    }
    return res;
}

}  // namespace fusenas
