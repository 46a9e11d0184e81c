#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fusenas/fusion_ops.hpp"
#include "fusenas/graph.hpp"
#include "fusenas/params.hpp"
#include "fusenas/rng.hpp"

namespace fusenas {

// ---------------------------------------------------------------------------
// Two-level searchable fusion network: per-module feature pools feeding small
// cell DAGs, with architecture parameters selecting pool entries (alpha_ex),
// node connections (alpha_in), and node operations (beta_op).
// ---------------------------------------------------------------------------

enum class MsmKind : int { Early = 0, Middle = 1, Late = 2 };

std::string msm_name(MsmKind kind);

struct PoolEntry {
    enum class Source { FeatureA, FeatureB, MsmOutput };
    std::string name;  // "a.mid2", "early_out", ...
    Source source;
    int feature_index;  // feature: 0 early, 1..3 middle stages, 4 late; MsmOutput: MsmKind
    int src_channels, src_h, src_w;
};

struct CellSpec {
    int k_nodes = 2;
    int channels = 8;
    int height = 8;
    int width = 8;
};

struct MsmLayout {
    MsmKind kind;
    std::vector<PoolEntry> pool;
    CellSpec cell;
};

// Ordered early -> middle -> late; any non-empty subset may be instantiated.
struct MfnLayout {
    std::vector<MsmLayout> msms;

    bool has(MsmKind kind) const;
    const MsmLayout& get(MsmKind kind) const;
};

// Pool composition rule: the early output joins the middle and late pools,
// the middle output joins the late pool. Modality feature shapes follow the
// encoder ladder (early at full resolution, middle stages at /2 /4 /8, late
// at /8); every cell runs at its own resolution with `channels` channels.
MfnLayout make_mfn_layout(int channels, int height, int width, int k_nodes,
                          const std::vector<MsmKind>& subset);

// --- parameters --------------------------------------------------------

// Adapter (per pool entry) and fusion-op (per node, all four kinds)
// weights, registered under "msm.<name>...." keys.
void init_msm_weights(const MsmLayout& m, ParamSet& weights, Rng& rng);

// alpha_ex / alpha_in / beta_op vectors under "arch.<name>...." keys,
// initialized with small uniform noise to break softmax symmetry.
void init_msm_arch(const MsmLayout& m, ParamSet& arch, Rng& rng);

std::string adapter_key(const MsmLayout& m, int entry, const char* which);
std::string op_param_key(const MsmLayout& m, int node, FusionOpKind kind, const std::string& pname);
std::string arch_key(const MsmLayout& m, const char* group, int node = -1, int slot = -1);

// --- continuous relaxation ---------------------------------------------

// Cell inputs as softmax(alpha_ex_i)-weighted sums over the adapted pool.
std::array<Graph::NodeId, 2> relax_inputs(Graph& g, const std::vector<Graph::NodeId>& adapted,
                                          const std::array<Graph::NodeId, 2>& alpha_ex);

// Node inputs as softmax(alpha_in)-weighted sums over candidate predecessors.
std::array<Graph::NodeId, 2> mixed_edge(Graph& g, const std::array<Graph::NodeId, 2>& alpha_in,
                                        const std::vector<Graph::NodeId>& candidates);

// softmax(beta)-weighted sum of all four candidate operations.
Graph::NodeId mixed_op(Graph& g, Graph::NodeId beta,
                       const std::array<std::vector<Graph::NodeId>, kFusionOpCount>& op_params,
                       Graph::NodeId t_y, Graph::NodeId t_z);

// Adapted pool entry: 1x1 projection + nearest resize to the cell shape.
Graph::NodeId adapt_entry(Graph& g, Binder& binder, const ParamSet& weights, const MsmLayout& m,
                          int entry, Graph::NodeId raw);

// Full relaxed cell: relax_inputs, K mixed nodes, output = sum of node outputs.
Graph::NodeId msm_forward_relaxed(Graph& g, Binder& binder, const ParamSet& weights,
                                  const ParamSet& arch, const MsmLayout& m,
                                  const std::vector<Graph::NodeId>& raw_pool);

// --- discretization ------------------------------------------------------

struct GenotypeNode {
    FusionOpKind op;
    std::array<int, 2> preds;  // 0,1 = cell inputs; 2+j = intermediate j
    bool operator==(const GenotypeNode&) const = default;
};

struct GenotypeMsm {
    std::array<int, 2> inputs;  // pool indices (j, h)
    std::vector<GenotypeNode> nodes;
    bool operator==(const GenotypeMsm&) const = default;
};

struct WiringEntry {
    MsmKind from;
    MsmKind to;
    int pool_index;
    bool selected;
    bool operator==(const WiringEntry&) const = default;
};

struct Genotype {
    std::vector<std::pair<MsmKind, GenotypeMsm>> msms;  // ordered early..late
    std::vector<WiringEntry> wiring;
    uint64_t seed = 0;
    std::string config_hash;

    bool has(MsmKind kind) const;
    const GenotypeMsm& get(MsmKind kind) const;
    bool operator==(const Genotype&) const = default;
};

// argmax with ties broken by lowest index
int argmax_index(const Tensor& v);
// argmax over indices != exclude (ties by lowest index)
int runner_up_index(const Tensor& v, int exclude);

// argmax over every alpha/beta group; if both alpha_ex slots pick the same
// entry, slot 2 takes its runner-up.
Genotype discretize(const MfnLayout& layout, const ParamSet& arch, uint64_t seed,
                    const std::string& config_hash);

// Discrete cell built from a genotype (no softmax mixtures).
Graph::NodeId msm_forward_discrete(Graph& g, Binder& binder, const ParamSet& weights,
                                   const MsmLayout& m, const GenotypeMsm& geno,
                                   const std::vector<Graph::NodeId>& raw_pool);

// --- assembled network ---------------------------------------------------

// Per-modality encoder feature handles used to resolve pool entries.
struct ModalityFeatureNodes {
    Graph::NodeId early;
    std::array<Graph::NodeId, 3> middle;
    Graph::NodeId late;
};

struct MfnResult {
    Graph::NodeId result;                       // output of the last present module
    std::array<Graph::NodeId, 3> msm_outputs;   // -1 where absent
};

MfnResult mfn_forward_relaxed(Graph& g, Binder& binder, const ParamSet& weights,
                              const ParamSet& arch, const MfnLayout& layout,
                              const ModalityFeatureNodes& mod_a, const ModalityFeatureNodes& mod_b);

MfnResult mfn_forward_discrete(Graph& g, Binder& binder, const ParamSet& weights,
                               const Genotype& genotype, const MfnLayout& layout,
                               const ModalityFeatureNodes& mod_a, const ModalityFeatureNodes& mod_b);

}  // namespace fusenas
