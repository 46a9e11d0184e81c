#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fusenas/config.hpp"
#include "fusenas/genotype.hpp"
#include "fusenas/params.hpp"
#include "fusenas/pipeline.hpp"
#include "fusenas/search_space.hpp"

namespace fusenas {

// ---------------------------------------------------------------------------
// Bilevel alternating optimization of (architecture parameters, network
// weights), genotype extraction, fixed-architecture retraining, evaluation,
// and the ablation / few-shot / planted-recovery experiment drivers.
// ---------------------------------------------------------------------------

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long t = 0;
    std::vector<Tensor> m, v;
};

// One Adam step over the whole set; `grads` aligned with params.items.
void adam_step(ParamSet& params, AdamState& opt, const std::vector<Tensor>& grads, double lr);

struct ModelState {
    ParamSet weights;
    ParamSet arch;
    AdamState opt_w, opt_arch;
};

// FNV over the raw bits of every tensor entry, in registry order.
uint64_t param_checksum(const ParamSet& params);

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    // current argmax per alpha/beta group, keyed by parameter name
    std::vector<std::pair<std::string, int>> choices;
};

struct SearchHistory {
    std::vector<EpochStats> epochs;
};

enum class Phase { WeightStep, ArchStep };

// Invoked after every half-step; used by tests to checksum the untouched
// parameter family.
using StepObserver = std::function<void(Phase, int epoch, int step, const ModelState&)>;

struct SearchResult {
    Genotype genotype;
    SearchHistory history;
    ModelState state;
};

struct Benchmark {
    std::vector<Sample> train;  // normal samples only
    std::vector<Sample> test;   // half normal, half anomalous
};

Benchmark make_benchmark(const SearchConfig& cfg);

AnomalyCfg anomaly_config(const SearchConfig& cfg);

MfnLayout layout_from_config(const SearchConfig& cfg);

// Fresh deterministic parameter state for the configured layout.
ModelState init_model(const SearchConfig& cfg, const MfnLayout& layout);

// Alternating first-order search: each step updates weights on a training
// batch, then architecture parameters on a validation batch (disjoint 50/50
// split of the normal pool, anomalies generated online). Non-finite loss
// raises DivergenceError with the step index.
SearchResult bilevel_search(const SearchConfig& cfg, const std::vector<Sample>& train_pool,
                            const StepObserver& observer = {});

// Trains the discretized network from scratch, weights only. Mean per-epoch
// losses are appended to `epoch_losses` when provided.
ModelState train_fixed(const Genotype& genotype, const SearchConfig& cfg,
                       const std::vector<Sample>& train_pool,
                       std::vector<double>* epoch_losses = nullptr);

struct MetricsReport {
    double i_auroc = 0.0;
    double p_auroc = 0.0;
    double aupro = 0.0;
    std::string config_hash;
    uint64_t seed = 0;
    double wallclock_s = 0.0;
};

std::string metrics_report_json(const MetricsReport& r);

// Anomaly map of one sample under the discrete network.
Tensor predict_map(const SearchConfig& cfg, const MfnLayout& layout, const ParamSet& weights,
                   const Genotype& genotype, const Sample& sample);

MetricsReport evaluate(const SearchConfig& cfg, const ParamSet& weights, const Genotype& genotype,
                       const std::vector<Sample>& testset);

// Evaluation against an arbitrary per-sample map producer (metric plumbing
// for oracle predictors in tests).
MetricsReport evaluate_with(const SearchConfig& cfg,
                            const std::function<Tensor(const Sample&)>& map_fn,
                            const std::vector<Sample>& testset);

// Full search + retrain + eval with only the named modules instantiated.
MetricsReport ablate_msm(const SearchConfig& cfg, const Benchmark& bench,
                         const std::vector<MsmKind>& subset);

// All seven non-empty subsets, optionally fanned out over worker threads.
// Rows are ordered: E, M, L, EM, EL, ML, EML.
std::vector<std::pair<std::vector<MsmKind>, MetricsReport>> ablate_sweep(const SearchConfig& cfg,
                                                                         int workers = 1);

std::string ablation_csv(
    const std::vector<std::pair<std::vector<MsmKind>, MetricsReport>>& rows);

// Subsamples k normal training images (seeded), retrains the fixed
// architecture on them, evaluates on the full test set. k must not exceed
// the pool; k == pool size reproduces standard training exactly.
MetricsReport fewshot(const SearchConfig& cfg, const Benchmark& bench, const Genotype& genotype,
                      int k);

// --- model checkpointing ---------------------------------------------------

struct ModelCheckpoint {
    uint64_t seed = 0;
    std::string config_hash;
    Genotype genotype;
    ModelState state;
};

// Binary format; round-trips every tensor entry bit-exactly.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

// --- planted-structure recovery ---------------------------------------------

// Builds a task whose labels come from a frozen teacher using guided
// attention at the late module's node, with the second modality informative
// only through a twice-pooled middle-stage feature. Runs the bilevel engine
// over the same search space and reports whether the discretized student
// selected the middle-module output at the late cell and the planted
// operation at that node.
struct PlantedOutcome {
    Genotype genotype;
    bool picked_middle_output = false;
    bool picked_planted_op = false;
    bool recovered = false;
};

PlantedOutcome run_planted_recovery(uint64_t seed);

}  // namespace fusenas
