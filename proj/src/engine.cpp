#include "fusenas/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "fusenas/errors.hpp"
#include "json.hpp"

namespace fusenas {

// --- optimizer ---------------------------------------------------------------

void adam_step(ParamSet& params, AdamState& opt, const std::vector<Tensor>& grads, double lr) {
    if (grads.size() != params.items.size())
        throw std::invalid_argument("gradient count does not match parameter count");
    if (opt.m.empty()) {
        for (const auto& [name, t] : params.items) {
            opt.m.emplace_back(t.shape);
            opt.v.emplace_back(t.shape);
        }
    }
    ++opt.t;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
    for (size_t i = 0; i < params.items.size(); ++i) {
        Tensor& p = params.items[i].second;
        Tensor& m = opt.m[i];
        Tensor& v = opt.v[i];
        const Tensor& g = grads[i];
        for (int j = 0; j < p.numel(); ++j) {
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt.eps);
        }
    }
}

uint64_t param_checksum(const ParamSet& params) {
    uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const void* data, size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : params.items) {
        feed(name.data(), name.size());
        feed(t.data.data(), t.data.size() * sizeof(double));
    }
    return h;
}

// --- setup ---------------------------------------------------------------

AnomalyCfg anomaly_config(const SearchConfig& cfg) {
    AnomalyCfg a;
    a.area_min = cfg.anomaly_area_min;
    a.area_max = cfg.anomaly_area_max;
    a.keep_normal = cfg.keep_normal;
    return a;
}

MfnLayout layout_from_config(const SearchConfig& cfg) {
    return make_mfn_layout(cfg.channels, cfg.image_size, cfg.image_size, cfg.k_nodes, cfg.modules);
}

Benchmark make_benchmark(const SearchConfig& cfg) {
    const BenchCfg bench{cfg.image_size, cfg.image_size, 3, 1};
    Benchmark out;
    out.train = make_normal_set(bench, cfg.n_train, Rng(cfg.seed, "data.train"));
    AnomalyCfg a = anomaly_config(cfg);
    out.test = make_test_set(bench, a, cfg.n_test, Rng(cfg.seed, "data.test"));
    return out;
}

ModelState init_model(const SearchConfig& cfg, const MfnLayout& layout) {
    ModelState state;
    Rng wr(cfg.seed, "init.w");
    init_mrn_weights(state.weights, "a", 3, cfg.channels, wr);
    init_mrn_weights(state.weights, "b", 1, cfg.channels, wr);
    for (const auto& m : layout.msms) init_msm_weights(m, state.weights, wr);
    init_adn_weights(state.weights, cfg.channels, wr);
    Rng ar(cfg.seed, "init.arch");
    for (const auto& m : layout.msms) init_msm_arch(m, state.arch, ar);
    return state;
}

// --- loss construction ----------------------------------------------------

namespace {

struct BatchInstance {
    const Sample* clean;
    Sample noisy;
};

std::vector<BatchInstance> draw_batch(const std::vector<Sample>& pool, Rng& rng, int batch,
                                      const AnomalyCfg& acfg) {
    std::vector<BatchInstance> out;
    out.reserve(static_cast<size_t>(batch));
    for (int i = 0; i < batch; ++i) {
        const size_t idx = static_cast<size_t>(rng.uniform_int(pool.size()));
        BatchInstance inst;
        inst.clean = &pool[idx];
        inst.noisy = generate_anomaly(pool[idx], rng, acfg);
        out.push_back(std::move(inst));
    }
    return out;
}

Graph::NodeId build_pipeline_batch_loss(Graph& g, Binder& binder, const ModelState& state,
                                        const MfnLayout& layout, const SearchConfig& cfg,
                                        const std::vector<BatchInstance>& batch,
                                        const Genotype* genotype) {
    Graph::NodeId acc = -1;
    for (const BatchInstance& inst : batch) {
        const Graph::NodeId in_a = g.leaf(inst.noisy.a);
        const Graph::NodeId in_b = g.leaf(inst.noisy.b);
        const MrnFeatures fa = mrn_forward(g, binder, state.weights, "a", in_a, cfg.channels);
        const MrnFeatures fb = mrn_forward(g, binder, state.weights, "b", in_b, cfg.channels);
        const MfnResult mfn =
            genotype ? mfn_forward_discrete(g, binder, state.weights, *genotype, layout,
                                            to_feature_nodes(fa), to_feature_nodes(fb))
                     : mfn_forward_relaxed(g, binder, state.weights, state.arch, layout,
                                           to_feature_nodes(fa), to_feature_nodes(fb));
        const Graph::NodeId map =
            adn_forward(g, binder, state.weights, mfn.result, fa.dec_hidden, fb.dec_hidden,
                        cfg.image_size, cfg.image_size);
        const Graph::NodeId loss = total_loss(
            g, fa.recon, g.leaf(inst.clean->a), fb.recon, g.leaf(inst.clean->b), map,
            g.leaf(mask_to_tensor(inst.noisy.mask)), cfg.lambda_rec, cfg.lambda_seg);
        acc = acc < 0 ? loss : g.add(acc, loss);
    }
    return g.affine(acc, 1.0 / static_cast<double>(batch.size()), 0.0);
}

std::vector<Tensor> collect_grads(const Graph& g, const Binder& binder, const ParamSet& params) {
    std::vector<Tensor> grads;
    grads.reserve(params.items.size());
    for (const auto& [name, t] : params.items)
        grads.push_back(binder.bound(name) ? g.grad(binder.node(name)) : Tensor(t.shape));
    return grads;
}

// Builds the loss for one half-step. The step counter excludes the epoch on
// purpose: every epoch replays the same deterministic batch sequence.
using LossBuilder =
    std::function<Graph::NodeId(Graph&, Binder&, const ModelState&, Phase, int step)>;

SearchHistory run_bilevel_loop(const SearchConfig& cfg, ModelState& state,
                               const LossBuilder& build_loss, int steps_per_epoch,
                               const StepObserver& observer) {
    SearchHistory history;
    for (int epoch = 0; epoch < cfg.epochs_search; ++epoch) {
        EpochStats stats;
        for (int step = 0; step < steps_per_epoch; ++step) {
            for (const Phase phase : {Phase::WeightStep, Phase::ArchStep}) {
                Graph g;
                Binder binder(g);
                const Graph::NodeId loss = build_loss(g, binder, state, phase, step);
                const double value = g.value(loss)[0];
                if (!std::isfinite(value))
                    throw DivergenceError("non-finite loss at step " + std::to_string(step) +
                                          " of epoch " + std::to_string(epoch));
                g.backward(loss);
                if (phase == Phase::WeightStep) {
                    adam_step(state.weights, state.opt_w, collect_grads(g, binder, state.weights),
                              cfg.lr_w);
                    stats.train_loss += value;
                } else {
                    adam_step(state.arch, state.opt_arch, collect_grads(g, binder, state.arch),
                              cfg.lr_arch);
                    stats.val_loss += value;
                }
                if (observer) observer(phase, epoch, step, state);
            }
        }
        stats.train_loss /= steps_per_epoch;
        stats.val_loss /= steps_per_epoch;
        for (const auto& [name, t] : state.arch.items)
            stats.choices.emplace_back(name, argmax_index(t));
        history.epochs.push_back(std::move(stats));
    }
    return history;
}

}  // namespace

SearchResult bilevel_search(const SearchConfig& cfg, const std::vector<Sample>& train_pool,
                            const StepObserver& observer) {
    if (train_pool.size() < 2)
        throw std::invalid_argument("bilevel search needs at least 2 training samples");
    const MfnLayout layout = layout_from_config(cfg);

    // disjoint halves: weights learn on the first, architecture on the second
    const size_t half = train_pool.size() / 2;
    const std::vector<Sample> w_half(train_pool.begin(), train_pool.begin() + half);
    const std::vector<Sample> a_half(train_pool.begin() + half, train_pool.end());
    const int steps = std::max(
        1, static_cast<int>(std::min(w_half.size(), a_half.size()) / static_cast<size_t>(cfg.batch)));

    ModelState state = init_model(cfg, layout);
    const AnomalyCfg acfg = anomaly_config(cfg);
    const Rng w_stream(cfg.seed, "search.batch.w");
    const Rng a_stream(cfg.seed, "search.batch.arch");

    auto build = [&](Graph& g, Binder& binder, const ModelState& st, Phase phase, int step) {
        const bool weight_phase = phase == Phase::WeightStep;
        Rng r = (weight_phase ? w_stream : a_stream).child("step", static_cast<uint64_t>(step));
        const auto batch = draw_batch(weight_phase ? w_half : a_half, r, cfg.batch, acfg);
        return build_pipeline_batch_loss(g, binder, st, layout, cfg, batch, nullptr);
    };

    SearchResult result;
    result.history = run_bilevel_loop(cfg, state, build, steps, observer);
    result.genotype = discretize(layout, state.arch, cfg.seed, config_hash(cfg));
    result.state = std::move(state);
    return result;
}

ModelState train_fixed(const Genotype& genotype, const SearchConfig& cfg,
                       const std::vector<Sample>& train_pool,
                       std::vector<double>* epoch_losses) {
    if (train_pool.empty()) throw std::invalid_argument("training pool is empty");
    const MfnLayout layout = layout_from_config(cfg);
    for (const auto& m : layout.msms)
        if (!genotype.has(m.kind))
            throw ConfigError("genotype lacks the " + msm_name(m.kind) + " module required by config");

    ModelState state = init_model(cfg, layout);
    const AnomalyCfg acfg = anomaly_config(cfg);
    const int steps =
        std::max(1, static_cast<int>(train_pool.size() / static_cast<size_t>(cfg.batch)));
    const Rng stream(cfg.seed, "train.batch");

    for (int epoch = 0; epoch < cfg.epochs_train; ++epoch) {
        double epoch_loss = 0.0;
        for (int step = 0; step < steps; ++step) {
            Rng r = stream.child("step", static_cast<uint64_t>(step));
            const auto batch = draw_batch(train_pool, r, cfg.batch, acfg);
            Graph g;
            Binder binder(g);
            const Graph::NodeId loss =
                build_pipeline_batch_loss(g, binder, state, layout, cfg, batch, &genotype);
            const double value = g.value(loss)[0];
            if (!std::isfinite(value))
                throw DivergenceError("non-finite loss at step " + std::to_string(step) +
                                      " of epoch " + std::to_string(epoch));
            g.backward(loss);
            adam_step(state.weights, state.opt_w, collect_grads(g, binder, state.weights), cfg.lr_w);
            epoch_loss += value;
        }
        if (epoch_losses) epoch_losses->push_back(epoch_loss / steps);
    }
    return state;
}

// --- evaluation ------------------------------------------------------------

std::string metrics_report_json(const MetricsReport& r) {
    nlohmann::ordered_json j{{"i_auroc", r.i_auroc},   {"p_auroc", r.p_auroc},
                             {"aupro", r.aupro},       {"config_hash", r.config_hash},
                             {"seed", r.seed},         {"wallclock_s", r.wallclock_s}};
    return j.dump(2) + "\n";
}

Tensor predict_map(const SearchConfig& cfg, const MfnLayout& layout, const ParamSet& weights,
                   const Genotype& genotype, const Sample& sample) {
    Graph g;
    Binder binder(g);
    const Graph::NodeId in_a = g.leaf(sample.a);
    const Graph::NodeId in_b = g.leaf(sample.b);
    const MrnFeatures fa = mrn_forward(g, binder, weights, "a", in_a, cfg.channels);
    const MrnFeatures fb = mrn_forward(g, binder, weights, "b", in_b, cfg.channels);
    const MfnResult mfn = mfn_forward_discrete(g, binder, weights, genotype, layout,
                                               to_feature_nodes(fa), to_feature_nodes(fb));
    const Graph::NodeId map = adn_forward(g, binder, weights, mfn.result, fa.dec_hidden,
                                          fb.dec_hidden, cfg.image_size, cfg.image_size);
    return g.value(map);
}

MetricsReport evaluate_with(const SearchConfig& cfg,
                            const std::function<Tensor(const Sample&)>& map_fn,
                            const std::vector<Sample>& testset) {
    const auto t0 = std::chrono::steady_clock::now();
    ScoredSet image_scores;
    std::vector<Tensor> maps;
    std::vector<Mask> masks;
    for (const Sample& s : testset) {
        Tensor map = map_fn(s);
        image_scores.scores.push_back(image_score(map));
        image_scores.labels.push_back(s.label);
        maps.push_back(std::move(map));
        masks.push_back(s.mask);
    }
    MetricsReport rep;
    rep.i_auroc = auroc(image_scores);
    rep.p_auroc = p_auroc(maps, masks);
    rep.aupro = aupro(maps, masks, cfg.fpr_cap);
    rep.config_hash = config_hash(cfg);
    rep.seed = cfg.seed;
    rep.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

MetricsReport evaluate(const SearchConfig& cfg, const ParamSet& weights, const Genotype& genotype,
                       const std::vector<Sample>& testset) {
    const MfnLayout layout = layout_from_config(cfg);
    return evaluate_with(
        cfg, [&](const Sample& s) { return predict_map(cfg, layout, weights, genotype, s); },
        testset);
}

// --- experiment drivers ------------------------------------------------------

MetricsReport ablate_msm(const SearchConfig& cfg, const Benchmark& bench,
                         const std::vector<MsmKind>& subset) {
    if (subset.empty()) throw std::invalid_argument("ablation subset must be non-empty");
    SearchConfig sub_cfg = cfg;
    sub_cfg.modules = subset;
    const auto t0 = std::chrono::steady_clock::now();
    const SearchResult search = bilevel_search(sub_cfg, bench.train);
    const ModelState trained = train_fixed(search.genotype, sub_cfg, bench.train);
    MetricsReport rep = evaluate(sub_cfg, trained.weights, search.genotype, bench.test);
    rep.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

std::vector<std::pair<std::vector<MsmKind>, MetricsReport>> ablate_sweep(const SearchConfig& cfg,
                                                                         int workers) {
    const std::vector<std::vector<MsmKind>> subsets{
        {MsmKind::Early},
        {MsmKind::Middle},
        {MsmKind::Late},
        {MsmKind::Early, MsmKind::Middle},
        {MsmKind::Early, MsmKind::Late},
        {MsmKind::Middle, MsmKind::Late},
        {MsmKind::Early, MsmKind::Middle, MsmKind::Late}};

    const Benchmark bench = make_benchmark(cfg);
    std::vector<std::pair<std::vector<MsmKind>, MetricsReport>> rows(subsets.size());
    std::atomic<size_t> next{0};
    auto work = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= subsets.size()) return;
            rows[i] = {subsets[i], ablate_msm(cfg, bench, subsets[i])};
        }
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(subsets.size())));
    if (n == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return rows;
}

std::string ablation_csv(
    const std::vector<std::pair<std::vector<MsmKind>, MetricsReport>>& rows) {
    char buf[160];
    std::string out = "early,middle,late,i_auroc,p_auroc,aupro\n";
    for (const auto& [subset, rep] : rows) {
        auto in = [&](MsmKind k) {
            return std::find(subset.begin(), subset.end(), k) != subset.end() ? 1 : 0;
        };
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.6f,%.6f,%.6f\n", in(MsmKind::Early),
                      in(MsmKind::Middle), in(MsmKind::Late), rep.i_auroc, rep.p_auroc, rep.aupro);
        out += buf;
    }
    return out;
}

MetricsReport fewshot(const SearchConfig& cfg, const Benchmark& bench, const Genotype& genotype,
                      int k) {
    const int n = static_cast<int>(bench.train.size());
    if (k < 1 || k > n)
        throw std::invalid_argument("few-shot k = " + std::to_string(k) +
                                    " exceeds the training pool of " + std::to_string(n));
    std::vector<Sample> subset;
    if (k == n) {
        subset = bench.train;
    } else {
        // partial Fisher-Yates over the index range
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        Rng r = Rng(cfg.seed, "fewshot.subset").child("k", static_cast<uint64_t>(k));
        for (int i = 0; i < k; ++i) {
            const int j = i + static_cast<int>(r.uniform_int(static_cast<uint64_t>(n - i)));
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        for (int i = 0; i < k; ++i) subset.push_back(bench.train[static_cast<size_t>(idx[i])]);
    }
    const ModelState trained = train_fixed(genotype, cfg, subset);
    return evaluate(cfg, trained.weights, genotype, bench.test);
}

// --- checkpointing -----------------------------------------------------------

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& f, uint64_t v) {
    put_u32(f, static_cast<uint32_t>(v));
    put_u32(f, static_cast<uint32_t>(v >> 32));
}

uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw ParseError("checkpoint truncated");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t get_u64(std::ifstream& f) {
    const uint64_t lo = get_u32(f);
    const uint64_t hi = get_u32(f);
    return lo | hi << 32;
}

void put_string(std::ofstream& f, const std::string& s) {
    put_u32(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& f) {
    const uint32_t n = get_u32(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    if (!f) throw ParseError("checkpoint truncated");
    return s;
}

void put_tensor(std::ofstream& f, const Tensor& t) {
    put_u32(f, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(f, static_cast<uint32_t>(d));
    for (double x : t.data) {
        uint64_t bits;
        std::memcpy(&bits, &x, 8);
        put_u64(f, bits);
    }
}

Tensor get_tensor(std::ifstream& f) {
    const uint32_t rank = get_u32(f);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u32(f));
    Tensor t(shape);
    for (auto& x : t.data) {
        const uint64_t bits = get_u64(f);
        std::memcpy(&x, &bits, 8);
    }
    return t;
}

void put_param_set(std::ofstream& f, const ParamSet& p) {
    put_u32(f, static_cast<uint32_t>(p.items.size()));
    for (const auto& [name, t] : p.items) {
        put_string(f, name);
        put_tensor(f, t);
    }
}

ParamSet get_param_set(std::ifstream& f) {
    ParamSet p;
    const uint32_t n = get_u32(f);
    for (uint32_t i = 0; i < n; ++i) {
        const std::string name = get_string(f);
        p.add(name, get_tensor(f));
    }
    return p;
}

void put_adam(std::ofstream& f, const AdamState& a) {
    put_u64(f, static_cast<uint64_t>(a.t));
    put_u32(f, static_cast<uint32_t>(a.m.size()));
    for (size_t i = 0; i < a.m.size(); ++i) {
        put_tensor(f, a.m[i]);
        put_tensor(f, a.v[i]);
    }
}

AdamState get_adam(std::ifstream& f) {
    AdamState a;
    a.t = static_cast<long long>(get_u64(f));
    const uint32_t n = get_u32(f);
    for (uint32_t i = 0; i < n; ++i) {
        a.m.push_back(get_tensor(f));
        a.v.push_back(get_tensor(f));
    }
    return a;
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write("ADNM", 4);
    put_u32(f, 1);
    put_u64(f, ckpt.seed);
    put_string(f, ckpt.config_hash);
    put_string(f, serialize_genotype(ckpt.genotype));
    put_param_set(f, ckpt.state.weights);
    put_param_set(f, ckpt.state.arch);
    put_adam(f, ckpt.state.opt_w);
    put_adam(f, ckpt.state.opt_arch);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "ADNM", 4) != 0) throw ParseError("checkpoint has wrong magic");
    const uint32_t version = get_u32(f);
    if (version != 1) throw ParseError("unsupported checkpoint version " + std::to_string(version));
    ModelCheckpoint ckpt;
    ckpt.seed = get_u64(f);
    ckpt.config_hash = get_string(f);
    ckpt.genotype = parse_genotype(get_string(f));
    ckpt.state.weights = get_param_set(f);
    ckpt.state.arch = get_param_set(f);
    ckpt.state.opt_w = get_adam(f);
    ckpt.state.opt_arch = get_adam(f);
    return ckpt;
}

// --- planted-structure recovery ----------------------------------------------

namespace {

// Frozen per-sample feature tensors plus the teacher's target output.
struct PlantedInstance {
    std::array<Tensor, 5> feat_a;  // early, mid1..3, late
    std::array<Tensor, 5> feat_b;
    Tensor target;
};

ModalityFeatureNodes bind_planted_features(Graph& g, const std::array<Tensor, 5>& f) {
    ModalityFeatureNodes nodes;
    nodes.early = g.leaf(f[0]);
    nodes.middle = {g.leaf(f[1]), g.leaf(f[2]), g.leaf(f[3])};
    nodes.late = g.leaf(f[4]);
    return nodes;
}

}  // namespace

PlantedOutcome run_planted_recovery(uint64_t seed) {
    SearchConfig cfg;
    cfg.seed = seed;
    cfg.channels = 4;
    cfg.k_nodes = 1;
    cfg.image_size = 32;
    cfg.batch = 8;
    cfg.epochs_search = 60;
    cfg.lr_w = 0.02;
    cfg.lr_arch = 0.05;
    const int n_samples = 96;
    const MfnLayout layout = layout_from_config(cfg);

    // teacher: a frozen network whose labels use guided attention at the late
    // node over (a.late, middle output); modality b enters only via b.mid2
    ModelState teacher;
    {
        SearchConfig tc = cfg;
        tc.seed = Rng(seed, "planted.teacher").next_u64();
        teacher = init_model(tc, layout);
        Tensor& gate = teacher.weights.at("msm.late.node0.guided_attention.wg");
        for (int i = 0; i < gate.numel(); ++i) gate[i] *= 4.0;  // make the gate vary strongly
    }
    Genotype teacher_geno;
    {
        GenotypeMsm early{{0, 1}, {GenotypeNode{FusionOpKind::WeightedSum, {0, 1}}}};
        GenotypeMsm middle{{0, 4}, {GenotypeNode{FusionOpKind::WeightedSum, {0, 1}}}};
        GenotypeMsm late{{0, 3}, {GenotypeNode{FusionOpKind::GuidedAttention, {0, 1}}}};
        teacher_geno.msms = {{MsmKind::Early, early}, {MsmKind::Middle, middle}, {MsmKind::Late, late}};
    }

    // freeze the encoder: precompute pool features and teacher targets
    const BenchCfg bench{cfg.image_size, cfg.image_size, 3, 1};
    std::vector<PlantedInstance> data;
    const Rng data_base(seed, "planted.data");
    for (int i = 0; i < n_samples; ++i) {
        Rng r = data_base.child("sample", static_cast<uint64_t>(i));
        Sample s = make_normal_sample(bench, r);
        // high-frequency texture decorrelates the pooled and subsampled
        // routes, so only the planted wiring can reach zero loss
        for (auto* t : {&s.a, &s.b})
            for (int p = 0; p < t->numel(); ++p)
                (*t)[p] = std::clamp((*t)[p] + 0.35 * (r.uniform() - 0.5), 0.0, 1.0);
        Graph g;
        Binder binder(g);
        const MrnFeatures fa =
            mrn_forward(g, binder, teacher.weights, "a", g.leaf(s.a), cfg.channels);
        const MrnFeatures fb =
            mrn_forward(g, binder, teacher.weights, "b", g.leaf(s.b), cfg.channels);
        PlantedInstance inst;
        inst.feat_a = {g.value(fa.early), g.value(fa.middle[0]), g.value(fa.middle[1]),
                       g.value(fa.middle[2]), g.value(fa.late)};
        inst.feat_b = {g.value(fb.early), g.value(fb.middle[0]), g.value(fb.middle[1]),
                       g.value(fb.middle[2]), g.value(fb.late)};
        const MfnResult teacher_out = mfn_forward_discrete(
            g, binder, teacher.weights, teacher_geno, layout, to_feature_nodes(fa),
            to_feature_nodes(fb));
        inst.target = g.value(teacher_out.result);
        data.push_back(std::move(inst));
    }

    // student: fresh fusion weights and architecture over the frozen features
    ModelState student;
    {
        Rng wr(seed, "planted.student.w");
        for (const auto& m : layout.msms) init_msm_weights(m, student.weights, wr);
        Rng ar(seed, "planted.student.arch");
        for (const auto& m : layout.msms) init_msm_arch(m, student.arch, ar);
    }

    const size_t half = data.size() / 2;
    const int steps = std::max(1, static_cast<int>(half / static_cast<size_t>(cfg.batch)));
    const Rng w_stream(seed, "planted.batch.w");
    const Rng a_stream(seed, "planted.batch.arch");

    auto build = [&](Graph& g, Binder& binder, const ModelState& st, Phase phase, int step) {
        const bool weight_phase = phase == Phase::WeightStep;
        Rng r = (weight_phase ? w_stream : a_stream).child("step", static_cast<uint64_t>(step));
        const size_t lo = weight_phase ? 0 : half;
        const size_t n = weight_phase ? half : data.size() - half;
        Graph::NodeId acc = -1;
        for (int i = 0; i < cfg.batch; ++i) {
            const PlantedInstance& inst = data[lo + static_cast<size_t>(r.uniform_int(n))];
            const auto mod_a = bind_planted_features(g, inst.feat_a);
            const auto mod_b = bind_planted_features(g, inst.feat_b);
            const MfnResult out =
                mfn_forward_relaxed(g, binder, st.weights, st.arch, layout, mod_a, mod_b);
            const Graph::NodeId res = g.sub(out.result, g.leaf(inst.target));
            const Graph::NodeId loss = g.mean(g.mul(res, res));
            acc = acc < 0 ? loss : g.add(acc, loss);
        }
        return g.affine(acc, 1.0 / cfg.batch, 0.0);
    };

    run_bilevel_loop(cfg, student, build, steps, {});

    PlantedOutcome outcome;
    outcome.genotype = discretize(layout, student.arch, seed, "planted");
    const GenotypeMsm& late = outcome.genotype.get(MsmKind::Late);
    const int middle_out_index = 3;  // [a.late, b.late, early_out, middle_out]
    outcome.picked_middle_output =
        late.inputs[0] == middle_out_index || late.inputs[1] == middle_out_index;
    outcome.picked_planted_op = late.nodes[0].op == FusionOpKind::GuidedAttention;
    outcome.recovered = outcome.picked_middle_output && outcome.picked_planted_op;
    return outcome;
}

}  // namespace fusenas
