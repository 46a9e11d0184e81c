#include "fusenas/cli.hpp"

#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fusenas/config.hpp"
#include "fusenas/dst.hpp"
#include "fusenas/engine.hpp"
#include "fusenas/errors.hpp"
#include "json.hpp"

namespace fusenas::cli {

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "config file (key = value lines, '#' comments)");
    cmd->add_option("--set", opts.sets, "override one config key, e.g. --set batch=4")
        ->expected(-1);
    cmd->add_option("--seed", opts.seed, "root random seed");
}

SearchConfig build_config(const CommonOpts& opts) {
    SearchConfig cfg;
    if (!opts.config_path.empty()) load_config_file(cfg, opts.config_path);
    for (const std::string& kv : opts.sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.seed = opts.seed;
    validate_config(cfg);
    return cfg;
}

void echo_config(const SearchConfig& cfg) {
    std::cout << "# effective config (hash " << config_hash(cfg) << ", seed " << cfg.seed << ")\n"
              << config_canonical(cfg);
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string history_json(const SearchHistory& h) {
    nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
    for (const EpochStats& e : h.epochs) {
        nlohmann::ordered_json choices = nlohmann::ordered_json::object();
        for (const auto& [name, idx] : e.choices) choices[name] = idx;
        epochs.push_back(nlohmann::ordered_json{
            {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"choices", choices}});
    }
    return nlohmann::ordered_json{{"epochs", epochs}}.dump(2) + "\n";
}

int run_search(const CommonOpts& opts, const std::string& out_path,
               const std::string& history_path) {
    const SearchConfig cfg = build_config(opts);
    echo_config(cfg);
    const Benchmark bench = make_benchmark(cfg);
    const SearchResult res = bilevel_search(cfg, bench.train);
    write_file(out_path, serialize_genotype(res.genotype));
    if (!history_path.empty()) write_file(history_path, history_json(res.history));
    std::cout << "genotype written to " << out_path << "\n";
    return 0;
}

int run_train(const CommonOpts& opts, const std::string& genotype_path,
              const std::string& out_path) {
    const SearchConfig cfg = build_config(opts);
    echo_config(cfg);
    const Genotype geno = load_genotype_file(genotype_path);
    const Benchmark bench = make_benchmark(cfg);
    ModelCheckpoint ckpt;
    ckpt.seed = cfg.seed;
    ckpt.config_hash = config_hash(cfg);
    ckpt.genotype = geno;
    ckpt.state = train_fixed(geno, cfg, bench.train);
    save_checkpoint(ckpt, out_path);
    std::cout << "model written to " << out_path << "\n";
    return 0;
}

int run_eval(const CommonOpts& opts, const std::string& model_path,
             const std::string& report_path) {
    const SearchConfig cfg = build_config(opts);
    echo_config(cfg);
    const ModelCheckpoint ckpt = load_checkpoint(model_path);
    if (ckpt.config_hash != config_hash(cfg))
        throw ConfigError("checkpoint was trained under config hash " + ckpt.config_hash +
                          ", current config hashes to " + config_hash(cfg));
    const Benchmark bench = make_benchmark(cfg);
    const MetricsReport rep = evaluate(cfg, ckpt.state.weights, ckpt.genotype, bench.test);
    write_file(report_path, metrics_report_json(rep));
    std::cout << metrics_report_json(rep);
    return 0;
}

int run_dst_verify(uint64_t seed, long long trials, const std::string& out_path) {
    if (trials < 1) throw ConfigError("--trials must be positive");
    const DstVerifyReport rep = dst_verify(trials, seed);
    const std::string text = dst_report_json(rep);
    if (!out_path.empty()) write_file(out_path, text);
    std::cout << text;
    return rep.prop1_violations == 0 && rep.bound_violations == 0 ? 0 : 1;
}

int run_ablate(const CommonOpts& opts, const std::string& out_path, int workers) {
    const SearchConfig cfg = build_config(opts);
    echo_config(cfg);
    if (workers < 1) workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    const auto rows = ablate_sweep(cfg, workers);
    write_file(out_path, ablation_csv(rows));
    std::cout << ablation_csv(rows);
    return 0;
}

int run_fewshot(const CommonOpts& opts, const std::string& genotype_path, const std::string& k_arg,
                const std::string& report_path) {
    const SearchConfig cfg = build_config(opts);
    echo_config(cfg);
    const Genotype geno = load_genotype_file(genotype_path);
    const Benchmark bench = make_benchmark(cfg);
    int k = 0;
    if (k_arg == "full") {
        k = cfg.n_train;
    } else {
        try {
            size_t pos = 0;
            k = std::stoi(k_arg, &pos);
            if (pos != k_arg.size()) throw std::invalid_argument("trailing");
        } catch (...) {
            throw ConfigError("--k expects a positive integer or 'full', got '" + k_arg + "'");
        }
    }
    const MetricsReport rep = fewshot(cfg, bench, geno, k);
    write_file(report_path, metrics_report_json(rep));
    std::cout << metrics_report_json(rep);
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"two-level fusion architecture search on a synthetic anomaly benchmark"};
    app.require_subcommand(1);

    CommonOpts search_opts, train_opts, eval_opts, ablate_opts, fewshot_opts;
    std::string search_out, search_history;
    std::string train_genotype, train_out;
    std::string eval_model, eval_report;
    uint64_t dst_seed = 0;
    long long dst_trials = 100000;
    std::string dst_out;
    std::string ablate_out;
    int ablate_workers = 0;
    std::string fewshot_genotype, fewshot_k = "full", fewshot_report;

    CLI::App* search = app.add_subcommand("search", "bilevel architecture search");
    add_common(search, search_opts);
    search->add_option("--out", search_out, "genotype JSON output")->required();
    search->add_option("--history", search_history, "per-epoch search history JSON");

    CLI::App* train = app.add_subcommand("train", "train a fixed architecture");
    add_common(train, train_opts);
    train->add_option("--genotype", train_genotype, "genotype JSON input")->required();
    train->add_option("--out", train_out, "model checkpoint output")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a trained model");
    add_common(eval, eval_opts);
    eval->add_option("--model", eval_model, "model checkpoint input")->required();
    eval->add_option("--report", eval_report, "metrics report JSON output")->required();

    CLI::App* dst = app.add_subcommand("dst-verify", "Monte-Carlo certification of the evidence propositions");
    dst->add_option("--trials", dst_trials, "number of Monte-Carlo trials");
    dst->add_option("--seed", dst_seed, "root random seed");
    dst->add_option("--out", dst_out, "report JSON output");

    CLI::App* ablate = app.add_subcommand("ablate", "module-subset ablation sweep");
    add_common(ablate, ablate_opts);
    ablate->add_option("--out", ablate_out, "ablation CSV output")->required();
    ablate->add_option("--workers", ablate_workers, "worker threads (default: hardware)");

    CLI::App* fewshot_cmd = app.add_subcommand("fewshot", "k-shot training and evaluation");
    add_common(fewshot_cmd, fewshot_opts);
    fewshot_cmd->add_option("--genotype", fewshot_genotype, "genotype JSON input")->required();
    fewshot_cmd->add_option("--k", fewshot_k, "shot count or 'full'");
    fewshot_cmd->add_option("--report", fewshot_report, "metrics report JSON output")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (search->parsed()) return run_search(search_opts, search_out, search_history);
        if (train->parsed()) return run_train(train_opts, train_genotype, train_out);
        if (eval->parsed()) return run_eval(eval_opts, eval_model, eval_report);
        if (dst->parsed()) return run_dst_verify(dst_seed, dst_trials, dst_out);
        if (ablate->parsed()) return run_ablate(ablate_opts, ablate_out, ablate_workers);
        if (fewshot_cmd->parsed())
            return run_fewshot(fewshot_opts, fewshot_genotype, fewshot_k, fewshot_report);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace fusenas::cli
