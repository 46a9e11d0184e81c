#include "fusenas/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "doctest.h"
#include "fusenas/config.hpp"
#include "fusenas/errors.hpp"
#include "fusenas/genotype.hpp"

using namespace fusenas;

namespace {

int run_cli(std::initializer_list<const char*> args) {
    std::vector<const char*> argv{"fusenas"};
    argv.insert(argv.end(), args.begin(), args.end());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

const char* kTinyCfg =
    "# tiny run\n"
    "epochs_search = 2\n"
    "epochs_train = 2\n"
    "batch = 2\n"
    "k_nodes = 1\n"
    "channels = 2\n"
    "image_size = 16\n"
    "n_train = 8\n"
    "n_test = 8\n";

void write_tiny_cfg(const std::string& path) {
    std::ofstream out(path);
    out << kTinyCfg;
}

}  // namespace

TEST_CASE("config parsing: comments, overrides, unknown keys") {
    TempFile cfg_file("/tmp/fusenas_cli_cfg.txt");
    write_tiny_cfg(cfg_file.path);

    SearchConfig cfg;
    load_config_file(cfg, cfg_file.path);
    CHECK(cfg.epochs_search == 2);
    CHECK(cfg.image_size == 16);
    CHECK(cfg.lambda_rec == 1.0);  // default survives

    apply_config_entry(cfg, "lr_w", "0.125");
    CHECK(cfg.lr_w == 0.125);

    CHECK_THROWS_AS(apply_config_entry(cfg, "bogus_key", "1"), ConfigError);
    CHECK_THROWS_AS(apply_config_entry(cfg, "batch", "two"), ConfigError);

    SearchConfig bad;
    bad.image_size = 20;
    CHECK_THROWS_AS(validate_config(bad), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
    SearchConfig a, b;
    CHECK(config_hash(a) == config_hash(b));
    b.batch = 16;
    CHECK(config_hash(a) != config_hash(b));
    // seed is not part of the config surface
    SearchConfig c;
    c.seed = 999;
    CHECK(config_hash(a) == config_hash(c));
}

TEST_CASE("unknown subcommands and flags exit with code 2") {
    CHECK(run_cli({"--bogus"}) == 2);
    CHECK(run_cli({"definitely-not-a-subcommand"}) == 2);
    CHECK(run_cli({"search"}) == 2);  // missing required --out
}

TEST_CASE("search emits a loadable genotype, byte-identical across runs") {
    TempFile cfg_file("/tmp/fusenas_cli_cfg2.txt");
    write_tiny_cfg(cfg_file.path);
    TempFile g1("/tmp/fusenas_cli_g1.json");
    TempFile g2("/tmp/fusenas_cli_g2.json");

    CHECK(run_cli({"search", "--config", cfg_file.path.c_str(), "--seed", "7", "--out",
                   g1.path.c_str()}) == 0);
    CHECK(run_cli({"search", "--config", cfg_file.path.c_str(), "--seed", "7", "--out",
                   g2.path.c_str()}) == 0);
    CHECK(slurp(g1.path) == slurp(g2.path));

    const Genotype geno = load_genotype_file(g1.path);
    CHECK(geno.seed == 7);
    CHECK(serialize_genotype(geno) == slurp(g1.path));
}

TEST_CASE("train then eval: reports reproduce metrics digit for digit") {
    TempFile cfg_file("/tmp/fusenas_cli_cfg3.txt");
    write_tiny_cfg(cfg_file.path);
    TempFile geno("/tmp/fusenas_cli_g3.json");
    TempFile model("/tmp/fusenas_cli_m3.bin");
    TempFile r1("/tmp/fusenas_cli_r1.json");
    TempFile r2("/tmp/fusenas_cli_r2.json");

    REQUIRE(run_cli({"search", "--config", cfg_file.path.c_str(), "--seed", "3", "--out",
                     geno.path.c_str()}) == 0);
    REQUIRE(run_cli({"train", "--config", cfg_file.path.c_str(), "--seed", "3", "--genotype",
                     geno.path.c_str(), "--out", model.path.c_str()}) == 0);
    REQUIRE(run_cli({"eval", "--config", cfg_file.path.c_str(), "--seed", "3", "--model",
                     model.path.c_str(), "--report", r1.path.c_str()}) == 0);
    REQUIRE(run_cli({"eval", "--config", cfg_file.path.c_str(), "--seed", "3", "--model",
                     model.path.c_str(), "--report", r2.path.c_str()}) == 0);

    // identical except the wallclock line
    auto strip_wallclock = [](std::string s) {
        const size_t at = s.find("wallclock_s");
        REQUIRE(at != std::string::npos);
        return s.substr(0, at);
    };
    CHECK(strip_wallclock(slurp(r1.path)) == strip_wallclock(slurp(r2.path)));

    // eval under a different config is refused
    TempFile r3("/tmp/fusenas_cli_r3.json");
    CHECK(run_cli({"eval", "--config", cfg_file.path.c_str(), "--set", "batch=4", "--seed", "3",
                   "--model", model.path.c_str(), "--report", r3.path.c_str()}) == 2);
}

TEST_CASE("truncated genotype file exits 2") {
    TempFile cfg_file("/tmp/fusenas_cli_cfg4.txt");
    write_tiny_cfg(cfg_file.path);
    TempFile geno("/tmp/fusenas_cli_g4.json");
    {
        std::ofstream out(geno.path);
        out << "{\"msm_early\": {\"inputs\": [0, 1],";
    }
    TempFile model("/tmp/fusenas_cli_m4.bin");
    CHECK(run_cli({"train", "--config", cfg_file.path.c_str(), "--genotype", geno.path.c_str(),
                   "--out", model.path.c_str()}) == 2);
}

TEST_CASE("hand-edited op strings: exact lowercase accepted, padded rejected") {
    TempFile cfg_file("/tmp/fusenas_cli_cfg5.txt");
    write_tiny_cfg(cfg_file.path);
    TempFile geno("/tmp/fusenas_cli_g5.json");

    REQUIRE(run_cli({"search", "--config", cfg_file.path.c_str(), "--seed", "5", "--out",
                     geno.path.c_str()}) == 0);
    std::string text = slurp(geno.path);
    const std::string op_key = "\"op\": \"";
    const size_t at = text.find(op_key);
    REQUIRE(at != std::string::npos);
    const size_t end = text.find('"', at + op_key.size());
    text.replace(at + op_key.size(), end - (at + op_key.size()), "glu");
    {
        std::ofstream out(geno.path);
        out << text;
    }
    CHECK(load_genotype_file(geno.path).msms[0].second.nodes[0].op == FusionOpKind::Glu);

    text.replace(at + op_key.size(), 3, "GLU ");
    {
        std::ofstream out(geno.path);
        out << text;
    }
    CHECK_THROWS_AS(load_genotype_file(geno.path), ParseError);
}

TEST_CASE("dst-verify subcommand writes a clean report") {
    TempFile rep("/tmp/fusenas_cli_dst.json");
    CHECK(run_cli({"dst-verify", "--trials", "500", "--seed", "1", "--out", rep.path.c_str()}) == 0);
    const std::string text = slurp(rep.path);
    CHECK(text.find("\"trials\": 500") != std::string::npos);
    CHECK(text.find("\"prop1_violations\": 0") != std::string::npos);
    CHECK(text.find("\"bound_violations\": 0") != std::string::npos);
}

TEST_CASE("fewshot subcommand runs with k and 'full'") {
    TempFile cfg_file("/tmp/fusenas_cli_cfg6.txt");
    write_tiny_cfg(cfg_file.path);
    TempFile geno("/tmp/fusenas_cli_g6.json");
    TempFile rep("/tmp/fusenas_cli_f6.json");

    REQUIRE(run_cli({"search", "--config", cfg_file.path.c_str(), "--seed", "2", "--out",
                     geno.path.c_str()}) == 0);
    CHECK(run_cli({"fewshot", "--config", cfg_file.path.c_str(), "--seed", "2", "--genotype",
                   geno.path.c_str(), "--k", "4", "--report", rep.path.c_str()}) == 0);
    CHECK(slurp(rep.path).find("\"i_auroc\"") != std::string::npos);
    CHECK(run_cli({"fewshot", "--config", cfg_file.path.c_str(), "--seed", "2", "--genotype",
                   geno.path.c_str(), "--k", "full", "--report", rep.path.c_str()}) == 0);
    CHECK(run_cli({"fewshot", "--config", cfg_file.path.c_str(), "--seed", "2", "--genotype",
                   geno.path.c_str(), "--k", "banana", "--report", rep.path.c_str()}) == 2);
}
