#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fnbg/experiment.hpp"

using namespace fnbg;

namespace {

const fs::path kCli = FNBG_CLI_PATH;
const fs::path kPresets = FNBG_PRESET_DIR;

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("fnbg_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    std::string cmd = kCli.string() + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json tiny_xor_config(const fs::path& out) {
    return {{"data", {{"kind", "xor"}, {"xor", {{"train_size", 200}, {"test_size", 40}, {"seed", 1}}}}},
            {"model", {{"widths", {2, 2, 1}}, {"hidden", "sigmoid"}, {"output", "sigmoid"}}},
            {"blocking", {{"scheme", "node"}}},
            {"proposal", {{"variance", 0.04}}},
            {"chain", {{"total_iterations", 120}, {"burnin", 20}, {"batch_size", 50}, {"seed", 4}, {"retain_last", 50}}},
            {"run", {{"chains", 2}, {"output", out.string()}}}};
}

}  // namespace

TEST(Cli, SimulateXorIsDeterministic) {
    auto dir = scratch("sim");
    ASSERT_EQ(run("simulate-xor --out " + (dir / "a").string() + " --seed 9"), 0);
    ASSERT_EQ(run("simulate-xor --out " + (dir / "b").string() + " --seed 9"), 0);
    EXPECT_EQ(slurp(dir / "a/train.csv"), slurp(dir / "b/train.csv"));
    auto train = read_csv_file(dir / "a/train.csv");
    EXPECT_EQ(train.size(), 5000u);
    EXPECT_EQ(read_csv_file(dir / "a/test.csv").size(), 1200u);
    auto meta = read_json_file(dir / "a/xor_meta.json");
    EXPECT_EQ(meta.at("seed"), 9);
    EXPECT_TRUE(meta.contains("noise_law"));
}

TEST(Cli, ZeroNoiseGivesCornersOnly) {
    auto dir = scratch("corners");
    ASSERT_EQ(run("simulate-xor --out " + dir.string() + " --noise-width 0 --train-size 8 --test-size 4"), 0);
    for (double v : read_csv_file(dir / "train.csv").inputs) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Cli, ExitCodesFollowErrorCategory) {
    auto dir = scratch("codes");
    EXPECT_EQ(run("run-chain " + (dir / "missing.json").string()), 5);
    {
        std::ofstream bad(dir / "bad.json");
        bad << R"({"model": {"widths": [2]}, "proposal": {"variance": 0.1}, "chain": {"total_iterations": 5}, "run": {"output": "x"}})";
    }
    EXPECT_EQ(run("run-chain " + (dir / "bad.json").string()), 2);
    {
        std::ofstream typo(dir / "typo.json");
        auto j = tiny_xor_config(dir / "out");
        j["chian"] = json::object();
        typo << j.dump();
    }
    EXPECT_EQ(run("run-chain " + (dir / "typo.json").string()), 2);
    EXPECT_EQ(run("simulate-xor --out " + dir.string() + " --noise-width 0.7"), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    {
        std::ofstream junk(dir / "junk.idx");
        junk << "not an idx file at all";
    }
    EXPECT_EQ(run("augment --images " + (dir / "junk.idx").string() + " --labels " + (dir / "junk.idx").string() +
                  " --transform blur --out-images " + (dir / "o1").string() + " --out-labels " + (dir / "o2").string()),
              3);
    EXPECT_EQ(run("predict --trace " + (dir / "nowhere").string()), 5);
}

TEST(Cli, PipelineRunPredictDiagnose) {
    auto dir = scratch("pipeline");
    {
        std::ofstream os(dir / "cfg.json");
        os << tiny_xor_config("runs/tiny").dump(1);
    }
    ASSERT_EQ(run("run-chain " + (dir / "cfg.json").string()), 0);
    auto runs = dir / "runs/tiny";
    ASSERT_TRUE(fs::exists(runs / "chain_00/samples.bin"));
    ASSERT_TRUE(fs::exists(runs / "chain_01/trace.json"));
    auto summary = read_json_file(runs / "run_summary.json");
    EXPECT_EQ(summary.at("chains").size(), 2u);
    EXPECT_EQ(summary.at("config").at("chain").at("seed"), 4);

    ASSERT_EQ(run("predict --trace " + runs.string() + " --last 10 --last 50 --out " + (dir / "pred").string()), 0);
    auto acc = slurp(dir / "pred/accuracy.csv");
    EXPECT_EQ(acc.substr(0, acc.find('\n')), "chain,last_k,accuracy,uncertain_fraction");
    EXPECT_EQ(std::count(acc.begin(), acc.end(), '\n'), 5);
    EXPECT_TRUE(fs::exists(dir / "pred/chain_01_last50_predictions.csv"));
    EXPECT_EQ(run("predict --trace " + runs.string() + " --last 51"), 2);

    ASSERT_EQ(run("diagnostics --trace " + runs.string() + " --out " + (dir / "diag").string() +
                  " --level block --level node --level layer --traceplot 0 --thin 5 --volatility --draws 5"),
              0);
    for (auto f : {"rates_block.csv", "summary_node.csv", "fig5_layer_rates.csv", "fig6_volatility.csv",
                   "tuning_report.csv", "traceplot_chain_00_p0.csv", "diagnostics.json"})
        EXPECT_TRUE(fs::exists(dir / "diag" / f)) << f;
    auto rates = slurp(dir / "diag/fig5_layer_rates.csv");
    EXPECT_EQ(std::count(rates.begin(), rates.end(), '\n'), 3);
}

TEST(Cli, RunOverridesAreEchoed) {
    auto dir = scratch("override");
    {
        std::ofstream os(dir / "cfg.json");
        os << tiny_xor_config(dir / "ignored").dump();
    }
    ASSERT_EQ(run("run-chain " + (dir / "cfg.json").string() + " --output " + (dir / "o").string() +
                  " --chains 1 --seed 77 --batch-size full --total-iterations 30 --burnin 0 --retain-last 5"),
              0);
    auto tr = load_trace(dir / "o/chain_00");
    EXPECT_EQ(tr.config.seed, 77u);
    EXPECT_TRUE(tr.config.full_batch());
    EXPECT_EQ(tr.retained, 5u);
    EXPECT_FALSE(fs::exists(dir / "ignored"));
}

TEST(Cli, InversionTwiceIsByteIdentical) {
    auto dir = scratch("augment");
    Dataset d;
    d.features = 16;
    d.image_rows = d.image_cols = 4;
    for (int i = 0; i < 3 * 16; ++i) d.inputs.push_back((i * 37) % 256);
    d.labels = {1, 2, 3};
    write_idx(dir / "img.idx", dir / "lab.idx", d);
    auto inv = [&](const std::string& in, const std::string& out) {
        return run("augment --images " + (dir / (in + ".idx")).string() + " --labels " + (dir / "lab.idx").string() +
                   " --transform inversion --invert-probability 1 --out-images " + (dir / (out + ".idx")).string() +
                   " --out-labels " + (dir / (out + "_lab.idx")).string() + " --grid " + (dir / (out + ".csv")).string());
    };
    ASSERT_EQ(inv("img", "once"), 0);
    ASSERT_EQ(inv("once", "twice"), 0);
    EXPECT_EQ(slurp(dir / "twice.idx"), slurp(dir / "img.idx"));
    EXPECT_NE(slurp(dir / "once.idx"), slurp(dir / "img.idx"));
    auto grid = slurp(dir / "once.csv");
    EXPECT_EQ(grid.substr(0, grid.find('\n')), "image,label,row,col,original,augmented");
}

TEST(Presets, AllShippedPresetsParse) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(kPresets)) {
        if (e.path().extension() != ".json") continue;
        auto cfg = load_experiment(e.path());
        EXPECT_FALSE(cfg.run.output.empty()) << e.path();
        ++n;
    }
    EXPECT_GE(n, 10u);
    auto mnist = load_experiment(kPresets / "mnist_fnbg_b600.json");
    EXPECT_EQ(mnist.partition().size(), 130u);
    EXPECT_EQ(mnist.proposal.resolve(mnist.partition()).front(), 5e-2);
    EXPECT_EQ(mnist.chain.post_burnin(), 10000u);
    auto exact = load_experiment(kPresets / "xor_exact_floor20.json");
    EXPECT_TRUE(exact.chain.full_batch());
    EXPECT_DOUBLE_EQ(exact.run.chains.acceptance_floor, 0.2);
}

TEST(Presets, InvalidSectionsAreConfigErrors) {
    auto base = tiny_xor_config("out");
    auto bad_len = base;
    bad_len["proposal"] = {{"layer_variances", {0.1}}};
    EXPECT_THROW(experiment_from_json(bad_len, "."), ConfigError);
    auto bad_beta = base;
    bad_beta["blocking"] = {{"scheme", "node"}, {"beta", {{"1", 2}}}};
    EXPECT_THROW(experiment_from_json(bad_beta, "."), ConfigError);
    auto bad_floor = base;
    bad_floor["run"]["acceptance_floor"] = 1.0;
    EXPECT_THROW(experiment_from_json(bad_floor, "."), ConfigError);
    auto bad_data = base;
    bad_data["data"] = {{"kind", "idx"}};
    EXPECT_THROW(experiment_from_json(bad_data, "."), ConfigError);
}
