#include <gtest/gtest.h>

#include "fnbg/trace_io.hpp"

using namespace fnbg;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("fnbg_trace_" + name);
    fs::remove_all(p);
    return p;
}

ChainTrace small_chain() {
    Dataset d;
    d.features = 2;
    for (int i = 0; i < 40; ++i) {
        d.inputs.push_back(i % 2);
        d.inputs.push_back((i / 2) % 2);
        d.labels.push_back((i % 2) ^ ((i / 2) % 2));
    }
    Architecture a({2, 3, 2});
    ChainConfig cfg{50, 10, 8, 3, 20, BatchRefresh::PerSweep, true, {}};
    auto tr = run_chain(a, d, partition_finer_node(a, {{1, 2}}), ProposalConfig::per_layer({0.1, 0.05}), {}, cfg);
    tr.metadata["note"] = "unit";
    return tr;
}

}  // namespace

TEST(TraceIo, RoundTripPreservesDrawsAndLayout) {
    auto dir = scratch("rt");
    auto tr = small_chain();
    save_trace(dir, tr);
    EXPECT_EQ(fs::file_size(dir / "samples.bin"), tr.samples.size() * 8);
    auto back = load_trace(dir);
    EXPECT_TRUE(back.same_draws(tr));
    EXPECT_EQ(back.config.burnin, 10u);
    EXPECT_EQ(back.config.batch_size, 8u);
    EXPECT_EQ(back.partition.scheme, Scheme::FinerNode);
    EXPECT_EQ(back.metadata.at("note"), "unit");
    EXPECT_EQ(back.iteration_of(0), 30u);
}

TEST(TraceIo, SamplesAreLittleEndianRowMajor) {
    auto dir = scratch("le");
    auto tr = small_chain();
    save_trace(dir, tr);
    std::ifstream in(dir / "samples.bin", std::ios::binary);
    std::vector<unsigned char> raw(16);
    in.read(reinterpret_cast<char*>(raw.data()), 16);
    for (int v = 0; v < 2; ++v) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = (bits << 8) | raw[static_cast<std::size_t>(v * 8 + b)];
        EXPECT_EQ(std::bit_cast<double>(bits), tr.sample(0)[static_cast<std::size_t>(v)]);
    }
}

TEST(TraceIo, SidecarRecordsSeedCountersAndVariances) {
    auto dir = scratch("json");
    auto tr = small_chain();
    save_trace(dir, tr);
    std::ifstream in(dir / "trace.json");
    auto j = json::parse(in);
    EXPECT_EQ(j.at("format"), "fnbg-trace/1");
    EXPECT_EQ(j.at("seed"), 3);
    EXPECT_EQ(j.at("retained"), 20);
    EXPECT_EQ(j.at("partition").at("blocks").size(), tr.partition.size());
    EXPECT_EQ(j.at("proposal_variances").size(), tr.partition.size());
    EXPECT_EQ(j.at("counters").at("proposed").size(), tr.partition.size());
    EXPECT_EQ(j.at("minibatch_loglik").size(), 40u);
}

TEST(TraceIo, DamagedTracesAreRejected) {
    auto dir = scratch("bad");
    auto tr = small_chain();
    save_trace(dir, tr);
    fs::resize_file(dir / "samples.bin", fs::file_size(dir / "samples.bin") - 8);
    EXPECT_THROW(load_trace(dir), IoError);
    save_trace(dir, tr);
    {
        std::ofstream extra(dir / "samples.bin", std::ios::binary | std::ios::app);
        extra << 'x';
    }
    EXPECT_THROW(load_trace(dir), IoError);
    save_trace(dir, tr);
    {
        std::ofstream js(dir / "trace.json", std::ios::trunc);
        js << "{ not json";
    }
    EXPECT_THROW(load_trace(dir), IoError);
    EXPECT_THROW(load_trace(scratch("missing")), IoError);
}

TEST(TraceIo, ChainConfigJsonAcceptsFullBatch) {
    auto c = chain_config_from_json({{"total_iterations", 10}, {"batch_size", "full"}, {"init", "zeros"}});
    EXPECT_TRUE(c.full_batch());
    EXPECT_EQ(c.init.kind, InitKind::Zeros);
    EXPECT_THROW(chain_config_from_json({{"total_iterations", 10}, {"batch_size", "most"}}), ConfigError);
    EXPECT_THROW(chain_config_from_json({{"burnin", 10}}), ConfigError);
    EXPECT_THROW(chain_config_from_json({{"total_iterations", 10}, {"refresh", "never"}}), ConfigError);
}
