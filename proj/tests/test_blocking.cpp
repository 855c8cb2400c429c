#include <gtest/gtest.h>

#include <sstream>

#include "fnbg/blocking.hpp"

using namespace fnbg;

namespace {
std::vector<std::size_t> sizes(const BlockPartition& p) {
    std::vector<std::size_t> s;
    for (const auto& b : p.blocks) s.push_back(b.size());
    return s;
}
}  // namespace

TEST(Partition, LayerBlocksOfSmallNet) {
    Architecture a({3, 2, 2, 2});
    auto p = partition_by_layer(a);
    EXPECT_EQ(sizes(p), (std::vector<std::size_t>{8, 6, 6}));
    EXPECT_TRUE(validate(p, a));
}

TEST(Partition, NodeBlocksOfSmallNet) {
    Architecture a({3, 2, 2, 2});
    auto p = partition_by_node(a);
    EXPECT_EQ(sizes(p), (std::vector<std::size_t>{4, 4, 3, 3, 3, 3}));
    EXPECT_EQ(p[2].tag.layer, 2u);
    EXPECT_EQ(p[2].tag.node, 0u);
    EXPECT_TRUE(validate(p, a));
}

TEST(Partition, MnistLayerAndNodeBlocks) {
    Architecture a({784, 10, 10, 10, 10});
    EXPECT_EQ(sizes(partition_by_layer(a)), (std::vector<std::size_t>{7850, 110, 110, 110}));
    auto n = partition_by_node(a);
    ASSERT_EQ(n.size(), 40u);
    for (std::size_t q = 0; q < 10; ++q) EXPECT_EQ(n[q].size(), 785u);
    for (std::size_t q = 10; q < 40; ++q) EXPECT_EQ(n[q].size(), 11u);
}

TEST(Partition, FinerNodeSplitsFirstLayerNodesIntoTen) {
    Architecture a({784, 10, 10, 10, 10});
    auto p = partition_finer_node(a, {{1, 10}});
    ASSERT_EQ(p.size(), 130u);
    for (std::size_t k = 0; k < 10; ++k)
        for (std::size_t s = 0; s < 10; ++s) {
            const auto& b = p[k * 10 + s];
            EXPECT_EQ(b.size(), s < 5 ? 79u : 78u);
            EXPECT_EQ(b.tag.node, k);
            EXPECT_EQ(b.tag.sub, s);
        }
    EXPECT_TRUE(validate(p, a));
}

TEST(Partition, FinerNodeWithBetaOneEqualsNodeBlocks) {
    Architecture a({5, 3, 2});
    auto f = partition_finer_node(a, {{1, 1}, {2, 1}});
    auto n = partition_by_node(a);
    ASSERT_EQ(f.size(), n.size());
    for (std::size_t q = 0; q < f.size(); ++q) EXPECT_EQ(f[q].indices, n[q].indices);
}

TEST(Partition, SingletonBlocksAtMaximalBeta) {
    Architecture a({3, 2, 2});
    auto p = partition_finer_node(a, {{1, 4}, {2, 3}});
    EXPECT_EQ(p.size(), a.param_count());
    EXPECT_TRUE(validate(p, a));
}

TEST(Partition, BetaOutOfRangeIsConfigError) {
    Architecture a({3, 2, 2});
    EXPECT_THROW(partition_finer_node(a, {{1, 5}}), ConfigError);
    EXPECT_THROW(partition_finer_node(a, {{1, 0}}), ConfigError);
    EXPECT_THROW(partition_finer_node(a, {{3, 1}}), ConfigError);
}

TEST(Partition, ValidateReportsEachViolation) {
    Architecture a({3, 2, 2});
    auto good = partition_by_node(a);

    auto overlap = good;
    overlap.blocks[1].indices.push_back(0);
    EXPECT_EQ(validate(overlap, a).violation, "overlap");

    auto gap = good;
    gap.blocks[0].indices.pop_back();
    EXPECT_EQ(validate(gap, a).violation, "coverage");

    auto empty = good;
    empty.blocks.push_back({{}, {1, 0, 1}});
    EXPECT_EQ(validate(empty, a).violation, "empty");

    auto range = good;
    range.blocks.back().indices.push_back(a.param_count());
    EXPECT_EQ(validate(range, a).violation, "range");

    auto tag = good;
    std::swap(tag.blocks[0].tag, tag.blocks[2].tag);
    EXPECT_EQ(validate(tag, a).violation, "tag");
}

TEST(Partition, CsvHasOneRowPerBlock) {
    Architecture a({3, 2, 2, 2});
    std::ostringstream os;
    write_partition_csv(os, partition_by_layer(a));
    EXPECT_EQ(os.str(), "block,layer,node,sub_block,size\n0,1,,0,8\n1,2,,0,6\n2,3,,0,6\n");
}

TEST(Partition, SchemeNamesRoundTrip) {
    for (auto s : {Scheme::Layer, Scheme::Node, Scheme::FinerNode}) EXPECT_EQ(parse_scheme(to_string(s)), s);
    EXPECT_THROW(parse_scheme("rows"), ConfigError);
}
