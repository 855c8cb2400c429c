#pragma once

// Parameter partitions for blocked Gibbs sweeps: one block per layer, one per
// node, or each node split further into beta_j balanced sub-blocks.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fnbg/mlp.hpp"

namespace fnbg {

enum class Scheme { Layer, Node, FinerNode };

inline std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::Layer: return "layer";
        case Scheme::Node: return "node";
        case Scheme::FinerNode: return "finer-node";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view name) {
    if (name == "layer") return Scheme::Layer;
    if (name == "node") return Scheme::Node;
    if (name == "finer-node" || name == "finer_node") return Scheme::FinerNode;
    throw ConfigError("unknown blocking scheme '" + std::string(name) + "'");
}

/// Origin of a block. `node` is npos for whole-layer blocks.
struct BlockTag {
    std::size_t layer = 0;
    std::size_t node = npos;
    std::size_t sub = 0;
    friend bool operator==(const BlockTag&, const BlockTag&) = default;
};

struct Block {
    std::vector<std::size_t> indices;
    BlockTag tag;
    std::size_t size() const { return indices.size(); }
    friend bool operator==(const Block&, const Block&) = default;
};

/// Split factors beta_j per layer; absent layers use 1.
using FinerNodeSpec = std::map<std::size_t, std::size_t>;

struct BlockPartition {
    Scheme scheme = Scheme::Node;
    FinerNodeSpec beta;
    std::vector<Block> blocks;

    std::size_t size() const { return blocks.size(); }
    const Block& operator[](std::size_t q) const { return blocks[q]; }
    friend bool operator==(const BlockPartition&, const BlockPartition&) = default;
};

inline BlockPartition partition_by_layer(const Architecture& arch) {
    BlockPartition p{Scheme::Layer, {}, {}};
    for (std::size_t j = 1; j <= arch.depth(); ++j) {
        Block b{{}, {j, npos, 0}};
        b.indices.resize(arch.layer_size(j));
        std::iota(b.indices.begin(), b.indices.end(), arch.layer_offset(j));
        p.blocks.push_back(std::move(b));
    }
    return p;
}

inline std::size_t beta_for(const FinerNodeSpec& spec, std::size_t layer) {
    auto it = spec.find(layer);
    return it == spec.end() ? 1 : it->second;
}

/// Balanced split: node blocks of layer j are cut into beta_j contiguous
/// pieces, earlier pieces one element larger when beta_j does not divide
/// kappa_{j-1}+1. Order is layer-major, node-major, sub-block-minor.
inline BlockPartition partition_finer_node(const Architecture& arch, const FinerNodeSpec& spec) {
    for (auto [layer, beta] : spec) {
        if (layer < 1 || layer > arch.depth())
            throw ConfigError("beta given for layer " + std::to_string(layer) + " outside 1.." +
                              std::to_string(arch.depth()));
        if (beta < 1 || beta > arch.node_size(layer))
            throw ConfigError("beta_" + std::to_string(layer) + " = " + std::to_string(beta) + " outside [1, " +
                              std::to_string(arch.node_size(layer)) + "]");
    }
    BlockPartition p{Scheme::FinerNode, spec, {}};
    for (std::size_t j = 1; j <= arch.depth(); ++j) {
        std::size_t node_size = arch.node_size(j);
        std::size_t beta = beta_for(spec, j);
        std::size_t base = node_size / beta, extra = node_size % beta;
        for (std::size_t k = 0; k < arch.width(j); ++k) {
            std::size_t start = arch.node_offset(j, k);
            for (std::size_t s = 0; s < beta; ++s) {
                std::size_t len = base + (s < extra ? 1 : 0);
                Block b{std::vector<std::size_t>(len), {j, k, s}};
                std::iota(b.indices.begin(), b.indices.end(), start);
                start += len;
                p.blocks.push_back(std::move(b));
            }
        }
    }
    return p;
}

inline BlockPartition partition_by_node(const Architecture& arch) {
    auto p = partition_finer_node(arch, {});
    p.scheme = Scheme::Node;
    return p;
}

inline BlockPartition make_partition(const Architecture& arch, Scheme scheme, const FinerNodeSpec& beta = {}) {
    switch (scheme) {
        case Scheme::Layer: return partition_by_layer(arch);
        case Scheme::Node: return partition_by_node(arch);
        case Scheme::FinerNode: return partition_finer_node(arch, beta);
    }
    throw ConfigError("unknown scheme");
}

struct PartitionReport {
    bool ok = true;
    std::string violation;  // "overlap", "coverage", "empty", "range", "tag"
    std::string detail;
    explicit operator bool() const { return ok; }
};

/// Checks the partition property and tag consistency; reports the first violation.
inline PartitionReport validate(const BlockPartition& p, const Architecture& arch) {
    auto fail = [](std::string kind, std::string detail) { return PartitionReport{false, std::move(kind), std::move(detail)}; };
    std::vector<int> seen(arch.param_count(), -1);
    for (std::size_t q = 0; q < p.blocks.size(); ++q) {
        const auto& b = p.blocks[q];
        if (b.indices.empty()) return fail("empty", "block " + std::to_string(q) + " is empty");
        for (auto i : b.indices) {
            if (i >= seen.size()) return fail("range", "block " + std::to_string(q) + " has index " + std::to_string(i));
            if (seen[i] >= 0)
                return fail("overlap", "index " + std::to_string(i) + " in blocks " + std::to_string(seen[i]) +
                                           " and " + std::to_string(q));
            seen[i] = static_cast<int>(q);
            auto c = arch.locate(i);
            bool node_scoped = p.scheme != Scheme::Layer;
            if (c.layer != b.tag.layer || (node_scoped && c.node != b.tag.node))
                return fail("tag", "index " + std::to_string(i) + " does not belong to block " + std::to_string(q) +
                                       "'s layer/node");
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (seen[i] < 0) return fail("coverage", "index " + std::to_string(i) + " is in no block");
    return {};
}

/// One CSV row per block: block,layer,node,sub_block,size.
inline void write_partition_csv(std::ostream& os, const BlockPartition& p) {
    os << "block,layer,node,sub_block,size\n";
    for (std::size_t q = 0; q < p.blocks.size(); ++q) {
        const auto& t = p.blocks[q].tag;
        os << q << ',' << t.layer << ',';
        if (t.node != npos) os << t.node;
        os << ',' << t.sub << ',' << p.blocks[q].size() << '\n';
    }
}

}  // namespace fnbg
