#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fnbg {

using Engine = std::mt19937_64;

// Purpose tags for independent sub-streams of one chain seed.
enum class Stream : std::uint32_t {
    Init = 1,
    Proposal = 2,
    Accept = 3,
    Minibatch = 4,
    Xor = 5,
    Augment = 6,
    Volatility = 7,
    Restart = 8,
};

/// Engine seeded from a seed plus an arbitrary list of 64-bit discriminators.
/// Each (seed, keys...) tuple yields an unrelated stream, so a chain's proposal
/// noise, accept draws and minibatch selection never share state.
inline Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * keys.size());
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto k : keys) push(k);
    std::seed_seq seq(words.begin(), words.end());
    return Engine(seq);
}

inline Engine make_engine(std::uint64_t seed, Stream purpose, std::uint64_t index = 0) {
    return make_engine(seed, {static_cast<std::uint64_t>(purpose), index});
}

}  // namespace fnbg
