#pragma once

// Acceptance-rate tables, multi-chain summaries, traceplot series and the
// batch-size volatility study of the normalized log-likelihood.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <vector>

#include "fnbg/sampler.hpp"

namespace fnbg {

enum class Level { Block, Node, Layer };

inline std::string to_string(Level l) {
    switch (l) {
        case Level::Block: return "block";
        case Level::Node: return "node";
        case Level::Layer: return "layer";
    }
    return "?";
}

inline Level parse_level(std::string_view s) {
    if (s == "block") return Level::Block;
    if (s == "node") return Level::Node;
    if (s == "layer") return Level::Layer;
    throw ConfigError("unknown level '" + std::string(s) + "'");
}

/// Unit of aggregation. Unused coordinates are npos.
struct UnitKey {
    std::size_t layer = 0;
    std::size_t node = npos;
    std::size_t block = npos;
    auto operator<=>(const UnitKey&) const = default;
};

struct RateRow {
    UnitKey unit;
    std::uint64_t accepted = 0;
    std::uint64_t proposed = 0;
    double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

inline UnitKey unit_of(const BlockPartition& p, std::size_t q, Level level) {
    const auto& t = p[q].tag;
    switch (level) {
        case Level::Block: return {t.layer, t.node, q};
        case Level::Node: return {t.layer, t.node, npos};
        case Level::Layer: return {t.layer, npos, npos};
    }
    return {};
}

/// accepted/proposed per unit; node and layer levels pool the raw counters
/// of their member blocks.
inline std::vector<RateRow> acceptance_rates(const ChainTrace& tr, Level level) {
    if (tr.proposed.size() != tr.partition.size() || tr.total_proposed() == 0)
        throw ConfigError("trace has no post-burnin proposals to aggregate");
    if (level == Level::Node && tr.partition.scheme == Scheme::Layer)
        throw ConfigError("node-level rates need a node-scoped partition");
    std::map<UnitKey, RateRow> pooled;
    for (std::size_t q = 0; q < tr.partition.size(); ++q) {
        auto key = unit_of(tr.partition, q, level);
        auto& row = pooled[key];
        row.unit = key;
        row.accepted += tr.accepted[q];
        row.proposed += tr.proposed[q];
    }
    std::vector<RateRow> out;
    for (auto& [_, r] : pooled) out.push_back(r);
    return out;
}

struct Quartiles {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
    double iqr() const { return q3 - q1; }
};

/// Linear-interpolation quantiles (R type 7).
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw ConfigError("quantile of an empty set");
    std::sort(v.begin(), v.end());
    double h = (static_cast<double>(v.size()) - 1) * p;
    auto lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Quartiles summarize(const std::vector<double>& v) {
    Quartiles q;
    q.min = quantile(v, 0);
    q.q1 = quantile(v, 0.25);
    q.median = quantile(v, 0.5);
    q.q3 = quantile(v, 0.75);
    q.max = quantile(v, 1);
    double s = 0;
    for (double x : v) s += x;
    q.mean = s / static_cast<double>(v.size());
    return q;
}

struct UnitSummary {
    UnitKey unit;
    std::vector<double> rates;  // one per chain
    Quartiles stats;
};

/// Per-unit distribution of acceptance rates across chains.
inline std::vector<UnitSummary> multi_chain_summary(const std::vector<ChainTrace>& traces, Level level) {
    if (traces.empty()) throw ConfigError("no traces to summarize");
    for (const auto& t : traces)
        if (!(t.partition == traces.front().partition) || !(t.arch == traces.front().arch))
            throw ConfigError("traces use different partitions");
    std::vector<UnitSummary> out;
    for (const auto& tr : traces) {
        auto rows = acceptance_rates(tr, level);
        if (out.empty())
            for (auto& r : rows) out.push_back({r.unit, {}, {}});
        for (std::size_t u = 0; u < rows.size(); ++u) out[u].rates.push_back(rows[u].rate());
    }
    for (auto& s : out) s.stats = summarize(s.rates);
    return out;
}

struct TracePoint {
    std::size_t iteration;
    double value;
};

struct TraceSeries {
    std::size_t index = 0;
    ParamCoord coord{};
    std::vector<TracePoint> points;
};

/// Every `thin`-th retained value of one parameter coordinate.
inline TraceSeries extract_traceplot(const ChainTrace& tr, std::size_t index, std::size_t thin) {
    if (index >= tr.n_params) throw ConfigError("parameter index " + std::to_string(index) + " out of range");
    if (thin == 0) throw ConfigError("thin must be positive");
    TraceSeries s{index, tr.arch.locate(index), {}};
    for (std::size_t t = 0; t < tr.retained; t += thin) s.points.push_back({tr.iteration_of(t), tr.sample(t)[index]});
    return s;
}

/// Sample standard deviation of a retained coordinate.
inline double coordinate_std(const ChainTrace& tr, std::size_t index) {
    double mean = 0, m2 = 0;
    for (std::size_t t = 0; t < tr.retained; ++t) {
        double x = tr.sample(t)[index], d = x - mean;
        mean += d / static_cast<double>(t + 1);
        m2 += d * (x - mean);
    }
    return tr.retained > 1 ? std::sqrt(m2 / static_cast<double>(tr.retained - 1)) : 0.0;
}

struct VolatilityRow {
    std::size_t batch_size = 0;
    std::vector<double> values;  // normalized log-likelihood per draw
    double mean = 0, median = 0, std = 0;
};

struct VolatilityTable {
    std::vector<VolatilityRow> rows;
    double full_value = 0;  // normalized log-likelihood on the whole dataset
};

/// Running mean/std (Welford); identical inputs give a std of exactly 0.
inline std::pair<double, double> mean_and_std(const std::vector<double>& v) {
    double mean = 0, m2 = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double d = v[i] - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (v[i] - mean);
    }
    return {mean, v.size() > 1 ? std::sqrt(m2 / static_cast<double>(v.size() - 1)) : 0.0};
}

/// For each batch size, `draws` random batches (without replacement) of the
/// dataset are scored by the normalized log-likelihood -E/|batch| at `theta`.
inline VolatilityTable loglik_volatility(const Architecture& arch, std::span<const double> theta, const Dataset& data,
                                         const std::vector<std::size_t>& batch_sizes, std::size_t draws,
                                         std::uint64_t seed) {
    VolatilityTable table;
    table.full_value = -loss(arch, theta, data) / static_cast<double>(data.size());
    for (std::size_t b : batch_sizes) {
        if (b == 0 || b > data.size())
            throw ConfigError("batch size " + std::to_string(b) + " outside [1, " + std::to_string(data.size()) + "]");
        MinibatchSource source(data.size(), b, make_engine(seed, Stream::Volatility, b));
        VolatilityRow row;
        row.batch_size = b;
        for (std::size_t d = 0; d < draws; ++d) {
            auto rows = source.next();
            row.values.push_back(-loss(arch, theta, data, rows) / static_cast<double>(b));
        }
        std::tie(row.mean, row.std) = mean_and_std(row.values);
        row.median = quantile(row.values, 0.5);
        table.rows.push_back(std::move(row));
    }
    return table;
}

// ---------------------------------------------------------------- CSV output

inline void write_unit(std::ostream& os, const UnitKey& u) {
    os << u.layer << ',';
    if (u.node != npos) os << u.node;
    os << ',';
    if (u.block != npos) os << u.block;
}

/// chain,layer,node,block,accepted,proposed,rate
inline void write_rates_csv(std::ostream& os, const std::vector<std::vector<RateRow>>& per_chain) {
    os << "chain,layer,node,block,accepted,proposed,rate\n";
    os.precision(10);
    for (std::size_t c = 0; c < per_chain.size(); ++c)
        for (const auto& r : per_chain[c]) {
            os << c << ',';
            write_unit(os, r.unit);
            os << ',' << r.accepted << ',' << r.proposed << ',' << r.rate() << '\n';
        }
}

/// layer,node,block,chains,mean,min,q1,median,q3,max
inline void write_summary_csv(std::ostream& os, const std::vector<UnitSummary>& rows) {
    os << "layer,node,block,chains,mean,min,q1,median,q3,max\n";
    os.precision(10);
    for (const auto& s : rows) {
        write_unit(os, s.unit);
        os << ',' << s.rates.size() << ',' << s.stats.mean << ',' << s.stats.min << ',' << s.stats.q1 << ','
           << s.stats.median << ',' << s.stats.q3 << ',' << s.stats.max << '\n';
    }
}

/// index,layer,node,source,iteration,value
inline void write_traceplot_csv(std::ostream& os, const TraceSeries& s) {
    os << "index,layer,node,source,iteration,value\n";
    os.precision(17);
    for (const auto& p : s.points) {
        os << s.index << ',' << s.coord.layer << ',' << s.coord.node << ',';
        if (s.coord.is_bias())
            os << "bias";
        else
            os << s.coord.source;
        os << ',' << p.iteration << ',' << p.value << '\n';
    }
}

/// batch_size,draw,normalized_loglik plus summary rows (draw = mean/median/std/full).
inline void write_volatility_csv(std::ostream& os, const VolatilityTable& t) {
    os << "batch_size,draw,normalized_loglik\n";
    os.precision(17);
    for (const auto& r : t.rows) {
        for (std::size_t d = 0; d < r.values.size(); ++d) os << r.batch_size << ',' << d << ',' << r.values[d] << '\n';
        os << r.batch_size << ",mean," << r.mean << '\n';
        os << r.batch_size << ",median," << r.median << '\n';
        os << r.batch_size << ",std," << r.std << '\n';
    }
    os << "all,full," << t.full_value << '\n';
}

}  // namespace fnbg
