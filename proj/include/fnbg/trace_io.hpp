#pragma once

// ChainTrace persistence: <dir>/samples.bin holds the retained draws as
// little-endian float64, row-major (one row per retained iteration), and
// <dir>/trace.json holds layout, counters, configuration and seed.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fnbg/sampler.hpp"

namespace fnbg {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kTraceFormat = "fnbg-trace/1";

inline json to_json(const Architecture& a) {
    return {{"widths", a.widths()},
            {"hidden", to_string(a.hidden_activation())},
            {"output", to_string(a.output_activation())}};
}

inline Architecture architecture_from_json(const json& j) {
    try {
        return Architecture(j.at("widths").get<std::vector<std::size_t>>(),
                            parse_activation(j.value("hidden", std::string("sigmoid"))),
                            parse_activation(j.value("output", std::string("softmax"))));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("architecture: ") + e.what());
    }
}

inline json beta_to_json(const FinerNodeSpec& beta) {
    json out = json::object();
    for (auto [layer, b] : beta) out[std::to_string(layer)] = b;
    return out;
}

inline FinerNodeSpec beta_from_json(const json& j) {
    FinerNodeSpec beta;
    if (j.is_null()) return beta;
    for (auto it = j.begin(); it != j.end(); ++it) beta[std::stoul(it.key())] = it.value().get<std::size_t>();
    return beta;
}

inline std::string to_string(InitKind k) {
    switch (k) {
        case InitKind::Zeros: return "zeros";
        case InitKind::Normal: return "normal";
        case InitKind::FanIn: return "fan-in";
    }
    return "?";
}

inline InitKind parse_init(std::string_view s) {
    if (s == "zeros") return InitKind::Zeros;
    if (s == "normal") return InitKind::Normal;
    if (s == "fan-in" || s == "fan_in") return InitKind::FanIn;
    throw ConfigError("unknown init '" + std::string(s) + "'");
}

inline json to_json(const ChainConfig& c) {
    return {{"total_iterations", c.total_iterations},
            {"burnin", c.burnin},
            {"batch_size", c.full_batch() ? json("full") : json(c.batch_size)},
            {"seed", c.seed},
            {"retain_last", c.retain_last},
            {"refresh", c.refresh == BatchRefresh::PerSweep ? "sweep" : "block"},
            {"record_loglik", c.record_loglik},
            {"init", to_string(c.init.kind)},
            {"init_scale", c.init.scale}};
}

inline ChainConfig chain_config_from_json(const json& j) {
    ChainConfig c;
    try {
        c.total_iterations = j.at("total_iterations").get<std::size_t>();
        c.burnin = j.value("burnin", std::size_t{0});
        const json& b = j.contains("batch_size") ? j.at("batch_size") : json("full");
        c.batch_size = b.is_string() ? (b.get<std::string>() == "full" ? 0 : throw ConfigError("batch_size")) : b.get<std::size_t>();
        c.seed = j.value("seed", std::uint64_t{0});
        c.retain_last = j.value("retain_last", std::size_t{0});
        auto refresh = j.value("refresh", std::string("sweep"));
        if (refresh != "sweep" && refresh != "block") throw ConfigError("refresh must be 'sweep' or 'block'");
        c.refresh = refresh == "sweep" ? BatchRefresh::PerSweep : BatchRefresh::PerBlock;
        c.record_loglik = j.value("record_loglik", false);
        c.init.kind = parse_init(j.value("init", std::string("fan-in")));
        c.init.scale = j.value("init_scale", 1.0);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("chain config: ") + e.what());
    }
    return c;
}

namespace detail {

inline void write_f64_le(std::ostream& os, std::span<const double> values) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double v : values) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            char bytes[8];
            for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
            os.write(bytes, 8);
        }
    }
}

inline std::vector<double> read_f64_le(std::istream& is, std::size_t count) {
    std::vector<double> out(count);
    std::vector<unsigned char> raw(count * 8);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size()) throw IoError("samples.bin is truncated");
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = (bits << 8) | raw[i * 8 + static_cast<std::size_t>(b)];
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

}  // namespace detail

inline void save_trace(const fs::path& dir, const ChainTrace& tr) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    std::ofstream bin(dir / "samples.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot write " + (dir / "samples.bin").string());
    detail::write_f64_le(bin, tr.samples);
    if (!bin) throw IoError("write failed for samples.bin");

    json blocks = json::array();
    for (const auto& b : tr.partition.blocks)
        blocks.push_back({{"layer", b.tag.layer},
                          {"node", b.tag.node == npos ? json(nullptr) : json(b.tag.node)},
                          {"sub", b.tag.sub},
                          {"size", b.size()},
                          {"first", b.indices.front()}});
    json side = {{"format", kTraceFormat},
                 {"n_params", tr.n_params},
                 {"retained", tr.retained},
                 {"first_retained_iteration", tr.config.total_iterations - tr.retained},
                 {"architecture", to_json(tr.arch)},
                 {"partition", {{"scheme", to_string(tr.partition.scheme)}, {"beta", beta_to_json(tr.partition.beta)}, {"blocks", blocks}}},
                 {"proposal_variances", tr.variances},
                 {"prior_variance", tr.prior_variance},
                 {"chain", to_json(tr.config)},
                 {"seed", tr.config.seed},
                 {"counters", {{"proposed", tr.proposed}, {"accepted", tr.accepted}, {"nonfinite", tr.nonfinite}}},
                 {"minibatch_loglik", tr.minibatch_loglik},
                 {"runtime_seconds", tr.runtime_seconds},
                 {"metadata", tr.metadata}};
    std::ofstream js(dir / "trace.json", std::ios::trunc);
    if (!js) throw IoError("cannot write " + (dir / "trace.json").string());
    js << side.dump(1) << '\n';
}

inline ChainTrace load_trace(const fs::path& dir) {
    std::ifstream js(dir / "trace.json");
    if (!js) throw IoError("no trace.json in " + dir.string());
    json side;
    try {
        js >> side;
    } catch (const json::exception& e) {
        throw IoError("malformed trace.json in " + dir.string() + ": " + e.what());
    }
    if (side.value("format", std::string()) != kTraceFormat) throw IoError("unsupported trace format in " + dir.string());

    ChainTrace tr;
    try {
        tr.arch = architecture_from_json(side.at("architecture"));
        const auto& part = side.at("partition");
        tr.partition = make_partition(tr.arch, parse_scheme(part.at("scheme").get<std::string>()),
                                      beta_from_json(part.value("beta", json())));
        if (tr.partition.size() != part.at("blocks").size())
            throw IoError("partition in trace.json does not match its scheme");
        tr.config = chain_config_from_json(side.at("chain"));
        tr.variances = side.at("proposal_variances").get<std::vector<double>>();
        tr.prior_variance = side.value("prior_variance", 10.0);
        tr.n_params = side.at("n_params").get<std::size_t>();
        tr.retained = side.at("retained").get<std::size_t>();
        const auto& c = side.at("counters");
        tr.proposed = c.at("proposed").get<std::vector<std::uint64_t>>();
        tr.accepted = c.at("accepted").get<std::vector<std::uint64_t>>();
        tr.nonfinite = c.at("nonfinite").get<std::vector<std::uint64_t>>();
        tr.minibatch_loglik = side.value("minibatch_loglik", std::vector<double>{});
        tr.runtime_seconds = side.value("runtime_seconds", 0.0);
        tr.metadata = side.value("metadata", json::object());
    } catch (const json::exception& e) {
        throw IoError("trace.json in " + dir.string() + ": " + e.what());
    }
    if (tr.n_params != tr.arch.param_count()) throw IoError("n_params does not match the architecture");

    std::ifstream bin(dir / "samples.bin", std::ios::binary);
    if (!bin) throw IoError("no samples.bin in " + dir.string());
    tr.samples = detail::read_f64_le(bin, tr.retained * tr.n_params);
    if (bin.peek() != std::char_traits<char>::eof()) throw IoError("samples.bin has trailing bytes");
    return tr;
}

}  // namespace fnbg
