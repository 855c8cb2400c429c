#pragma once

// Declarative experiment configs (one JSON file with data / model / blocking /
// proposal / prior / chain / run sections) and the multi-chain runner behind
// the command-line tool.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fnbg/data.hpp"
#include "fnbg/trace_io.hpp"

namespace fnbg {

struct DataSpec {
    std::string kind = "xor";  // xor | csv | idx
    XorSimConfig xor_cfg;
    fs::path train_csv, test_csv;
    fs::path train_images, train_labels, test_images, test_labels;
    std::optional<bool> standardize;  // unset: on for idx, off otherwise
    std::size_t train_limit = 0, test_limit = 0;
    std::optional<Transform> augment;
    ImageTransformConfig augment_cfg;

    bool standardizes() const { return standardize.value_or(kind == "idx"); }
};

struct RunOptions {
    MultiChainOptions chains;
    fs::path output;
};

struct ExperimentConfig {
    json raw;  // verbatim echo of the file plus applied overrides
    fs::path base_dir;
    DataSpec data;
    Architecture arch;
    Scheme scheme = Scheme::Node;
    FinerNodeSpec beta;
    ProposalConfig proposal;
    GaussianPrior prior;
    ChainConfig chain;
    RunOptions run;

    BlockPartition partition() const { return make_partition(arch, scheme, beta); }
};

struct LoadedData {
    Dataset train, test;
    json metadata = json::object();
};

namespace detail {

inline fs::path resolve_path(const fs::path& base, const json& j, const char* key) {
    if (!j.contains(key)) return {};
    fs::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

inline DataSpec data_spec_from_json(const json& j, const fs::path& base) {
    reject_unknown(j,
                   {"kind", "xor", "train_csv", "test_csv", "train_images", "train_labels", "test_images", "test_labels",
                    "standardize", "train_limit", "test_limit", "augment"},
                   "data");
    DataSpec d;
    d.kind = j.value("kind", std::string("xor"));
    if (d.kind != "xor" && d.kind != "csv" && d.kind != "idx") throw ConfigError("data.kind must be xor, csv or idx");
    if (j.contains("xor")) {
        const auto& x = j.at("xor");
        d.xor_cfg.train_size = x.value("train_size", d.xor_cfg.train_size);
        d.xor_cfg.test_size = x.value("test_size", d.xor_cfg.test_size);
        d.xor_cfg.noise_width = x.value("noise_width", d.xor_cfg.noise_width);
        d.xor_cfg.seed = x.value("seed", d.xor_cfg.seed);
    }
    d.train_csv = resolve_path(base, j, "train_csv");
    d.test_csv = resolve_path(base, j, "test_csv");
    d.train_images = resolve_path(base, j, "train_images");
    d.train_labels = resolve_path(base, j, "train_labels");
    d.test_images = resolve_path(base, j, "test_images");
    d.test_labels = resolve_path(base, j, "test_labels");
    if (j.contains("standardize")) d.standardize = j.at("standardize").get<bool>();
    d.train_limit = j.value("train_limit", std::size_t{0});
    d.test_limit = j.value("test_limit", std::size_t{0});
    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        d.augment = parse_transform(a.at("transform").get<std::string>());
        auto& c = d.augment_cfg;
        c.max_angle_degrees = a.value("max_angle_degrees", c.max_angle_degrees);
        c.blur_probability = a.value("blur_probability", c.blur_probability);
        c.kernel_size = a.value("kernel_size", c.kernel_size);
        c.sigma_min = a.value("sigma_min", c.sigma_min);
        c.sigma_max = a.value("sigma_max", c.sigma_max);
        c.invert_probability = a.value("invert_probability", c.invert_probability);
        c.seed = a.value("seed", c.seed);
        c.validate();
    }
    if (d.kind == "csv" && (d.train_csv.empty() || d.test_csv.empty()))
        throw ConfigError("csv data needs train_csv and test_csv");
    if (d.kind == "idx" &&
        (d.train_images.empty() || d.train_labels.empty() || d.test_images.empty() || d.test_labels.empty()))
        throw ConfigError("idx data needs train_images, train_labels, test_images and test_labels");
    return d;
}

}  // namespace detail

/// Data section with every path made absolute, suitable for trace metadata.
inline json to_json(const DataSpec& d) {
    json j = {{"kind", d.kind}, {"standardize", d.standardizes()}};
    if (d.kind == "xor")
        j["xor"] = {{"train_size", d.xor_cfg.train_size},
                    {"test_size", d.xor_cfg.test_size},
                    {"noise_width", d.xor_cfg.noise_width},
                    {"seed", d.xor_cfg.seed}};
    auto put = [&](const char* k, const fs::path& p) {
        if (!p.empty()) j[k] = fs::absolute(p).lexically_normal().string();
    };
    put("train_csv", d.train_csv);
    put("test_csv", d.test_csv);
    put("train_images", d.train_images);
    put("train_labels", d.train_labels);
    put("test_images", d.test_images);
    put("test_labels", d.test_labels);
    if (d.train_limit) j["train_limit"] = d.train_limit;
    if (d.test_limit) j["test_limit"] = d.test_limit;
    if (d.augment) {
        const auto& c = d.augment_cfg;
        j["augment"] = {{"transform", to_string(*d.augment)},     {"max_angle_degrees", c.max_angle_degrees},
                        {"blur_probability", c.blur_probability}, {"kernel_size", c.kernel_size},
                        {"sigma_min", c.sigma_min},               {"sigma_max", c.sigma_max},
                        {"invert_probability", c.invert_probability}, {"seed", c.seed}};
    }
    return j;
}

inline DataSpec data_spec_from_json(const json& j, const fs::path& base = {}) {
    try {
        return detail::data_spec_from_json(j, base);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("data: ") + e.what());
    }
}

/// Builds train and test sets. Augmentation touches the training images only
/// and precedes standardization; test inputs reuse the training statistics.
inline LoadedData load_data(const DataSpec& spec) {
    LoadedData out;
    if (spec.kind == "xor") {
        std::tie(out.train, out.test) = simulate_noisy_xor(spec.xor_cfg);
        out.metadata["noise_law"] = kXorNoiseLaw;
    } else if (spec.kind == "csv") {
        out.train = read_csv_file(spec.train_csv);
        out.test = read_csv_file(spec.test_csv);
    } else {
        out.train = load_idx(spec.train_images, spec.train_labels);
        out.test = load_idx(spec.test_images, spec.test_labels);
    }
    if (spec.train_limit) out.train = head(out.train, spec.train_limit);
    if (spec.test_limit) out.test = head(out.test, spec.test_limit);
    if (out.train.features != out.test.features) throw DataError("train and test feature counts differ");
    if (spec.augment) out.train = augment(out.train, *spec.augment, spec.augment_cfg);
    if (spec.standardizes()) {
        StandardizeStats stats;
        std::tie(out.train, stats) = standardize(out.train);
        out.test = standardize(out.test, stats).first;
        out.metadata["standardization"] = {{"mean", stats.mean}, {"std", stats.std}};
    }
    out.metadata["data"] = to_json(spec);
    out.metadata["train_size"] = out.train.size();
    out.metadata["test_size"] = out.test.size();
    return out;
}

/// Parses a config document. Relative data and output paths resolve against
/// `base_dir` (the directory holding the config file).
inline ExperimentConfig experiment_from_json(const json& j, const fs::path& base_dir) {
    ExperimentConfig c;
    c.raw = j;
    c.base_dir = base_dir;
    try {
        detail::reject_unknown(j, {"name", "description", "data", "model", "blocking", "proposal", "prior", "chain", "run"},
                               "config");
        c.data = detail::data_spec_from_json(j.value("data", json::object()), base_dir);
        c.arch = architecture_from_json(j.at("model"));

        const json& b = j.value("blocking", json::object());
        c.scheme = parse_scheme(b.value("scheme", std::string("node")));
        c.beta = beta_from_json(b.value("beta", json()));
        if (c.scheme != Scheme::FinerNode && !c.beta.empty()) throw ConfigError("beta is only valid for finer-node blocking");

        const json& p = j.at("proposal");
        if (p.contains("layer_variances")) {
            auto v = p.at("layer_variances").get<std::vector<double>>();
            if (v.size() != c.arch.depth())
                throw ConfigError("proposal.layer_variances needs " + std::to_string(c.arch.depth()) + " entries");
            c.proposal = ProposalConfig::per_layer(v);
        }
        if (p.contains("variance")) c.proposal.default_variance = p.at("variance").get<double>();

        c.prior.variance = j.value("prior", json::object()).value("variance", 10.0);
        if (!(c.prior.variance > 0)) throw ConfigError("prior variance must be positive");

        c.chain = chain_config_from_json(j.at("chain"));

        const json& r = j.value("run", json::object());
        c.run.chains.chains = r.value("chains", std::size_t{1});
        c.run.chains.threads = r.value("threads", std::size_t{1});
        c.run.chains.acceptance_floor = r.value("acceptance_floor", 0.0);
        c.run.chains.max_attempts = r.value("max_attempts", std::size_t{50});
        c.run.output = detail::resolve_path(base_dir, r, "output");
        if (c.run.chains.chains == 0) throw ConfigError("run.chains must be positive");
        if (c.run.chains.acceptance_floor < 0 || c.run.chains.acceptance_floor >= 1)
            throw ConfigError("run.acceptance_floor must lie in [0,1)");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    auto part = c.partition();
    c.proposal.resolve(part);
    return c;
}

inline json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline ExperimentConfig load_experiment(const fs::path& path) {
    return experiment_from_json(read_json_file(path), fs::absolute(path).parent_path());
}

inline std::string chain_dir_name(std::size_t c) {
    std::ostringstream os;
    os << "chain_" << std::setw(2) << std::setfill('0') << c;
    return os.str();
}

/// Trace directories of a run: the run directory's chain_* subdirectories in
/// order, or the directory itself when it holds a trace.
inline std::vector<fs::path> trace_dirs(const fs::path& dir) {
    if (fs::exists(dir / "trace.json")) return {dir};
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a trace or run directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && e.path().filename().string().starts_with("chain_") && fs::exists(e.path() / "trace.json"))
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no traces under " + dir.string());
    return out;
}

struct ExperimentResult {
    MultiChainResult chains;
    LoadedData data;
    json summary;
};

/// Loads data, runs every chain and, when an output directory is set, writes
/// chain_NN/ trace directories plus run_summary.json.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult r;
    r.data = load_data(cfg.data);
    r.chains = run_chains(cfg.arch, r.data.train, cfg.partition(), cfg.proposal, cfg.prior, cfg.chain, cfg.run.chains);

    json chains = json::array();
    for (std::size_t c = 0; c < r.chains.traces.size(); ++c) {
        auto& tr = r.chains.traces[c];
        tr.metadata = r.data.metadata;
        tr.metadata["config"] = cfg.raw;
        tr.metadata["chain_index"] = c;
        tr.metadata["attempts"] = r.chains.attempts[c];
        chains.push_back({{"chain", c},
                          {"seed", tr.config.seed},
                          {"attempts", r.chains.attempts[c]},
                          {"overall_acceptance", tr.overall_acceptance()},
                          {"runtime_seconds", tr.runtime_seconds}});
    }
    r.summary = {{"config", cfg.raw},
                 {"chains", chains},
                 {"discarded_chains", r.chains.discarded},
                 {"discarded_runtime_seconds", r.chains.discarded_runtime_seconds},
                 {"retained_runtime_seconds", r.chains.retained_runtime_seconds},
                 {"acceptance_floor", cfg.run.chains.acceptance_floor},
                 {"data", r.data.metadata}};
    if (!cfg.run.output.empty()) {
        for (std::size_t c = 0; c < r.chains.traces.size(); ++c)
            save_trace(cfg.run.output / chain_dir_name(c), r.chains.traces[c]);
        std::ofstream os(cfg.run.output / "run_summary.json");
        if (!os) throw IoError("cannot write run_summary.json");
        os << r.summary.dump(1) << '\n';
    }
    return r;
}

/// Test set a stored trace was evaluated against, rebuilt from its metadata
/// (same data section, same standardization statistics).
inline LoadedData data_for_trace(const ChainTrace& tr) {
    if (!tr.metadata.contains("data")) throw ConfigError("trace has no data metadata; pass the test set explicitly");
    return load_data(data_spec_from_json(tr.metadata.at("data")));
}

}  // namespace fnbg
