// fnbg: command-line front end (simulate-xor, run-chain, predict, augment,
// diagnostics). Exit codes: 0 ok, 2 config, 3 data, 4 numeric, 5 IO.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "fnbg/diagnostics.hpp"
#include "fnbg/experiment.hpp"
#include "fnbg/inference.hpp"

using namespace fnbg;

namespace {

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::trunc);
    if (!os) throw IoError("cannot write " + p.string());
    return os;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(1) << '\n'; }

// ------------------------------------------------------------- simulate-xor

struct SimulateArgs {
    fs::path out, config;
    std::optional<std::size_t> train_size, test_size;
    std::optional<double> width;
    std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
    XorSimConfig cfg;
    if (!a.config.empty()) {
        auto c = load_experiment(a.config);
        if (c.data.kind != "xor") throw ConfigError("config does not describe XOR data");
        cfg = c.data.xor_cfg;
    }
    if (a.train_size) cfg.train_size = *a.train_size;
    if (a.test_size) cfg.test_size = *a.test_size;
    if (a.width) cfg.noise_width = *a.width;
    if (a.seed) cfg.seed = *a.seed;
    auto [train, test] = simulate_noisy_xor(cfg);
    fs::create_directories(a.out);
    write_csv_file(a.out / "train.csv", train);
    write_csv_file(a.out / "test.csv", test);
    write_json(a.out / "xor_meta.json", {{"train_size", cfg.train_size},
                                         {"test_size", cfg.test_size},
                                         {"noise_width", cfg.noise_width},
                                         {"seed", cfg.seed},
                                         {"noise_law", kXorNoiseLaw},
                                         {"labels", "0 for (0,0),(1,1); 1 for (0,1),(1,0)"}});
    std::cout << "wrote " << train.size() << " train and " << test.size() << " test points to " << a.out.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------- run-chain

struct RunArgs {
    fs::path config, output;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> chains, threads, total, burnin, retain;
    std::optional<std::string> batch;
    std::optional<double> floor;
    bool full_scale = false;
};

int cmd_run(const RunArgs& a) {
    json j = read_json_file(a.config);
    auto& chain = j["chain"];
    auto& run = j["run"];
    if (a.full_scale) {
        chain["total_iterations"] = 110000;
        chain["burnin"] = 10000;
        chain["retain_last"] = 10000;
    }
    if (a.seed) chain["seed"] = *a.seed;
    if (a.total) chain["total_iterations"] = *a.total;
    if (a.burnin) chain["burnin"] = *a.burnin;
    if (a.retain) chain["retain_last"] = *a.retain;
    if (a.batch) {
        if (*a.batch == "full")
            chain["batch_size"] = "full";
        else
            try {
                chain["batch_size"] = std::stoul(*a.batch);
            } catch (const std::exception&) {
                throw ConfigError("--batch-size must be a positive integer or 'full'");
            }
    }
    if (a.chains) run["chains"] = *a.chains;
    if (a.threads) run["threads"] = *a.threads;
    if (a.floor) run["acceptance_floor"] = *a.floor;
    if (!a.output.empty()) run["output"] = fs::absolute(a.output).string();
    if (!run.contains("output")) throw ConfigError("no output directory: set run.output or pass --output");

    auto cfg = experiment_from_json(j, fs::absolute(a.config).parent_path());
    auto result = run_experiment(cfg);
    for (const auto& c : result.summary.at("chains"))
        std::cout << "chain " << c.at("chain").get<std::size_t>() << " seed " << c.at("seed").get<std::uint64_t>()
                  << " attempts " << c.at("attempts").get<std::size_t>() << " acceptance "
                  << c.at("overall_acceptance").get<double>() << " runtime " << c.at("runtime_seconds").get<double>()
                  << "s\n";
    if (result.chains.discarded)
        std::cout << "discarded " << result.chains.discarded << " chains below the acceptance floor ("
                  << result.chains.discarded_runtime_seconds << "s)\n";
    std::cout << "traces written to " << cfg.run.output.string() << '\n';
    return 0;
}

// ------------------------------------------------------------------ predict

struct PredictArgs {
    fs::path trace, out, test_csv, test_images, test_labels;
    std::vector<std::size_t> last;
    std::size_t threads = 1;
    double uq_threshold = 0.5;
};

Dataset explicit_test_set(const PredictArgs& a, const ChainTrace& tr) {
    Dataset test;
    if (!a.test_csv.empty())
        test = read_csv_file(a.test_csv);
    else
        test = load_idx(a.test_images, a.test_labels);
    if (tr.metadata.contains("standardization")) {
        const auto& s = tr.metadata.at("standardization");
        test = standardize(test, StandardizeStats{s.at("mean").get<double>(), s.at("std").get<double>()}).first;
    }
    return test;
}

int cmd_predict(const PredictArgs& a) {
    if (!a.test_images.empty() != !a.test_labels.empty()) throw ConfigError("--test-images and --test-labels go together");
    auto dirs = trace_dirs(a.trace);
    fs::path out = a.out.empty() ? a.trace : a.out;
    fs::create_directories(out);
    auto acc_os = open_out(out / "accuracy.csv");
    acc_os << "chain,last_k,accuracy,uncertain_fraction\n";
    acc_os.precision(10);
    json report = json::array();
    for (std::size_t c = 0; c < dirs.size(); ++c) {
        auto tr = load_trace(dirs[c]);
        Dataset test;
        if (!a.test_csv.empty() || !a.test_images.empty())
            test = explicit_test_set(a, tr);
        else
            test = data_for_trace(tr).test;
        auto ks = a.last.empty() ? std::vector<std::size_t>{tr.retained} : a.last;
        for (std::size_t k : ks) {
            auto samples = last_samples(tr, k);
            Matrix pmfs = predictive_pmfs(tr.arch, samples, gather_rows(test), a.threads);
            auto predicted = predict_labels(tr.arch, pmfs);
            double acc = accuracy(predicted, test.labels);
            std::size_t uncertain = 0;
            for (Eigen::Index i = 0; i < pmfs.rows(); ++i) {
                auto pmf = make_pmf({pmfs.row(i).data(), static_cast<std::size_t>(pmfs.cols())}, samples.size());
                uncertain += uq_report(pmf, a.uq_threshold).show_second;
            }
            double frac = static_cast<double>(uncertain) / static_cast<double>(test.size());
            auto pred_os = open_out(out / (chain_dir_name(c) + "_last" + std::to_string(samples.size()) + "_predictions.csv"));
            write_predictions_csv(pred_os, tr.arch, pmfs, test.labels);
            acc_os << c << ',' << samples.size() << ',' << acc << ',' << frac << '\n';
            report.push_back({{"chain", c}, {"trace", dirs[c].string()}, {"last_k", samples.size()}, {"accuracy", acc}});
            std::cout << dirs[c].filename().string() << " last " << samples.size() << " accuracy " << acc << '\n';
        }
    }
    write_json(out / "predict_summary.json",
               {{"traces", a.trace.string()}, {"uq_threshold", a.uq_threshold}, {"results", report}});
    return 0;
}

// ------------------------------------------------------------------ augment

struct AugmentArgs {
    fs::path images, labels, out_images, out_labels, grid;
    std::string transform;
    ImageTransformConfig cfg;
    std::size_t grid_count = 16;
};

int cmd_augment(const AugmentArgs& a) {
    auto raw = load_idx(a.images, a.labels);
    auto out = augment(raw, parse_transform(a.transform), a.cfg);
    for (const auto& p : {a.out_images, a.out_labels})
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_idx(a.out_images, a.out_labels, out);
    if (!a.grid.empty()) {
        auto os = open_out(a.grid);
        os << "image,label,row,col,original,augmented\n";
        for (std::size_t i = 0; i < std::min(a.grid_count, raw.size()); ++i)
            for (std::size_t r = 0; r < raw.image_rows; ++r)
                for (std::size_t c = 0; c < raw.image_cols; ++c) {
                    std::size_t p = i * raw.features + r * raw.image_cols + c;
                    os << i << ',' << raw.labels[i] << ',' << r << ',' << c << ',' << raw.inputs[p] << ','
                       << std::clamp(std::lround(out.inputs[p]), 0L, 255L) << '\n';
                }
    }
    std::cout << "augmented " << out.size() << " images (" << a.transform << ")\n";
    return 0;
}

// -------------------------------------------------------------- diagnostics

struct DiagnosticsArgs {
    std::vector<fs::path> traces;
    fs::path out;
    std::vector<std::string> levels{"layer"};
    std::vector<std::size_t> traceplot;
    std::size_t thin = 1;
    bool volatility = false;
    std::vector<std::size_t> batch_sizes;
    std::size_t draws = 10;
    std::uint64_t volatility_seed = 0;
    std::string theta = "last";
};

/// Rows of the per-layer tuning report: one per (batch size, layer).
void write_tuning_report(std::ostream& os, const std::vector<ChainTrace>& traces) {
    struct Cell {
        double variance = 0;
        std::uint64_t accepted = 0, proposed = 0;
        std::size_t chains = 0;
    };
    std::map<std::pair<std::size_t, std::size_t>, Cell> cells;
    for (const auto& tr : traces) {
        for (const auto& r : acceptance_rates(tr, Level::Layer)) {
            auto& cell = cells[{tr.config.batch_size, r.unit.layer}];
            for (std::size_t q = 0; q < tr.partition.size(); ++q)
                if (tr.partition[q].tag.layer == r.unit.layer) {
                    cell.variance = tr.variances[q];
                    break;
                }
            cell.accepted += r.accepted;
            cell.proposed += r.proposed;
            ++cell.chains;
        }
    }
    os << "batch_size,layer,variance,chains,acceptance_rate\n";
    os.precision(10);
    for (const auto& [key, cell] : cells) {
        if (key.first == 0)
            os << "full";
        else
            os << key.first;
        os << ',' << key.second << ',' << cell.variance << ',' << cell.chains << ','
           << static_cast<double>(cell.accepted) / static_cast<double>(cell.proposed) << '\n';
    }
}

int cmd_diagnostics(const DiagnosticsArgs& a) {
    std::vector<fs::path> dirs;
    for (const auto& t : a.traces)
        for (auto& d : trace_dirs(t)) dirs.push_back(d);
    std::vector<ChainTrace> traces;
    for (const auto& d : dirs) traces.push_back(load_trace(d));
    fs::create_directories(a.out);

    for (const auto& name : a.levels) {
        Level level = parse_level(name);
        std::vector<std::vector<RateRow>> per_chain;
        for (const auto& tr : traces) per_chain.push_back(acceptance_rates(tr, level));
        auto os = open_out(a.out / ("rates_" + name + ".csv"));
        write_rates_csv(os, per_chain);
        auto ss = open_out(a.out / ("summary_" + name + ".csv"));
        write_summary_csv(ss, multi_chain_summary(traces, level));
    }
    {
        auto os = open_out(a.out / "fig5_layer_rates.csv");
        write_summary_csv(os, multi_chain_summary(traces, Level::Layer));
        auto ts = open_out(a.out / "tuning_report.csv");
        write_tuning_report(ts, traces);
    }
    for (std::size_t idx : a.traceplot)
        for (std::size_t c = 0; c < traces.size(); ++c) {
            auto os = open_out(a.out / ("traceplot_" + chain_dir_name(c) + "_p" + std::to_string(idx) + ".csv"));
            write_traceplot_csv(os, extract_traceplot(traces[c], idx, a.thin));
        }
    json echo = {{"traces", json::array()}, {"levels", a.levels}, {"traceplot", a.traceplot}, {"thin", a.thin}};
    for (const auto& d : dirs) echo["traces"].push_back(d.string());
    if (a.volatility) {
        const auto& tr = traces.front();
        auto data = data_for_trace(tr);
        Parameters theta;
        if (a.theta == "zero")
            theta.assign(tr.n_params, 0.0);
        else if (a.theta == "last") {
            auto s = tr.sample(tr.retained - 1);
            theta.assign(s.begin(), s.end());
        } else
            throw ConfigError("--theta must be 'last' or 'zero'");
        auto sizes = a.batch_sizes;
        if (sizes.empty()) {
            std::size_t n = data.train.size();
            sizes = {std::max<std::size_t>(1, n / 100), std::max<std::size_t>(1, n / 10), n};
        }
        auto table = loglik_volatility(tr.arch, theta, data.train, sizes, a.draws, a.volatility_seed);
        auto os = open_out(a.out / "fig6_volatility.csv");
        write_volatility_csv(os, table);
        echo["volatility"] = {{"theta", a.theta == "zero" ? "zero vector"
                                                          : "last retained sample of " + dirs.front().string()},
                              {"draws", a.draws},
                              {"seed", a.volatility_seed},
                              {"batch_sizes", sizes},
                              {"dataset", "training set"}};
    }
    write_json(a.out / "diagnostics.json", echo);
    std::cout << "diagnostics for " << traces.size() << " trace(s) written to " << a.out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Minibatch finer-node-blocked Gibbs sampling for MLP posteriors"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate-xor", "Write a noisy-XOR train/test pair as CSV");
    s->add_option("--out", sim.out, "Output directory")->required();
    s->add_option("--config", sim.config, "Take XOR settings from a config's data section");
    s->add_option("--train-size", sim.train_size);
    s->add_option("--test-size", sim.test_size);
    s->add_option("--noise-width", sim.width);
    s->add_option("--seed", sim.seed);

    RunArgs run;
    auto* r = app.add_subcommand("run-chain", "Run the chains described by a config file");
    r->add_option("config", run.config, "Experiment config (JSON)")->required();
    r->add_option("--output", run.output, "Run directory (overrides run.output)");
    r->add_option("--seed", run.seed);
    r->add_option("--chains", run.chains);
    r->add_option("--threads", run.threads);
    r->add_option("--total-iterations", run.total);
    r->add_option("--burnin", run.burnin);
    r->add_option("--retain-last", run.retain);
    r->add_option("--batch-size", run.batch, "Integer or 'full'");
    r->add_option("--acceptance-floor", run.floor);
    r->add_flag("--full-scale", run.full_scale, "110000 iterations, 10000 burn-in, keep the last 10000");

    PredictArgs pred;
    auto* p = app.add_subcommand("predict", "Posterior predictive accuracy from stored traces");
    p->add_option("--trace", pred.trace, "Trace or run directory")->required();
    p->add_option("--last", pred.last, "Use the last k retained samples (repeatable)");
    p->add_option("--out", pred.out, "Output directory (default: the trace directory)");
    p->add_option("--test-csv", pred.test_csv);
    p->add_option("--test-images", pred.test_images);
    p->add_option("--test-labels", pred.test_labels);
    p->add_option("--threads", pred.threads);
    p->add_option("--uq-threshold", pred.uq_threshold);

    AugmentArgs aug;
    auto* g = app.add_subcommand("augment", "Apply an image transform to an IDX dataset");
    g->add_option("--images", aug.images)->required();
    g->add_option("--labels", aug.labels)->required();
    g->add_option("--transform", aug.transform, "rotation, blur or inversion")->required();
    g->add_option("--out-images", aug.out_images)->required();
    g->add_option("--out-labels", aug.out_labels)->required();
    g->add_option("--grid", aug.grid, "Sample-grid CSV of the first images");
    g->add_option("--grid-count", aug.grid_count);
    g->add_option("--seed", aug.cfg.seed);
    g->add_option("--max-angle", aug.cfg.max_angle_degrees);
    g->add_option("--blur-probability", aug.cfg.blur_probability);
    g->add_option("--kernel-size", aug.cfg.kernel_size);
    g->add_option("--sigma-min", aug.cfg.sigma_min);
    g->add_option("--sigma-max", aug.cfg.sigma_max);
    g->add_option("--invert-probability", aug.cfg.invert_probability);

    DiagnosticsArgs diag;
    auto* d = app.add_subcommand("diagnostics", "Acceptance, traceplot and volatility tables");
    d->add_option("--trace", diag.traces, "Trace or run directories")->required();
    d->add_option("--out", diag.out)->required();
    d->add_option("--level", diag.levels, "block, node and/or layer");
    d->add_option("--traceplot", diag.traceplot, "Flat parameter indices");
    d->add_option("--thin", diag.thin);
    d->add_flag("--volatility", diag.volatility, "Batch-size volatility of the normalized log-likelihood");
    d->add_option("--batch-sizes", diag.batch_sizes);
    d->add_option("--draws", diag.draws);
    d->add_option("--volatility-seed", diag.volatility_seed);
    d->add_option("--theta", diag.theta, "last or zero");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(ErrorKind::Config);
    }

    try {
        if (*s) return cmd_simulate(sim);
        if (*r) return cmd_run(run);
        if (*p) return cmd_predict(pred);
        if (*g) return cmd_augment(aug);
        if (*d) return cmd_diagnostics(diag);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "error (config): " << e.what() << '\n';
        return exit_code(ErrorKind::Config);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error (io): " << e.what() << '\n';
        return exit_code(ErrorKind::Io);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
