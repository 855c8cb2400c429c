#pragma once

// Minibatch Metropolis-within-blocked-Gibbs (MWBG) sampling over any
// BlockPartition, with node-local incremental loss evaluation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fnbg/blocking.hpp"
#include "fnbg/mlp.hpp"
#include "fnbg/rng.hpp"

namespace fnbg {

/// Proposal variances sigma_q^2. Resolution order per block: explicit block
/// entry, then the block's layer entry, then the default.
struct ProposalConfig {
    double default_variance = 0;
    std::map<std::size_t, double> layer_variance;
    std::map<std::size_t, double> block_variance;

    static ProposalConfig uniform(double variance) { return {variance, {}, {}}; }
    static ProposalConfig per_layer(const std::vector<double>& variances) {
        ProposalConfig c;
        for (std::size_t j = 0; j < variances.size(); ++j) c.layer_variance[j + 1] = variances[j];
        return c;
    }

    std::vector<double> resolve(const BlockPartition& partition) const {
        std::vector<double> out(partition.size());
        for (std::size_t q = 0; q < partition.size(); ++q) {
            double v = default_variance;
            if (auto it = layer_variance.find(partition[q].tag.layer); it != layer_variance.end()) v = it->second;
            if (auto it = block_variance.find(q); it != block_variance.end()) v = it->second;
            if (!(v > 0) || !std::isfinite(v))
                throw ConfigError("block " + std::to_string(q) + " has no positive proposal variance");
            out[q] = v;
        }
        return out;
    }
};

enum class BatchRefresh { PerSweep, PerBlock };
enum class InitKind { Zeros, Normal, FanIn };

struct InitConfig {
    InitKind kind = InitKind::FanIn;
    double scale = 1.0;  // standard deviation for InitKind::Normal
};

struct ChainConfig {
    std::size_t total_iterations = 0;
    std::size_t burnin = 0;
    std::size_t batch_size = 0;  // 0 selects the full dataset (exact MWBG)
    std::uint64_t seed = 0;
    std::size_t retain_last = 0;
    BatchRefresh refresh = BatchRefresh::PerSweep;
    bool record_loglik = false;
    InitConfig init;

    std::size_t post_burnin() const { return total_iterations - burnin; }
    bool full_batch() const { return batch_size == 0; }

    void validate(std::size_t data_size) const {
        if (total_iterations == 0) throw ConfigError("total_iterations must be positive");
        if (burnin > total_iterations) throw ConfigError("burnin exceeds total_iterations");
        if (retain_last > post_burnin()) throw ConfigError("retain_last exceeds the post-burnin iteration count");
        if (batch_size > data_size)
            throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                              std::to_string(data_size));
    }
};

struct ChainTrace {
    Architecture arch;
    BlockPartition partition;
    ChainConfig config;
    std::vector<double> variances;
    double prior_variance = 10.0;

    std::size_t n_params = 0;
    std::size_t retained = 0;
    std::vector<double> samples;  // retained x n_params, row = iteration
    std::vector<std::uint64_t> proposed, accepted, nonfinite;
    std::vector<double> minibatch_loglik;  // per post-burnin iteration, when recorded
    double runtime_seconds = 0;
    nlohmann::json metadata = nlohmann::json::object();

    std::span<const double> sample(std::size_t t) const { return {samples.data() + t * n_params, n_params}; }
    /// 0-based iteration index of retained sample t.
    std::size_t iteration_of(std::size_t t) const { return config.total_iterations - retained + t; }

    std::uint64_t total_proposed() const { return std::accumulate(proposed.begin(), proposed.end(), std::uint64_t{0}); }
    std::uint64_t total_accepted() const { return std::accumulate(accepted.begin(), accepted.end(), std::uint64_t{0}); }
    double overall_acceptance() const {
        auto p = total_proposed();
        return p ? static_cast<double>(total_accepted()) / static_cast<double>(p) : 0.0;
    }

    /// Identity of the sampled trajectory; wall-clock runtime is excluded.
    bool same_draws(const ChainTrace& o) const {
        return arch == o.arch && partition == o.partition && variances == o.variances && samples == o.samples &&
               proposed == o.proposed && accepted == o.accepted && nonfinite == o.nonfinite &&
               minibatch_loglik == o.minibatch_loglik && config.seed == o.config.seed;
    }
};

/// Random minibatch function r: uniform subsets without replacement, or the
/// identity when the batch size is Full. Returned rows are sorted.
class MinibatchSource {
public:
    MinibatchSource(std::size_t dataset_size, std::size_t batch_size, Engine rng)
        : n_(dataset_size), batch_(batch_size == 0 ? dataset_size : batch_size), rng_(std::move(rng)),
          pool_(dataset_size) {
        if (batch_ > n_) throw ConfigError("batch size exceeds dataset size");
        std::iota(pool_.begin(), pool_.end(), std::size_t{0});
        if (batch_ == n_) current_ = pool_;
    }

    bool full() const { return batch_ == n_; }

    std::span<const std::size_t> next() {
        if (full()) return current_;
        for (std::size_t i = 0; i < batch_; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n_ - 1);
            std::swap(pool_[i], pool_[pick(rng_)]);
        }
        current_.assign(pool_.begin(), pool_.begin() + static_cast<std::ptrdiff_t>(batch_));
        std::sort(current_.begin(), current_.end());
        return current_;
    }

private:
    std::size_t n_, batch_;
    Engine rng_;
    std::vector<std::size_t> pool_, current_;
};

struct AcceptanceResult {
    double probability = 0;
    bool nonfinite = false;
};

namespace detail {

inline AcceptanceResult clamp_acceptance(double log_ratio) {
    if (std::isnan(log_ratio)) return {0.0, true};
    return {std::exp(std::min(log_ratio, 0.0)), false};
}

inline void check_block_candidate(std::span<const double> current, std::span<const double> candidate,
                                  const Block& block) {
    if (current.size() != candidate.size()) throw ConfigError("candidate length differs from current state");
    std::vector<char> in_block(current.size(), 0);
    for (auto i : block.indices) in_block.at(i) = 1;
    for (std::size_t i = 0; i < current.size(); ++i)
        if (!in_block[i] && current[i] != candidate[i])
            throw ConfigError("candidate differs from the current state outside the block");
}

}  // namespace detail

/// min{ L(theta*) pi(block*) / (L(theta) pi(block)), 1 }, evaluated from the
/// likelihood (product of output probabilities) and block prior densities.
inline AcceptanceResult acceptance_probability_likelihood(const Architecture& arch, const GaussianPrior& prior,
                                                          std::span<const double> current,
                                                          std::span<const double> candidate, const Block& block,
                                                          const Dataset& data,
                                                          std::span<const std::size_t> rows = {}) {
    detail::check_block_candidate(current, candidate, block);
    double num = log_likelihood(arch, candidate, data, rows) + prior.log_density(candidate, block.indices);
    double den = log_likelihood(arch, current, data, rows) + prior.log_density(current, block.indices);
    if (!std::isfinite(num) || !std::isfinite(den)) return {0.0, true};
    return detail::clamp_acceptance(num - den);
}

/// The same probability written with the unnormalized cross-entropy loss:
/// min{ pi(block*)/pi(block) * exp(E(theta) - E(theta*)), 1 }.
inline AcceptanceResult acceptance_probability_crossentropy(const Architecture& arch, const GaussianPrior& prior,
                                                            std::span<const double> current,
                                                            std::span<const double> candidate, const Block& block,
                                                            const Dataset& data,
                                                            std::span<const std::size_t> rows = {}) {
    detail::check_block_candidate(current, candidate, block);
    double e_cur = loss(arch, current, data, rows);
    double e_cand = loss(arch, candidate, data, rows);
    if (!std::isfinite(e_cur) || !std::isfinite(e_cand)) return {0.0, true};
    return detail::clamp_acceptance(prior.log_ratio(candidate, current, block.indices) + e_cur - e_cand);
}

/// Something a sweep can evaluate: the loss E at the current state, the loss
/// at a candidate differing from it within one block, and commit of the last
/// candidate.
template <class T>
concept SweepTarget = requires(T t, std::span<const double> candidate, const Block& block) {
    { t.current_loss() } -> std::convertible_to<double>;
    { t.candidate_loss(candidate, block) } -> std::convertible_to<double>;
    t.accept();
};

/// Loss of an arbitrary function of theta; no caching.
template <class F>
class FunctionTarget {
public:
    FunctionTarget(F f, std::span<const double> theta) : f_(std::move(f)), current_(f_(theta)) {}
    double current_loss() const { return current_; }
    double candidate_loss(std::span<const double> candidate, const Block&) { return candidate_ = f_(candidate); }
    void accept() { current_ = candidate_; }

private:
    F f_;
    double current_ = 0, candidate_ = 0;
};

/// MLP loss on one data view with cached per-layer activations.
///
/// A candidate confined to one node (j, k) only changes column k of layer j's
/// pre-activations; that column is updated by the weight deltas, layer j+1 by
/// a rank-one correction, and only the layers after that are recomputed.
/// Blocks spanning several nodes recompute from their first layer onward.
class MlpBatchTarget {
public:
    MlpBatchTarget(const Architecture& arch, const Dataset& data)
        : arch_(&arch), data_(&data), kind_(arch.likelihood()) {
        data.check_labels(arch.class_count());
        if (data.features != arch.input_width()) throw ConfigError("dataset width does not match the input layer");
    }

    /// Re-evaluates all layers at `theta` on the selected rows (all rows if empty).
    void reset(std::span<const double> theta, std::span<const std::size_t> rows) {
        detail::check_params(*arch_, theta);
        theta_.assign(theta.begin(), theta.end());
        rows_.assign(rows.begin(), rows.end());
        std::size_t depth = arch_->depth();
        pre_.assign(depth + 1, Matrix());
        post_.assign(depth, Matrix());
        post_[0] = gather_rows(*data_, rows_);
        for (std::size_t j = 1; j <= depth; ++j) {
            pre_[j] = layer_preactivation(*arch_, theta_, j, post_[j - 1]);
            if (j < depth) post_[j] = activate(pre_[j], j);
        }
        loss_ = loss_from_preactivations(kind_, pre_[depth], *data_, rows_);
    }

    double current_loss() const { return loss_; }
    std::span<const double> state() const { return theta_; }

    double candidate_loss(std::span<const double> candidate, const Block& block) {
        std::size_t depth = arch_->depth();
        block_ = &block;
        cand_theta_ = candidate;
        std::size_t first = npos;
        bool node_local = true;
        std::size_t node = npos;
        for (auto i : block.indices) {
            auto c = arch_->locate(i);
            if (first == npos) {
                first = c.layer;
                node = c.node;
            } else if (c.layer != first || c.node != node) {
                node_local = false;
                first = std::min(first, c.layer);
            }
        }
        cand_first_ = first;
        cand_pre_.assign(depth + 1, Matrix());
        cand_post_.assign(depth, Matrix());
        std::size_t next = first + 1;
        if (node_local) {
            auto k = static_cast<Eigen::Index>(node);
            std::size_t fan_in = arch_->width(first - 1);
            Eigen::VectorXd col = pre_[first].col(k);
            for (auto i : block.indices) {
                double delta = candidate[i] - theta_[i];
                if (delta == 0) continue;
                std::size_t src = i - arch_->node_offset(first, node);
                if (src == fan_in)
                    col.array() += delta;
                else
                    col += delta * post_[first - 1].col(static_cast<Eigen::Index>(src));
            }
            cand_pre_[first] = pre_[first];
            cand_pre_[first].col(k) = col;
            if (first < depth) {
                cand_post_[first] = post_[first];
                Eigen::VectorXd act = col;
                apply_hidden(act);
                Eigen::VectorXd change = act - post_[first].col(k);
                cand_post_[first].col(k) = act;
                // Rank-one update of the next layer's pre-activations.
                auto w_next = layer_weights(*arch_, theta_, first + 1);
                cand_pre_[first + 1] = pre_[first + 1] + change * w_next.col(k).transpose();
                if (first + 1 < depth) cand_post_[first + 1] = activate(cand_pre_[first + 1], first + 1);
                next = first + 2;
            }
        } else {
            cand_pre_[first] = layer_preactivation(*arch_, candidate, first, post_[first - 1]);
            if (first < depth) cand_post_[first] = activate(cand_pre_[first], first);
        }
        for (std::size_t j = next; j <= depth; ++j) {
            cand_pre_[j] = layer_preactivation(*arch_, candidate, j, cand_post_[j - 1]);
            if (j < depth) cand_post_[j] = activate(cand_pre_[j], j);
        }
        cand_loss_ = loss_from_preactivations(kind_, cand_pre_[depth], *data_, rows_);
        return cand_loss_;
    }

    void accept() {
        std::size_t depth = arch_->depth();
        for (std::size_t j = cand_first_; j <= depth; ++j) {
            std::swap(pre_[j], cand_pre_[j]);
            if (j < depth) std::swap(post_[j], cand_post_[j]);
        }
        for (auto i : block_->indices) theta_[i] = cand_theta_[i];
        loss_ = cand_loss_;
    }

private:
    Matrix activate(const Matrix& g, std::size_t layer) const {
        Matrix h = g;
        detail::activate_rows(h, arch_->activation(layer));
        return h;
    }
    void apply_hidden(Eigen::VectorXd& v) const {
        if (arch_->hidden_activation() == Activation::Sigmoid)
            for (auto& x : v) x = sigmoid(x);
    }

    const Architecture* arch_;
    const Dataset* data_;
    LikelihoodKind kind_;
    std::vector<double> theta_;
    std::vector<std::size_t> rows_;
    std::vector<Matrix> pre_, post_;
    double loss_ = 0;

    const Block* block_ = nullptr;
    std::span<const double> cand_theta_;
    std::size_t cand_first_ = 0;
    std::vector<Matrix> cand_pre_, cand_post_;
    double cand_loss_ = 0;
};

/// Random streams used by a sweep: proposal noise and accept/reject uniforms.
struct SweepStreams {
    Engine proposal;
    Engine accept;
    std::normal_distribution<double> normal{0.0, 1.0};
    std::uniform_real_distribution<double> uniform{0.0, 1.0};

    static SweepStreams for_seed(std::uint64_t seed) {
        return {make_engine(seed, Stream::Proposal), make_engine(seed, Stream::Accept), {}, {}};
    }
};

/// Per-block outcome of one sweep.
struct SweepRecord {
    std::vector<std::uint8_t> accepted;
    std::vector<std::uint8_t> nonfinite;
    std::vector<double> probability;
    std::size_t decisions() const { return accepted.size(); }
};

struct NoHook {
    void operator()(std::size_t) const {}
};

/// One MWBG iteration: blocks are visited in partition order; each draws a
/// candidate from N(block, sigma_q^2 I), computes the cross-entropy form of
/// the acceptance probability on the target's data view and accepts when a
/// uniform draw u satisfies u <= a. Accepted blocks are visible to the
/// following blocks of the same sweep. `before_block(q)` runs before block q
/// is evaluated (used for per-block minibatch refresh).
template <SweepTarget Target, class Hook = NoHook>
SweepRecord mwbg_sweep(Parameters& theta, const BlockPartition& partition, std::span<const double> variances,
                       const GaussianPrior& prior, Target& target, SweepStreams& streams, Hook&& before_block = {}) {
    SweepRecord rec;
    rec.accepted.assign(partition.size(), 0);
    rec.nonfinite.assign(partition.size(), 0);
    rec.probability.assign(partition.size(), 0);
    Parameters candidate = theta;
    for (std::size_t q = 0; q < partition.size(); ++q) {
        const Block& block = partition[q];
        before_block(q);
        double sd = std::sqrt(variances[q]);
        for (auto i : block.indices) candidate[i] = theta[i] + sd * streams.normal(streams.proposal);
        double e_cur = target.current_loss();
        double e_cand = target.candidate_loss(candidate, block);
        double u = streams.uniform(streams.accept);
        AcceptanceResult a = std::isfinite(e_cand)
                                 ? detail::clamp_acceptance(prior.log_ratio(candidate, theta, block.indices) + e_cur - e_cand)
                                 : AcceptanceResult{0.0, true};
        rec.probability[q] = a.probability;
        rec.nonfinite[q] = a.nonfinite;
        if (!a.nonfinite && u <= a.probability) {
            rec.accepted[q] = 1;
            target.accept();
            for (auto i : block.indices) theta[i] = candidate[i];
        } else {
            for (auto i : block.indices) candidate[i] = theta[i];
        }
    }
    return rec;
}

/// Initial state drawn from the chain's Init stream.
inline Parameters initial_state(const Architecture& arch, const InitConfig& init, std::uint64_t seed) {
    Parameters theta(arch.param_count(), 0.0);
    Engine rng = make_engine(seed, Stream::Init);
    switch (init.kind) {
        case InitKind::Zeros: break;
        case InitKind::Normal: {
            std::normal_distribution<double> n(0.0, init.scale);
            for (auto& v : theta) v = n(rng);
            break;
        }
        case InitKind::FanIn:
            for (std::size_t j = 1; j <= arch.depth(); ++j) {
                double bound = 1.0 / std::sqrt(static_cast<double>(arch.width(j - 1)));
                std::uniform_real_distribution<double> u(-bound, bound);
                for (std::size_t i = arch.layer_offset(j); i < arch.layer_offset(j + 1); ++i) theta[i] = u(rng);
            }
            break;
    }
    return theta;
}

/// Runs total_iterations MWBG sweeps, drawing a fresh minibatch per sweep (or
/// per block). Counters cover post-burnin sweeps; the last retain_last states
/// are stored. Fully determined by the config seed.
inline ChainTrace run_chain(const Architecture& arch, const Dataset& data, const BlockPartition& partition,
                            const ProposalConfig& proposals, const GaussianPrior& prior, const ChainConfig& config,
                            const Parameters* init = nullptr) {
    config.validate(data.size());
    if (auto report = validate(partition, arch); !report) throw ConfigError("invalid partition: " + report.detail);
    auto start = std::chrono::steady_clock::now();

    ChainTrace trace;
    trace.arch = arch;
    trace.partition = partition;
    trace.config = config;
    trace.variances = proposals.resolve(partition);
    trace.prior_variance = prior.variance;
    trace.n_params = arch.param_count();
    trace.retained = config.retain_last;
    trace.samples.reserve(config.retain_last * trace.n_params);
    trace.proposed.assign(partition.size(), 0);
    trace.accepted.assign(partition.size(), 0);
    trace.nonfinite.assign(partition.size(), 0);

    Parameters theta = init ? *init : initial_state(arch, config.init, config.seed);
    detail::check_params(arch, theta);

    MlpBatchTarget target(arch, data);
    MinibatchSource batches(data.size(), config.batch_size, make_engine(config.seed, Stream::Minibatch));
    SweepStreams streams = SweepStreams::for_seed(config.seed);
    const std::size_t retain_from = config.total_iterations - config.retain_last;

    for (std::size_t t = 0; t < config.total_iterations; ++t) {
        SweepRecord rec;
        if (config.refresh == BatchRefresh::PerSweep || batches.full()) {
            target.reset(theta, batches.next());
            rec = mwbg_sweep(theta, partition, trace.variances, prior, target, streams);
        } else {
            rec = mwbg_sweep(theta, partition, trace.variances, prior, target, streams,
                             [&](std::size_t) { target.reset(theta, batches.next()); });
        }
        if (t >= config.burnin) {
            for (std::size_t q = 0; q < partition.size(); ++q) {
                ++trace.proposed[q];
                trace.accepted[q] += rec.accepted[q];
                trace.nonfinite[q] += rec.nonfinite[q];
            }
            if (config.record_loglik) trace.minibatch_loglik.push_back(-target.current_loss());
        }
        if (t >= retain_from) trace.samples.insert(trace.samples.end(), theta.begin(), theta.end());
    }
    trace.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return trace;
}

/// Seed of chain slot `chain` on its `attempt`-th try.
inline std::uint64_t chain_seed(std::uint64_t base_seed, std::size_t chain, std::size_t attempt = 0) {
    if (attempt == 0 && chain == 0) return base_seed;
    return make_engine(base_seed, {static_cast<std::uint64_t>(Stream::Restart), chain, attempt})();
}

struct MultiChainOptions {
    std::size_t chains = 1;
    std::size_t threads = 1;
    double acceptance_floor = 0;  // chains with pooled acceptance below this are re-run
    std::size_t max_attempts = 50;
};

struct MultiChainResult {
    std::vector<ChainTrace> traces;
    std::vector<std::size_t> attempts;  // per retained chain
    std::size_t discarded = 0;
    double discarded_runtime_seconds = 0;
    double retained_runtime_seconds = 0;
};

/// Runs independent chains (one per worker). With an acceptance floor, a chain
/// whose pooled post-burnin acceptance rate falls below it is discarded and
/// re-run with a fresh seed until it passes or max_attempts is reached.
inline MultiChainResult run_chains(const Architecture& arch, const Dataset& data, const BlockPartition& partition,
                                   const ProposalConfig& proposals, const GaussianPrior& prior,
                                   const ChainConfig& base, const MultiChainOptions& opts) {
    base.validate(data.size());
    struct Slot {
        ChainTrace trace;
        std::size_t attempts = 0;
        double discarded_runtime = 0;
        std::exception_ptr error;
    };
    std::vector<Slot> slots(opts.chains);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c; (c = next++) < opts.chains;) {
            Slot& slot = slots[c];
            try {
                for (std::size_t a = 0;; ++a) {
                    if (a >= opts.max_attempts)
                        throw NumericError("chain " + std::to_string(c) + " did not reach acceptance floor " +
                                           std::to_string(opts.acceptance_floor) + " in " +
                                           std::to_string(opts.max_attempts) + " attempts");
                    ChainConfig cfg = base;
                    cfg.seed = chain_seed(base.seed, c, a);
                    ChainTrace tr = run_chain(arch, data, partition, proposals, prior, cfg);
                    slot.attempts = a + 1;
                    if (tr.overall_acceptance() >= opts.acceptance_floor) {
                        slot.trace = std::move(tr);
                        break;
                    }
                    slot.discarded_runtime += tr.runtime_seconds;
                }
            } catch (...) {
                slot.error = std::current_exception();
            }
        }
    };
    std::size_t n_threads = std::max<std::size_t>(1, std::min(opts.threads, opts.chains));
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    MultiChainResult out;
    for (auto& s : slots) {
        if (s.error) std::rethrow_exception(s.error);
        out.discarded += s.attempts - 1;
        out.discarded_runtime_seconds += s.discarded_runtime;
        out.retained_runtime_seconds += s.trace.runtime_seconds;
        out.attempts.push_back(s.attempts);
        out.traces.push_back(std::move(s.trace));
    }
    return out;
}

}  // namespace fnbg
