#pragma once

// Bayesian marginalization over retained chain states: Monte Carlo posterior
// predictive pmfs, prediction rules, accuracy and two-label UQ summaries.

#include <algorithm>
#include <array>
#include <ostream>
#include <thread>
#include <vector>

#include "fnbg/sampler.hpp"

namespace fnbg {

/// Contiguous run of retained parameter vectors (row = draw).
struct SampleView {
    std::span<const double> data;
    std::size_t n_params = 0;

    std::size_t size() const { return n_params ? data.size() / n_params : 0; }
    bool empty() const { return size() == 0; }
    std::span<const double> operator[](std::size_t t) const { return data.subspan(t * n_params, n_params); }
};

inline SampleView all_samples(const ChainTrace& tr) { return {tr.samples, tr.n_params}; }

/// The last k retained draws; k = 0 means all of them.
inline SampleView last_samples(const ChainTrace& tr, std::size_t k) {
    if (k > tr.retained)
        throw ConfigError("requested last " + std::to_string(k) + " samples but only " + std::to_string(tr.retained) +
                          " are retained");
    if (k == 0) k = tr.retained;
    return {std::span<const double>(tr.samples).subspan((tr.retained - k) * tr.n_params, k * tr.n_params),
            tr.n_params};
}

struct LabelProb {
    int label = 0;
    double prob = 0;
};

struct PredictivePmf {
    std::vector<double> probabilities;
    std::size_t sample_count = 0;
    std::array<LabelProb, 2> top2{};
};

/// Two largest entries; ties resolved towards the lower label.
inline std::array<LabelProb, 2> top_two(std::span<const double> p) {
    std::array<LabelProb, 2> out{LabelProb{-1, -1.0}, LabelProb{-1, -1.0}};
    for (std::size_t k = 0; k < p.size(); ++k) {
        LabelProb c{static_cast<int>(k), p[k]};
        if (c.prob > out[0].prob) {
            out[1] = out[0];
            out[0] = c;
        } else if (c.prob > out[1].prob) {
            out[1] = c;
        }
    }
    if (out[1].label < 0) out[1] = out[0];
    return out;
}

namespace detail {

/// Class pmf rows from output post-activations.
inline Matrix class_probabilities(const Architecture& arch, const Matrix& out) {
    if (arch.likelihood() == LikelihoodKind::Categorical) return out;
    Matrix p(out.rows(), 2);
    p.col(1) = out.col(0);
    p.col(0) = (1.0 - out.col(0).array()).matrix();
    return p;
}

inline constexpr std::size_t kChunk = 256;

}  // namespace detail

/// (1/v) sum_t p(y | x, omega_t) for every row of `inputs`. Rows are processed
/// in fixed chunks so the result does not depend on the thread count.
inline Matrix predictive_pmfs(const Architecture& arch, SampleView samples, const Matrix& inputs,
                              std::size_t threads = 1) {
    if (samples.empty()) throw ConfigError("predictive pmf needs at least one retained sample");
    if (samples.n_params != arch.param_count()) throw ConfigError("samples do not match the architecture");
    const auto n = static_cast<std::size_t>(inputs.rows());
    const std::size_t classes = arch.class_count();
    Matrix result = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(classes));
    const std::size_t chunks = (n + detail::kChunk - 1) / detail::kChunk;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c; (c = next++) < chunks;) {
            auto begin = static_cast<Eigen::Index>(c * detail::kChunk);
            auto rows = static_cast<Eigen::Index>(std::min(detail::kChunk, n - c * detail::kChunk));
            Matrix block = inputs.middleRows(begin, rows);
            Matrix acc = Matrix::Zero(rows, static_cast<Eigen::Index>(classes));
            for (std::size_t t = 0; t < samples.size(); ++t)
                acc += detail::class_probabilities(arch, forward_batch(arch, samples[t], block));
            result.middleRows(begin, rows) = acc / static_cast<double>(samples.size());
        }
    };
    std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, chunks));
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    return result;
}

inline PredictivePmf make_pmf(std::span<const double> probabilities, std::size_t sample_count) {
    PredictivePmf pmf{{probabilities.begin(), probabilities.end()}, sample_count, {}};
    pmf.top2 = top_two(pmf.probabilities);
    return pmf;
}

/// Monte Carlo posterior predictive pmf at one input. A single sigmoid output
/// yields the two-class pmf (1 - p, p).
inline PredictivePmf predictive_pmf(const Architecture& arch, SampleView samples, std::span<const double> x) {
    if (x.size() != arch.input_width()) throw ConfigError("input width mismatch");
    Matrix in = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
    Matrix p = predictive_pmfs(arch, samples, in);
    return make_pmf({p.data(), static_cast<std::size_t>(p.size())}, samples.size());
}

/// argmax of the pmf; ties go to the lowest label.
inline int predict_multiclass(std::span<const double> pmf) {
    return static_cast<int>(std::max_element(pmf.begin(), pmf.end()) - pmf.begin());
}
inline int predict_multiclass(const PredictivePmf& pmf) { return predict_multiclass(pmf.probabilities); }

/// Mean sigmoid output over samples, thresholded: >= 0.5 gives label 1.
inline int predict_binary_from_mean(double mean_probability) { return mean_probability >= 0.5 ? 1 : 0; }

inline int predict_binary(const Architecture& arch, SampleView samples, std::span<const double> x) {
    if (arch.likelihood() != LikelihoodKind::Bernoulli) throw ConfigError("binary prediction needs a single sigmoid output");
    return predict_binary_from_mean(predictive_pmf(arch, samples, x).probabilities[1]);
}

/// Label chosen for each pmf row under the architecture's classification rule.
inline std::vector<int> predict_labels(const Architecture& arch, const Matrix& pmfs) {
    std::vector<int> out(static_cast<std::size_t>(pmfs.rows()));
    bool binary = arch.likelihood() == LikelihoodKind::Bernoulli;
    for (Eigen::Index i = 0; i < pmfs.rows(); ++i) {
        std::span<const double> row(pmfs.row(i).data(), static_cast<std::size_t>(pmfs.cols()));
        out[static_cast<std::size_t>(i)] = binary ? predict_binary_from_mean(row[1]) : predict_multiclass(row);
    }
    return out;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (truth.empty()) throw DataError("accuracy of an empty test set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Fraction of test points whose marginalized prediction equals the label.
inline double predictive_accuracy(const Architecture& arch, SampleView samples, const Dataset& test,
                                  std::size_t threads = 1) {
    if (test.empty()) throw DataError("accuracy of an empty test set");
    auto labels = predict_labels(arch, predictive_pmfs(arch, samples, gather_rows(test), threads));
    return accuracy(labels, test.labels);
}

struct UqReport {
    LabelProb top1;
    bool show_second = false;
    LabelProb top2;
};

/// Top-1 probability, plus the runner-up when the top-1 falls below `threshold`.
inline UqReport uq_report(const PredictivePmf& pmf, double threshold = 0.5) {
    if (!(threshold > 0 && threshold < 1)) throw ConfigError("UQ threshold must lie in (0,1)");
    UqReport r{pmf.top2[0], pmf.top2[0].prob < threshold, pmf.top2[1]};
    return r;
}

/// index,true_label,predicted_label,top1_prob,top2_label,top2_prob
inline void write_predictions_csv(std::ostream& os, const Architecture& arch, const Matrix& pmfs,
                                  std::span<const int> truth) {
    auto predicted = predict_labels(arch, pmfs);
    os << "index,true_label,predicted_label,top1_prob,top2_label,top2_prob\n";
    os.precision(10);
    for (Eigen::Index i = 0; i < pmfs.rows(); ++i) {
        std::span<const double> row(pmfs.row(i).data(), static_cast<std::size_t>(pmfs.cols()));
        auto top = top_two(row);
        auto idx = static_cast<std::size_t>(i);
        os << i << ',' << truth[idx] << ',' << predicted[idx] << ',' << top[0].prob << ',' << top[1].label << ','
           << top[1].prob << '\n';
    }
}

}  // namespace fnbg
