#pragma once

// Multilayer perceptron evaluation, categorical and Bernoulli likelihoods,
// cross-entropy losses and the isotropic normal prior.
//
// Layer indices follow the widths vector: layer 0 is the input, layers
// 1..depth() carry parameters. Node indices within a layer are 0-based.
// Class labels are stored 0-based (class k of a kappa-way output is label k-1).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fnbg/error.hpp"

namespace fnbg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Parameters = std::vector<double>;

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

enum class Activation { Sigmoid, Softmax, Identity };
enum class LikelihoodKind { Categorical, Bernoulli };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softmax: return "softmax";
        case Activation::Identity: return "identity";
    }
    return "?";
}

inline Activation parse_activation(std::string_view name) {
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "softmax") return Activation::Softmax;
    if (name == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

/// Position of one parameter in the layout. `source == npos` marks the bias.
struct ParamCoord {
    std::size_t layer;
    std::size_t node;
    std::size_t source;
    bool is_bias() const { return source == npos; }
};

/// Layer widths plus activations. The flat parameter layout is
/// layer-major, then node-major; each node owns its incoming weights in
/// source order followed by its bias, so node blocks are contiguous slices.
class Architecture {
public:
    Architecture() = default;

    explicit Architecture(std::vector<std::size_t> widths,
                          Activation hidden = Activation::Sigmoid,
                          Activation output = Activation::Softmax)
        : widths_(std::move(widths)), hidden_(hidden), output_(output) {
        if (widths_.size() < 2) throw ConfigError("architecture needs at least an input and an output layer");
        for (auto w : widths_)
            if (w == 0) throw ConfigError("layer widths must be positive");
        if (hidden_ == Activation::Softmax) throw ConfigError("softmax is only allowed at the output layer");
        offsets_.assign(widths_.size() + 1, 0);
        for (std::size_t j = 1; j < widths_.size(); ++j)
            offsets_[j + 1] = offsets_[j] + widths_[j] * (widths_[j - 1] + 1);
    }

    std::size_t depth() const { return widths_.size() - 1; }
    std::size_t width(std::size_t layer) const { return widths_.at(layer); }
    std::size_t input_width() const { return widths_.front(); }
    std::size_t output_width() const { return widths_.back(); }
    const std::vector<std::size_t>& widths() const { return widths_; }
    Activation hidden_activation() const { return hidden_; }
    Activation output_activation() const { return output_; }
    Activation activation(std::size_t layer) const { return layer == depth() ? output_ : hidden_; }

    std::size_t param_count() const { return offsets_.back(); }
    std::size_t layer_offset(std::size_t layer) const { return offsets_.at(layer); }
    std::size_t layer_size(std::size_t layer) const { return offsets_.at(layer + 1) - offsets_.at(layer); }
    std::size_t node_size(std::size_t layer) const { return widths_.at(layer - 1) + 1; }
    std::size_t node_offset(std::size_t layer, std::size_t node) const {
        return layer_offset(layer) + node * node_size(layer);
    }
    std::size_t weight_index(std::size_t layer, std::size_t node, std::size_t source) const {
        return node_offset(layer, node) + source;
    }
    std::size_t bias_index(std::size_t layer, std::size_t node) const {
        return node_offset(layer, node) + widths_[layer - 1];
    }

    ParamCoord locate(std::size_t index) const {
        if (index >= param_count()) throw ConfigError("parameter index out of range");
        auto it = std::upper_bound(offsets_.begin() + 1, offsets_.end(), index);
        std::size_t layer = static_cast<std::size_t>(it - offsets_.begin()) - 1;
        std::size_t local = index - offsets_[layer];
        std::size_t node = local / node_size(layer);
        std::size_t within = local % node_size(layer);
        return {layer, node, within == widths_[layer - 1] ? npos : within};
    }

    LikelihoodKind likelihood() const {
        if (output_ == Activation::Softmax) {
            if (output_width() < 2) throw ConfigError("softmax output needs at least two classes");
            return LikelihoodKind::Categorical;
        }
        if (output_ == Activation::Sigmoid && output_width() == 1) return LikelihoodKind::Bernoulli;
        throw ConfigError("no likelihood for output layer " + to_string(output_) + " of width " +
                          std::to_string(output_width()));
    }

    std::size_t class_count() const { return likelihood() == LikelihoodKind::Bernoulli ? 2 : output_width(); }

    std::string name() const {
        std::ostringstream os;
        os << "MLP(";
        for (std::size_t j = 0; j < widths_.size(); ++j) os << (j ? "," : "") << widths_[j];
        os << ")";
        return os.str();
    }

    friend bool operator==(const Architecture&, const Architecture&) = default;

private:
    std::vector<std::size_t> widths_;
    Activation hidden_ = Activation::Sigmoid;
    Activation output_ = Activation::Softmax;
    std::vector<std::size_t> offsets_;
};

/// Inputs (row-major, one row per point) with 0-based integer labels.
/// Image datasets also record their pixel grid shape.
struct Dataset {
    std::size_t features = 0;
    std::vector<double> inputs;
    std::vector<int> labels;
    std::size_t image_rows = 0;
    std::size_t image_cols = 0;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    std::span<const double> row(std::size_t i) const { return {inputs.data() + i * features, features}; }
    std::span<double> row(std::size_t i) { return {inputs.data() + i * features, features}; }

    void check_shape() const {
        if (inputs.size() != labels.size() * features)
            throw DataError("dataset inputs do not match label count");
    }
    void check_labels(std::size_t classes) const {
        for (int y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= classes)
                throw DataError("label " + std::to_string(y) + " outside class range [0," +
                                std::to_string(classes) + ")");
    }
};

// ---------------------------------------------------------------- activations

inline double sigmoid(double g) {
    if (g >= 0) return 1.0 / (1.0 + std::exp(-g));
    double e = std::exp(g);
    return e / (1.0 + e);
}

/// log(1 + exp(g)) without overflow.
inline double softplus(double g) { return std::max(g, 0.0) + std::log1p(std::exp(-std::abs(g))); }

inline double log_sum_exp(std::span<const double> g) {
    double m = *std::max_element(g.begin(), g.end());
    if (!std::isfinite(m)) return m;
    double acc = 0;
    for (double v : g) acc += std::exp(v - m);
    return m + std::log(acc);
}

inline std::vector<double> softmax(std::span<const double> g) {
    if (g.empty()) throw NumericError("softmax of an empty vector");
    for (double v : g)
        if (std::isnan(v)) throw NumericError("softmax input contains NaN");
    double m = *std::max_element(g.begin(), g.end());
    std::vector<double> out(g.size());
    double total = 0;
    for (std::size_t k = 0; k < g.size(); ++k) total += (out[k] = std::exp(g[k] - m));
    for (auto& v : out) v /= total;
    return out;
}

inline std::vector<double> log_softmax(std::span<const double> g) {
    double lse = log_sum_exp(g);
    std::vector<double> out(g.begin(), g.end());
    for (auto& v : out) v -= lse;
    return out;
}

namespace detail {

inline void activate_rows(Matrix& g, Activation a) {
    switch (a) {
        case Activation::Identity: return;
        case Activation::Sigmoid:
            for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = sigmoid(g.data()[i]);
            return;
        case Activation::Softmax:
            for (Eigen::Index i = 0; i < g.rows(); ++i) {
                auto row = g.row(i);
                double m = row.maxCoeff();
                row = (row.array() - m).exp();
                row /= row.sum();
            }
            return;
    }
}

inline void check_params(const Architecture& arch, std::span<const double> theta) {
    if (theta.size() != arch.param_count())
        throw ConfigError("parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                          std::to_string(arch.param_count()));
}

}  // namespace detail

/// Weight matrix w_j (kappa_j x kappa_{j-1}) viewed in place inside theta.
inline auto layer_weights(const Architecture& arch, std::span<const double> theta, std::size_t layer) {
    using Map = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;
    return Map(theta.data() + arch.layer_offset(layer), static_cast<Eigen::Index>(arch.width(layer)),
               static_cast<Eigen::Index>(arch.width(layer - 1)),
               Eigen::OuterStride<>(static_cast<Eigen::Index>(arch.node_size(layer))));
}

/// Bias vector b_j viewed in place inside theta.
inline auto layer_bias(const Architecture& arch, std::span<const double> theta, std::size_t layer) {
    using Map = Eigen::Map<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;
    return Map(theta.data() + arch.layer_offset(layer) + arch.width(layer - 1),
               static_cast<Eigen::Index>(arch.width(layer)),
               Eigen::InnerStride<>(static_cast<Eigen::Index>(arch.node_size(layer))));
}

/// Pre-activations of layer `layer` given post-activations of the previous one.
inline Matrix layer_preactivation(const Architecture& arch, std::span<const double> theta, std::size_t layer,
                                  const Matrix& previous) {
    Matrix g = previous * layer_weights(arch, theta, layer).transpose();
    g.rowwise() += layer_bias(arch, theta, layer);
    return g;
}

/// Output-layer pre-activations for a batch of inputs (one row per point).
inline Matrix output_preactivations(const Architecture& arch, std::span<const double> theta, const Matrix& inputs) {
    detail::check_params(arch, theta);
    if (static_cast<std::size_t>(inputs.cols()) != arch.input_width())
        throw ConfigError("input width mismatch");
    Matrix h = inputs;
    for (std::size_t j = 1; j < arch.depth(); ++j) {
        h = layer_preactivation(arch, theta, j, h);
        detail::activate_rows(h, arch.hidden_activation());
    }
    return layer_preactivation(arch, theta, arch.depth(), h);
}

/// Output post-activations h_rho for a batch of inputs.
inline Matrix forward_batch(const Architecture& arch, std::span<const double> theta, const Matrix& inputs) {
    Matrix g = output_preactivations(arch, theta, inputs);
    detail::activate_rows(g, arch.output_activation());
    return g;
}

/// Output post-activation vector h_rho(x, theta) for one input.
inline std::vector<double> forward(const Architecture& arch, std::span<const double> theta,
                                   std::span<const double> x) {
    if (x.size() != arch.input_width())
        throw ConfigError("input has length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(arch.input_width()));
    Matrix in = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
    Matrix out = forward_batch(arch, theta, in);
    return {out.data(), out.data() + out.size()};
}

/// Rows of `data` selected by `rows` (all rows when `rows` is empty) as a matrix.
inline Matrix gather_rows(const Dataset& data, std::span<const std::size_t> rows = {}) {
    auto n = rows.empty() ? data.size() : rows.size();
    Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(data.features));
    for (std::size_t i = 0; i < n; ++i) {
        auto src = data.row(rows.empty() ? i : rows[i]);
        std::copy(src.begin(), src.end(), out.row(static_cast<Eigen::Index>(i)).data());
    }
    return out;
}

inline int label_at(const Dataset& data, std::span<const std::size_t> rows, std::size_t i) {
    return data.labels[rows.empty() ? i : rows[i]];
}

/// Unnormalized loss from output pre-activations: categorical cross-entropy for
/// softmax outputs, binary cross-entropy for a single sigmoid output.
inline double loss_from_preactivations(LikelihoodKind kind, const Matrix& g, const Dataset& data,
                                       std::span<const std::size_t> rows) {
    double total = 0;
    if (kind == LikelihoodKind::Categorical) {
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            auto y = static_cast<Eigen::Index>(label_at(data, rows, static_cast<std::size_t>(i)));
            std::span<const double> gi(g.row(i).data(), static_cast<std::size_t>(g.cols()));
            total += log_sum_exp(gi) - g(i, y);
        }
    } else {
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            double gi = g(i, 0);
            total += softplus(gi) - label_at(data, rows, static_cast<std::size_t>(i)) * gi;
        }
    }
    return total;
}

/// Loss matching the architecture's likelihood, summed over the selected rows.
inline double loss(const Architecture& arch, std::span<const double> theta, const Dataset& data,
                   std::span<const std::size_t> rows = {}) {
    auto kind = arch.likelihood();
    data.check_labels(arch.class_count());
    return loss_from_preactivations(kind, output_preactivations(arch, theta, gather_rows(data, rows)), data, rows);
}

/// Multiclass cross-entropy, -sum_i log h_{rho,y_i}. `normalized` divides by the
/// number of evaluated points (mean reduction).
inline double cross_entropy(const Architecture& arch, std::span<const double> theta, const Dataset& data,
                            bool normalized = false, std::span<const std::size_t> rows = {}) {
    if (arch.likelihood() != LikelihoodKind::Categorical)
        throw ConfigError("cross_entropy requires a softmax output layer");
    double e = loss(arch, theta, data, rows);
    return normalized ? e / static_cast<double>(rows.empty() ? data.size() : rows.size()) : e;
}

inline double binary_cross_entropy(const Architecture& arch, std::span<const double> theta, const Dataset& data,
                                   std::span<const std::size_t> rows = {}) {
    if (arch.likelihood() != LikelihoodKind::Bernoulli)
        throw ConfigError("binary_cross_entropy requires a single sigmoid output node");
    return loss(arch, theta, data, rows);
}

/// log L(y | x, theta), accumulated point by point from the output
/// probabilities (the product form of the likelihood, in log space).
inline double log_likelihood(const Architecture& arch, std::span<const double> theta, const Dataset& data,
                             std::span<const std::size_t> rows = {}) {
    auto kind = arch.likelihood();
    data.check_labels(arch.class_count());
    std::size_t n = rows.empty() ? data.size() : rows.size();
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto h = forward(arch, theta, data.row(rows.empty() ? i : rows[i]));
        int y = label_at(data, rows, i);
        double p = kind == LikelihoodKind::Categorical ? h[static_cast<std::size_t>(y)] : (y == 1 ? h[0] : 1.0 - h[0]);
        total += std::log(p);
    }
    return total;
}

/// Isotropic N(0, variance I) prior.
struct GaussianPrior {
    double variance = 10.0;

    double log_density(std::span<const double> theta) const {
        double ss = 0;
        for (double v : theta) ss += v * v;
        return -0.5 * static_cast<double>(theta.size()) * std::log(2 * std::numbers::pi * variance) -
               ss / (2 * variance);
    }

    /// Log-density of the marginal over the coordinates in `indices`.
    double log_density(std::span<const double> theta, std::span<const std::size_t> indices) const {
        double ss = 0;
        for (auto i : indices) ss += theta[i] * theta[i];
        return -0.5 * static_cast<double>(indices.size()) * std::log(2 * std::numbers::pi * variance) -
               ss / (2 * variance);
    }

    /// log pi(candidate_block) - log pi(current_block).
    double log_ratio(std::span<const double> candidate, std::span<const double> current,
                     std::span<const std::size_t> indices) const {
        double d = 0;
        for (auto i : indices) d += current[i] * current[i] - candidate[i] * candidate[i];
        return d / (2 * variance);
    }
};

}  // namespace fnbg
