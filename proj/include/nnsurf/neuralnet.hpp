#pragma once

// Feed-forward 2 -> 3 regression network with adaptive topology search.
//
// Layer l computes a_l = f_l(W_l a_{l-1} + b_l). With one hidden layer this is
//   D_k = f( sum_j w_kj f( sum_i w_ji P_i + w_j0 ) + w_k0 ).
// Inputs and targets are scaled per axis to [-1, 1] before they reach the
// layer stack; forward() applies and undoes that scaling so callers work in
// world units.

#include "nnsurf/error.hpp"
#include "nnsurf/pointcloud.hpp"
#include "nnsurf/random.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nnsurf {

inline constexpr std::size_t kInputDim = 2;
inline constexpr std::size_t kOutputDim = 3;

enum class Activation { sigmoid, tanh, linear };

inline std::string_view to_string(Activation a)
{
    switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
    }
    return "linear";
}

inline Activation activation_from_string(std::string_view name)
{
    if (name == "sigmoid")
        return Activation::sigmoid;
    if (name == "tanh")
        return Activation::tanh;
    if (name == "linear")
        return Activation::linear;
    throw ConfigError("unknown activation \"" + std::string(name) + "\"");
}

inline double activate(Activation a, double x)
{
    switch (a) {
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::tanh: return std::tanh(x);
    case Activation::linear: return x;
    }
    return x;
}

/// f'(x) expressed through y = f(x).
inline double activation_slope(Activation a, double y)
{
    switch (a) {
    case Activation::sigmoid: return y * (1.0 - y);
    case Activation::tanh: return 1.0 - y * y;
    case Activation::linear: return 1.0;
    }
    return 1.0;
}

struct Topology
{
    std::vector<std::size_t> hidden{1};
    Activation hidden_activation = Activation::tanh;
    Activation output_activation = Activation::linear;

    friend bool operator==(const Topology&, const Topology&) = default;
};

inline std::string describe(const Topology& t)
{
    std::string s;
    for (std::size_t i = 0; i < t.hidden.size(); ++i) {
        if (i)
            s += '-';
        s += std::to_string(t.hidden[i]);
    }
    return s;
}

/// Affine per-axis map of world coordinates onto [-1, 1].
template <std::size_t N>
struct AxisScaling
{
    std::array<double, N> center{};
    std::array<double, N> half_range = filled(1.0);

    static constexpr std::array<double, N> filled(double v)
    {
        std::array<double, N> a{};
        a.fill(v);
        return a;
    }

    /// Fits the map to the bounding box of `columns`. Constant axes keep unit scale.
    static AxisScaling fit(std::span<const std::array<double, N>> rows)
    {
        AxisScaling s;
        if (rows.empty())
            return s;
        for (std::size_t a = 0; a < N; ++a) {
            double lo = rows[0][a];
            double hi = rows[0][a];
            for (const auto& r : rows) {
                lo = std::min(lo, r[a]);
                hi = std::max(hi, r[a]);
            }
            s.center[a] = 0.5 * (lo + hi);
            const double half = 0.5 * (hi - lo);
            s.half_range[a] = half > 1e-12 * std::max(1.0, std::abs(s.center[a])) ? half : 1.0;
        }
        return s;
    }

    double to_unit(std::size_t axis, double x) const { return (x - center[axis]) / half_range[axis]; }
    double from_unit(std::size_t axis, double x) const { return x * half_range[axis] + center[axis]; }

    friend bool operator==(const AxisScaling&, const AxisScaling&) = default;
};

struct Layer
{
    Eigen::MatrixXd weights;  // rows = outputs, cols = inputs
    Eigen::VectorXd bias;
    Activation activation = Activation::linear;
};

struct Network
{
    Topology topology;
    std::vector<Layer> layers;
    AxisScaling<kInputDim> input_scaling;
    AxisScaling<kOutputDim> output_scaling;
    std::uint64_t seed = 0;
};

inline void validate(const Topology& t, std::size_t max_layers = std::numeric_limits<std::size_t>::max())
{
    if (t.hidden.empty() || t.hidden.size() > max_layers)
        throw Error("topology needs between 1 and " + std::to_string(max_layers) + " hidden layers");
    for (const auto n : t.hidden)
        if (n == 0)
            throw Error("hidden layers need at least one neuron");
}

namespace detail {

inline void init_layer(Layer& layer, std::size_t outputs, std::size_t inputs, Rng& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(inputs));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.weights.resize(static_cast<Eigen::Index>(outputs), static_cast<Eigen::Index>(inputs));
    layer.bias.resize(static_cast<Eigen::Index>(outputs));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
            layer.weights(r, c) = dist(rng);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r)
        layer.bias(r) = dist(rng);
}

}  // namespace detail

/// Fresh network with weights and biases uniform in +-1/sqrt(fan_in).
inline Network make_network(const Topology& topology, std::uint64_t seed)
{
    validate(topology);
    Network net;
    net.topology = topology;
    net.seed = seed;
    Rng rng(seed);
    std::size_t fan_in = kInputDim;
    for (const auto width : topology.hidden) {
        Layer layer;
        layer.activation = topology.hidden_activation;
        detail::init_layer(layer, width, fan_in, rng);
        net.layers.push_back(std::move(layer));
        fan_in = width;
    }
    Layer out;
    out.activation = topology.output_activation;
    detail::init_layer(out, kOutputDim, fan_in, rng);
    net.layers.push_back(std::move(out));
    return net;
}

/// Network whose parameters are all zero; handy for closed-form checks.
inline Network zero_network(const Topology& topology)
{
    Network net = make_network(topology, 0);
    for (auto& l : net.layers) {
        l.weights.setZero();
        l.bias.setZero();
    }
    return net;
}

inline bool all_finite(const Network& net)
{
    return std::all_of(net.layers.begin(), net.layers.end(),
                       [](const Layer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
}

/// Evaluates the layer stack on an already scaled input.
inline Eigen::VectorXd forward_scaled(const Network& net, const Eigen::VectorXd& input)
{
    Eigen::VectorXd a = input;
    for (const auto& layer : net.layers) {
        Eigen::VectorXd z = layer.weights * a + layer.bias;
        for (Eigen::Index i = 0; i < z.size(); ++i)
            z(i) = activate(layer.activation, z(i));
        a = std::move(z);
    }
    return a;
}

inline Eigen::VectorXd scale_input(const Network& net, Point2 p)
{
    Eigen::VectorXd x(2);
    x << net.input_scaling.to_unit(0, p.u), net.input_scaling.to_unit(1, p.v);
    return x;
}

inline Eigen::VectorXd scale_target(const Network& net, const Point3& p)
{
    Eigen::VectorXd y(3);
    y << net.output_scaling.to_unit(0, p.x), net.output_scaling.to_unit(1, p.y),
        net.output_scaling.to_unit(2, p.z);
    return y;
}

inline Point3 forward(const Network& net, Point2 p)
{
    const Eigen::VectorXd y = forward_scaled(net, scale_input(net, p));
    return {net.output_scaling.from_unit(0, y(0)), net.output_scaling.from_unit(1, y(1)),
            net.output_scaling.from_unit(2, y(2))};
}

struct Sample
{
    Point2 input;
    Point3 target;
};

/// Per-scalar mean squared error in world units: sum of squared errors / (3 n).
inline double mse(const Network& net, std::span<const Sample> samples)
{
    if (samples.empty())
        throw Error("mse needs at least one sample");
    double acc = 0.0;
    for (const auto& s : samples) {
        const Point3 y = forward(net, s.input);
        acc += squared_distance(y, s.target);
    }
    return acc / (static_cast<double>(kOutputDim) * static_cast<double>(samples.size()));
}

/// Training objective: mean over samples of the squared Euclidean error of
/// the scaled output, i.e. (1/B) sum_s ||f(x_s) - y_s||^2.
inline double training_loss(const Network& net, std::span<const Sample> batch)
{
    if (batch.empty())
        throw Error("loss needs a non-empty batch");
    double acc = 0.0;
    for (const auto& s : batch)
        acc += (forward_scaled(net, scale_input(net, s.input)) - scale_target(net, s.target)).squaredNorm();
    return acc / static_cast<double>(batch.size());
}

struct Gradient
{
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;

    double norm() const
    {
        double sq = 0.0;
        for (const auto& w : weights)
            sq += w.squaredNorm();
        for (const auto& b : bias)
            sq += b.squaredNorm();
        return std::sqrt(sq);
    }
};

/// Gradient of training_loss with respect to every weight and bias.
inline Gradient backprop_gradient(const Network& net, std::span<const Sample> batch)
{
    if (batch.empty())
        throw Error("gradient needs a non-empty batch");
    const std::size_t n_layers = net.layers.size();
    Gradient g;
    for (const auto& l : net.layers) {
        g.weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
        g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    }
    const double scale = 2.0 / static_cast<double>(batch.size());
    std::vector<Eigen::VectorXd> act(n_layers + 1);
    for (const auto& s : batch) {
        act[0] = scale_input(net, s.input);
        for (std::size_t l = 0; l < n_layers; ++l) {
            const auto& layer = net.layers[l];
            Eigen::VectorXd z = layer.weights * act[l] + layer.bias;
            for (Eigen::Index i = 0; i < z.size(); ++i)
                z(i) = activate(layer.activation, z(i));
            act[l + 1] = std::move(z);
        }
        Eigen::VectorXd delta = scale * (act[n_layers] - scale_target(net, s.target));
        for (std::size_t l = n_layers; l-- > 0;) {
            const auto& layer = net.layers[l];
            for (Eigen::Index i = 0; i < delta.size(); ++i)
                delta(i) *= activation_slope(layer.activation, act[l + 1](i));
            g.weights[l].noalias() += delta * act[l].transpose();
            g.bias[l] += delta;
            if (l > 0)
                delta = layer.weights.transpose() * delta;
        }
    }
    return g;
}

inline void apply_gradient(Network& net, const Gradient& g, double learning_rate)
{
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        net.layers[l].weights -= learning_rate * g.weights[l];
        net.layers[l].bias -= learning_rate * g.bias[l];
    }
}

// ---------------------------------------------------------------------------
// Training

/// per_sample: one update per training sample, visited in a fresh random
/// order each epoch. full_batch: one update per epoch on the whole set.
enum class UpdateMode { per_sample, full_batch };

struct TrainConfig
{
    std::size_t max_layers = 3;
    std::size_t max_neurons = 6;
    std::size_t epochs = 20;
    std::size_t early_stop_patience = 3;
    std::optional<double> learning_rate;  // default depends on the output activation
    double train_fraction = 0.85;
    double test_fraction = 0.10;
    double validation_fraction = 0.05;
    /// Weighted performance = train_weight * train MSE + test_weight * test MSE.
    double train_weight = 0.85;
    double test_weight = 0.10;
    /// Neuron growth stops once the relative gain falls below this.
    double convergence_tolerance = 1e-3;
    Activation hidden_activation = Activation::tanh;
    Activation output_activation = Activation::linear;
    UpdateMode update = UpdateMode::per_sample;
    /// Grow candidates from the previous candidate's trained weights.
    bool warm_start = true;
    std::uint64_t seed = 0;

    double effective_learning_rate() const
    {
        if (learning_rate)
            return *learning_rate;
        return output_activation == Activation::linear ? 0.01 : 0.1;
    }
};

inline void validate(const TrainConfig& cfg)
{
    if (cfg.max_layers < 1 || cfg.max_neurons < 1)
        throw ConfigError("max_layers and max_neurons must be >= 1");
    if (cfg.epochs < 1)
        throw ConfigError("epochs must be >= 1");
    if (cfg.early_stop_patience < 1)
        throw ConfigError("early_stop_patience must be >= 1");
    if (!(cfg.effective_learning_rate() > 0.0))
        throw ConfigError("learning_rate must be > 0");
    const double fractions[] = {cfg.train_fraction, cfg.test_fraction, cfg.validation_fraction};
    for (const double f : fractions)
        if (!(f >= 0.0 && f <= 1.0))
            throw ConfigError("split fractions must lie in [0, 1]");
    if (std::abs(cfg.train_fraction + cfg.test_fraction + cfg.validation_fraction - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
}

struct DataSplit
{
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::vector<Sample> validation;
};

inline constexpr std::size_t kMinTrainingPairs = 20;

/// Random disjoint partition with sizes floor(f_train n), floor(f_test n), remainder.
inline DataSplit split_data(std::span<const Sample> pairs, const TrainConfig& cfg)
{
    validate(cfg);
    const std::size_t n = pairs.size();
    if (n < kMinTrainingPairs)
        throw Error("need at least " + std::to_string(kMinTrainingPairs) + " samples to train, got "
                    + std::to_string(n));
    const auto portion = [n](double f) {
        return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
    };
    const std::size_t n_train = portion(cfg.train_fraction);
    const std::size_t n_test = portion(cfg.test_fraction);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, 0x5b117));
    std::shuffle(order.begin(), order.end(), rng);

    DataSplit out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = pairs[order[i]];
        if (i < n_train)
            out.train.push_back(s);
        else if (i < n_train + n_test)
            out.test.push_back(s);
        else
            out.validation.push_back(s);
    }
    return out;
}

/// Tracks the best validation loss and counts epochs without improvement.
class EarlyStopping
{
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience)
    {
        if (patience < 1)
            throw Error("patience must be >= 1");
    }

    /// Returns true when `loss` is a new strict minimum.
    bool observe(double loss)
    {
        ++epoch_;
        if (loss < best_loss_) {
            best_loss_ = loss;
            best_epoch_ = epoch_;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return false;
    }

    bool should_stop() const { return stale_ >= patience_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }
    std::size_t epochs_seen() const { return epoch_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t stale_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord
{
    double train_loss = 0.0;
    double validation_loss = 0.0;
};

struct TrainResult
{
    Network network;  // parameters from the best validation epoch
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;  // 1-based index into history
    bool stopped_early = false;
};

inline TrainResult train(Network net, std::span<const Sample> train_set,
                         std::span<const Sample> validation_set, const TrainConfig& cfg,
                         std::uint64_t shuffle_seed = 0)
{
    if (train_set.empty() || validation_set.empty())
        throw Error("training and validation sets must be non-empty");
    const double lr = cfg.effective_learning_rate();
    Rng rng(shuffle_seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    EarlyStopping stopper(cfg.early_stop_patience);
    Network best = net;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.update == UpdateMode::per_sample) {
            std::shuffle(order.begin(), order.end(), rng);
            for (const auto i : order)
                apply_gradient(net, backprop_gradient(net, train_set.subspan(i, 1)), lr);
        } else {
            apply_gradient(net, backprop_gradient(net, train_set), lr);
        }
        const EpochRecord rec{training_loss(net, train_set), training_loss(net, validation_set)};
        if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.validation_loss) || !all_finite(net))
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1)
                                  + "; try a smaller learning rate (current "
                                  + format_double(lr) + ")");
        result.history.push_back(rec);
        if (stopper.observe(rec.validation_loss))
            best = net;
        if (stopper.should_stop()) {
            result.stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }
    result.network = std::move(best);
    result.best_epoch = stopper.best_epoch();
    return result;
}

// ---------------------------------------------------------------------------
// Topology search

struct CandidateRecord
{
    Topology topology;
    double train_mse = 0.0;
    double test_mse = 0.0;
    double weighted = 0.0;
    std::size_t epochs_run = 0;
};

struct TrainReport
{
    std::vector<CandidateRecord> records;  // in enumeration order
    std::size_t best_index = 0;
    std::vector<std::size_t> layer_best_neurons;  // chosen width per grown layer
    double final_mse = 0.0;  // best network on all pairs

    const Topology& best_topology() const { return records.at(best_index).topology; }
};

struct SearchResult
{
    Network network;
    TrainReport report;
};

inline double weighted_performance(double train_mse, double test_mse, const TrainConfig& cfg)
{
    return cfg.train_weight * train_mse + cfg.test_weight * test_mse;
}

/// Adds one neuron to the last hidden layer. Its outgoing weights start at
/// zero, so the network computes the same function as before.
inline Network add_neuron(const Network& net, Rng& rng)
{
    Network out = net;
    const std::size_t h = out.layers.size() - 2;
    Layer& hidden = out.layers[h];
    Layer& next = out.layers[h + 1];
    const auto fan_in = hidden.weights.cols();
    const auto width = hidden.weights.rows();
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);

    hidden.weights.conservativeResize(width + 1, Eigen::NoChange);
    hidden.bias.conservativeResize(width + 1);
    for (Eigen::Index c = 0; c < fan_in; ++c)
        hidden.weights(width, c) = dist(rng);
    hidden.bias(width) = dist(rng);
    next.weights.conservativeResize(Eigen::NoChange, width + 1);
    next.weights.col(width).setZero();
    out.topology.hidden.back() += 1;
    return out;
}

/// Appends a one-neuron hidden layer and a fresh output layer, keeping the
/// existing hidden layers.
inline Network add_layer(const Network& net, Rng& rng)
{
    Network out = net;
    out.layers.pop_back();
    const std::size_t fan_in = out.topology.hidden.back();
    Layer hidden;
    hidden.activation = out.topology.hidden_activation;
    detail::init_layer(hidden, 1, fan_in, rng);
    Layer output;
    output.activation = out.topology.output_activation;
    detail::init_layer(output, kOutputDim, 1, rng);
    out.layers.push_back(std::move(hidden));
    out.layers.push_back(std::move(output));
    out.topology.hidden.push_back(1);
    return out;
}

inline std::vector<std::array<double, kInputDim>> input_rows(std::span<const Sample> pairs)
{
    std::vector<std::array<double, kInputDim>> rows;
    rows.reserve(pairs.size());
    for (const auto& s : pairs)
        rows.push_back({s.input.u, s.input.v});
    return rows;
}

inline std::vector<std::array<double, kOutputDim>> target_rows(std::span<const Sample> pairs)
{
    std::vector<std::array<double, kOutputDim>> rows;
    rows.reserve(pairs.size());
    for (const auto& s : pairs)
        rows.push_back({s.target.x, s.target.y, s.target.z});
    return rows;
}

/// Fits the world <-> [-1, 1] scaling of `net` to `pairs`.
inline void fit_scaling(Network& net, std::span<const Sample> pairs)
{
    const auto in = input_rows(pairs);
    const auto out = target_rows(pairs);
    net.input_scaling = AxisScaling<kInputDim>::fit(in);
    net.output_scaling = AxisScaling<kOutputDim>::fit(out);
}

/// Grows hidden neurons one at a time, layer by layer, training each
/// candidate with early stopping, and returns the candidate with the lowest
/// weighted train/test performance.
inline SearchResult adaptive_search(std::span<const Sample> pairs, const TrainConfig& cfg)
{
    validate(cfg);
    const DataSplit split = split_data(pairs, cfg);
    if (split.validation.empty() || split.test.empty())
        throw Error("split leaves an empty test or validation set; provide more samples");

    Topology seed_topology;
    seed_topology.hidden = {1};
    seed_topology.hidden_activation = cfg.hidden_activation;
    seed_topology.output_activation = cfg.output_activation;

    Network scaled_template = make_network(seed_topology, 0);
    fit_scaling(scaled_template, pairs);

    Rng growth_rng(derive_seed(cfg.seed, 0x97077));
    TrainReport report;
    std::vector<Network> trained;
    std::vector<std::size_t> fixed;  // widths of completed layers
    std::optional<Network> layer_base;

    auto fresh = [&](std::vector<std::size_t> hidden) {
        Topology t = seed_topology;
        t.hidden = std::move(hidden);
        Network net = make_network(t, derive_seed(cfg.seed, 0x1000 + trained.size()));
        net.input_scaling = scaled_template.input_scaling;
        net.output_scaling = scaled_template.output_scaling;
        return net;
    };

    for (std::size_t layer = 1; layer <= cfg.max_layers; ++layer) {
        double previous = std::numeric_limits<double>::infinity();
        std::size_t best_in_layer = 0;
        double best_weighted = std::numeric_limits<double>::infinity();
        std::optional<Network> last;
        for (std::size_t width = 1; width <= cfg.max_neurons; ++width) {
            Network candidate;
            if (!cfg.warm_start) {
                auto hidden = fixed;
                hidden.push_back(width);
                candidate = fresh(std::move(hidden));
            } else if (width == 1) {
                candidate = layer_base ? add_layer(*layer_base, growth_rng) : fresh({1});
            } else {
                candidate = add_neuron(*last, growth_rng);
            }

            TrainResult tr = train(std::move(candidate), split.train, split.validation, cfg,
                                   derive_seed(cfg.seed, 0x2000 + trained.size()));
            CandidateRecord rec;
            rec.topology = tr.network.topology;
            rec.train_mse = mse(tr.network, split.train);
            rec.test_mse = mse(tr.network, split.test);
            rec.weighted = weighted_performance(rec.train_mse, rec.test_mse, cfg);
            rec.epochs_run = tr.history.size();
            report.records.push_back(rec);
            trained.push_back(tr.network);
            last = std::move(tr.network);

            if (rec.weighted < best_weighted) {
                best_weighted = rec.weighted;
                best_in_layer = trained.size() - 1;
            }
            const bool converged = width > 1
                && (previous - rec.weighted) < cfg.convergence_tolerance * previous;
            previous = rec.weighted;
            if (converged)
                break;
        }
        fixed.push_back(trained[best_in_layer].topology.hidden.back());
        layer_base = trained[best_in_layer];
    }
    report.layer_best_neurons = fixed;

    for (std::size_t i = 1; i < report.records.size(); ++i)
        if (report.records[i].weighted < report.records[report.best_index].weighted)
            report.best_index = i;

    SearchResult result;
    result.network = trained[report.best_index];
    report.final_mse = mse(result.network, pairs);
    result.report = std::move(report);
    return result;
}

/// Trains one fixed topology on the same split the search would use and
/// reports it as a single-candidate search.
inline SearchResult train_fixed(std::span<const Sample> pairs, const std::vector<std::size_t>& hidden,
                                const TrainConfig& cfg)
{
    validate(cfg);
    Topology topology;
    topology.hidden = hidden;
    topology.hidden_activation = cfg.hidden_activation;
    topology.output_activation = cfg.output_activation;
    validate(topology);
    const DataSplit split = split_data(pairs, cfg);
    if (split.validation.empty() || split.test.empty())
        throw Error("split leaves an empty test or validation set; provide more samples");

    Network net = make_network(topology, derive_seed(cfg.seed, 0x1000));
    fit_scaling(net, pairs);
    TrainResult tr = train(std::move(net), split.train, split.validation, cfg, derive_seed(cfg.seed, 0x2000));

    CandidateRecord rec;
    rec.topology = tr.network.topology;
    rec.train_mse = mse(tr.network, split.train);
    rec.test_mse = mse(tr.network, split.test);
    rec.weighted = weighted_performance(rec.train_mse, rec.test_mse, cfg);
    rec.epochs_run = tr.history.size();

    SearchResult result;
    result.report.records.push_back(rec);
    result.report.layer_best_neurons = hidden;
    result.report.final_mse = mse(tr.network, pairs);
    result.network = std::move(tr.network);
    return result;
}

/// Either returns `best` unchanged, or retrains its topology from a fresh
/// initialisation on every pair (which then also drives early stopping).
inline Network finalize(const Network& best, const TrainReport& report, std::span<const Sample> all_pairs,
                        bool retrain, const TrainConfig& cfg)
{
    if (!retrain)
        return best;
    if (!(report.best_topology() == best.topology))
        throw Error("network does not match the report's best topology");
    Network net = make_network(best.topology, derive_seed(cfg.seed, 0x3e7a1));
    net.input_scaling = best.input_scaling;
    net.output_scaling = best.output_scaling;
    return train(std::move(net), all_pairs, all_pairs, cfg, derive_seed(cfg.seed, 0x3e7a2)).network;
}

// ---------------------------------------------------------------------------
// JSON persistence

inline constexpr int kNetworkFormatVersion = 1;

inline nlohmann::json to_json(const Network& net)
{
    using nlohmann::json;
    json layers = json::array();
    for (const auto& l : net.layers) {
        json w = json::array();
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                w.push_back(l.weights(r, c));
        json b = json::array();
        for (Eigen::Index r = 0; r < l.bias.size(); ++r)
            b.push_back(l.bias(r));
        layers.push_back({{"rows", l.weights.rows()},
                          {"cols", l.weights.cols()},
                          {"activation", to_string(l.activation)},
                          {"weights", std::move(w)},
                          {"bias", std::move(b)}});
    }
    return {
        {"format", "nnsurf-network"},
        {"version", kNetworkFormatVersion},
        {"topology",
         {{"hidden", net.topology.hidden},
          {"hidden_activation", to_string(net.topology.hidden_activation)},
          {"output_activation", to_string(net.topology.output_activation)}}},
        {"input_scaling", {{"center", net.input_scaling.center}, {"half_range", net.input_scaling.half_range}}},
        {"output_scaling", {{"center", net.output_scaling.center}, {"half_range", net.output_scaling.half_range}}},
        {"seed", net.seed},
        {"layers", std::move(layers)},
    };
}

inline Network network_from_json(const nlohmann::json& j)
{
    try {
        if (j.at("format").get<std::string>() != "nnsurf-network")
            throw Error("not a network document");
        if (j.at("version").get<int>() != kNetworkFormatVersion)
            throw Error("unsupported network version " + j.at("version").dump());
        Network net;
        const auto& t = j.at("topology");
        net.topology.hidden = t.at("hidden").get<std::vector<std::size_t>>();
        net.topology.hidden_activation = activation_from_string(t.at("hidden_activation").get<std::string>());
        net.topology.output_activation = activation_from_string(t.at("output_activation").get<std::string>());
        validate(net.topology);
        net.input_scaling.center = j.at("input_scaling").at("center").get<std::array<double, kInputDim>>();
        net.input_scaling.half_range = j.at("input_scaling").at("half_range").get<std::array<double, kInputDim>>();
        net.output_scaling.center = j.at("output_scaling").at("center").get<std::array<double, kOutputDim>>();
        net.output_scaling.half_range =
            j.at("output_scaling").at("half_range").get<std::array<double, kOutputDim>>();
        net.seed = j.at("seed").get<std::uint64_t>();

        std::size_t fan_in = kInputDim;
        const auto& layers = j.at("layers");
        if (layers.size() != net.topology.hidden.size() + 1)
            throw Error("layer count does not match topology");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& lj = layers[i];
            const auto rows = lj.at("rows").get<Eigen::Index>();
            const auto cols = lj.at("cols").get<Eigen::Index>();
            const std::size_t expect_rows = i < net.topology.hidden.size() ? net.topology.hidden[i] : kOutputDim;
            if (static_cast<std::size_t>(rows) != expect_rows || static_cast<std::size_t>(cols) != fan_in)
                throw Error("layer " + std::to_string(i) + " has the wrong shape");
            const auto w = lj.at("weights").get<std::vector<double>>();
            const auto b = lj.at("bias").get<std::vector<double>>();
            if (w.size() != static_cast<std::size_t>(rows * cols) || b.size() != static_cast<std::size_t>(rows))
                throw Error("layer " + std::to_string(i) + " has the wrong number of parameters");
            Layer layer;
            layer.activation = activation_from_string(lj.at("activation").get<std::string>());
            layer.weights.resize(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c)
                    layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
            layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
            net.layers.push_back(std::move(layer));
            fan_in = expect_rows;
        }
        if (!all_finite(net))
            throw Error("network has non-finite parameters");
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed network document: ") + e.what());
    }
}

}  // namespace nnsurf
