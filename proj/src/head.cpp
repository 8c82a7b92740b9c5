#include "conqar/head.hpp"

#include <cmath>

#include "conqar/errors.hpp"

namespace conqar {

namespace {

DenseStack::Layer glorot_layer(std::size_t in, std::size_t out, std::mt19937_64& rng, std::size_t index) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> init(-bound, bound);
    Tensor w({out, in}, true);
    for (double& v : w.data()) v = init(rng);
    Tensor b({out}, true);
    w.set_name("fc" + std::to_string(index) + ".weight");
    b.set_name("fc" + std::to_string(index) + ".bias");
    return {w, b};
}

}  // namespace

DenseStack::DenseStack(std::size_t input_dim, std::size_t layers, std::size_t hidden, double dropout_rate,
                       std::mt19937_64& rng)
    : dropout_rate_(dropout_rate) {
    if (layers == 0) throw ConfigError("the prediction stack needs at least one layer");
    if (layers > 1 && hidden == 0) throw ConfigError("hidden layer width must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < layers; ++i) {
        const std::size_t out = i + 1 == layers ? 1 : hidden;
        layers_.push_back(glorot_layer(in, out, rng, i));
        in = out;
    }
}

DenseStack::DenseStack(std::vector<Layer> layers, double dropout_rate)
    : layers_(std::move(layers)), dropout_rate_(dropout_rate) {
    if (layers_.empty()) throw ConfigError("the prediction stack needs at least one layer");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.dim(0) != l.weight.rows()) {
            throw DimensionError("layer " + std::to_string(i) + ": weight " + shape_string(l.weight.shape()) +
                                 " vs bias " + shape_string(l.bias.shape()));
        }
        if (i > 0 && l.weight.cols() != layers_[i - 1].weight.rows()) {
            throw DimensionError("layer " + std::to_string(i) + " expects input " + std::to_string(l.weight.cols()) +
                                 " but previous layer emits " + std::to_string(layers_[i - 1].weight.rows()));
        }
    }
    if (layers_.back().weight.rows() != 1) throw DimensionError("last layer must produce a scalar");
}

Tensor predict(Tape& tape, const FusedRepresentation& z, const DenseStack& stack, bool training,
               std::mt19937_64& rng) {
    if (z.z.rank() != 1 || z.z.dim(0) != stack.input_dim()) {
        throw DimensionError("predict: representation " + shape_string(z.z.shape()) + " but stack expects " +
                             std::to_string(stack.input_dim()));
    }
    Tensor h = z.z;
    const auto& layers = stack.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = add(tape, matvec(tape, layers[i].weight, h), layers[i].bias);
        if (i + 1 < layers.size()) {
            h = activation(tape, h, Activation::Elu);
            if (training) h = dropout(tape, h, stack.dropout_rate(), rng);
        }
    }
    return h;
}

Tensor rating_loss(Tape& tape, const Tensor& predictions, const Tensor& truths) {
    if (predictions.size() != truths.size() || predictions.size() == 0) {
        throw DimensionError("rating_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                             std::to_string(truths.size()) + " truths");
    }
    if (predictions.rank() != 1) {
        throw DimensionError("rating_loss: predictions must be a vector, got " + shape_string(predictions.shape()));
    }
    Tensor t = Tensor::vector({truths.data().begin(), truths.data().end()});
    return mean(tape, square(tape, sub(tape, predictions, t)));
}

Tensor total_loss(Tape& tape, const Tensor& l_trace, const Tensor& l_rating, LossWeights weights) {
    if (!(weights.alpha >= 0.0 && weights.alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    return add(tape, scale(tape, l_trace, weights.alpha), scale(tape, l_rating, 1.0 - weights.alpha));
}

void ParameterStore::add(std::string name, Tensor tensor, std::vector<std::size_t> frozen_columns) {
    if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    if (!tensor.requires_grad()) tensor.set_requires_grad(true);
    tensor.set_name(name);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(tensor), std::move(frozen_columns)});
}

Tensor* ParameterStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].tensor;
}

const Tensor* ParameterStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].tensor;
}

std::vector<Tensor> ParameterStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
}

std::size_t ParameterStore::element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

void ParameterStore::mask_frozen_gradients() {
    for (auto& e : entries_) {
        if (e.frozen_columns.empty()) continue;
        auto g = e.tensor.grad();
        const std::size_t rows = e.tensor.rows(), cols = e.tensor.cols();
        for (std::size_t c : e.frozen_columns)
            for (std::size_t r = 0; r < rows; ++r) g[r * cols + c] = 0.0;
    }
}

std::optional<std::string> ParameterStore::first_nonfinite() const {
    for (const auto& e : entries_) {
        if (!e.tensor.all_finite()) return e.name;
        if (!e.tensor.grad_finite()) return e.name + ".grad";
    }
    return std::nullopt;
}

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "adam") return OptimizerKind::Adam;
    if (name == "sgd") return OptimizerKind::Sgd;
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

void Optimizer::step(ParameterStore& params) {
    params.mask_frozen_gradients();
    ++steps_;
    const double lr = config_.learning_rate;
    if (config_.kind == OptimizerKind::Sgd) {
        for (auto& e : params.entries()) {
            auto v = e.tensor.data();
            auto g = e.tensor.grad();
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
        }
        return;
    }
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (auto& e : params.entries()) {
        auto& mom = moments_[e.name];
        auto v = e.tensor.data();
        auto g = e.tensor.grad();
        if (mom.first.size() != v.size()) {
            mom.first.assign(v.size(), 0.0);
            mom.second.assign(v.size(), 0.0);
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            mom.first[i] = b1 * mom.first[i] + (1.0 - b1) * g[i];
            mom.second[i] = b2 * mom.second[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = mom.first[i] / c1;
            const double v_hat = mom.second[i] / c2;
            v[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

}  // namespace conqar
