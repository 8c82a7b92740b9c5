#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "conqar/attention.hpp"
#include "conqar/numerics.hpp"

namespace conqar {

/// Fully connected prediction stack: m layers, ELU + dropout after every
/// hidden layer, linear scalar output.
class DenseStack {
public:
    struct Layer {
        Tensor weight;  // [out x in]
        Tensor bias;    // [out]
    };

    DenseStack() = default;
    // layers == 1 maps the input straight to the scalar output.
    DenseStack(std::size_t input_dim, std::size_t layers, std::size_t hidden, double dropout_rate,
               std::mt19937_64& rng);
    DenseStack(std::vector<Layer> layers, double dropout_rate);

    std::size_t input_dim() const { return layers_.front().weight.cols(); }
    double dropout_rate() const { return dropout_rate_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

private:
    std::vector<Layer> layers_;
    double dropout_rate_ = 0.0;
};

// Dropout is active only when training is true.
Tensor predict(Tape& tape, const FusedRepresentation& z, const DenseStack& stack, bool training,
               std::mt19937_64& rng);

// (1/N) sum (prediction_i - truth_i)^2
Tensor rating_loss(Tape& tape, const Tensor& predictions, const Tensor& truths);

struct LossWeights {
    double alpha = 0.5;
};

// alpha * l_trace + (1 - alpha) * l_rating; ConfigError unless alpha in [0, 1].
Tensor total_loss(Tape& tape, const Tensor& l_trace, const Tensor& l_rating, LossWeights weights);

/// Named trainable tensors in registration order.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        // Columns whose gradient is zeroed before every update (PAD embedding).
        std::vector<std::size_t> frozen_columns;
    };

    void add(std::string name, Tensor tensor, std::vector<std::size_t> frozen_columns = {});
    Tensor* find(const std::string& name);
    const Tensor* find(const std::string& name) const;

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Tensor> tensors() const;
    std::size_t element_count() const;

    void zero_grad();
    void mask_frozen_gradients();
    // Name of the first parameter holding NaN/Inf in values or gradient.
    std::optional<std::string> first_nonfinite() const;

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

enum class OptimizerKind { Adam, Sgd };
OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config);
    // Masks frozen gradients, then applies one update to every parameter.
    void step(ParameterStore& params);
    std::size_t steps() const { return steps_; }

private:
    struct Moments {
        std::vector<double> first;
        std::vector<double> second;
    };
    OptimizerConfig config_;
    std::size_t steps_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace conqar
