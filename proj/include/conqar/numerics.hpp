#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>

#include "conqar/tensor.hpp"

namespace conqar {

enum class Activation { Relu, Elu, Identity };
enum class Pooling { Mean, Max };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation kind);
Pooling parse_pooling(std::string_view name);
std::string_view to_string(Pooling kind);

inline constexpr double kNormEpsilon = 1e-12;

// Differentiable primitives. Every function records its gradient rule on
// the tape when any input requires a gradient. Vectors are rank-1 tensors,
// matrices rank-2; shape errors throw DimensionError naming both shapes.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor matvec(Tape& tape, const Tensor& a, const Tensor& x);
Tensor transpose(Tape& tape, const Tensor& a);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor add_scalar(Tape& tape, const Tensor& a, double offset);
Tensor square(Tape& tape, const Tensor& a);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);

// ReLU'(0) = 0, ELU'(0) = 1.
Tensor activation(Tape& tape, const Tensor& x, Activation kind);

// Max-shifted softmax over a vector.
Tensor softmax(Tape& tape, const Tensor& v);

// v / ||v|| when ||v|| >= epsilon, otherwise the zero vector (zero gradient).
Tensor l2_normalize(Tape& tape, const Tensor& v, double epsilon = kNormEpsilon);
// l2_normalize applied to each column of a matrix.
Tensor normalize_columns(Tape& tape, const Tensor& m, double epsilon = kNormEpsilon);

// out[r][c] = m[r][c] * weights[c]
Tensor scale_columns(Tape& tape, const Tensor& m, const Tensor& weights);

Tensor trace(Tape& tape, const Tensor& m);
Tensor diagonal(Tape& tape, const Tensor& m);

// Reduce each row (pool_rows -> length rows) or each column (pool_cols ->
// length cols). Max pooling routes the gradient to the first maximum.
Tensor pool_rows(Tape& tape, const Tensor& m, Pooling kind);
Tensor pool_cols(Tape& tape, const Tensor& m, Pooling kind);

// Flattened concatenation into a vector.
Tensor concat(Tape& tape, std::span<const Tensor> parts);
// Stacks matrices with equal column counts on top of each other.
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);

// Selects columns of table [d x V]; result is [d x ids.size()].
Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids);

// One filter bank of a single window size h over x [d x L].
// weights [f x d x h], bias [f]; output [f x L]. Positions past the end of
// the input read zero columns, so output length equals input length.
Tensor conv1d_same(Tape& tape, const Tensor& x, const Tensor& weights, const Tensor& bias);

// Inverted dropout; rate 0 returns x unchanged.
Tensor dropout(Tape& tape, const Tensor& x, double rate, std::mt19937_64& rng);

using LossFunction = std::function<Tensor(Tape&)>;

/// Compares tape gradients against central differences for every element
/// of every tensor in params. Returns max |g_tape - g_fd| / max(1, |g_fd|).
/// Throws NumericError if two evaluations of loss_fn disagree and
/// ConfigError if step lies outside [1e-6, 1e-4].
double gradient_check(const LossFunction& loss_fn, std::span<Tensor> params, double step = 1e-5);

}  // namespace conqar
