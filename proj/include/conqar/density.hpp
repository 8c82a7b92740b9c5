#pragma once

#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conqar/corpus.hpp"
#include "conqar/encoder.hpp"
#include "conqar/numerics.hpp"

namespace conqar {

// softmax: p = softmax(logits), always a probability vector.
// free: p = logits as-is; only the trace loss pulls sum(p) towards 1.
enum class DistMode { Softmax, Free };

DistMode parse_dist_mode(std::string_view name);
std::string_view to_string(DistMode mode);

/// Learned per-owner weights over document positions.
///
/// One logit vector of length L per user and per item seen in training.
/// Owners without an entry (cold at inference) get the uniform p = 1/L.
class PositionTable {
public:
    PositionTable() = default;
    PositionTable(DistMode mode, std::size_t length, std::span<const std::string> users,
                  std::span<const std::string> items);

    DistMode mode() const { return mode_; }
    std::size_t length() const { return length_; }

    // nullptr for cold owners.
    Tensor* logits(Side side, const std::string& owner);
    const Tensor* logits(Side side, const std::string& owner) const;

    Tensor distribution(Tape& tape, Side side, const std::string& owner) const;

    // Every (side, owner, logits) entry in deterministic order.
    std::vector<std::pair<std::string, Tensor>> named_logits() const;

    static std::string parameter_name(Side side, const std::string& owner);

private:
    DistMode mode_ = DistMode::Softmax;
    std::size_t length_ = 0;
    std::map<std::pair<int, std::string>, Tensor> logits_;
};

struct DensityMatrix {
    Tensor values;  // [n x n]
    std::string owner_id;
};

// Column-wise l2 normalization of the feature map: the states |c_i>.
Tensor unit_states(Tape& tape, const FeatureMap& features);

// rho = sum_i p_i s_i s_i^T over the columns s_i of states.
DensityMatrix density_matrix(Tape& tape, const Tensor& states, const Tensor& p, std::string owner_id = {});

// (1/U) sum_u (tr rho_u - 1)^2 + (1/V) sum_v (tr rho_v - 1)^2
Tensor trace_loss(Tape& tape, std::span<const DensityMatrix> user_rhos, std::span<const DensityMatrix> item_rhos);

}  // namespace conqar
