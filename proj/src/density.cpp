#include "conqar/density.hpp"

#include "conqar/errors.hpp"

namespace conqar {

DistMode parse_dist_mode(std::string_view name) {
    if (name == "softmax") return DistMode::Softmax;
    if (name == "free") return DistMode::Free;
    throw ConfigError("unknown position distribution mode '" + std::string(name) + "'");
}

std::string_view to_string(DistMode mode) { return mode == DistMode::Softmax ? "softmax" : "free"; }

PositionTable::PositionTable(DistMode mode, std::size_t length, std::span<const std::string> users,
                             std::span<const std::string> items)
    : mode_(mode), length_(length) {
    if (length == 0) throw ConfigError("position distribution needs a positive document length");
    // softmax: zero logits give uniform p; free: start directly at p = 1/L
    const double init = mode == DistMode::Softmax ? 0.0 : 1.0 / static_cast<double>(length);
    auto add = [&](Side side, const std::string& owner) {
        Tensor t({length}, std::vector<double>(length, init), true);
        t.set_name(parameter_name(side, owner));
        logits_.emplace(std::make_pair(static_cast<int>(side), owner), std::move(t));
    };
    for (const auto& u : users) add(Side::User, u);
    for (const auto& v : items) add(Side::Item, v);
}

std::string PositionTable::parameter_name(Side side, const std::string& owner) {
    return "position." + std::string(to_string(side)) + "." + owner;
}

Tensor* PositionTable::logits(Side side, const std::string& owner) {
    auto it = logits_.find({static_cast<int>(side), owner});
    return it == logits_.end() ? nullptr : &it->second;
}

const Tensor* PositionTable::logits(Side side, const std::string& owner) const {
    auto it = logits_.find({static_cast<int>(side), owner});
    return it == logits_.end() ? nullptr : &it->second;
}

Tensor PositionTable::distribution(Tape& tape, Side side, const std::string& owner) const {
    const Tensor* raw = logits(side, owner);
    if (!raw) {
        return Tensor({length_}, std::vector<double>(length_, 1.0 / static_cast<double>(length_)));
    }
    return mode_ == DistMode::Softmax ? softmax(tape, *raw) : *raw;
}

std::vector<std::pair<std::string, Tensor>> PositionTable::named_logits() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(logits_.size());
    for (const auto& [key, t] : logits_) out.emplace_back(t.name(), t);
    return out;
}

Tensor unit_states(Tape& tape, const FeatureMap& features) {
    return normalize_columns(tape, features.values);
}

DensityMatrix density_matrix(Tape& tape, const Tensor& states, const Tensor& p, std::string owner_id) {
    if (states.rank() != 2 || p.rank() != 1 || p.dim(0) != states.cols()) {
        throw DimensionError("density_matrix: states " + shape_string(states.shape()) + " vs distribution " +
                             shape_string(p.shape()));
    }
    Tensor weighted = scale_columns(tape, states, p);
    Tensor rho = matmul(tape, weighted, transpose(tape, states));
    return DensityMatrix{rho, std::move(owner_id)};
}

namespace {

Tensor mean_trace_deviation(Tape& tape, std::span<const DensityMatrix> rhos) {
    std::vector<Tensor> terms;
    terms.reserve(rhos.size());
    for (const auto& rho : rhos) terms.push_back(square(tape, add_scalar(tape, trace(tape, rho.values), -1.0)));
    return mean(tape, concat(tape, terms));
}

}  // namespace

Tensor trace_loss(Tape& tape, std::span<const DensityMatrix> user_rhos, std::span<const DensityMatrix> item_rhos) {
    if (user_rhos.empty() || item_rhos.empty()) throw ConfigError("trace_loss needs at least one user and one item");
    return add(tape, mean_trace_deviation(tape, user_rhos), mean_trace_deviation(tape, item_rhos));
}

}  // namespace conqar
