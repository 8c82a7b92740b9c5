#include "conqar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "conqar/errors.hpp"

namespace conqar {

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << "x";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<double>(shape_size(shape), 0.0), requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    if (shape_size(shape) != values.size()) {
        throw DimensionError("tensor shape " + shape_string(shape) + " needs " +
                             std::to_string(shape_size(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    impl_ = std::make_shared<Storage>();
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    set_requires_grad(requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
    Shape shape{values.size()};
    return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
    std::vector<double> values;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& row : rows) {
        if (row.size() != cols) throw DimensionError("ragged matrix literal");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), cols}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    return Tensor({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor::Storage& Tensor::storage() const {
    if (!impl_) throw std::logic_error("use of an undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return storage().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw IndexError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    return s[axis];
}

std::size_t Tensor::size() const { return storage().values.size(); }

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
    return shape()[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
    return shape()[1];
}

std::span<double> Tensor::data() { return storage().values; }
std::span<const double> Tensor::data() const { return storage().values; }

bool Tensor::requires_grad() const { return storage().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    auto& s = storage();
    s.requires_grad = flag;
    if (flag) {
        s.gradient.assign(s.values.size(), 0.0);
    } else {
        s.gradient.clear();
        s.gradient.shrink_to_fit();
    }
}

std::span<double> Tensor::grad() const { return storage().gradient; }

void Tensor::zero_grad() {
    auto& g = storage().gradient;
    std::fill(g.begin(), g.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
    return storage().values[0];
}

double& Tensor::at(std::size_t row, std::size_t col) {
    return storage().values[row * cols() + col];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    return storage().values[row * cols() + col];
}

const std::string& Tensor::name() const { return storage().name; }
void Tensor::set_name(std::string name) { storage().name = std::move(name); }

Tensor Tensor::clone() const {
    Tensor copy(shape(), std::vector<double>(data().begin(), data().end()), false);
    copy.set_name(name());
    return copy;
}

bool Tensor::all_finite() const {
    const auto& v = storage().values;
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool Tensor::grad_finite() const {
    const auto& g = storage().gradient;
    return std::all_of(g.begin(), g.end(), [](double x) { return std::isfinite(x); });
}

Tensor Tape::make_output(Shape shape, std::initializer_list<const Tensor*> inputs) const {
    bool needs = false;
    if (recording()) {
        for (const Tensor* t : inputs) needs = needs || t->requires_grad();
    }
    return Tensor(std::move(shape), needs);
}

Tensor Tape::make_output(Shape shape, std::span<const Tensor> inputs) const {
    bool needs = false;
    if (recording()) {
        for (const Tensor& t : inputs) needs = needs || t.requires_grad();
    }
    return Tensor(std::move(shape), needs);
}

void Tape::record(std::string op, Tensor output, std::function<void()> backward) {
    if (!recording() || !output.requires_grad()) return;
    entries_.push_back({std::move(op), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw DimensionError("backward() needs a scalar loss, got " + shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw std::logic_error("backward() on a loss that does not depend on any gradient-tracked tensor");
    }
    loss.grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

std::vector<std::string> Tape::op_names() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_) names.push_back(e.op);
    return names;
}

std::optional<std::string> Tape::first_nonfinite() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!entries_[i].output.all_finite()) {
            std::string label = std::to_string(i) + ":" + entries_[i].op;
            if (!entries_[i].output.name().empty()) label += " (" + entries_[i].output.name() + ")";
            return label;
        }
    }
    return std::nullopt;
}

}  // namespace conqar
