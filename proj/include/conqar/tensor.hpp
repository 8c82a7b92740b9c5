#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace conqar {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a handle: copies share storage, which is what lets the
/// gradient tape write into the buffers of tensors it saw during the
/// forward pass. Use clone() for an independent copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor vector(std::vector<double> values, bool requires_grad = false);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad = false);
    static Tensor identity(std::size_t n);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> data();
    std::span<const double> data() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    // Empty span when requires_grad is false.
    std::span<double> grad() const;
    void zero_grad();

    double item() const;
    double& operator[](std::size_t i) { return data()[i]; }
    double operator[](std::size_t i) const { return data()[i]; }
    double& at(std::size_t row, std::size_t col);
    double at(std::size_t row, std::size_t col) const;

    const std::string& name() const;
    void set_name(std::string name);

    Tensor clone() const;
    bool all_finite() const;
    bool grad_finite() const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Storage {
        Shape shape;
        std::vector<double> values;
        std::vector<double> gradient;
        bool requires_grad = false;
        std::string name;
    };
    std::shared_ptr<Storage> impl_;

    Storage& storage() const;
};

/// Ordered record of executed operations.
///
/// Each recorded entry owns a closure that pushes the output gradient back
/// to the entry's inputs. backward() replays the closures in exact reverse
/// order of recording. A tape in NoGrad mode records nothing and every
/// tensor it produces has requires_grad == false.
class Tape {
public:
    enum class Mode { Record, NoGrad };

    explicit Tape(Mode mode = Mode::Record) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    bool recording() const { return mode_ == Mode::Record; }

    // Allocates an output tensor that participates in gradients iff the tape
    // records and at least one input does.
    Tensor make_output(Shape shape, std::initializer_list<const Tensor*> inputs) const;
    Tensor make_output(Shape shape, std::span<const Tensor> inputs) const;

    void record(std::string op, Tensor output, std::function<void()> backward);

    // Seeds d(loss)/d(loss) = 1 and runs every closure in reverse. Gradients
    // accumulate, so callers zero parameter gradients between steps.
    void backward(const Tensor& loss);

    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }
    std::vector<std::string> op_names() const;

    // "<index>:<op>" of the earliest recorded output holding NaN/Inf.
    std::optional<std::string> first_nonfinite() const;

private:
    struct Entry {
        std::string op;
        Tensor output;
        std::function<void()> backward;
    };
    Mode mode_;
    std::vector<Entry> entries_;
};

}  // namespace conqar
