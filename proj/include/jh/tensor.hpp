#pragma once

// Dense N-d tensor with a tape-free reverse-mode autodiff graph.
//
// Layout is row-major with the last axis fastest. The hourglass models use the
// canonical 5-d layout [batch, channels, time, width, height].

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace jh {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class BasicTensor;

template <typename T>
struct GradNode {
    const char* name = "";
    std::vector<BasicTensor<T>> inputs;
    // Receives dLoss/dOutput and accumulates into the inputs' grad buffers.
    std::function<void(std::span<const T> grad_out)> backward;
};

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty when absent
    bool requires_grad = false;
    std::shared_ptr<GradNode<T>> node;  // null for leaves
};

template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static BasicTensor zeros(Shape shape, bool requires_grad = false);
    static BasicTensor full(Shape shape, T value, bool requires_grad = false);
    static BasicTensor scalar(T value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::int64_t dim(std::size_t axis) const;
    std::int64_t numel() const;

    std::span<const T> data() const;
    // Direct writes are reserved for initialisation, loading and optimizer steps.
    std::span<T> mutable_data();
    T item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const T> grad() const;
    std::span<T> mutable_grad();
    void clear_grad();

    // Same values, no history, no gradient.
    BasicTensor detach() const;

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data().begin(), data().end());
        return BasicTensor<U>(shape(), std::move(out), requires_grad());
    }

    TensorStorage<T>* storage() const { return impl_.get(); }

private:
    std::shared_ptr<TensorStorage<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Gradient recording is on by default; NoGradGuard disables it for a scope.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// When enabled every op result is scanned for NaN/Inf and rejected.
void set_finite_checks(bool on);
bool finite_checks();

// Builds an op output. The node is attached only when recording is enabled and
// at least one input requires a gradient.
template <typename T>
BasicTensor<T> make_result(const char* name, Shape shape, std::vector<T> data,
                           std::vector<BasicTensor<T>> inputs,
                           std::function<void(std::span<const T>)> backward);

// Zero-initialised on first use.
template <typename T>
std::span<T> grad_buffer(const BasicTensor<T>& t);

template <typename T>
void backward(const BasicTensor<T>& loss);

}  // namespace jh
