#include "jh/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace jh {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
        if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
bool g_finite_checks = false;

template <typename T>
void require(const std::shared_ptr<TensorStorage<T>>& impl) {
    if (!impl) throw std::logic_error("use of an undefined tensor");
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks() { return g_finite_checks; }

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<TensorStorage<T>>()) {
    if (static_cast<std::int64_t>(data.size()) != jh::numel(shape))
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto n = static_cast<std::size_t>(jh::numel(shape));
    return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
    return BasicTensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
    require(impl_);
    return impl_->shape;
}

template <typename T>
std::int64_t BasicTensor<T>::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw std::out_of_range("axis out of range for shape " + shape_str(s));
    return s[axis];
}

template <typename T>
std::int64_t BasicTensor<T>::numel() const {
    require(impl_);
    return static_cast<std::int64_t>(impl_->data.size());
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
    require(impl_);
    return impl_->data;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
    require(impl_);
    return impl_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
    require(impl_);
    return impl_->requires_grad;
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
    require(impl_);
    if (impl_->node) throw std::logic_error("requires_grad can only be set on leaf tensors");
    impl_->requires_grad = on;
}

template <typename T>
bool BasicTensor<T>::is_leaf() const {
    require(impl_);
    return !impl_->node;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
    require(impl_);
    return !impl_->grad.empty();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
    if (!has_grad()) throw std::logic_error("tensor has no gradient");
    return impl_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
    if (!has_grad()) throw std::logic_error("tensor has no gradient");
    return impl_->grad;
}

template <typename T>
void BasicTensor<T>::clear_grad() {
    require(impl_);
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return BasicTensor(shape(), impl_->data, false);
}

template <typename T>
BasicTensor<T> make_result(const char* name, Shape shape, std::vector<T> data,
                           std::vector<BasicTensor<T>> inputs,
                           std::function<void(std::span<const T>)> backward) {
    if (g_finite_checks) {
        for (auto v : data)
            if (!std::isfinite(v)) throw std::domain_error(std::string("non-finite value produced by ") + name);
    }
    BasicTensor<T> out(std::move(shape), std::move(data), false);
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    auto node = std::make_shared<GradNode<T>>();
    node->name = name;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    out.storage()->node = std::move(node);
    out.storage()->requires_grad = true;
    return out;
}

template <typename T>
std::span<T> grad_buffer(const BasicTensor<T>& t) {
    auto* s = t.storage();
    if (!s) throw std::logic_error("grad_buffer on undefined tensor");
    if (s->grad.empty()) s->grad.assign(s->data.size(), T(0));
    return s->grad;
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw std::logic_error("backward() on a tensor that does not require grad");

    // Iterative post-order DFS; reversed it is a valid reverse-topological order.
    // `order` also keeps every storage alive while nodes are consumed.
    std::vector<BasicTensor<T>> order;
    std::unordered_set<TensorStorage<T>*> visited;
    std::vector<std::pair<BasicTensor<T>, std::size_t>> stack;
    stack.emplace_back(loss, 0);
    visited.insert(loss.storage());
    while (!stack.empty()) {
        auto* s = stack.back().first.storage();
        auto& next = stack.back().second;
        if (s->node && next < s->node->inputs.size()) {
            const auto& child = s->node->inputs[next++];
            if (child.storage()->requires_grad && visited.insert(child.storage()).second) stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(std::move(stack.back().first));
        stack.pop_back();
    }

    auto* root = loss.storage();
    root->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* s = it->storage();
        if (!s->node) continue;
        if (!s->grad.empty()) s->node->backward(std::span<const T>(s->grad));
        // Consume the graph: release saved context and intermediate gradients.
        s->node.reset();
        if (s != root) {
            s->grad.clear();
            s->grad.shrink_to_fit();
        }
    }
}

#define JH_INSTANTIATE(T)                                                                          \
    template class BasicTensor<T>;                                                                 \
    template BasicTensor<T> make_result<T>(const char*, Shape, std::vector<T>,                     \
                                           std::vector<BasicTensor<T>>,                            \
                                           std::function<void(std::span<const T>)>);               \
    template std::span<T> grad_buffer<T>(const BasicTensor<T>&);                                   \
    template void backward<T>(const BasicTensor<T>&);

JH_INSTANTIATE(float)
JH_INSTANTIATE(double)
#undef JH_INSTANTIATE

}  // namespace jh
