#include "jh/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace jh {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
    if (!(options_.lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
    if (options_.weight_decay < 0.0) throw std::invalid_argument("Adam: weight decay must be non-negative");
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (!params_[i].has_grad())
            throw std::logic_error("Adam::step: parameter " + std::to_string(i) + " " +
                                   shape_str(params_[i].shape()) + " has no gradient");
    ++step_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto p = params_[i].mutable_data();
        auto g = params_[i].grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = static_cast<double>(g[j]) + options_.weight_decay * static_cast<double>(p[j]);
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] = static_cast<float>(static_cast<double>(p[j]) - options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.clear_grad();
}

}  // namespace jh
