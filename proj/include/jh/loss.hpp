#pragma once

// Unsupervised dual-model loss and the supervised BCE baseline.
//
//   delta      = input frame n - background, for each n
//   masked     = -ln(J + eps) * delta^2
//   total      = mean(masked) + alpha * mean(J)
//
// Both means run over every element, batch included.

#include "json.hpp"
#include "jh/tensor.hpp"

namespace jh {

inline constexpr double kDefaultEpsilon = 1e-3;
inline constexpr double kDefaultAlpha = 1.0;

struct LossBreakdown {
    Tensor delta;
    Tensor delta_sq;
    Tensor masked;
    Tensor background_term;  // scalar
    Tensor mask_cost;        // scalar, alpha * mean(J)
    Tensor total;            // scalar, differentiable
    double alpha = kDefaultAlpha;
    double epsilon = kDefaultEpsilon;
};

// input [K,1,N,W,H], background [K,1,1,W,H] -> [K,1,N,W,H]
template <typename T>
BasicTensor<T> frame_differential(const BasicTensor<T>& input, const BasicTensor<T>& background);

LossBreakdown dual_loss(const Tensor& input, const Tensor& jekyll, const Tensor& hyde, double alpha = kDefaultAlpha,
                        double epsilon = kDefaultEpsilon);

// Total only; shares the graph construction with dual_loss.
template <typename T>
BasicTensor<T> dual_loss_total(const BasicTensor<T>& input, const BasicTensor<T>& jekyll, const BasicTensor<T>& hyde,
                               T alpha, T epsilon);

// Minimiser over J in [0, 1] of -ln(J + eps) * delta_sq + alpha * J.
double optimal_mask(double delta_sq, double alpha, double epsilon = kDefaultEpsilon);

inline constexpr double kBceClamp = 1e-12;

// Mean binary cross entropy; targets must be exactly 0 or 1.
template <typename T>
BasicTensor<T> bce_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

// Scalars only, for training logs.
nlohmann::json to_json(const LossBreakdown& loss);

}  // namespace jh
