#include "jh/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jh/ops.hpp"

namespace jh {

namespace {

template <typename T>
void check_mask(const BasicTensor<T>& jekyll) {
    for (auto v : jekyll.data())
        if (!(v >= T(0) && v <= T(1))) throw std::domain_error("dual_loss: Jekyll output outside [0, 1]");
}

template <typename T>
void check_shapes(const BasicTensor<T>& input, const BasicTensor<T>& jekyll) {
    if (input.shape() != jekyll.shape())
        throw std::invalid_argument("dual_loss: Jekyll output " + shape_str(jekyll.shape()) + " does not match input " +
                                    shape_str(input.shape()));
}

}  // namespace

template <typename T>
BasicTensor<T> frame_differential(const BasicTensor<T>& input, const BasicTensor<T>& background) {
    if (input.ndim() != 5 || background.ndim() != 5)
        throw std::invalid_argument("frame_differential: expected 5-d tensors");
    const auto& is = input.shape();
    const auto& bs = background.shape();
    if (bs[2] != 1 || bs[0] != is[0] || bs[1] != is[1] || bs[3] != is[3] || bs[4] != is[4])
        throw std::invalid_argument("frame_differential: background " + shape_str(bs) +
                                    " does not match input " + shape_str(is) + " apart from time");
    return subtract(input, expand_time(background, is[2]));
}

template <typename T>
BasicTensor<T> dual_loss_total(const BasicTensor<T>& input, const BasicTensor<T>& jekyll, const BasicTensor<T>& hyde,
                               T alpha, T epsilon) {
    check_shapes(input, jekyll);
    check_mask(jekyll);
    auto delta_sq = square(frame_differential(input, hyde));
    auto background_term = mean_all(multiply(neg_log_eps(jekyll, epsilon), delta_sq));
    return add(background_term, scale(mean_all(jekyll), alpha));
}

LossBreakdown dual_loss(const Tensor& input, const Tensor& jekyll, const Tensor& hyde, double alpha, double epsilon) {
    if (!(alpha >= 0.0)) throw std::invalid_argument("dual_loss: alpha must be non-negative");
    if (!(epsilon > 0.0)) throw std::invalid_argument("dual_loss: epsilon must be positive");
    check_shapes(input, jekyll);
    check_mask(jekyll);
    LossBreakdown out;
    out.alpha = alpha;
    out.epsilon = epsilon;
    out.delta = frame_differential(input, hyde);
    out.delta_sq = square(out.delta);
    out.masked = multiply(neg_log_eps(jekyll, static_cast<float>(epsilon)), out.delta_sq);
    out.background_term = mean_all(out.masked);
    out.mask_cost = scale(mean_all(jekyll), static_cast<float>(alpha));
    out.total = add(out.background_term, out.mask_cost);
    return out;
}

double optimal_mask(double delta_sq, double alpha, double epsilon) {
    if (!(alpha > 0.0)) throw std::invalid_argument("optimal_mask: alpha must be positive");
    // d/dJ = -delta_sq / (J + eps) + alpha vanishes at J = delta_sq / alpha - eps; the
    // objective is convex in J, so clamping the stationary point gives the minimiser.
    return std::clamp(delta_sq / alpha - epsilon, 0.0, 1.0);
}

template <typename T>
BasicTensor<T> bce_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("bce_loss: prediction " + shape_str(pred.shape()) + " and target " +
                                    shape_str(target.shape()) + " differ");
    auto p = pred.data();
    auto y = target.data();
    if (p.empty()) throw std::invalid_argument("bce_loss: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (y[i] != T(0) && y[i] != T(1)) throw std::domain_error("bce_loss: target is not binary");
        if (!(p[i] >= T(0) && p[i] <= T(1))) throw std::domain_error("bce_loss: prediction outside [0, 1]");
        const double pi = static_cast<double>(p[i]);
        acc -= y[i] == T(1) ? std::log(std::max(pi, kBceClamp)) : std::log(std::max(1.0 - pi, kBceClamp));
    }
    const double n = static_cast<double>(p.size());
    return make_result<T>("bce_loss", Shape{}, {static_cast<T>(acc / n)}, {pred},
                          [pred, target, n](std::span<const T> g) {
                              auto gp = grad_buffer(pred);
                              auto pv = pred.data();
                              auto yv = target.data();
                              const double scale = static_cast<double>(g[0]) / n;
                              for (std::size_t i = 0; i < gp.size(); ++i) {
                                  const double pi = static_cast<double>(pv[i]);
                                  // Zero slope where the logarithm is clamped.
                                  double d = 0.0;
                                  if (yv[i] == T(1)) {
                                      if (pi > kBceClamp) d = -1.0 / pi;
                                  } else if (1.0 - pi > kBceClamp) {
                                      d = 1.0 / (1.0 - pi);
                                  }
                                  gp[i] += static_cast<T>(scale * d);
                              }
                          });
}

nlohmann::json to_json(const LossBreakdown& loss) {
    return {{"background_term", loss.background_term.item()},
            {"mask_cost", loss.mask_cost.item()},
            {"total", loss.total.item()},
            {"alpha", loss.alpha},
            {"epsilon", loss.epsilon}};
}

template BasicTensor<float> frame_differential<float>(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> frame_differential<double>(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> dual_loss_total<float>(const BasicTensor<float>&, const BasicTensor<float>&,
                                                   const BasicTensor<float>&, float, float);
template BasicTensor<double> dual_loss_total<double>(const BasicTensor<double>&, const BasicTensor<double>&,
                                                     const BasicTensor<double>&, double, double);
template BasicTensor<float> bce_loss<float>(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> bce_loss<double>(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace jh
