#pragma once

#include <cstdint>
#include <vector>

#include "jh/tensor.hpp"

namespace jh {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // coupled: added to the gradient before the moments
};

// Adam over a fixed parameter list. Moments are kept in double.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamOptions options);

    // Throws if any parameter has no gradient.
    void step();
    void zero_grad();

    std::int64_t steps() const { return step_; }
    const AdamOptions& options() const { return options_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::int64_t step_ = 0;
};

}  // namespace jh
