#pragma once

// Differentiable operators used by the hourglass models and the losses.
// All spatial ops take 5-d tensors [K, C, N, W, H].

#include <array>
#include <cstdint>
#include <vector>

#include "jh/tensor.hpp"

namespace jh {

using Extent3 = std::array<std::int64_t, 3>;  // (time, width, height)

struct ConvGeometry {
    Extent3 stride{1, 1, 1};
    Extent3 padding{0, 0, 0};
};

// Cross-correlation (no kernel flip).
// input [K,Cin,N,W,H], weight [Cout,Cin,kt,kw,kh], bias [Cout].
template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      const ConvGeometry& geom = {});

// Adjoint of conv3d in its input. weight [Cin,Cout,kt,kw,kh], bias [Cout];
// output extent per axis is (in - 1) * stride - 2 * pad + k.
template <typename T>
BasicTensor<T> conv_transpose3d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, const ConvGeometry& geom = {});

Extent3 conv_output_extent(const Extent3& in, const Extent3& kernel, const ConvGeometry& geom);
Extent3 conv_transpose_output_extent(const Extent3& in, const Extent3& kernel, const ConvGeometry& geom);

// Flat argmax indices into each (k, c) volume of the pooled input.
struct IndexTensor {
    Shape shape;
    std::vector<std::int64_t> data;
};

template <typename T>
struct PoolResult {
    BasicTensor<T> values;
    IndexTensor indices;
};

// Ties resolve to the lowest flat index. stride defaults to kernel when zero.
template <typename T>
PoolResult<T> maxpool3d(const BasicTensor<T>& input, const Extent3& kernel, Extent3 stride = {0, 0, 0});

// Scatters values to their recorded positions in a zero tensor of the given extent.
template <typename T>
BasicTensor<T> maxunpool3d(const BasicTensor<T>& values, const IndexTensor& indices, const Extent3& output_extent);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> subtract(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x);

// -ln(x + eps); rejects any element with x + eps <= 0.
template <typename T>
BasicTensor<T> neg_log_eps(const BasicTensor<T>& x, T eps);

// Scalar (shape []) mean over every element.
template <typename T>
BasicTensor<T> mean_all(const BasicTensor<T>& x);

// [K,C,N,W,H] -> [K,C,1,W,H]
template <typename T>
BasicTensor<T> mean_over_time(const BasicTensor<T>& x);

// [K,C,1,W,H] -> [K,C,frames,W,H] by repetition.
template <typename T>
BasicTensor<T> expand_time(const BasicTensor<T>& x, std::int64_t frames);

// [K,Ca,...] ++ [K,Cb,...] -> [K,Ca+Cb,...]
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace jh
