#include <cmath>
#include <stdexcept>
#include <string>

#include "jh/ops.hpp"

namespace jh {

template <typename T>
PoolResult<T> maxpool3d(const BasicTensor<T>& input, const Extent3& kernel, Extent3 stride) {
    if (input.ndim() != 5) throw std::invalid_argument("maxpool3d: input must be 5-d, got " + shape_str(input.shape()));
    const auto& s = input.shape();
    const Extent3 in{s[2], s[3], s[4]};
    Extent3 out{};
    for (int a = 0; a < 3; ++a) {
        if (stride[a] == 0) stride[a] = kernel[a];
        if (kernel[a] < 1 || stride[a] < 1) throw std::invalid_argument("maxpool3d: kernel and stride must be >= 1");
        if (kernel[a] > in[a])
            throw std::invalid_argument("maxpool3d: kernel " + std::to_string(kernel[a]) + " exceeds extent " +
                                        std::to_string(in[a]) + " on axis " + std::to_string(a));
        out[a] = (in[a] - kernel[a]) / stride[a] + 1;
    }
    const std::int64_t outer = s[0] * s[1];
    const std::int64_t in_vol = in[0] * in[1] * in[2], out_vol = out[0] * out[1] * out[2];
    auto xs = input.data();
    std::vector<T> values(static_cast<std::size_t>(outer * out_vol));
    std::vector<std::int64_t> idx(values.size());

    for (std::int64_t o = 0; o < outer; ++o) {
        const T* src = xs.data() + o * in_vol;
        std::int64_t w = o * out_vol;
        for (std::int64_t ot = 0; ot < out[0]; ++ot)
            for (std::int64_t ow = 0; ow < out[1]; ++ow)
                for (std::int64_t oh = 0; oh < out[2]; ++oh, ++w) {
                    std::int64_t best = -1;
                    T best_v = T(0);
                    // Scan in increasing flat order; strict > keeps the lowest index on ties.
                    // A NaN wins its window, as with relu, so it is not silently dropped.
                    for (std::int64_t dt = 0; dt < kernel[0]; ++dt)
                        for (std::int64_t dw = 0; dw < kernel[1]; ++dw)
                            for (std::int64_t dh = 0; dh < kernel[2]; ++dh) {
                                const std::int64_t f = ((ot * stride[0] + dt) * in[1] + ow * stride[1] + dw) * in[2] +
                                                       oh * stride[2] + dh;
                                if (best < 0 || src[f] > best_v || (std::isnan(src[f]) && !std::isnan(best_v))) {
                                    best = f;
                                    best_v = src[f];
                                }
                            }
                    values[w] = best_v;
                    idx[w] = best;
                }
    }

    Shape os{s[0], s[1], out[0], out[1], out[2]};
    IndexTensor indices{os, idx};
    auto result = make_result<T>("maxpool3d", os, std::move(values), {input},
                                 [input, idx = std::move(idx), in_vol, out_vol](std::span<const T> g) {
                                     auto gx = grad_buffer(input);
                                     for (std::size_t i = 0; i < g.size(); ++i) {
                                         const auto o = static_cast<std::int64_t>(i) / out_vol;
                                         gx[o * in_vol + idx[i]] += g[i];
                                     }
                                 });
    return {std::move(result), std::move(indices)};
}

template <typename T>
BasicTensor<T> maxunpool3d(const BasicTensor<T>& values, const IndexTensor& indices, const Extent3& output_extent) {
    if (values.ndim() != 5)
        throw std::invalid_argument("maxunpool3d: values must be 5-d, got " + shape_str(values.shape()));
    if (indices.shape != values.shape() || indices.data.size() != static_cast<std::size_t>(values.numel()))
        throw std::invalid_argument("maxunpool3d: indices shape " + shape_str(indices.shape) +
                                    " does not match values " + shape_str(values.shape()));
    const auto& s = values.shape();
    const std::int64_t outer = s[0] * s[1], in_vol = s[2] * s[3] * s[4];
    const std::int64_t out_vol = output_extent[0] * output_extent[1] * output_extent[2];
    for (auto i : indices.data)
        if (i < 0 || i >= out_vol)
            throw std::out_of_range("maxunpool3d: index " + std::to_string(i) + " outside output volume of " +
                                    std::to_string(out_vol));
    auto vs = values.data();
    std::vector<T> out(static_cast<std::size_t>(outer * out_vol), T(0));
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < in_vol; ++i) out[o * out_vol + indices.data[o * in_vol + i]] = vs[o * in_vol + i];

    Shape os{s[0], s[1], output_extent[0], output_extent[1], output_extent[2]};
    return make_result<T>("maxunpool3d", os, std::move(out), {values},
                          [values, idx = indices.data, outer, in_vol, out_vol](std::span<const T> g) {
                              auto gv = grad_buffer(values);
                              for (std::int64_t o = 0; o < outer; ++o)
                                  for (std::int64_t i = 0; i < in_vol; ++i)
                                      gv[o * in_vol + i] += g[o * out_vol + idx[o * in_vol + i]];
                          });
}

template PoolResult<float> maxpool3d<float>(const BasicTensor<float>&, const Extent3&, Extent3);
template PoolResult<double> maxpool3d<double>(const BasicTensor<double>&, const Extent3&, Extent3);
template BasicTensor<float> maxunpool3d<float>(const BasicTensor<float>&, const IndexTensor&, const Extent3&);
template BasicTensor<double> maxunpool3d<double>(const BasicTensor<double>&, const IndexTensor&, const Extent3&);

}  // namespace jh
