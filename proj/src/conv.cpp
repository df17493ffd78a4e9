#include <Eigen/Core>
#include <stdexcept>
#include <string>

#include "jh/ops.hpp"

namespace jh {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Correlation geometry between a "wide" volume (conv input, convT output) and a
// "narrow" volume (conv output, convT input).
struct Window {
    Extent3 wide;
    Extent3 narrow;
    Extent3 kernel;
    ConvGeometry geom;
    std::int64_t channels;  // channels of the wide volume

    std::int64_t kvol() const { return kernel[0] * kernel[1] * kernel[2]; }
    std::int64_t rows() const { return channels * kvol(); }
    std::int64_t plane() const { return narrow[1] * narrow[2]; }
    std::int64_t wide_vol() const { return wide[0] * wide[1] * wide[2]; }
};

// col[(c,dt,dw,dh), (ow,oh)] = wide[c, t*st-pt+dt, ow*sw-pw+dw, oh*sh-ph+dh] (zero outside).
template <typename T>
void im2col(const T* wide, const Window& w, std::int64_t t, T* col) {
    const auto [Tw, Ww, Hw] = w.wide;
    const auto Wn = w.narrow[1], Hn = w.narrow[2];
    const auto [kt, kw, kh] = w.kernel;
    const auto [st, sw, sh] = w.geom.stride;
    const auto [pt, pw, ph] = w.geom.padding;
    const std::int64_t P = Wn * Hn;
    T* row = col;
    for (std::int64_t c = 0; c < w.channels; ++c)
        for (std::int64_t dt = 0; dt < kt; ++dt) {
            const std::int64_t it = t * st - pt + dt;
            for (std::int64_t dw = 0; dw < kw; ++dw)
                for (std::int64_t dh = 0; dh < kh; ++dh, row += P) {
                    if (it < 0 || it >= Tw) {
                        std::fill_n(row, P, T(0));
                        continue;
                    }
                    const T* src_t = wide + (c * Tw + it) * Ww * Hw;
                    for (std::int64_t ow = 0; ow < Wn; ++ow) {
                        T* dst = row + ow * Hn;
                        const std::int64_t iw = ow * sw - pw + dw;
                        if (iw < 0 || iw >= Ww) {
                            std::fill_n(dst, Hn, T(0));
                            continue;
                        }
                        const T* src = src_t + iw * Hw;
                        for (std::int64_t oh = 0; oh < Hn; ++oh) {
                            const std::int64_t ih = oh * sh - ph + dh;
                            dst[oh] = (ih >= 0 && ih < Hw) ? src[ih] : T(0);
                        }
                    }
                }
        }
}

// Adjoint of im2col: accumulates col entries back into the wide volume.
template <typename T>
void col2im(const T* col, const Window& w, std::int64_t t, T* wide) {
    const auto [Tw, Ww, Hw] = w.wide;
    const auto Wn = w.narrow[1], Hn = w.narrow[2];
    const auto [kt, kw, kh] = w.kernel;
    const auto [st, sw, sh] = w.geom.stride;
    const auto [pt, pw, ph] = w.geom.padding;
    const std::int64_t P = Wn * Hn;
    const T* row = col;
    for (std::int64_t c = 0; c < w.channels; ++c)
        for (std::int64_t dt = 0; dt < kt; ++dt) {
            const std::int64_t it = t * st - pt + dt;
            for (std::int64_t dw = 0; dw < kw; ++dw)
                for (std::int64_t dh = 0; dh < kh; ++dh, row += P) {
                    if (it < 0 || it >= Tw) continue;
                    T* dst_t = wide + (c * Tw + it) * Ww * Hw;
                    for (std::int64_t ow = 0; ow < Wn; ++ow) {
                        const std::int64_t iw = ow * sw - pw + dw;
                        if (iw < 0 || iw >= Ww) continue;
                        T* dst = dst_t + iw * Hw;
                        const T* src = row + ow * Hn;
                        for (std::int64_t oh = 0; oh < Hn; ++oh) {
                            const std::int64_t ih = oh * sh - ph + dh;
                            if (ih >= 0 && ih < Hw) dst[ih] += src[oh];
                        }
                    }
                }
        }
}

Extent3 spatial(const Shape& s) { return {s[2], s[3], s[4]}; }

void check_geometry(const ConvGeometry& g, const char* op) {
    for (int a = 0; a < 3; ++a) {
        if (g.stride[a] < 1) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
        if (g.padding[a] < 0) throw std::invalid_argument(std::string(op) + ": padding must be >= 0");
    }
}

// in_axis: which weight axis holds the input channels (1 for conv, 0 for transpose).
template <typename T>
void check_operands(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                    std::size_t in_axis, const char* op) {
    const std::string name(op);
    if (input.ndim() != 5) throw std::invalid_argument(name + ": input must be 5-d, got " + shape_str(input.shape()));
    if (weight.ndim() != 5) throw std::invalid_argument(name + ": weight must be 5-d, got " + shape_str(weight.shape()));
    if (input.dim(1) != weight.dim(in_axis))
        throw std::invalid_argument(name + ": input has " + std::to_string(input.dim(1)) +
                                    " channels but weight " + shape_str(weight.shape()) + " expects " +
                                    std::to_string(weight.dim(in_axis)));
    const std::int64_t out_channels = weight.dim(1 - in_axis);
    if (bias.ndim() != 1 || bias.dim(0) != out_channels)
        throw std::invalid_argument(name + ": bias must have shape [" + std::to_string(out_channels) + "], got " +
                                    shape_str(bias.shape()));
}

}  // namespace

Extent3 conv_output_extent(const Extent3& in, const Extent3& kernel, const ConvGeometry& geom) {
    check_geometry(geom, "conv3d");
    Extent3 out{};
    for (int a = 0; a < 3; ++a) {
        const std::int64_t span = in[a] + 2 * geom.padding[a] - kernel[a];
        if (kernel[a] < 1 || span < 0)
            throw std::invalid_argument("conv3d: kernel " + std::to_string(kernel[a]) +
                                        " does not fit padded extent " +
                                        std::to_string(in[a] + 2 * geom.padding[a]) + " on axis " + std::to_string(a));
        out[a] = span / geom.stride[a] + 1;
    }
    return out;
}

Extent3 conv_transpose_output_extent(const Extent3& in, const Extent3& kernel, const ConvGeometry& geom) {
    check_geometry(geom, "conv_transpose3d");
    Extent3 out{};
    for (int a = 0; a < 3; ++a) {
        out[a] = (in[a] - 1) * geom.stride[a] - 2 * geom.padding[a] + kernel[a];
        if (kernel[a] < 1 || in[a] < 1 || out[a] < 1)
            throw std::invalid_argument("conv_transpose3d: inconsistent geometry on axis " + std::to_string(a));
    }
    return out;
}

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      const ConvGeometry& geom) {
    check_operands(input, weight, bias, 1, "conv3d");
    const auto& xs = input.shape();
    const auto& ws = weight.shape();
    const std::int64_t K = xs[0], Cin = xs[1], Cout = ws[0];
    const Extent3 kernel{ws[2], ws[3], ws[4]};
    const Extent3 out_ext = conv_output_extent(spatial(xs), kernel, geom);
    const Window win{spatial(xs), out_ext, kernel, geom, Cin};
    const std::int64_t P = win.plane(), R = win.rows(), Tout = out_ext[0];
    const std::int64_t in_block = Cin * win.wide_vol(), out_block = Cout * Tout * P;

    std::vector<T> out(static_cast<std::size_t>(K * out_block));
    std::vector<T> col(static_cast<std::size_t>(R * P));
    ConstMatMap<T> wm(weight.data().data(), Cout, R, Eigen::OuterStride<>(R));
    ConstMatMap<T> colm(col.data(), R, P, Eigen::OuterStride<>(P));
    auto bv = bias.data();
    for (std::int64_t k = 0; k < K; ++k)
        for (std::int64_t t = 0; t < Tout; ++t) {
            im2col(input.data().data() + k * in_block, win, t, col.data());
            MatMap<T> om(out.data() + k * out_block + t * P, Cout, P, Eigen::OuterStride<>(Tout * P));
            om.noalias() = wm * colm;
            for (std::int64_t c = 0; c < Cout; ++c) om.row(c).array() += bv[c];
        }

    Shape os{K, Cout, out_ext[0], out_ext[1], out_ext[2]};
    return make_result<T>(
        "conv3d", os, std::move(out), {input, weight, bias},
        [input, weight, bias, win, K, Cout, P, R, Tout, in_block, out_block](std::span<const T> g) {
            std::vector<T> col(static_cast<std::size_t>(R * P));
            std::vector<T> dcol;
            ConstMatMap<T> wm(weight.data().data(), Cout, R, Eigen::OuterStride<>(R));
            const bool need_x = input.requires_grad();
            const bool need_w = weight.requires_grad();
            if (need_x) dcol.resize(col.size());
            T* gx = need_x ? grad_buffer(input).data() : nullptr;
            T* gw = need_w ? grad_buffer(weight).data() : nullptr;
            for (std::int64_t k = 0; k < K; ++k)
                for (std::int64_t t = 0; t < Tout; ++t) {
                    ConstMatMap<T> gm(g.data() + k * out_block + t * P, Cout, P, Eigen::OuterStride<>(Tout * P));
                    if (need_w) {
                        im2col(input.data().data() + k * in_block, win, t, col.data());
                        ConstMatMap<T> colm(col.data(), R, P, Eigen::OuterStride<>(P));
                        MatMap<T> gwm(gw, Cout, R, Eigen::OuterStride<>(R));
                        gwm.noalias() += gm * colm.transpose();
                    }
                    if (need_x) {
                        MatMap<T> dcolm(dcol.data(), R, P, Eigen::OuterStride<>(P));
                        dcolm.noalias() = wm.transpose() * gm;
                        col2im(dcol.data(), win, t, gx + k * in_block);
                    }
                }
            if (bias.requires_grad()) {
                auto gb = grad_buffer(bias);
                for (std::int64_t k = 0; k < K; ++k)
                    for (std::int64_t c = 0; c < Cout; ++c) {
                        const T* src = g.data() + k * out_block + c * Tout * P;
                        T acc = T(0);
                        for (std::int64_t i = 0; i < Tout * P; ++i) acc += src[i];
                        gb[c] += acc;
                    }
            }
        });
}

template <typename T>
BasicTensor<T> conv_transpose3d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, const ConvGeometry& geom) {
    check_operands(input, weight, bias, 0, "conv_transpose3d");
    const auto& xs = input.shape();
    const auto& ws = weight.shape();
    const std::int64_t K = xs[0], Cin = xs[1], Cout = ws[1];
    const Extent3 kernel{ws[2], ws[3], ws[4]};
    const Extent3 out_ext = conv_transpose_output_extent(spatial(xs), kernel, geom);
    // The transpose is the conv adjoint: the output is the wide side of the window.
    const Window win{out_ext, spatial(xs), kernel, geom, Cout};
    const std::int64_t P = win.plane(), R = win.rows(), Tin = xs[2];
    const std::int64_t in_block = Cin * Tin * P, out_vol = win.wide_vol(), out_block = Cout * out_vol;

    std::vector<T> out(static_cast<std::size_t>(K * out_block), T(0));
    std::vector<T> col(static_cast<std::size_t>(R * P));
    ConstMatMap<T> wm(weight.data().data(), Cin, R, Eigen::OuterStride<>(R));
    MatMap<T> colm(col.data(), R, P, Eigen::OuterStride<>(P));
    for (std::int64_t k = 0; k < K; ++k)
        for (std::int64_t t = 0; t < Tin; ++t) {
            ConstMatMap<T> xm(input.data().data() + k * in_block + t * P, Cin, P, Eigen::OuterStride<>(Tin * P));
            colm.noalias() = wm.transpose() * xm;
            col2im(col.data(), win, t, out.data() + k * out_block);
        }
    auto bv = bias.data();
    for (std::int64_t k = 0; k < K; ++k)
        for (std::int64_t c = 0; c < Cout; ++c) {
            T* dst = out.data() + k * out_block + c * out_vol;
            for (std::int64_t i = 0; i < out_vol; ++i) dst[i] += bv[c];
        }

    Shape os{K, Cout, out_ext[0], out_ext[1], out_ext[2]};
    return make_result<T>(
        "conv_transpose3d", os, std::move(out), {input, weight, bias},
        [input, weight, bias, win, K, Cin, Cout, P, R, Tin, in_block, out_vol, out_block](std::span<const T> g) {
            std::vector<T> col(static_cast<std::size_t>(R * P));
            ConstMatMap<T> wm(weight.data().data(), Cin, R, Eigen::OuterStride<>(R));
            ConstMatMap<T> colm(col.data(), R, P, Eigen::OuterStride<>(P));
            const bool need_x = input.requires_grad();
            const bool need_w = weight.requires_grad();
            T* gx = need_x ? grad_buffer(input).data() : nullptr;
            T* gw = need_w ? grad_buffer(weight).data() : nullptr;
            if (need_x || need_w)
                for (std::int64_t k = 0; k < K; ++k)
                    for (std::int64_t t = 0; t < Tin; ++t) {
                        im2col(g.data() + k * out_block, win, t, col.data());
                        if (need_x) {
                            MatMap<T> gxm(gx + k * in_block + t * P, Cin, P, Eigen::OuterStride<>(Tin * P));
                            gxm.noalias() += wm * colm;
                        }
                        if (need_w) {
                            ConstMatMap<T> xm(input.data().data() + k * in_block + t * P, Cin, P,
                                              Eigen::OuterStride<>(Tin * P));
                            MatMap<T> gwm(gw, Cin, R, Eigen::OuterStride<>(R));
                            gwm.noalias() += xm * colm.transpose();
                        }
                    }
            if (bias.requires_grad()) {
                auto gb = grad_buffer(bias);
                for (std::int64_t k = 0; k < K; ++k)
                    for (std::int64_t c = 0; c < Cout; ++c) {
                        const T* src = g.data() + k * out_block + c * out_vol;
                        T acc = T(0);
                        for (std::int64_t i = 0; i < out_vol; ++i) acc += src[i];
                        gb[c] += acc;
                    }
            }
        });
}

template BasicTensor<float> conv3d<float>(const BasicTensor<float>&, const BasicTensor<float>&,
                                          const BasicTensor<float>&, const ConvGeometry&);
template BasicTensor<double> conv3d<double>(const BasicTensor<double>&, const BasicTensor<double>&,
                                            const BasicTensor<double>&, const ConvGeometry&);
template BasicTensor<float> conv_transpose3d<float>(const BasicTensor<float>&, const BasicTensor<float>&,
                                                    const BasicTensor<float>&, const ConvGeometry&);
template BasicTensor<double> conv_transpose3d<double>(const BasicTensor<double>&, const BasicTensor<double>&,
                                                      const BasicTensor<double>&, const ConvGeometry&);

}  // namespace jh
