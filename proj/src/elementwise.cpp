#include <cmath>
#include <stdexcept>

#include "jh/ops.hpp"

namespace jh {

namespace {

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

template <typename T>
void require_5d(const BasicTensor<T>& x, const char* op) {
    if (x.ndim() != 5)
        throw std::invalid_argument(std::string(op) + ": expected a 5-d tensor, got " + shape_str(x.shape()));
}

}  // namespace

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    auto xs = x.data();
    std::vector<T> out(xs.size());
    // NaN passes through so divergence stays visible downstream.
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] <= T(0) ? T(0) : xs[i];
    return make_result<T>("relu", x.shape(), std::move(out), {x}, [x](std::span<const T> g) {
        auto gx = grad_buffer(x);
        auto xv = x.data();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > T(0)) gx[i] += g[i];
    });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-xs[i]));
    return make_result<T>("sigmoid", x.shape(), std::move(out), {x}, [x](std::span<const T> g) {
        auto gx = grad_buffer(x);
        auto xv = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            T s = T(1) / (T(1) + std::exp(-xv[i]));
            gx[i] += g[i] * s * (T(1) - s);
        }
    });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "add");
    auto as = a.data();
    auto bs = b.data();
    std::vector<T> out(as.size());
    for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] + bs[i];
    return make_result<T>("add", a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
        for (const auto* t : {&a, &b}) {
            if (!t->requires_grad()) continue;
            auto gt = grad_buffer(*t);
            for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
        }
    });
}

template <typename T>
BasicTensor<T> subtract(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "subtract");
    auto as = a.data();
    auto bs = b.data();
    std::vector<T> out(as.size());
    for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] - bs[i];
    return make_result<T>("subtract", a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
        if (a.requires_grad()) {
            auto ga = grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            auto gb = grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "multiply");
    auto as = a.data();
    auto bs = b.data();
    std::vector<T> out(as.size());
    for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] * bs[i];
    return make_result<T>("multiply", a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
        if (a.requires_grad()) {
            auto ga = grad_buffer(a);
            auto bv = b.data();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (b.requires_grad()) {
            auto gb = grad_buffer(b);
            auto av = a.data();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
    auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] * factor;
    return make_result<T>("scale", x.shape(), std::move(out), {x}, [x, factor](std::span<const T> g) {
        auto gx = grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x) {
    auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] * xs[i];
    return make_result<T>("square", x.shape(), std::move(out), {x}, [x](std::span<const T> g) {
        auto gx = grad_buffer(x);
        auto xv = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * T(2) * xv[i];
    });
}

template <typename T>
BasicTensor<T> neg_log_eps(const BasicTensor<T>& x, T eps) {
    auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        T arg = xs[i] + eps;
        if (!(arg > T(0)))
            throw std::domain_error("neg_log_eps: x + eps must be positive (element " + std::to_string(i) + ")");
        out[i] = -std::log(arg);
    }
    return make_result<T>("neg_log_eps", x.shape(), std::move(out), {x}, [x, eps](std::span<const T> g) {
        auto gx = grad_buffer(x);
        auto xv = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i] / (xv[i] + eps);
    });
}

template <typename T>
BasicTensor<T> mean_all(const BasicTensor<T>& x) {
    auto xs = x.data();
    if (xs.empty()) throw std::invalid_argument("mean_all of an empty tensor");
    double acc = 0.0;
    for (auto v : xs) acc += static_cast<double>(v);
    const double n = static_cast<double>(xs.size());
    return make_result<T>("mean_all", Shape{}, {static_cast<T>(acc / n)}, {x}, [x, n](std::span<const T> g) {
        auto gx = grad_buffer(x);
        const T share = static_cast<T>(static_cast<double>(g[0]) / n);
        for (auto& v : gx) v += share;
    });
}

template <typename T>
BasicTensor<T> mean_over_time(const BasicTensor<T>& x) {
    require_5d(x, "mean_over_time");
    const auto& s = x.shape();
    const std::int64_t outer = s[0] * s[1], frames = s[2], plane = s[3] * s[4];
    auto xs = x.data();
    std::vector<T> out(static_cast<std::size_t>(outer * plane));
    std::vector<double> acc(static_cast<std::size_t>(plane));
    for (std::int64_t o = 0; o < outer; ++o) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::int64_t t = 0; t < frames; ++t) {
            const T* src = xs.data() + (o * frames + t) * plane;
            for (std::int64_t p = 0; p < plane; ++p) acc[p] += static_cast<double>(src[p]);
        }
        for (std::int64_t p = 0; p < plane; ++p) out[o * plane + p] = static_cast<T>(acc[p] / double(frames));
    }
    Shape os{s[0], s[1], 1, s[3], s[4]};
    return make_result<T>("mean_over_time", os, std::move(out), {x},
                          [x, outer, frames, plane](std::span<const T> g) {
                              auto gx = grad_buffer(x);
                              const T inv = T(1) / static_cast<T>(frames);
                              for (std::int64_t o = 0; o < outer; ++o)
                                  for (std::int64_t t = 0; t < frames; ++t) {
                                      T* dst = gx.data() + (o * frames + t) * plane;
                                      const T* src = g.data() + o * plane;
                                      for (std::int64_t p = 0; p < plane; ++p) dst[p] += src[p] * inv;
                                  }
                          });
}

template <typename T>
BasicTensor<T> expand_time(const BasicTensor<T>& x, std::int64_t frames) {
    require_5d(x, "expand_time");
    const auto& s = x.shape();
    if (s[2] != 1) throw std::invalid_argument("expand_time: time extent must be 1, got " + shape_str(s));
    if (frames < 1) throw std::invalid_argument("expand_time: frames must be >= 1");
    const std::int64_t outer = s[0] * s[1], plane = s[3] * s[4];
    auto xs = x.data();
    std::vector<T> out(static_cast<std::size_t>(outer * frames * plane));
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t t = 0; t < frames; ++t)
            std::copy_n(xs.data() + o * plane, plane, out.data() + (o * frames + t) * plane);
    Shape os{s[0], s[1], frames, s[3], s[4]};
    return make_result<T>("expand_time", os, std::move(out), {x}, [x, outer, frames, plane](std::span<const T> g) {
        auto gx = grad_buffer(x);
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t t = 0; t < frames; ++t) {
                const T* src = g.data() + (o * frames + t) * plane;
                for (std::int64_t p = 0; p < plane; ++p) gx[o * plane + p] += src[p];
            }
    });
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_5d(a, "concat_channels");
    require_5d(b, "concat_channels");
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    for (std::size_t ax : {0u, 2u, 3u, 4u})
        if (sa[ax] != sb[ax])
            throw std::invalid_argument("concat_channels: non-channel extents differ " + shape_str(sa) + " vs " +
                                        shape_str(sb));
    const std::int64_t batch = sa[0], vol = sa[2] * sa[3] * sa[4];
    const std::int64_t ca = sa[1], cb = sb[1];
    const std::int64_t block_a = ca * vol, block_b = cb * vol;
    std::vector<T> out(static_cast<std::size_t>(batch * (block_a + block_b)));
    auto av = a.data();
    auto bv = b.data();
    for (std::int64_t k = 0; k < batch; ++k) {
        T* dst = out.data() + k * (block_a + block_b);
        std::copy_n(av.data() + k * block_a, block_a, dst);
        std::copy_n(bv.data() + k * block_b, block_b, dst + block_a);
    }
    Shape os{batch, ca + cb, sa[2], sa[3], sa[4]};
    return make_result<T>("concat_channels", os, std::move(out), {a, b},
                          [a, b, batch, block_a, block_b](std::span<const T> g) {
                              for (std::int64_t k = 0; k < batch; ++k) {
                                  const T* src = g.data() + k * (block_a + block_b);
                                  if (a.requires_grad()) {
                                      T* ga = grad_buffer(a).data() + k * block_a;
                                      for (std::int64_t i = 0; i < block_a; ++i) ga[i] += src[i];
                                  }
                                  if (b.requires_grad()) {
                                      T* gb = grad_buffer(b).data() + k * block_b;
                                      for (std::int64_t i = 0; i < block_b; ++i) gb[i] += src[block_a + i];
                                  }
                              }
                          });
}

#define JH_INSTANTIATE(T)                                                                            \
    template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                          \
    template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                       \
    template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);                    \
    template BasicTensor<T> subtract<T>(const BasicTensor<T>&, const BasicTensor<T>&);               \
    template BasicTensor<T> multiply<T>(const BasicTensor<T>&, const BasicTensor<T>&);               \
    template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                                      \
    template BasicTensor<T> square<T>(const BasicTensor<T>&);                                        \
    template BasicTensor<T> neg_log_eps<T>(const BasicTensor<T>&, T);                                \
    template BasicTensor<T> mean_all<T>(const BasicTensor<T>&);                                      \
    template BasicTensor<T> mean_over_time<T>(const BasicTensor<T>&);                                \
    template BasicTensor<T> expand_time<T>(const BasicTensor<T>&, std::int64_t);                     \
    template BasicTensor<T> concat_channels<T>(const BasicTensor<T>&, const BasicTensor<T>&);

JH_INSTANTIATE(float)
JH_INSTANTIATE(double)
#undef JH_INSTANTIATE

}  // namespace jh
