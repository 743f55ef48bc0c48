#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "hcnn/rng.hpp"
#include "hcnn/tensor.hpp"

namespace hcnn {

// Weights (out_c, in_c, kh, kw) plus one bias per output channel.
template <class Scalar>
struct ConvParams {
    Tensor4<Scalar> weights;
    VectorX<Scalar> bias;

    ConvParams() = default;
    ConvParams(Index out_c, Index in_c, Index kh, Index kw)
        : weights(out_c, in_c, kh, kw), bias(VectorX<Scalar>::Zero(out_c)) {}

    Index out_c() const { return weights.n(); }
    Index in_c() const { return weights.c(); }
    Index kh() const { return weights.h(); }
    Index kw() const { return weights.w(); }
};

template <class Scalar>
struct ConvGrads {
    Tensor4<Scalar> input;
    Tensor4<Scalar> weights;
    VectorX<Scalar> bias;
};

namespace detail {

template <class Scalar>
void check_conv_input(const Tensor4<Scalar>& in, const ConvParams<Scalar>& p, Index padding,
                      const char* op) {
    if (p.kh() != p.kw() || (p.kh() != 1 && p.kh() != 3)) {
        throw ShapeError(std::string(op) + ": kernel must be 1x1 or 3x3, got " +
                         std::to_string(p.kh()) + "x" + std::to_string(p.kw()));
    }
    if (in.c() != p.in_c()) {
        throw ShapeError(std::string(op) + ": input has " + std::to_string(in.c()) +
                         " channels, kernel expects " + std::to_string(p.in_c()));
    }
    if (p.bias.size() != p.out_c()) {
        throw ShapeError(std::string(op) + ": bias length " + std::to_string(p.bias.size()) +
                         " != out channels " + std::to_string(p.out_c()));
    }
    const Index oh = in.h() + 2 * padding - p.kh() + 1;
    const Index ow = in.w() + 2 * padding - p.kw() + 1;
    if (oh < 1 || ow < 1) {
        throw ShapeError(std::string(op) + ": non-positive output dims for input " +
                         in.shape_str() + ", kernel " + std::to_string(p.kh()) + "x" +
                         std::to_string(p.kw()) + ", padding " + std::to_string(padding));
    }
}

// Valid output-row range [lo, hi] for kernel offset d under padding p.
inline std::pair<Index, Index> tap_range(Index out_dim, Index in_dim, Index d, Index p) {
    const Index lo = std::max<Index>(0, p - d);
    const Index hi = std::min<Index>(out_dim - 1, in_dim - 1 + p - d);
    return {lo, hi};
}

}  // namespace detail

// Cross-correlation with zero padding, stride 1:
//   out(n,o,y,x) = bias(o) + sum_{i,dy,dx} in(n,i,y+dy-p,x+dx-p) * w(o,i,dy,dx)
// Sums accumulate in double regardless of storage scalar.
template <class Scalar>
Tensor4<Scalar> conv2d(const Tensor4<Scalar>& in, const ConvParams<Scalar>& p, Index padding) {
    detail::check_conv_input(in, p, padding, "conv2d");
    const Index oh = in.h() + 2 * padding - p.kh() + 1;
    const Index ow = in.w() + 2 * padding - p.kw() + 1;
    Tensor4<Scalar> out(in.n(), p.out_c(), oh, ow);

    PlaneX<double> acc(oh, ow);
    for (Index n = 0; n < in.n(); ++n) {
        for (Index o = 0; o < p.out_c(); ++o) {
            acc.setConstant(static_cast<double>(p.bias[o]));
            for (Index i = 0; i < p.in_c(); ++i) {
                const auto src = in.plane(n, i).template cast<double>();
                for (Index dy = 0; dy < p.kh(); ++dy) {
                    const auto [ylo, yhi] = detail::tap_range(oh, in.h(), dy, padding);
                    if (ylo > yhi) continue;
                    for (Index dx = 0; dx < p.kw(); ++dx) {
                        const auto [xlo, xhi] = detail::tap_range(ow, in.w(), dx, padding);
                        if (xlo > xhi) continue;
                        const double wv = static_cast<double>(p.weights(o, i, dy, dx));
                        if (wv == 0.0) continue;
                        acc.block(ylo, xlo, yhi - ylo + 1, xhi - xlo + 1) +=
                            wv * src.block(ylo + dy - padding, xlo + dx - padding,
                                           yhi - ylo + 1, xhi - xlo + 1);
                    }
                }
            }
            out.plane(n, o) = acc.template cast<Scalar>();
        }
    }
    return out;
}

// Exact partials of sum(grad_out .* conv2d(in, p)) w.r.t. input, weights, bias.
template <class Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor4<Scalar>& in, const ConvParams<Scalar>& p,
                                  const Tensor4<Scalar>& grad_out, Index padding) {
    detail::check_conv_input(in, p, padding, "conv2d_backward");
    const Index oh = in.h() + 2 * padding - p.kh() + 1;
    const Index ow = in.w() + 2 * padding - p.kw() + 1;
    if (grad_out.n() != in.n() || grad_out.c() != p.out_c() || grad_out.h() != oh ||
        grad_out.w() != ow) {
        throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape_str() +
                         " does not match forward output");
    }

    ConvGrads<Scalar> g;
    g.input = Tensor4<Scalar>(in.n(), in.c(), in.h(), in.w());
    g.weights = Tensor4<Scalar>(p.out_c(), p.in_c(), p.kh(), p.kw());
    g.bias = VectorX<Scalar>::Zero(p.out_c());

    PlaneX<double> gin_acc(in.h(), in.w());
    VectorX<double> gbias = VectorX<double>::Zero(p.out_c());
    Tensor4<double> gw(p.out_c(), p.in_c(), p.kh(), p.kw());

    for (Index n = 0; n < in.n(); ++n) {
        for (Index o = 0; o < p.out_c(); ++o) {
            const auto go = grad_out.plane(n, o).template cast<double>();
            gbias[o] += go.sum();
        }
        for (Index i = 0; i < p.in_c(); ++i) {
            const auto src = in.plane(n, i).template cast<double>();
            gin_acc.setZero();
            for (Index o = 0; o < p.out_c(); ++o) {
                const auto go = grad_out.plane(n, o).template cast<double>();
                for (Index dy = 0; dy < p.kh(); ++dy) {
                    const auto [ylo, yhi] = detail::tap_range(oh, in.h(), dy, padding);
                    if (ylo > yhi) continue;
                    for (Index dx = 0; dx < p.kw(); ++dx) {
                        const auto [xlo, xhi] = detail::tap_range(ow, in.w(), dx, padding);
                        if (xlo > xhi) continue;
                        const Index bh = yhi - ylo + 1;
                        const Index bw = xhi - xlo + 1;
                        const Index sy = ylo + dy - padding;
                        const Index sx = xlo + dx - padding;
                        gw(o, i, dy, dx) +=
                            (go.block(ylo, xlo, bh, bw) * src.block(sy, sx, bh, bw)).sum();
                        const double wv = static_cast<double>(p.weights(o, i, dy, dx));
                        if (wv != 0.0) {
                            gin_acc.block(sy, sx, bh, bw) += wv * go.block(ylo, xlo, bh, bw);
                        }
                    }
                }
            }
            g.input.plane(n, i) = gin_acc.template cast<Scalar>();
        }
    }
    g.weights.array() = gw.array().template cast<Scalar>();
    g.bias = gbias.template cast<Scalar>();
    return g;
}

template <class Scalar>
struct PoolResult {
    Tensor4<Scalar> output;
    PoolIndices indices;
};

// 2x2 max pooling, stride 2. Records the flat source-plane position of each
// selected maximum; ties resolve to the first element in row-major order.
template <class Scalar>
PoolResult<Scalar> maxpool2x2(const Tensor4<Scalar>& in) {
    if (in.h() % 2 != 0 || in.w() % 2 != 0) {
        throw ShapeError("maxpool2x2: spatial dims must be even, got " + in.shape_str());
    }
    const Index oh = in.h() / 2;
    const Index ow = in.w() / 2;
    PoolResult<Scalar> r{Tensor4<Scalar>(in.n(), in.c(), oh, ow),
                         PoolIndices(in.n(), in.c(), oh, ow, in.h(), in.w())};
    for (Index n = 0; n < in.n(); ++n) {
        for (Index c = 0; c < in.c(); ++c) {
            const auto src = in.plane(n, c);
            for (Index y = 0; y < oh; ++y) {
                for (Index x = 0; x < ow; ++x) {
                    Index by = 2 * y, bx = 2 * x;
                    Scalar best = src(by, bx);
                    Index best_y = by, best_x = bx;
                    // row-major scan keeps the first maximum on ties
                    if (src(by, bx + 1) > best) { best = src(by, bx + 1); best_x = bx + 1; }
                    if (src(by + 1, bx) > best) { best = src(by + 1, bx); best_y = by + 1; best_x = bx; }
                    if (src(by + 1, bx + 1) > best) { best = src(by + 1, bx + 1); best_y = by + 1; best_x = bx + 1; }
                    r.output(n, c, y, x) = best;
                    r.indices(n, c, y, x) = static_cast<std::int32_t>(best_y * in.w() + best_x);
                }
            }
        }
    }
    return r;
}

// Gradient of maxpool2x2: grad_out values scatter to the recorded positions.
template <class Scalar>
Tensor4<Scalar> maxpool2x2_backward(const Tensor4<Scalar>& grad_out, const PoolIndices& idx) {
    Tensor4<Scalar> gin(idx.n(), idx.c(), idx.src_h(), idx.src_w());
    for (Index n = 0; n < idx.n(); ++n) {
        for (Index c = 0; c < idx.c(); ++c) {
            auto dst = gin.plane(n, c);
            for (Index y = 0; y < idx.h(); ++y)
                for (Index x = 0; x < idx.w(); ++x)
                    dst.data()[idx(n, c, y, x)] += grad_out(n, c, y, x);
        }
    }
    return gin;
}

// Sparse upsampling: zeros everywhere except the recorded positions, which
// receive the corresponding input values.
template <class Scalar>
Tensor4<Scalar> max_unpool2x2(const Tensor4<Scalar>& in, const PoolIndices& idx, Index out_h,
                              Index out_w) {
    if (in.n() != idx.n() || in.c() != idx.c() || in.h() != idx.h() || in.w() != idx.w()) {
        throw ShapeError("max_unpool2x2: input " + in.shape_str() + " does not match indices");
    }
    if (out_h != 2 * in.h() || out_w != 2 * in.w()) {
        throw ShapeError("max_unpool2x2: output spatial dims must be exactly double the input");
    }
    Tensor4<Scalar> out(in.n(), in.c(), out_h, out_w);
    const Index plane_size = out_h * out_w;
    for (Index n = 0; n < in.n(); ++n) {
        for (Index c = 0; c < in.c(); ++c) {
            auto dst = out.plane(n, c);
            for (Index y = 0; y < in.h(); ++y) {
                for (Index x = 0; x < in.w(); ++x) {
                    const std::int32_t flat = idx(n, c, y, x);
                    if (flat < 0 || flat >= plane_size) {
                        throw CorruptionError("max_unpool2x2: recorded index " +
                                              std::to_string(flat) + " outside " +
                                              std::to_string(out_h) + "x" + std::to_string(out_w) +
                                              " plane");
                    }
                    dst.data()[flat] = in(n, c, y, x);
                }
            }
        }
    }
    return out;
}

// Gradient of max_unpool2x2: gather grad_out at the recorded positions.
template <class Scalar>
Tensor4<Scalar> max_unpool2x2_backward(const Tensor4<Scalar>& grad_out, const PoolIndices& idx) {
    if (grad_out.n() != idx.n() || grad_out.c() != idx.c() || grad_out.h() != idx.src_h() ||
        grad_out.w() != idx.src_w()) {
        throw ShapeError("max_unpool2x2_backward: grad_out " + grad_out.shape_str() +
                         " does not match recorded source dims");
    }
    Tensor4<Scalar> gin(idx.n(), idx.c(), idx.h(), idx.w());
    for (Index n = 0; n < idx.n(); ++n) {
        for (Index c = 0; c < idx.c(); ++c) {
            const auto src = grad_out.plane(n, c);
            for (Index y = 0; y < idx.h(); ++y)
                for (Index x = 0; x < idx.w(); ++x)
                    gin(n, c, y, x) = src.data()[idx(n, c, y, x)];
        }
    }
    return gin;
}

namespace detail {

inline void check_deconv_factor(Index factor) {
    if (factor != 1 && factor != 2 && factor != 4 && factor != 8 && factor != 16) {
        throw ConfigError("deconv: unsupported factor " + std::to_string(factor) +
                          " (expected 1, 2, 4, 8 or 16)");
    }
}

// Kernel 2f, stride f; the raw transposed-conv output overshoots f*input by f
// rows/cols, removed as floor(f/2) leading and ceil(f/2) trailing.
inline Index deconv_crop_lead(Index factor) { return factor / 2; }

}  // namespace detail

// Transposed convolution upsampling the spatial dims by exactly `factor`.
template <class Scalar>
Tensor4<Scalar> deconv(const Tensor4<Scalar>& in, const ConvParams<Scalar>& p, Index factor) {
    detail::check_deconv_factor(factor);
    const Index k = 2 * factor;
    if (p.kh() != k || p.kw() != k) {
        throw ShapeError("deconv: kernel must be " + std::to_string(k) + "x" + std::to_string(k) +
                         " for factor " + std::to_string(factor));
    }
    if (in.c() != p.in_c()) {
        throw ShapeError("deconv: input has " + std::to_string(in.c()) +
                         " channels, kernel expects " + std::to_string(p.in_c()));
    }
    const Index cl = detail::deconv_crop_lead(factor);
    const Index oh = factor * in.h();
    const Index ow = factor * in.w();
    Tensor4<Scalar> out(in.n(), p.out_c(), oh, ow);

    PlaneX<double> acc(oh, ow);
    for (Index n = 0; n < in.n(); ++n) {
        for (Index o = 0; o < p.out_c(); ++o) {
            acc.setConstant(static_cast<double>(p.bias[o]));
            for (Index i = 0; i < p.in_c(); ++i) {
                for (Index y = 0; y < in.h(); ++y) {
                    for (Index x = 0; x < in.w(); ++x) {
                        const double v = static_cast<double>(in(n, i, y, x));
                        if (v == 0.0) continue;
                        for (Index ky = 0; ky < k; ++ky) {
                            const Index oy = y * factor + ky - cl;
                            if (oy < 0 || oy >= oh) continue;
                            for (Index kx = 0; kx < k; ++kx) {
                                const Index ox = x * factor + kx - cl;
                                if (ox < 0 || ox >= ow) continue;
                                acc(oy, ox) += v * static_cast<double>(p.weights(o, i, ky, kx));
                            }
                        }
                    }
                }
            }
            out.plane(n, o) = acc.template cast<Scalar>();
        }
    }
    return out;
}

template <class Scalar>
ConvGrads<Scalar> deconv_backward(const Tensor4<Scalar>& in, const ConvParams<Scalar>& p,
                                  Index factor, const Tensor4<Scalar>& grad_out) {
    detail::check_deconv_factor(factor);
    const Index k = 2 * factor;
    const Index cl = detail::deconv_crop_lead(factor);
    const Index oh = factor * in.h();
    const Index ow = factor * in.w();
    if (grad_out.n() != in.n() || grad_out.c() != p.out_c() || grad_out.h() != oh ||
        grad_out.w() != ow) {
        throw ShapeError("deconv_backward: grad_out shape " + grad_out.shape_str() +
                         " does not match forward output");
    }

    ConvGrads<Scalar> g;
    g.input = Tensor4<Scalar>(in.n(), in.c(), in.h(), in.w());
    g.weights = Tensor4<Scalar>(p.out_c(), p.in_c(), k, k);
    g.bias = VectorX<Scalar>::Zero(p.out_c());

    Tensor4<double> gw(p.out_c(), p.in_c(), k, k);
    VectorX<double> gbias = VectorX<double>::Zero(p.out_c());

    for (Index n = 0; n < in.n(); ++n) {
        for (Index o = 0; o < p.out_c(); ++o) {
            const auto go = grad_out.plane(n, o).template cast<double>();
            gbias[o] += go.sum();
            for (Index i = 0; i < p.in_c(); ++i) {
                for (Index y = 0; y < in.h(); ++y) {
                    for (Index x = 0; x < in.w(); ++x) {
                        const double v = static_cast<double>(in(n, i, y, x));
                        double gin_acc = 0.0;
                        for (Index ky = 0; ky < k; ++ky) {
                            const Index oy = y * factor + ky - cl;
                            if (oy < 0 || oy >= oh) continue;
                            for (Index kx = 0; kx < k; ++kx) {
                                const Index ox = x * factor + kx - cl;
                                if (ox < 0 || ox >= ow) continue;
                                const double gov = go(oy, ox);
                                gin_acc += gov * static_cast<double>(p.weights(o, i, ky, kx));
                                gw(o, i, ky, kx) += gov * v;
                            }
                        }
                        g.input(n, i, y, x) += static_cast<Scalar>(gin_acc);
                    }
                }
            }
        }
    }
    g.weights.array() = gw.array().template cast<Scalar>();
    g.bias = gbias.template cast<Scalar>();
    return g;
}

// Channel concatenation, a's channels first.
template <class Scalar>
Tensor4<Scalar> concat_channels(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
        throw ShapeError("concat_channels: inputs disagree on batch or spatial dims: " +
                         a.shape_str() + " vs " + b.shape_str());
    }
    Tensor4<Scalar> out(a.n(), a.c() + b.c(), a.h(), a.w());
    for (Index n = 0; n < a.n(); ++n) {
        for (Index c = 0; c < a.c(); ++c) out.plane(n, c) = a.plane(n, c);
        for (Index c = 0; c < b.c(); ++c) out.plane(n, a.c() + c) = b.plane(n, c);
    }
    return out;
}

// Contiguous channel slice [c0, c0+count).
template <class Scalar>
Tensor4<Scalar> slice_channels(const Tensor4<Scalar>& t, Index c0, Index count) {
    if (c0 < 0 || count < 1 || c0 + count > t.c()) {
        throw ShapeError("slice_channels: range [" + std::to_string(c0) + ", " +
                         std::to_string(c0 + count) + ") outside " + std::to_string(t.c()) +
                         " channels");
    }
    Tensor4<Scalar> out(t.n(), count, t.h(), t.w());
    for (Index n = 0; n < t.n(); ++n)
        for (Index c = 0; c < count; ++c) out.plane(n, c) = t.plane(n, c0 + c);
    return out;
}

// Backward of concat_channels: split grad_out back into the two channel ranges.
template <class Scalar>
std::pair<Tensor4<Scalar>, Tensor4<Scalar>> concat_channels_backward(
    const Tensor4<Scalar>& grad_out, Index a_channels) {
    return {slice_channels(grad_out, 0, a_channels),
            slice_channels(grad_out, a_channels, grad_out.c() - a_channels)};
}

template <class Scalar>
Tensor4<Scalar> relu(const Tensor4<Scalar>& in) {
    Tensor4<Scalar> out(in.n(), in.c(), in.h(), in.w());
    out.array() = in.array().max(Scalar(0));
    return out;
}

// Subgradient choice: zero gradient where the pre-activation is exactly 0.
template <class Scalar>
Tensor4<Scalar> relu_backward(const Tensor4<Scalar>& pre_activation,
                              const Tensor4<Scalar>& grad_out) {
    if (!pre_activation.same_shape(grad_out)) {
        throw ShapeError("relu_backward: shape mismatch");
    }
    Tensor4<Scalar> gin(grad_out.n(), grad_out.c(), grad_out.h(), grad_out.w());
    gin.array() = (pre_activation.array() > Scalar(0)).select(grad_out.array(), Scalar(0));
    return gin;
}

// Numerically stable logistic: never evaluates exp on a positive argument.
// Saturated values clamp to the nearest representable inside (0,1) so the
// output stays a strict probability for every finite input.
template <class Scalar>
Scalar sigmoid(Scalar x) {
    Scalar p;
    if (x >= Scalar(0)) {
        p = Scalar(1) / (Scalar(1) + std::exp(-x));
    } else {
        const Scalar e = std::exp(x);
        p = e / (Scalar(1) + e);
    }
    if (p >= Scalar(1)) return std::nextafter(Scalar(1), Scalar(0));
    if (p <= Scalar(0)) return std::nextafter(Scalar(0), Scalar(1));
    return p;
}

template <class Scalar>
Tensor4<Scalar> sigmoid_map(const Tensor4<Scalar>& in) {
    Tensor4<Scalar> out(in.n(), in.c(), in.h(), in.w());
    out.array() = in.array().unaryExpr([](Scalar v) { return sigmoid(v); });
    return out;
}

// Zero-mean normal samples with variance 2 / fan_in, fan_in = in_c * kh * kw
// for a (out_c, in_c, kh, kw) weight tensor.
template <class Scalar>
Tensor4<Scalar> he_normal_init(Index out_c, Index in_c, Index kh, Index kw, Rng& rng) {
    const Index fan_in = in_c * kh * kw;
    if (fan_in <= 0) {
        throw ConfigError("he_normal_init: fan_in must be positive");
    }
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor4<Scalar> t(out_c, in_c, kh, kw);
    for (Index i = 0; i < t.size(); ++i) {
        t.array()[i] = static_cast<Scalar>(rng.normal(0.0, stddev));
    }
    return t;
}

// 1-D bilinear interpolation profile for a transposed-conv kernel of size
// 2*factor. Each profile sums to `factor`, so constant inputs stay constant
// in the interior. factor 1 degenerates to the identity tap (1, 0).
inline std::vector<double> bilinear_profile(Index factor) {
    if (factor < 1) {
        throw ConfigError("bilinear_profile: factor must be >= 1");
    }
    std::vector<double> w(static_cast<std::size_t>(2 * factor), 0.0);
    if (factor == 1) {
        w[0] = 1.0;
        return w;
    }
    const double center = static_cast<double>(factor) - 0.5;
    for (Index t = 0; t < 2 * factor; ++t) {
        w[static_cast<std::size_t>(t)] =
            1.0 - std::abs(static_cast<double>(t) - center) / static_cast<double>(factor);
    }
    return w;
}

// Deconv kernel filled with the outer product of the 1-D profile, one
// identical copy per matching in/out channel pair, zeros across pairs.
template <class Scalar>
ConvParams<Scalar> bilinear_kernel(Index factor, Index channels = 1) {
    const auto profile = bilinear_profile(factor);
    const Index k = 2 * factor;
    ConvParams<Scalar> p(channels, channels, k, k);
    for (Index c = 0; c < channels; ++c)
        for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx)
                p.weights(c, c, ky, kx) = static_cast<Scalar>(
                    profile[static_cast<std::size_t>(ky)] * profile[static_cast<std::size_t>(kx)]);
    return p;
}

// Kernel/stride metadata for receptive-field accounting.
struct LayerGeometry {
    Index kernel = 1;
    Index stride = 1;
};

// Receptive field of a stack of layers: n stacked 3x3 stride-1 convolutions
// give 2n + 1.
inline Index receptive_field(std::span<const LayerGeometry> layers) {
    Index rf = 1;
    Index jump = 1;
    for (const auto& l : layers) {
        rf += (l.kernel - 1) * jump;
        jump *= l.stride;
    }
    return rf;
}

}  // namespace hcnn
