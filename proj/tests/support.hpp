#pragma once

// Test-only oracles, independent of the library's op implementations:
// plain scalar loops, no shared helpers, no Eigen expressions.

#include <cmath>
#include <functional>
#include <vector>

#include "hcnn/rng.hpp"
#include "hcnn/tensor.hpp"

namespace testsup {

// Brute-force sliding-window cross-correlation with zero padding, stride 1.
inline hcnn::Tensor4<double> naive_conv2d(const hcnn::Tensor4<double>& in,
                                          const hcnn::Tensor4<double>& weights,
                                          const std::vector<double>& bias, hcnn::Index pad) {
    const hcnn::Index oh = in.h() + 2 * pad - weights.h() + 1;
    const hcnn::Index ow = in.w() + 2 * pad - weights.w() + 1;
    hcnn::Tensor4<double> out(in.n(), weights.n(), oh, ow);
    for (hcnn::Index n = 0; n < in.n(); ++n)
        for (hcnn::Index o = 0; o < weights.n(); ++o)
            for (hcnn::Index y = 0; y < oh; ++y)
                for (hcnn::Index x = 0; x < ow; ++x) {
                    double acc = bias[static_cast<std::size_t>(o)];
                    for (hcnn::Index i = 0; i < in.c(); ++i)
                        for (hcnn::Index dy = 0; dy < weights.h(); ++dy)
                            for (hcnn::Index dx = 0; dx < weights.w(); ++dx) {
                                const hcnn::Index sy = y + dy - pad;
                                const hcnn::Index sx = x + dx - pad;
                                if (sy < 0 || sy >= in.h() || sx < 0 || sx >= in.w()) continue;
                                acc += in(n, i, sy, sx) * weights(o, i, dy, dx);
                            }
                    out(n, o, y, x) = acc;
                }
    return out;
}

// Brute-force 2x2 window maximum, stride 2.
inline hcnn::Tensor4<double> naive_maxpool2x2(const hcnn::Tensor4<double>& in) {
    hcnn::Tensor4<double> out(in.n(), in.c(), in.h() / 2, in.w() / 2);
    for (hcnn::Index n = 0; n < in.n(); ++n)
        for (hcnn::Index c = 0; c < in.c(); ++c)
            for (hcnn::Index y = 0; y < out.h(); ++y)
                for (hcnn::Index x = 0; x < out.w(); ++x) {
                    double best = in(n, c, 2 * y, 2 * x);
                    for (hcnn::Index dy = 0; dy < 2; ++dy)
                        for (hcnn::Index dx = 0; dx < 2; ++dx)
                            best = std::max(best, in(n, c, 2 * y + dy, 2 * x + dx));
                    out(n, c, y, x) = best;
                }
    return out;
}

// Central finite difference of f around *slot.
inline double central_diff(double* slot, const std::function<double()>& f, double eps) {
    const double saved = *slot;
    *slot = saved + eps;
    const double lp = f();
    *slot = saved - eps;
    const double lm = f();
    *slot = saved;
    return (lp - lm) / (2.0 * eps);
}

inline double rel_err(double a, double b) {
    const double denom = std::max(std::abs(a), std::abs(b));
    if (denom < 1e-12) return std::abs(a - b);
    return std::abs(a - b) / denom;
}

inline void fill_uniform(hcnn::Tensor4<double>& t, hcnn::Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
    for (hcnn::Index i = 0; i < t.size(); ++i) t.array()[i] = rng.uniform(lo, hi);
}

inline void fill_uniform(hcnn::Tensor4<float>& t, hcnn::Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
    for (hcnn::Index i = 0; i < t.size(); ++i)
        t.array()[i] = static_cast<float>(rng.uniform(lo, hi));
}

}  // namespace testsup
