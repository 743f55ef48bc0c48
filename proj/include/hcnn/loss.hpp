#pragma once

#include <array>
#include <cmath>

#include "hcnn/ops.hpp"
#include "hcnn/tensor.hpp"

namespace hcnn {

// The six full-resolution logit maps of one forward pass: one per scale plus
// the fused map.
template <class Scalar>
struct SideOutputs {
    std::array<Tensor4<Scalar>, 5> side;
    Tensor4<Scalar> fused;
};

// Binary cross-entropy of one logit against a {0,1} label, computed from the
// logit directly as max(f,0) - f*y + log(1 + e^{-|f|}). The textbook
// -y log P - (1-y) log(1-P) form overflows for |f| beyond ~30.
template <class Scalar>
double pixel_bce(Scalar logit, Scalar label) {
    const double f = static_cast<double>(logit);
    const double y = static_cast<double>(label);
    return std::max(f, 0.0) - f * y + std::log1p(std::exp(-std::abs(f)));
}

namespace detail {

// Accumulated in extended precision: gradient checking differences two loss
// values of magnitude in the thousands, and plain double accumulation leaves
// too little headroom for central differences at eps = 1e-5.
template <class Scalar>
long double map_bce_sum(const Tensor4<Scalar>& logits, const Tensor4<Scalar>& gt) {
    if (!logits.same_shape(gt)) {
        throw ShapeError("image_loss: logit map " + logits.shape_str() +
                         " does not match ground truth " + gt.shape_str());
    }
    long double sum = 0.0L;
    const Index sz = logits.size();
    for (Index i = 0; i < sz; ++i) {
        sum += static_cast<long double>(pixel_bce(logits.array()[i], gt.array()[i]));
    }
    return sum;
}

}  // namespace detail

// Total loss of one image: plain sum of the pixel-wise BCE over all six maps,
// with no pixel or map normalizer.
// Extended-precision value for finite-difference work; identical sum, kept in
// long double so differencing two nearby losses does not hit double rounding.
template <class Scalar>
long double image_loss_extended(const SideOutputs<Scalar>& outputs, const Tensor4<Scalar>& gt) {
    long double total = detail::map_bce_sum(outputs.fused, gt);
    for (const auto& f : outputs.side) {
        total += detail::map_bce_sum(f, gt);
    }
    return total;
}

template <class Scalar>
double image_loss(const SideOutputs<Scalar>& outputs, const Tensor4<Scalar>& gt) {
    return static_cast<double>(image_loss_extended(outputs, gt));
}

// d(image_loss)/d(logit) for one map: sigmoid(f) - y elementwise.
template <class Scalar>
Tensor4<Scalar> bce_logit_gradient(const Tensor4<Scalar>& logits, const Tensor4<Scalar>& gt) {
    if (!logits.same_shape(gt)) {
        throw ShapeError("bce_logit_gradient: shape mismatch");
    }
    Tensor4<Scalar> g(logits.n(), logits.c(), logits.h(), logits.w());
    g.array() =
        logits.array().unaryExpr([](Scalar v) { return sigmoid(v); }) - gt.array();
    return g;
}

}  // namespace hcnn
