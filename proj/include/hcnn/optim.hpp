#pragma once

#include <vector>

#include "hcnn/tensor.hpp"

namespace hcnn {

// SGD with velocity-form momentum; weight decay is added to the raw gradient
// (not decoupled):
//   g' = g + wd * w
//   v' = momentum * v + g'
//   w' = w - lr * v'
struct SgdOptions {
    double learning_rate = 1e-5;
    double momentum = 0.9;
    double weight_decay = 0.0005;
};

// One parameter tensor update; velocity mirrors the parameter shape and is
// updated in place. Arithmetic runs in double and is cast back to storage.
template <class Scalar>
void sgd_step(VectorX<Scalar>& weights, const VectorX<Scalar>& grads, VectorX<Scalar>& velocity,
              const SgdOptions& opt) {
    if (grads.size() != weights.size()) {
        throw ShapeError("sgd_step: gradient size does not match parameter size");
    }
    if (velocity.size() != weights.size()) {
        velocity = VectorX<Scalar>::Zero(weights.size());
    }
    const Index sz = weights.size();
    for (Index i = 0; i < sz; ++i) {
        const double w = static_cast<double>(weights[i]);
        const double g = static_cast<double>(grads[i]) + opt.weight_decay * w;
        const double v = opt.momentum * static_cast<double>(velocity[i]) + g;
        velocity[i] = static_cast<Scalar>(v);
        weights[i] = static_cast<Scalar>(w - opt.learning_rate * v);
    }
}

// Velocity buffers for a whole parameter list, addressed by position.
template <class Scalar>
struct OptimizerState {
    SgdOptions options;
    std::vector<VectorX<Scalar>> velocity;
};

}  // namespace hcnn
