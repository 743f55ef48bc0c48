#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "hcnn/checkpoint.hpp"
#include "hcnn/loss.hpp"
#include "hcnn/network.hpp"
#include "hcnn/optim.hpp"
#include "hcnn/rng.hpp"

namespace hcnn {

template <class Scalar>
struct TrainSample {
    Tensor4<Scalar> image;
    Tensor4<Scalar> gt;  // strictly binary (n,1,H,W)
    std::string id;
};

struct TrainOptions {
    int epochs = 20;
    Index batch_size = 1;
    std::uint64_t seed = 0;
    std::size_t max_steps = 0;  // 0 = bounded by epochs only
    SgdOptions sgd;
    std::filesystem::path checkpoint_dir;  // empty = do not write checkpoints
};

struct StepRecord {
    std::size_t step = 0;
    int epoch = 0;
    double loss = 0.0;
};

// One optimizer update over all network parameters.
template <class Scalar>
void sgd_step_network(Network<Scalar>& net, OptimizerState<Scalar>& state) {
    auto views = net.param_views();
    if (state.velocity.size() != views.size()) {
        state.velocity.assign(views.size(), VectorX<Scalar>());
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
        sgd_step(*views[i].value, *views[i].grad, state.velocity[i], state.options);
    }
}

// Epoch loop: forward -> summed image loss over the batch -> backward ->
// SGD step. Sample order reshuffles each epoch from the run seed, so a fixed
// seed reproduces the loss trajectory exactly.
template <class Scalar>
std::vector<StepRecord> train(Network<Scalar>& net, const std::vector<TrainSample<Scalar>>& data,
                              const TrainOptions& opt,
                              const std::function<void(const StepRecord&)>& on_step = {}) {
    if (data.empty()) {
        throw ConfigError("train: dataset is empty");
    }
    if (opt.batch_size < 1) {
        throw ConfigError("train: batch_size must be >= 1");
    }

    std::vector<StepRecord> log;
    OptimizerState<Scalar> state;
    state.options = opt.sgd;
    std::size_t step = 0;
    bool stop = false;

    for (int epoch = 1; epoch <= opt.epochs && !stop; ++epoch) {
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = Rng::derive(opt.seed, 0x5eed, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        for (std::size_t pos = 0; pos < order.size() && !stop;) {
            net.zero_grads();
            double batch_loss = 0.0;
            const std::size_t batch_end =
                std::min(pos + static_cast<std::size_t>(opt.batch_size), order.size());
            for (; pos < batch_end; ++pos) {
                const TrainSample<Scalar>& s = data[order[pos]];
                try {
                    auto [outs, cache] = net.forward(s.image);
                    batch_loss += image_loss(outs, s.gt);
                    net.backward(cache, outs, s.gt);
                } catch (const ShapeError& e) {
                    throw ShapeError("train: sample '" + s.id + "': " + e.what());
                }
            }
            sgd_step_network(net, state);
            ++step;
            StepRecord rec{step, epoch, batch_loss};
            log.push_back(rec);
            if (on_step) on_step(rec);
            if (opt.max_steps != 0 && step >= opt.max_steps) stop = true;
        }

        if (!opt.checkpoint_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
            save_checkpoint(net, opt.checkpoint_dir / name,
                            CheckpointMeta{static_cast<std::uint64_t>(epoch), step, opt.seed});
        }
    }
    return log;
}

// Compares analytic dL/dtheta against central finite differences on a random
// parameter subset; returns the worst relative error. Parameters where both
// sides are below 1e-8 in magnitude compare by absolute difference instead.
template <class Scalar>
double grad_check(Network<Scalar>& net, const Tensor4<Scalar>& image, const Tensor4<Scalar>& gt,
                  Index parameter_sample_size, double epsilon, std::uint64_t seed) {
    net.zero_grads();
    auto [outs, cache] = net.forward(image);
    net.backward(cache, outs, gt);

    auto views = net.param_views();
    std::vector<std::pair<std::size_t, Index>> coords;
    Index total = 0;
    for (const auto& v : views) total += v.value->size();

    Rng rng(seed);
    const Index want = std::min<Index>(parameter_sample_size, total);
    std::vector<bool> taken(static_cast<std::size_t>(total), false);
    while (static_cast<Index>(coords.size()) < want) {
        const Index flat = rng.uniform_int(0, total - 1);
        if (taken[static_cast<std::size_t>(flat)]) continue;
        taken[static_cast<std::size_t>(flat)] = true;
        Index off = flat;
        for (std::size_t vi = 0; vi < views.size(); ++vi) {
            if (off < views[vi].value->size()) {
                coords.emplace_back(vi, off);
                break;
            }
            off -= views[vi].value->size();
        }
    }

    const auto loss_at = [&]() {
        auto [o, c] = net.forward(image);
        return image_loss_extended(o, gt);
    };

    double worst = 0.0;
    for (const auto& [vi, off] : coords) {
        Scalar& w = (*views[vi].value)[off];
        const double analytic = static_cast<double>((*views[vi].grad)[off]);
        const Scalar saved = w;
        w = saved + static_cast<Scalar>(epsilon);
        const long double lp = loss_at();
        w = saved - static_cast<Scalar>(epsilon);
        const long double lm = loss_at();
        w = saved;
        const double numeric =
            static_cast<double>((lp - lm) / (2.0L * static_cast<long double>(epsilon)));

        const double denom = std::max(std::abs(analytic), std::abs(numeric));
        const double err = denom < 1e-8 ? std::abs(analytic - numeric)
                                        : std::abs(analytic - numeric) / denom;
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace hcnn
