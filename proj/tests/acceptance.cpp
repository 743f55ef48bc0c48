// Acceptance suite: runs every shipping criterion at its pinned tolerance and
// prints one PASS/FAIL line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hcnn/bayes.hpp"
#include "hcnn/checkpoint.hpp"
#include "hcnn/metrics.hpp"
#include "hcnn/network.hpp"
#include "hcnn/pipeline.hpp"
#include "hcnn/train.hpp"

using namespace hcnn;

namespace {

NetworkConfig tiny_config() {
    NetworkConfig c;
    c.channel_scale = 1.0 / 16.0;
    return c;
}

double gaussian_density(double x, double mu, double sigma2) {
    return std::exp(-(x - mu) * (x - mu) / (2.0 * sigma2)) / std::sqrt(2.0 * M_PI * sigma2);
}

double bayes_posterior_oracle(double x, const GaussianCrackModel& m) {
    const double n1 = m.prior1 * gaussian_density(x, m.mu1, m.sigma2);
    const double n0 = m.prior0 * gaussian_density(x, m.mu0, m.sigma2);
    return n1 / (n1 + n0);
}

double naive_pixel_bce(double f, double y) {
    const double p = 1.0 / (1.0 + std::exp(-f));
    return -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
}

// ---------------------------------------------------------------- criteria

bool gradient_fidelity(std::string& detail) {
    Rng rng(2024);
    auto net = build_network<double>(tiny_config(), rng);
    const auto s = synth_crack(2024, 32, 0.05);
    const double err = grad_check(net, s.image.cast<double>(), s.mask.cast<double>(), 200,
                                  1e-5, 2024);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max relative error %.2e over 200 parameters (tol 1e-4)",
                  err);
    detail = buf;
    return err < 1e-4;
}

bool topology_conformance(std::string& detail) {
    Rng rng(7);
    auto net = build_network<float>(NetworkConfig{}, rng);
    const bool convs_ok = net.encoder_conv_count() == 13;
    const bool pools_ok = net.pool_count() == 5 && net.unpool_count() == 5;

    Tensor4<float> image(1, 3, 32, 32);
    Rng pix(8);
    for (Index i = 0; i < image.size(); ++i)
        image.array()[i] = static_cast<float>(pix.uniform());
    const auto [outs, cache] = net.forward(image);
    bool maps_ok = outs.fused.h() == 32 && outs.fused.w() == 32 && outs.fused.c() == 1;
    int full_res = outs.fused.h() == 32 ? 1 : 0;
    for (const auto& f : outs.side) {
        maps_ok = maps_ok && f.h() == 32 && f.w() == 32 && f.c() == 1 && f.all_finite();
        full_res += f.h() == 32 ? 1 : 0;
    }
    detail = std::to_string(net.encoder_conv_count()) + " encoder convs, " +
             std::to_string(net.pool_count()) + " pool / " + std::to_string(net.unpool_count()) +
             " unpool layers, " + std::to_string(full_res) + " full-resolution maps";
    return convs_ok && pools_ok && maps_ok && full_res == 6;
}

bool loss_identity(std::string& detail) {
    Rng rng(99);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        SideOutputs<double> outs;
        outs.fused = Tensor4<double>(1, 1, 8, 8);
        for (auto& f : outs.side) f = Tensor4<double>(1, 1, 8, 8);
        Tensor4<double> gt(1, 1, 8, 8);
        for (Index i = 0; i < 64; ++i) {
            outs.fused.array()[i] = rng.uniform(-10.0, 10.0);
            for (auto& f : outs.side) f.array()[i] = rng.uniform(-10.0, 10.0);
            gt.array()[i] = rng.coin() ? 1.0 : 0.0;
        }
        double oracle = 0.0;
        for (Index i = 0; i < 64; ++i) {
            oracle += naive_pixel_bce(outs.fused.array()[i], gt.array()[i]);
            for (const auto& f : outs.side) oracle += naive_pixel_bce(f.array()[i], gt.array()[i]);
        }
        const double got = image_loss(outs, gt);
        worst = std::max(worst, std::abs(got - oracle) / std::abs(oracle));
    }

    SideOutputs<double> zeros;
    zeros.fused = Tensor4<double>(1, 1, 8, 8);
    for (auto& f : zeros.side) f = Tensor4<double>(1, 1, 8, 8);
    Tensor4<double> gt(1, 1, 8, 8);
    Rng gtr(100);
    for (Index i = 0; i < 64; ++i) gt.array()[i] = gtr.coin() ? 1.0 : 0.0;
    const double expected = 6.0 * 64.0 * std::log(2.0);
    const double zero_err = std::abs(image_loss(zeros, gt) - expected) / expected;

    char buf[96];
    std::snprintf(buf, sizeof(buf), "oracle gap %.2e (tol 1e-9), all-zero gap %.2e", worst,
                  zero_err);
    detail = buf;
    return worst < 1e-9 && zero_err < 1e-12;
}

bool linearity_theorem(std::string& detail) {
    Rng rng(404);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        GaussianCrackModel m;
        const double sigma = rng.uniform(1.0, 20.0);
        m.sigma2 = sigma * sigma;
        m.mu0 = rng.uniform(0.0, 235.0);
        const double delta = rng.uniform(0.1, 15.0) * sigma;
        m.mu1 = m.mu0 + (rng.coin() ? delta : -delta);
        m.prior1 = rng.uniform(0.05, 0.95);
        m.prior0 = 1.0 - m.prior1;

        const auto [w, w0] = linear_weights(m);
        const double lo = std::min(m.mu0, m.mu1) - 5.0 * sigma;
        const double hi = std::max(m.mu0, m.mu1) + 5.0 * sigma;
        for (int i = 0; i < 10000; ++i) {
            const double x = lo + (hi - lo) * static_cast<double>(i) / 9999.0;
            const double diff = std::abs(sigmoid(w * x + w0) - bayes_posterior_oracle(x, m));
            worst = std::max(worst, diff);
        }
    }
    char buf[112];
    std::snprintf(buf, sizeof(buf),
                  "worst |sigmoid(wx+w0) - posterior| %.2e over 1000 models x 10^4 grid points "
                  "(tol 1e-12)",
                  worst);
    detail = buf;
    return worst < 1e-12;
}

bool overfit_convergence(std::string& detail) {
    Rng rng(31337);
    auto net = build_network<float>(tiny_config(), rng);

    std::vector<TrainSample<float>> data;
    std::vector<Sample> raw;
    for (int i = 0; i < 8; ++i) {
        auto s = synth_crack(31337 + static_cast<std::uint64_t>(i), 32, 0.04);
        raw.push_back(s);
        data.push_back({s.image, s.mask, s.id});
    }

    TrainOptions opt;
    opt.epochs = 75;  // 8 samples x 75 epochs = 600 steps at batch 1
    opt.max_steps = 600;
    opt.seed = 5;
    opt.sgd = {2e-5, 0.9, 0.0};  // decay off for the pure-overfit run
    const auto log = train(net, data, opt);

    const double initial = log.front().loss;
    const double final_loss = log.back().loss;

    ConfusionCounts total;
    for (const auto& s : raw) {
        const auto mask = net.predict(s.image, 0.5);
        MaskPlane pred(32, 32), gt(32, 32);
        for (Index y = 0; y < 32; ++y)
            for (Index x = 0; x < 32; ++x) {
                pred(y, x) = mask(0, 0, y, x) > 0.5f ? 1 : 0;
                gt(y, x) = s.mask(0, 0, y, x) > 0.5f ? 1 : 0;
            }
        total += confusion(pred, gt);
    }
    const double f = f_score(total).f_score;

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "loss %.1f -> %.1f (%.1f%% of initial, need <10%%), F %.4f (need >= 0.95), "
                  "%zu steps",
                  initial, final_loss, 100.0 * final_loss / initial, f, log.size());
    detail = buf;
    return final_loss < 0.1 * initial && f >= 0.95 && log.size() <= 600;
}

bool metric_oracles(std::string& detail) {
    Rng rng(606);
    for (int trial = 0; trial < 1000; ++trial) {
        MaskPlane pred(16, 16), gt(16, 16);
        for (Index y = 0; y < 16; ++y)
            for (Index x = 0; x < 16; ++x) {
                pred(y, x) = rng.coin() ? 1 : 0;
                gt(y, x) = rng.coin() ? 1 : 0;
            }
        const auto c = confusion(pred, gt);
        std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (Index y = 0; y < 16; ++y)
            for (Index x = 0; x < 16; ++x) {
                if (pred(y, x) && gt(y, x)) ++tp;
                else if (pred(y, x)) ++fp;
                else if (gt(y, x)) ++fn;
                else ++tn;
            }
        if (c.tp != tp || c.fp != fp || c.fn != fn || c.tn != tn) {
            detail = "confusion mismatch at trial " + std::to_string(trial);
            return false;
        }
    }

    double worst_q = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Index h = 8 + (trial % 9);
        const Index w = 8 + (trial % 7);
        PlaneX<double> img(h, w);
        LabelPlane labels(h, w);
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                img(y, x) = rng.uniform(0.0, 255.0);
                labels(y, x) = rng.coin() ? 1 : 0;
            }
        labels(0, 0) = 0;
        labels(0, 1) = 1;

        // independent scalar re-implementation
        double oracle = 0.0;
        for (int cls = 0; cls < 2; ++cls) {
            double area = 0.0, mean = 0.0;
            for (Index y = 0; y < h; ++y)
                for (Index x = 0; x < w; ++x)
                    if (labels(y, x) == cls) {
                        area += 1.0;
                        mean += img(y, x);
                    }
            mean /= area;
            double e2 = 0.0;
            for (Index y = 0; y < h; ++y)
                for (Index x = 0; x < w; ++x)
                    if (labels(y, x) == cls) e2 += (img(y, x) - mean) * (img(y, x) - mean);
            double other_area = 0.0;
            for (Index y = 0; y < h; ++y)
                for (Index x = 0; x < w; ++x)
                    if (labels(y, x) == 1 - cls) other_area += 1.0;
            const double same = other_area == area ? 2.0 : 1.0;
            oracle += e2 / (1.0 + std::log10(area)) + (same / area) * (same / area);
        }
        oracle *= std::sqrt(2.0) / (10000.0 * static_cast<double>(h * w));
        const double got = q_measure(img, labels);
        worst_q = std::max(worst_q, std::abs(got - oracle) / std::max(got, oracle));
    }

    // uniform two-region hand value
    PlaneX<double> img(100, 100);
    LabelPlane labels = LabelPlane::Zero(100, 100);
    for (Index x = 0; x < 100; ++x) {
        img(0, x) = 40.0;
        labels(0, x) = 1;
    }
    for (Index y = 1; y < 100; ++y)
        for (Index x = 0; x < 100; ++x) img(y, x) = 180.0;
    const double q = q_measure(img, labels);
    const double hand_gap = std::abs(q - 1.4157e-12) / 1.4157e-12;

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "confusion exact on 1000 pairs, q oracle gap %.2e (tol 1e-12), "
                  "hand value gap %.2e (tol 1e-3)",
                  worst_q, hand_gap);
    detail = buf;
    return worst_q < 1e-12 && hand_gap < 1e-3;
}

bool pool_and_augment_invariants(std::string& detail) {
    Rng rng(707);
    for (int trial = 0; trial < 10000; ++trial) {
        Tensor4<float> x(1, 1, 6, 6);
        for (Index i = 0; i < x.size(); ++i)
            x.array()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
        const auto pooled = maxpool2x2(x);
        const auto up = max_unpool2x2(pooled.output, pooled.indices, 6, 6);

        double pooled_sum = 0.0, up_sum = 0.0;
        for (Index i = 0; i < pooled.output.size(); ++i)
            pooled_sum += static_cast<double>(pooled.output.array()[i]);
        Index nonzero = 0;
        for (Index i = 0; i < up.size(); ++i) {
            up_sum += static_cast<double>(up.array()[i]);
            nonzero += up.array()[i] != 0.0f;
        }
        if (std::abs(pooled_sum - up_sum) > 1e-5 || nonzero > pooled.output.size()) {
            detail = "pool/unpool round-trip failed at trial " + std::to_string(trial);
            return false;
        }
    }

    Sample source;
    source.image = Tensor4<float>(1, 3, 64, 64);
    source.mask = Tensor4<float>(1, 1, 64, 64);
    for (Index y = 0; y < 64; ++y)
        for (Index x = 0; x < 64; ++x) {
            const float v = static_cast<float>(rng.uniform(0.0, 1.0));
            for (Index c = 0; c < 3; ++c) source.image(0, c, y, x) = v;
            source.mask(0, 0, y, x) = static_cast<float>((x / 3 + y / 5) % 2);
        }
    source.id = "invariant";
    AugmentConfig config;
    config.crop_h = 32;
    config.crop_w = 32;
    for (int draw = 0; draw < 1000; ++draw) {
        auto r = augment_rng(1, 0, static_cast<std::size_t>(draw));
        const auto out = augment(source, config, r);
        for (Index i = 0; i < out.mask.size(); ++i) {
            const float v = out.mask.array()[i];
            if (v != 0.0f && v != 1.0f) {
                detail = "non-binary mask value at draw " + std::to_string(draw);
                return false;
            }
        }
    }

    // x100 expansion of 118 sources, every draw actually produced
    std::size_t outputs = 0;
    for (std::size_t si = 0; si < 118; ++si) {
        for (std::size_t ci = 0; ci < 100; ++ci) {
            auto r = augment_rng(2, si, ci);
            const auto out = augment(source, config, r);
            if (out.image.h() == config.crop_h && out.image.w() == config.crop_w) ++outputs;
        }
    }

    detail = "10^4 pool round-trips, 10^3 binary-mask draws, expansion 118 x 100 = " +
             std::to_string(outputs);
    return outputs == 11800;
}

bool determinism(std::string& detail) {
    std::vector<TrainSample<float>> data;
    for (int i = 0; i < 4; ++i) {
        auto s = synth_crack(42 + static_cast<std::uint64_t>(i), 32, 0.05);
        data.push_back({std::move(s.image), std::move(s.mask), s.id});
    }

    TrainOptions opt;
    opt.epochs = 3;
    opt.seed = 1234;
    opt.sgd = {1e-4, 0.9, 0.0005};

    Rng rng_a(5);
    auto net_a = build_network<float>(tiny_config(), rng_a);
    const auto log_a = train(net_a, data, opt);
    Rng rng_b(5);
    auto net_b = build_network<float>(tiny_config(), rng_b);
    const auto log_b = train(net_b, data, opt);

    bool logs_equal = log_a.size() == log_b.size();
    for (std::size_t i = 0; logs_equal && i < log_a.size(); ++i) {
        logs_equal = log_a[i].loss == log_b[i].loss && log_a[i].epoch == log_b[i].epoch;
    }

    const auto dir = std::filesystem::temp_directory_path() / "hcnn_acceptance";
    std::filesystem::create_directories(dir);
    const auto path = dir / "determinism.ckpt";
    save_checkpoint(net_a, path);
    auto loaded = load_checkpoint<float>(path);

    const auto [before, cb] = net_a.forward(data[0].image);
    const auto [after, ca] = loaded.forward(data[0].image);
    double diff = max_abs_diff(before.fused, after.fused);
    for (std::size_t k = 0; k < 5; ++k) {
        diff = std::max(diff, max_abs_diff(before.side[k], after.side[k]));
    }

    char buf[112];
    std::snprintf(buf, sizeof(buf), "seeded loss logs %s, checkpoint round-trip max |diff| %g",
                  logs_equal ? "identical" : "DIFFER", diff);
    detail = buf;
    return logs_equal && diff == 0.0;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::string&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient fidelity", gradient_fidelity},
        {2, "topology conformance", topology_conformance},
        {3, "loss identity", loss_identity},
        {4, "Gaussian-Bayes linearity", linearity_theorem},
        {5, "overfit convergence", overfit_convergence},
        {6, "metric oracles", metric_oracles},
        {7, "pool/unpool and augmentation invariants", pool_and_augment_invariants},
        {8, "determinism", determinism},
    };

    bool all_ok = true;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const auto secs =
            std::chrono::duration_cast<std::chrono::duration<double>>(
                std::chrono::steady_clock::now() - start)
                .count();
        std::printf("criterion %d (%s): %s [%.1fs] %s\n", c.id, c.name, ok ? "PASS" : "FAIL",
                    secs, detail.c_str());
        all_ok = all_ok && ok;
    }
    return all_ok ? 0 : 1;
}
