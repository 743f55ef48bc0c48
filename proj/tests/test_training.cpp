#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hcnn/loss.hpp"
#include "hcnn/network.hpp"
#include "hcnn/pipeline.hpp"
#include "hcnn/train.hpp"
#include "support.hpp"

using namespace hcnn;

namespace {

// Textbook form of the pixel loss, safe only for moderate logits.
double naive_pixel_bce(double f, double y) {
    const double p = 1.0 / (1.0 + std::exp(-f));
    return -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
}

// Independent scalar-loop re-implementation of the six-map loss sum.
double naive_image_loss(const SideOutputs<double>& outs, const Tensor4<double>& gt) {
    double total = 0.0;
    const auto add_map = [&](const Tensor4<double>& m) {
        for (Index y = 0; y < m.h(); ++y)
            for (Index x = 0; x < m.w(); ++x)
                total += naive_pixel_bce(m(0, 0, y, x), gt(0, 0, y, x));
    };
    add_map(outs.fused);
    for (const auto& f : outs.side) add_map(f);
    return total;
}

SideOutputs<double> random_outputs(Index h, Index w, Rng& rng, double lo = -10.0,
                                   double hi = 10.0) {
    SideOutputs<double> o;
    o.fused = Tensor4<double>(1, 1, h, w);
    testsup::fill_uniform(o.fused, rng, lo, hi);
    for (auto& f : o.side) {
        f = Tensor4<double>(1, 1, h, w);
        testsup::fill_uniform(f, rng, lo, hi);
    }
    return o;
}

Tensor4<double> random_binary(Index h, Index w, Rng& rng) {
    Tensor4<double> t(1, 1, h, w);
    for (Index i = 0; i < t.size(); ++i) t.array()[i] = rng.coin() ? 1.0 : 0.0;
    return t;
}

std::vector<TrainSample<float>> synth_dataset(int count, Index size, std::uint64_t seed) {
    std::vector<TrainSample<float>> data;
    for (int i = 0; i < count; ++i) {
        auto s = synth_crack(seed + static_cast<std::uint64_t>(i), size, 0.04);
        data.push_back({std::move(s.image), std::move(s.mask), s.id});
    }
    return data;
}

}  // namespace

TEST_CASE("pixel_bce pinned values") {
    CHECK(pixel_bce(0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(pixel_bce(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(pixel_bce(std::log(3.0), 1.0) == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("pixel_bce saturates without overflow") {
    CHECK(pixel_bce(50.0, 1.0) < 1e-20);
    const double v = pixel_bce(-50.0, 1.0);
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(std::isfinite(pixel_bce(700.0, 0.0)));
}

TEST_CASE("pixel_bce agrees with the textbook form for moderate logits") {
    // the textbook form itself loses ~|f| digits near saturation, so the
    // tolerance widens with the logit range
    Rng rng(21);
    for (int i = 0; i < 1000; ++i) {
        const double f = rng.uniform(-20.0, 20.0);
        const double y = rng.coin() ? 1.0 : 0.0;
        CHECK(testsup::rel_err(pixel_bce(f, y), naive_pixel_bce(f, y)) < 1e-7);
    }
    for (int i = 0; i < 1000; ++i) {
        const double f = rng.uniform(-5.0, 5.0);
        const double y = rng.coin() ? 1.0 : 0.0;
        CHECK(testsup::rel_err(pixel_bce(f, y), naive_pixel_bce(f, y)) < 1e-13);
    }
}

TEST_CASE("image_loss of all-zero logits is exactly 6 m ln 2") {
    Rng rng(22);
    const Index h = 8, w = 8;
    SideOutputs<double> outs;
    outs.fused = Tensor4<double>(1, 1, h, w);
    for (auto& f : outs.side) f = Tensor4<double>(1, 1, h, w);
    const auto gt = random_binary(h, w, rng);
    const double expected = 6.0 * static_cast<double>(h * w) * std::log(2.0);
    CHECK(testsup::rel_err(image_loss(outs, gt), expected) < 1e-12);
}

TEST_CASE("image_loss matches the independent scalar oracle on random logits") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const auto outs = random_outputs(8, 8, rng);
        const auto gt = random_binary(8, 8, rng);
        CHECK(testsup::rel_err(image_loss(outs, gt), naive_image_loss(outs, gt)) < 1e-9);
    }
}

TEST_CASE("image_loss vanishes only in the saturated limit") {
    Rng rng(24);
    const auto gt = random_binary(8, 8, rng);
    SideOutputs<double> outs;
    outs.fused = Tensor4<double>(1, 1, 8, 8);
    for (auto& f : outs.side) f = Tensor4<double>(1, 1, 8, 8);
    const auto saturate = [&](Tensor4<double>& m) {
        for (Index i = 0; i < m.size(); ++i) m.array()[i] = gt.array()[i] > 0.5 ? 50.0 : -50.0;
    };
    saturate(outs.fused);
    for (auto& f : outs.side) saturate(f);
    CHECK(image_loss(outs, gt) < 1e-10 * 64.0);

    // and stays strictly positive away from saturation
    const auto random_case = random_outputs(8, 8, rng);
    CHECK(image_loss(random_case, gt) > 0.0);
}

TEST_CASE("every map contributes to the loss") {
    Rng rng(25);
    const auto outs = random_outputs(8, 8, rng);
    const auto gt = random_binary(8, 8, rng);
    const double full = image_loss(outs, gt);

    // dropping any single map strictly decreases the total
    const auto map_sum = [&](const Tensor4<double>& m) {
        double s = 0.0;
        for (Index i = 0; i < m.size(); ++i) s += pixel_bce(m.array()[i], gt.array()[i]);
        return s;
    };
    CHECK(full - map_sum(outs.fused) < full);
    for (const auto& f : outs.side) {
        CHECK(full - map_sum(f) < full);
    }
}

TEST_CASE("image_loss rejects mismatched shapes") {
    Rng rng(26);
    auto outs = random_outputs(8, 8, rng);
    Tensor4<double> gt(1, 1, 4, 4);
    CHECK_THROWS_AS(image_loss(outs, gt), ShapeError);
}

TEST_CASE("loss gradient w.r.t. a logit equals sigmoid(f) - y") {
    Rng rng(27);
    Tensor4<double> logits(1, 1, 8, 8);
    testsup::fill_uniform(logits, rng, -10.0, 10.0);
    const auto gt = random_binary(8, 8, rng);
    const auto g = bce_logit_gradient(logits, gt);
    for (Index i = 0; i < logits.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits.array()[i]));
        CHECK(std::abs(g.array()[i] - (p - gt.array()[i])) < 1e-15);
    }
}

TEST_CASE("sgd_step update rule") {
    SUBCASE("vanilla descent with momentum 0 and no decay") {
        VectorX<double> w(1), g(1), v;
        w[0] = 2.0;
        g[0] = 0.5;
        sgd_step(w, g, v, {0.1, 0.0, 0.0});
        CHECK(w[0] == doctest::Approx(2.0 - 0.1 * 0.5).epsilon(1e-15));
    }
    SUBCASE("two momentum steps, hand-iterated") {
        VectorX<double> w(1), g(1), v;
        w[0] = 1.0;
        g[0] = 1.0;
        const SgdOptions opt{0.1, 0.9, 0.0};
        sgd_step(w, g, v, opt);
        CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-15));
        sgd_step(w, g, v, opt);
        CHECK(v[0] == doctest::Approx(1.9).epsilon(1e-15));
        CHECK(w[0] == doctest::Approx(0.71).epsilon(1e-15));
    }
    SUBCASE("decay-only update") {
        VectorX<double> w(1), g(1), v;
        w[0] = 1.0;
        g[0] = 0.0;
        sgd_step(w, g, v, {1e-5, 0.9, 0.0005});
        CHECK(w[0] == doctest::Approx(1.0 - 5e-9).epsilon(1e-15));
    }
    SUBCASE("zero learning rate leaves parameters bit-exact") {
        VectorX<float> w(3), g(3), v;
        w << 0.25f, -1.5f, 3.0f;
        g << 1.0f, 2.0f, -3.0f;
        const VectorX<float> before = w;
        sgd_step(w, g, v, {0.0, 0.9, 0.0005});
        for (Index i = 0; i < 3; ++i) CHECK(w[i] == before[i]);
    }
}

TEST_CASE("single conv + sigmoid + BCE gradient matches finite differences tightly") {
    Rng rng(28);
    Tensor4<double> in(1, 1, 4, 4);
    testsup::fill_uniform(in, rng);
    ConvParams<double> p(1, 1, 3, 3);
    testsup::fill_uniform(p.weights, rng);
    p.bias[0] = 0.1;
    const auto gt = random_binary(4, 4, rng);

    const auto loss = [&]() {
        const auto logits = conv2d(in, p, 1);
        double s = 0.0;
        for (Index i = 0; i < logits.size(); ++i)
            s += pixel_bce(logits.array()[i], gt.array()[i]);
        return s;
    };

    const auto logits = conv2d(in, p, 1);
    const auto glogit = bce_logit_gradient(logits, gt);
    const auto grads = conv2d_backward(in, p, glogit, 1);

    for (Index i = 0; i < p.weights.size(); ++i) {
        const double fd = testsup::central_diff(&p.weights.array()[i], loss, 1e-6);
        CHECK(testsup::rel_err(grads.weights.array()[i], fd) < 1e-6);
    }
    const double fd_bias = testsup::central_diff(&p.bias[0], loss, 1e-6);
    CHECK(testsup::rel_err(grads.bias[0], fd_bias) < 1e-6);
}

TEST_CASE("full-network gradient check stays under 1e-4") {
    NetworkConfig config;
    config.channel_scale = 1.0 / 16.0;
    Rng rng(29);
    auto net = build_network<double>(config, rng);
    const auto s = synth_crack(29, 32, 0.05);
    const auto image = s.image.cast<double>();
    const auto gt = s.mask.cast<double>();
    const double err = grad_check(net, image, gt, 60, 1e-5, 29);
    CHECK(err < 1e-4);
}

TEST_CASE("single-precision gradients track the double-precision ones to 1e-3") {
    NetworkConfig config;
    config.channel_scale = 1.0 / 16.0;
    Rng rng(34);
    auto net_d = build_network<double>(config, rng);

    // mirror the parameters into a float network
    Rng rng2(34);
    auto net_f = build_network<float>(config, rng2);
    {
        auto vd = net_d.param_views();
        auto vf = net_f.param_views();
        REQUIRE(vd.size() == vf.size());
        for (std::size_t i = 0; i < vd.size(); ++i) {
            *vf[i].value = vd[i].value->cast<float>();
        }
    }

    const auto s = synth_crack(34, 32, 0.05);
    const auto img_d = s.image.cast<double>();
    const auto gt_d = s.mask.cast<double>();

    net_d.zero_grads();
    auto [od, cd] = net_d.forward(img_d);
    net_d.backward(cd, od, gt_d);

    net_f.zero_grads();
    auto [of, cf] = net_f.forward(s.image);
    net_f.backward(cf, of, s.mask);

    auto vd = net_d.param_views();
    auto vf = net_f.param_views();
    double worst = 0.0;
    for (std::size_t i = 0; i < vd.size(); ++i) {
        for (Index j = 0; j < vd[i].grad->size(); ++j) {
            const double a = (*vd[i].grad)[j];
            const double b = static_cast<double>((*vf[i].grad)[j]);
            const double denom = std::max(std::abs(a), std::abs(b));
            if (denom < 1e-3) continue;  // below float resolution at this loss scale
            worst = std::max(worst, std::abs(a - b) / denom);
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("dead paths carry exactly zero analytic and numeric gradient") {
    NetworkConfig config;
    config.channel_scale = 1.0 / 16.0;
    Rng rng(30);
    auto net = build_network<double>(config, rng);
    // kill output channel 0 of the first conv: its ReLU never opens
    net.encoder_blocks()[0][0].params.bias[0] = -100.0;

    const auto s = synth_crack(30, 32, 0.05);
    const auto image = s.image.cast<double>();
    const auto gt = s.mask.cast<double>();

    net.zero_grads();
    auto [outs, cache] = net.forward(image);
    net.backward(cache, outs, gt);

    // enc1.conv2 weights reading the dead channel see zero input
    auto& layer = net.encoder_blocks()[0][1];
    const double analytic = layer.grads.weights(0, 0, 1, 1);
    CHECK(analytic == 0.0);

    double* slot = &layer.params.weights(0, 0, 1, 1);
    const auto loss_fn = [&]() {
        auto [o, c] = net.forward(image);
        return image_loss(o, gt);
    };
    const double numeric = testsup::central_diff(slot, loss_fn, 1e-5);
    CHECK(numeric == 0.0);
}

TEST_CASE("train with zero epochs changes nothing") {
    NetworkConfig config;
    config.channel_scale = 1.0 / 16.0;
    Rng rng(31);
    auto net = build_network<float>(config, rng);
    auto views = net.param_views();
    std::vector<VectorX<float>> before;
    for (const auto& v : views) before.push_back(*v.value);

    TrainOptions opt;
    opt.epochs = 0;
    opt.seed = 1;
    const auto log = train(net, synth_dataset(2, 32, 500), opt);
    CHECK(log.empty());

    auto after = net.param_views();
    for (std::size_t i = 0; i < after.size(); ++i) {
        REQUIRE(after[i].value->size() == before[i].size());
        for (Index j = 0; j < before[i].size(); ++j) {
            CHECK((*after[i].value)[j] == before[i][j]);
        }
    }
}

TEST_CASE("identically seeded runs reproduce the loss trajectory") {
    NetworkConfig config;
    config.channel_scale = 1.0 / 16.0;
    const auto data = synth_dataset(3, 32, 800);

    TrainOptions opt;
    opt.epochs = 2;
    opt.seed = 77;
    opt.sgd = {1e-4, 0.9, 0.0005};

    Rng rng_a(55);
    auto net_a = build_network<float>(config, rng_a);
    const auto log_a = train(net_a, data, opt);

    Rng rng_b(55);
    auto net_b = build_network<float>(config, rng_b);
    const auto log_b = train(net_b, data, opt);

    REQUIRE(log_a.size() == log_b.size());
    for (std::size_t i = 0; i < log_a.size(); ++i) {
        CHECK(log_a[i].loss == log_b[i].loss);
        CHECK(log_a[i].epoch == log_b[i].epoch);
    }
}

TEST_CASE("overfitting four synthetic samples collapses the loss") {
    NetworkConfig config;
    config.channel_scale = 1.0 / 16.0;
    Rng rng(31337);
    auto net = build_network<float>(config, rng);
    const auto data = synth_dataset(4, 32, 900);

    TrainOptions opt;
    opt.epochs = 100;
    opt.max_steps = 300;
    opt.seed = 5;
    opt.sgd = {3e-5, 0.9, 0.0};  // decay off: this run wants a pure overfit

    const auto log = train(net, data, opt);
    REQUIRE(log.size() == 300);
    const double initial = log.front().loss;
    const double final_loss = log.back().loss;
    CHECK(final_loss < 0.1 * initial);
}

TEST_CASE("shape violations abort naming the offending sample") {
    NetworkConfig config;
    config.channel_scale = 1.0 / 16.0;
    Rng rng(33);
    auto net = build_network<float>(config, rng);

    auto data = synth_dataset(1, 32, 1000);
    TrainSample<float> bad;
    bad.image = Tensor4<float>(1, 3, 31, 32);
    bad.gt = Tensor4<float>(1, 1, 31, 32);
    bad.id = "bad_sample_7";
    data.push_back(std::move(bad));

    TrainOptions opt;
    opt.epochs = 1;
    opt.seed = 1;
    try {
        train(net, data, opt);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("bad_sample_7") != std::string::npos);
    }
}
