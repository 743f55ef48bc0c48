#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hcnn/bayes.hpp"
#include "hcnn/checkpoint.hpp"
#include "hcnn/image.hpp"
#include "hcnn/metrics.hpp"
#include "hcnn/network.hpp"
#include "hcnn/pipeline.hpp"
#include "hcnn/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TrainArgs {
    std::string images, masks, out;
    std::uint64_t seed = 0;
    int epochs = 20;
    hcnn::Index batch_size = 1;
    double lr = 1e-5;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double channel_scale = 1.0;
    std::size_t max_steps = 0;
};

struct InferArgs {
    std::string checkpoint, images, out;
    double threshold = 0.5;
    std::optional<double> channel_scale;
};

struct EvalArgs {
    std::string pred, gt, orig, out;
};

struct AugmentArgs {
    std::string images, masks, out;
    std::uint64_t seed = 0;
    int factor = 100;
    hcnn::Index crop = 256;
};

struct SynthArgs {
    std::string out;
    std::uint64_t seed = 0;
    int count = 8;
    hcnn::Index size = 256;
    double noise = 0.05;
};

struct GradcheckArgs {
    std::uint64_t seed = 1;
    double tolerance = 1e-4;
    hcnn::Index size = 32;
    hcnn::Index params = 200;
    double epsilon = 1e-5;
    double channel_scale = 0.0625;
};

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

int run_train(const TrainArgs& a) {
    fs::create_directories(a.out);
    auto samples = hcnn::load_pairs(a.images, a.masks);

    std::vector<hcnn::TrainSample<float>> data;
    for (auto& s : samples) {
        data.push_back({std::move(s.image), std::move(s.mask), s.id});
    }

    hcnn::NetworkConfig config;
    config.channel_scale = a.channel_scale;
    hcnn::Rng rng(a.seed);
    auto net = hcnn::build_network<float>(config, rng);

    hcnn::TrainOptions opt;
    opt.epochs = a.epochs;
    opt.batch_size = a.batch_size;
    opt.seed = a.seed;
    opt.max_steps = a.max_steps;
    opt.sgd = {a.lr, a.momentum, a.weight_decay};
    opt.checkpoint_dir = a.out;

    const fs::path log_tmp = fs::path(a.out) / "train.log.tmp";
    const fs::path jsonl_tmp = fs::path(a.out) / "train.jsonl.tmp";
    std::ofstream log(log_tmp);
    std::ofstream jsonl(jsonl_tmp);
    if (!log || !jsonl) {
        throw hcnn::IoError("train: cannot open log files under " + a.out);
    }
    log << "# hcnn train\n";
    log << "# seed=" << a.seed << " epochs=" << a.epochs << " batch_size=" << a.batch_size
        << "\n";
    log << "# lr=" << fmt_g(a.lr) << " momentum=" << fmt_g(a.momentum)
        << " weight_decay=" << fmt_g(a.weight_decay) << "\n";
    log << "# channel_scale=" << fmt_g(a.channel_scale) << " samples=" << data.size() << "\n";

    const auto records = hcnn::train<float>(net, data, opt, [&](const hcnn::StepRecord& r) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "step %zu epoch %d loss %.9g", r.step, r.epoch, r.loss);
        log << buf << "\n";
        jsonl << json{{"step", r.step}, {"epoch", r.epoch}, {"loss", r.loss}}.dump() << "\n";
    });

    log.close();
    jsonl.close();
    fs::rename(log_tmp, fs::path(a.out) / "train.log");
    fs::rename(jsonl_tmp, fs::path(a.out) / "train.jsonl");

    hcnn::save_checkpoint(net, fs::path(a.out) / "final.ckpt",
                          {static_cast<std::uint64_t>(a.epochs), records.size(), a.seed});
    std::cout << "trained " << records.size() << " steps";
    if (!records.empty()) {
        std::cout << ", first loss " << records.front().loss << ", last loss "
                  << records.back().loss;
    }
    std::cout << "\n";
    return 0;
}

int run_infer(const InferArgs& a) {
    fs::create_directories(a.out);
    hcnn::Network<float> net;
    if (a.channel_scale) {
        hcnn::NetworkConfig config;
        config.channel_scale = *a.channel_scale;
        hcnn::Rng rng(0);
        net = hcnn::build_network<float>(config, rng);
        hcnn::load_checkpoint_into(net, a.checkpoint);
    } else {
        net = hcnn::load_checkpoint<float>(a.checkpoint);
    }

    std::size_t count = 0;
    std::vector<fs::path> inputs;
    for (const auto& entry : fs::directory_iterator(a.images)) {
        if (entry.is_regular_file()) inputs.push_back(entry.path());
    }
    std::sort(inputs.begin(), inputs.end());
    for (const auto& path : inputs) {
        const auto img = hcnn::image_to_rgb_tensor(hcnn::read_image(path));
        auto [outs, cache] = net.forward(img);
        const auto prob = hcnn::sigmoid_map(outs.fused);
        const auto mask = hcnn::threshold_probability(prob, a.threshold);
        const std::string stem = path.stem().string();
        hcnn::write_png(fs::path(a.out) / (stem + "_prob.png"), hcnn::probability_to_image(prob));
        hcnn::write_png(fs::path(a.out) / (stem + "_mask.png"), hcnn::mask_to_image(mask));
        ++count;
    }
    std::cout << "inferred " << count << " images into " << a.out << "\n";
    return 0;
}

int run_eval(const EvalArgs& a) {
    const auto result = hcnn::evaluate_dir(a.pred, a.gt, a.orig);
    hcnn::write_eval_csv(a.out, result);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "aggregate precision %.6g recall %.6g f %.6g q %.6g",
                  result.aggregate.precision, result.aggregate.recall, result.aggregate.f_score,
                  result.aggregate.q_value);
    std::cout << buf << "\n";
    return 0;
}

int run_augment(const AugmentArgs& a) {
    const auto sources = hcnn::load_pairs(a.images, a.masks);
    hcnn::AugmentConfig config;
    config.crop_h = a.crop;
    config.crop_w = a.crop;
    config.expansion_factor = a.factor;
    config.validate();

    fs::create_directories(fs::path(a.out) / "images");
    fs::create_directories(fs::path(a.out) / "masks");

    std::size_t written = 0;
    for (std::size_t si = 0; si < sources.size(); ++si) {
        for (int ci = 0; ci < a.factor; ++ci) {
            auto rng = hcnn::augment_rng(a.seed, si, static_cast<std::size_t>(ci));
            const auto s = hcnn::augment(sources[si], config, rng);
            const std::string name = sources[si].id + "_" + std::to_string(ci) + ".png";
            hcnn::write_png(fs::path(a.out) / "images" / name,
                            hcnn::rgb_tensor_to_image(s.image));
            hcnn::write_png(fs::path(a.out) / "masks" / name, hcnn::mask_to_image(s.mask));
            ++written;
        }
    }
    std::cout << "augmented " << sources.size() << " sources x" << a.factor << " -> " << written
              << " pairs\n";
    return 0;
}

int run_synth(const SynthArgs& a) {
    fs::create_directories(fs::path(a.out) / "images");
    fs::create_directories(fs::path(a.out) / "masks");
    for (int i = 0; i < a.count; ++i) {
        const auto s = hcnn::synth_crack(a.seed + static_cast<std::uint64_t>(i), a.size, a.noise);
        char name[48];
        std::snprintf(name, sizeof(name), "synth_%04d.png", i);
        hcnn::write_png(fs::path(a.out) / "images" / name, hcnn::rgb_tensor_to_image(s.image));
        hcnn::write_png(fs::path(a.out) / "masks" / name, hcnn::mask_to_image(s.mask));
    }
    std::cout << "synthesized " << a.count << " samples into " << a.out << "\n";
    return 0;
}

int run_gradcheck(const GradcheckArgs& a) {
    hcnn::NetworkConfig config;
    config.channel_scale = a.channel_scale;
    hcnn::Rng rng(a.seed);
    auto net = hcnn::build_network<double>(config, rng);

    const auto sample = hcnn::synth_crack(a.seed, a.size, 0.05);
    const auto image = sample.image.cast<double>();
    const auto gt = sample.mask.cast<double>();

    const double err = hcnn::grad_check(net, image, gt, a.params, a.epsilon, a.seed);
    std::printf("max relative error %.3e (tolerance %.3e) over %lld parameters\n", err,
                a.tolerance, static_cast<long long>(a.params));
    return err < a.tolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hcnn: crack segmentation toolkit"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train the network on image/mask pairs");
    train->add_option("--images", train_args.images, "Image directory")->required();
    train->add_option("--masks", train_args.masks, "Mask directory")->required();
    train->add_option("--out", train_args.out, "Output directory")->required();
    train->add_option("--seed", train_args.seed, "Run seed")->required();
    train->add_option("--epochs", train_args.epochs, "Epochs (default 20)");
    train->add_option("--batch-size", train_args.batch_size, "Batch size (default 1)");
    train->add_option("--lr", train_args.lr, "Learning rate (default 1e-5)");
    train->add_option("--momentum", train_args.momentum, "Momentum (default 0.9)");
    train->add_option("--weight-decay", train_args.weight_decay, "Weight decay (default 0.0005)");
    train->add_option("--channel-scale", train_args.channel_scale,
                      "Uniform channel width scale (default 1)");
    train->add_option("--max-steps", train_args.max_steps, "Stop after this many steps (0 = off)");

    InferArgs infer_args;
    auto* infer = app.add_subcommand("infer", "Write probability maps and binary masks");
    infer->add_option("--checkpoint", infer_args.checkpoint, "Checkpoint file")->required();
    infer->add_option("--images", infer_args.images, "Image directory")->required();
    infer->add_option("--out", infer_args.out, "Output directory")->required();
    infer->add_option("--threshold", infer_args.threshold, "Mask threshold (default 0.5)");
    double infer_scale = 0.0;
    auto* scale_opt = infer->add_option("--channel-scale", infer_scale,
                                        "Expected channel scale (checks checkpoint shapes)");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
    eval->add_option("--pred", eval_args.pred, "Prediction mask directory")->required();
    eval->add_option("--gt", eval_args.gt, "Ground-truth mask directory")->required();
    eval->add_option("--orig", eval_args.orig, "Original image directory")->required();
    eval->add_option("--out", eval_args.out, "Output CSV path")->required();

    AugmentArgs augment_args;
    auto* augment = app.add_subcommand("augment", "Expand a dataset by rotation/flip/crop");
    augment->add_option("--images", augment_args.images, "Image directory")->required();
    augment->add_option("--masks", augment_args.masks, "Mask directory")->required();
    augment->add_option("--out", augment_args.out, "Output directory")->required();
    augment->add_option("--seed", augment_args.seed, "Run seed")->required();
    augment->add_option("--factor", augment_args.factor, "Copies per source (default 100)");
    augment->add_option("--crop", augment_args.crop, "Square crop size (default 256)");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate synthetic crack samples");
    synth->add_option("--out", synth_args.out, "Output directory")->required();
    synth->add_option("--seed", synth_args.seed, "Run seed")->required();
    synth->add_option("--count", synth_args.count, "Sample count (default 8)");
    synth->add_option("--size", synth_args.size, "Square size, divisible by 32 (default 256)");
    synth->add_option("--noise", synth_args.noise, "Background noise level (default 0.05)");

    GradcheckArgs gradcheck_args;
    auto* gradcheck =
        app.add_subcommand("gradcheck", "Verify analytic gradients against finite differences");
    gradcheck->add_option("--seed", gradcheck_args.seed, "Run seed (default 1)");
    gradcheck->add_option("--tolerance", gradcheck_args.tolerance,
                          "Max allowed relative error (default 1e-4)");
    gradcheck->add_option("--size", gradcheck_args.size, "Input size (default 32)");
    gradcheck->add_option("--params", gradcheck_args.params,
                          "Sampled parameter count (default 200)");
    gradcheck->add_option("--epsilon", gradcheck_args.epsilon, "FD step (default 1e-5)");
    gradcheck->add_option("--channel-scale", gradcheck_args.channel_scale,
                          "Channel scale (default 0.0625)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*train) return run_train(train_args);
        if (*infer) {
            if (*scale_opt) infer_args.channel_scale = infer_scale;
            return run_infer(infer_args);
        }
        if (*eval) return run_eval(eval_args);
        if (*augment) return run_augment(augment_args);
        if (*synth) return run_synth(synth_args);
        if (*gradcheck) return run_gradcheck(gradcheck_args);
    } catch (const hcnn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
