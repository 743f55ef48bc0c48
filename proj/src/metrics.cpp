#include "hcnn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "hcnn/errors.hpp"
#include "hcnn/image.hpp"

namespace hcnn {

ConfusionCounts confusion(const MaskPlane& pred, const MaskPlane& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
        throw ShapeError("confusion: prediction and ground truth shapes differ");
    }
    ConfusionCounts c;
    for (Index y = 0; y < pred.rows(); ++y) {
        for (Index x = 0; x < pred.cols(); ++x) {
            const std::uint8_t p = pred(y, x);
            const std::uint8_t g = gt(y, x);
            if (p > 1 || g > 1) {
                throw Error("confusion: inputs must be strictly binary");
            }
            if (p && g) ++c.tp;
            else if (p && !g) ++c.fp;
            else if (!p && g) ++c.fn;
            else ++c.tn;
        }
    }
    return c;
}

EvalReport f_score(const ConfusionCounts& c) {
    EvalReport r;
    const double tp = static_cast<double>(c.tp);
    r.precision = (c.tp + c.fp) == 0 ? 0.0 : tp / static_cast<double>(c.tp + c.fp);
    r.recall = (c.tp + c.fn) == 0 ? 0.0 : tp / static_cast<double>(c.tp + c.fn);
    r.f_score = (r.precision + r.recall) == 0.0
                    ? 0.0
                    : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

double q_measure(const PlaneX<double>& original, const LabelPlane& labels, int n_classes,
                 double log_base) {
    if (original.rows() != labels.rows() || original.cols() != labels.cols()) {
        throw ShapeError("q_measure: image and label shapes differ");
    }
    if (n_classes < 1) {
        throw ConfigError("q_measure: need at least one class");
    }

    std::vector<std::uint64_t> area(static_cast<std::size_t>(n_classes), 0);
    std::vector<double> sum(static_cast<std::size_t>(n_classes), 0.0);
    for (Index y = 0; y < labels.rows(); ++y) {
        for (Index x = 0; x < labels.cols(); ++x) {
            const int l = labels(y, x);
            if (l < 0 || l >= n_classes) {
                throw ConfigError("q_measure: label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
            }
            ++area[static_cast<std::size_t>(l)];
            sum[static_cast<std::size_t>(l)] += original(y, x);
        }
    }
    for (int n = 0; n < n_classes; ++n) {
        if (area[static_cast<std::size_t>(n)] == 0) {
            throw DegenerateInputError("q_measure: class " + std::to_string(n) + " is empty");
        }
    }

    std::vector<double> mean(static_cast<std::size_t>(n_classes));
    for (int n = 0; n < n_classes; ++n) {
        mean[static_cast<std::size_t>(n)] =
            sum[static_cast<std::size_t>(n)] / static_cast<double>(area[static_cast<std::size_t>(n)]);
    }

    std::vector<double> e2(static_cast<std::size_t>(n_classes), 0.0);
    for (Index y = 0; y < labels.rows(); ++y) {
        for (Index x = 0; x < labels.cols(); ++x) {
            const auto l = static_cast<std::size_t>(labels(y, x));
            const double d = original(y, x) - mean[l];
            e2[l] += d * d;
        }
    }

    // N(A_n): how many classes share class n's pixel count
    std::map<std::uint64_t, int> count_of_area;
    for (int n = 0; n < n_classes; ++n) ++count_of_area[area[static_cast<std::size_t>(n)]];

    const double pixels = static_cast<double>(original.rows()) * original.cols();
    double acc = 0.0;
    for (int n = 0; n < n_classes; ++n) {
        const auto nu = static_cast<std::size_t>(n);
        const double a = static_cast<double>(area[nu]);
        const double log_a = std::log(a) / std::log(log_base);
        const double same = static_cast<double>(count_of_area[area[nu]]);
        acc += e2[nu] / (1.0 + log_a) + (same / a) * (same / a);
    }
    return std::sqrt(static_cast<double>(n_classes)) / (10000.0 * pixels) * acc;
}

LabelPlane mask_to_labels(const MaskPlane& mask) {
    return mask.cast<int>();
}

DirEvalResult evaluate_dir(const std::filesystem::path& pred_dir,
                           const std::filesystem::path& gt_dir,
                           const std::filesystem::path& original_dir) {
    namespace fs = std::filesystem;
    const auto collect = [](const fs::path& dir) {
        if (!fs::is_directory(dir)) {
            throw IoError("evaluate_dir: " + dir.string() + " is not a directory");
        }
        std::map<std::string, fs::path> by_stem;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file()) by_stem[entry.path().stem().string()] = entry.path();
        }
        return by_stem;
    };
    const auto preds = collect(pred_dir);
    const auto gts = collect(gt_dir);
    const auto origs = collect(original_dir);

    const auto to_mask = [](const fs::path& p) {
        const ImageU8 img = read_image(p);
        MaskPlane m(img.h, img.w);
        const Tensor4<float> t = image_to_mask_tensor(img);
        for (Index y = 0; y < img.h; ++y)
            for (Index x = 0; x < img.w; ++x) m(y, x) = t(0, 0, y, x) > 0.5f ? 1 : 0;
        return m;
    };

    DirEvalResult result;
    ConfusionCounts total;
    double q_sum = 0.0;
    std::size_t q_count = 0;

    for (const auto& [stem, pred_path] : preds) {
        const auto gt_it = gts.find(stem);
        if (gt_it == gts.end()) {
            throw PairingError("evaluate_dir: prediction '" + stem + "' has no ground truth");
        }
        const auto orig_it = origs.find(stem);
        if (orig_it == origs.end()) {
            throw PairingError("evaluate_dir: prediction '" + stem + "' has no original image");
        }

        ImageEval ie;
        ie.stem = stem;
        const MaskPlane pred = to_mask(pred_path);
        const MaskPlane gt = to_mask(gt_it->second);
        ie.counts = confusion(pred, gt);
        ie.report = f_score(ie.counts);
        total += ie.counts;

        const PlaneX<double> gray = image_to_gray_plane(read_image(orig_it->second));
        try {
            ie.report.q_value = q_measure(gray, mask_to_labels(pred));
            q_sum += ie.report.q_value;
            ++q_count;
        } catch (const DegenerateInputError&) {
            ie.q_defined = false;
            ie.report.q_value = std::nan("");
        }
        result.per_image.push_back(std::move(ie));
    }

    result.aggregate = f_score(total);
    result.aggregate.q_value =
        q_count == 0 ? std::nan("") : q_sum / static_cast<double>(q_count);
    return result;
}

namespace {

std::string fmt_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void write_eval_csv(const std::filesystem::path& path, const DirEvalResult& result) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) {
            throw IoError("write_eval_csv: cannot open " + tmp.string());
        }
        os << "stem,precision,recall,f,q\n";
        for (const auto& ie : result.per_image) {
            os << ie.stem << ',' << fmt_metric(ie.report.precision) << ','
               << fmt_metric(ie.report.recall) << ',' << fmt_metric(ie.report.f_score) << ','
               << fmt_metric(ie.report.q_value) << '\n';
        }
        os << "aggregate," << fmt_metric(result.aggregate.precision) << ','
           << fmt_metric(result.aggregate.recall) << ',' << fmt_metric(result.aggregate.f_score)
           << ',' << fmt_metric(result.aggregate.q_value) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace hcnn
