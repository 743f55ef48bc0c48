#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hcnn/bayes.hpp"
#include "hcnn/tensor.hpp"

namespace hcnn {

using LabelPlane = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

struct EvalReport {
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    double q_value = 0.0;
};

// Exact per-pixel counts with crack (1) as the positive class. Inputs must be
// strictly binary and equally shaped.
ConfusionCounts confusion(const MaskPlane& pred, const MaskPlane& gt);

// precision = tp/(tp+fp), recall = tp/(tp+fn), F = 2PR/(P+R); empty
// denominators yield 0 so directory evaluation stays total.
EvalReport f_score(const ConfusionCounts& c);

// Unsupervised segmentation quality:
//   Q = 1/(10000 j k) * sqrt(N_c) * sum_n [ e_n^2/(1+log A_n) + (N(A_n)/A_n)^2 ]
// where e_n^2 is the within-class squared intensity deviation on the [0,255]
// scale, A_n the class pixel count and N(A_n) the number of classes sharing
// that count. Labels run over 0..n_classes-1; every class must be nonempty.
// The log base defaults to 10. Lower is better.
double q_measure(const PlaneX<double>& original, const LabelPlane& labels, int n_classes = 2,
                 double log_base = 10.0);

LabelPlane mask_to_labels(const MaskPlane& mask);

struct ImageEval {
    std::string stem;
    EvalReport report;
    ConfusionCounts counts;
    bool q_defined = true;
};

struct DirEvalResult {
    std::vector<ImageEval> per_image;
    EvalReport aggregate;  // micro-averaged F over summed counts; mean Q
};

// Evaluates matching stems across prediction, ground-truth and original-image
// directories. Single-class predictions have no Q value and are excluded from
// the Q mean.
DirEvalResult evaluate_dir(const std::filesystem::path& pred_dir,
                           const std::filesystem::path& gt_dir,
                           const std::filesystem::path& original_dir);

// CSV with header "stem,precision,recall,f,q", one row per image plus an
// "aggregate" row.
void write_eval_csv(const std::filesystem::path& path, const DirEvalResult& result);

}  // namespace hcnn
