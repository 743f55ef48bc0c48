#include "hcnn/bayes.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "hcnn/errors.hpp"
#include "hcnn/ops.hpp"

namespace hcnn {

void GaussianCrackModel::validate() const {
    if (!(sigma2 > 0.0)) {
        throw DegenerateFitError("GaussianCrackModel: sigma2 must be positive");
    }
    if (!(prior0 > 0.0 && prior0 < 1.0 && prior1 > 0.0 && prior1 < 1.0)) {
        throw ConfigError("GaussianCrackModel: priors must lie in (0,1)");
    }
    if (std::abs(prior0 + prior1 - 1.0) > 1e-12) {
        throw ConfigError("GaussianCrackModel: priors must sum to 1");
    }
}

GaussianCrackModel fit_gaussian_model(const PlaneX<double>& intensities, const MaskPlane& mask) {
    if (intensities.rows() != mask.rows() || intensities.cols() != mask.cols()) {
        throw ShapeError("fit_gaussian_model: intensity and mask shapes differ");
    }

    double sum0 = 0.0, sum1 = 0.0;
    std::int64_t n0 = 0, n1 = 0;
    for (Index y = 0; y < mask.rows(); ++y) {
        for (Index x = 0; x < mask.cols(); ++x) {
            if (mask(y, x) != 0) {
                sum1 += intensities(y, x);
                ++n1;
            } else {
                sum0 += intensities(y, x);
                ++n0;
            }
        }
    }
    if (n0 == 0 || n1 == 0) {
        throw FitError("fit_gaussian_model: both classes must be nonempty (crack " +
                       std::to_string(n1) + ", background " + std::to_string(n0) + ")");
    }

    GaussianCrackModel m;
    m.mu0 = sum0 / static_cast<double>(n0);
    m.mu1 = sum1 / static_cast<double>(n1);

    double ss = 0.0;
    for (Index y = 0; y < mask.rows(); ++y) {
        for (Index x = 0; x < mask.cols(); ++x) {
            const double d = intensities(y, x) - (mask(y, x) != 0 ? m.mu1 : m.mu0);
            ss += d * d;
        }
    }
    const double total = static_cast<double>(n0 + n1);
    m.sigma2 = ss / total;
    m.prior1 = static_cast<double>(n1) / total;
    m.prior0 = static_cast<double>(n0) / total;
    if (m.sigma2 <= 0.0) {
        throw DegenerateFitError("fit_gaussian_model: pooled variance is zero");
    }
    return m;
}

double log_odds(double x, const GaussianCrackModel& model) {
    const auto [w, w0] = linear_weights(model);
    return w * x + w0;
}

double posterior(double x, const GaussianCrackModel& model) {
    return sigmoid(log_odds(x, model));
}

double posterior_background(double x, const GaussianCrackModel& model) {
    return sigmoid(-log_odds(x, model));
}

std::pair<double, double> linear_weights(const GaussianCrackModel& model) {
    model.validate();
    const double w = (model.mu1 - model.mu0) / model.sigma2;
    const double w0 = (model.mu0 * model.mu0 - model.mu1 * model.mu1) / (2.0 * model.sigma2) +
                      std::log(model.prior1 / model.prior0);
    return {w, w0};
}

MaskPlane detect(const PlaneX<double>& intensities, const GaussianCrackModel& model,
                 double threshold) {
    const auto [w, w0] = linear_weights(model);
    MaskPlane out(intensities.rows(), intensities.cols());
    for (Index y = 0; y < intensities.rows(); ++y)
        for (Index x = 0; x < intensities.cols(); ++x)
            out(y, x) = sigmoid(w * intensities(y, x) + w0) > threshold ? 1 : 0;
    return out;
}

void save_model(const std::filesystem::path& path, const GaussianCrackModel& model) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("save_model: cannot open " + path.string());
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g\n", model.mu0, model.mu1,
                  model.sigma2, model.prior0, model.prior1);
    os << buf;
}

GaussianCrackModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("load_model: cannot open " + path.string());
    }
    GaussianCrackModel m;
    if (!(is >> m.mu0 >> m.mu1 >> m.sigma2 >> m.prior0 >> m.prior1)) {
        throw FormatError("load_model: " + path.string() + " is not a 5-field model record");
    }
    m.validate();
    return m;
}

}  // namespace hcnn
