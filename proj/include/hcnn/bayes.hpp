#pragma once

#include <filesystem>
#include <utility>

#include "hcnn/tensor.hpp"

namespace hcnn {

using MaskPlane = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Two-class Gaussian intensity model with one shared variance: crack pixels
// follow N(mu1, sigma2), background N(mu0, sigma2), with class priors
// prior1 + prior0 = 1. Intensities are grayscale on [0, 255].
struct GaussianCrackModel {
    double mu0 = 0.0;
    double mu1 = 0.0;
    double sigma2 = 1.0;
    double prior0 = 0.5;
    double prior1 = 0.5;

    void validate() const;
};

// Maximum-likelihood fit: class means, pooled within-class variance
// (denominator N, not N-2) and priors from class pixel fractions.
GaussianCrackModel fit_gaussian_model(const PlaneX<double>& intensities, const MaskPlane& mask);

// Log posterior odds a(x) = ln[ N(x|mu1,s2) P1 / (N(x|mu0,s2) P0) ] in its
// closed linear form w*x + w0.
double log_odds(double x, const GaussianCrackModel& model);

// P(crack | x) = sigmoid(a(x)).
double posterior(double x, const GaussianCrackModel& model);

// P(background | x) = sigmoid(-a(x)).
double posterior_background(double x, const GaussianCrackModel& model);

// The linear feature coefficients (w, w0) with
//   w  = (mu1 - mu0) / sigma2
//   w0 = (mu0^2 - mu1^2) / (2 sigma2) + ln(prior1 / prior0)
std::pair<double, double> linear_weights(const GaussianCrackModel& model);

// Pixelwise thresholded posterior.
MaskPlane detect(const PlaneX<double>& intensities, const GaussianCrackModel& model,
                 double threshold);

// Plain-text record: mu0 mu1 sigma2 prior0 prior1.
void save_model(const std::filesystem::path& path, const GaussianCrackModel& model);
GaussianCrackModel load_model(const std::filesystem::path& path);

}  // namespace hcnn
