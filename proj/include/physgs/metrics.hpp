#pragma once

#include "physgs/core.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace physgs::metrics {

/// Raw scores: rows are models, columns are scenes.
struct ScoreTable {
    std::vector<std::string> models;
    std::vector<std::string> scenes;
    Eigen::MatrixXd scores;

    void validate() const;
};

struct ZScores {
    /// z(i, t) = (x(i, t) - mu_t) / sigma_t with population statistics per scene.
    Eigen::MatrixXd z;
    /// Per-model average over scenes.
    Eigen::VectorXd model_mean;
};

/// Per-scene standardization across models. Throws Error naming the scene when
/// its scores are constant.
ZScores zscore_normalize(const ScoreTable& table);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

/// Mean SSIM over every pixel and channel with a Gaussian window, zero padded.
double ssim(const Image& a, const Image& b, const SsimOptions& options = {});

/// Structural dissimilarity (1 - SSIM) / 2.
double dssim(const Image& a, const Image& b, const SsimOptions& options = {});

/// Gradient of dssim(a, b) with respect to `a`.
Image dssim_gradient(const Image& a, const Image& b, const SsimOptions& options = {});

/// Normalized 1D Gaussian window used by the SSIM routines.
std::vector<double> gaussian_window(int size, double sigma);

} // namespace physgs::metrics
