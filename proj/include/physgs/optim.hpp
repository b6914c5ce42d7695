#pragma once

#include "physgs/gaussians.hpp"

#include <optional>
#include <span>
#include <vector>

namespace physgs::optim {

/// A square pixel patch; `source[i]` is the map pixel (row-major index) that
/// entry i reads, with edge replication for padded entries.
struct Patch {
    int x0 = 0;
    int y0 = 0;
    int size = 0;
    std::vector<std::size_t> source;
    std::vector<double> values;
};

/// Disjoint row-major cover of a single-channel map by size x size patches;
/// partial edge patches are padded by edge replication.
std::vector<Patch> patchify(const Image& map, int patch_size);

/// Inverse of patchify on the unpadded region.
Image unpatchify(std::span<const Patch> patches, int width, int height);

struct MapStats {
    double mean = 0.0;
    double std = 0.0; ///< population standard deviation
};
MapStats map_stats(std::span<const double> values);

/// Balanced local/global normalization:
/// 0.5 (x - mean_patch) / (std_patch + eps) + 0.5 (x - mean_map) / (std_map + eps).
std::vector<double> normalize_patch(std::span<const double> patch, const MapStats& map, double eps = 1e-6);

struct LearningRates {
    /// Multiplied by the scene extent.
    double position = 2e-4;
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 5e-3;
    double color = 2.5e-3;
};

/// Refinement schedule. Epochs are 1-indexed.
struct TrainSchedule {
    int epochs = 3000;
    int decay_epoch = 1500;
    double decay_factor = 0.1;
    int depth_start = 500;
    int depth_every = 10;
    int patch_size = 8;
    double delta = 0.99;
    double lambda_dssim = 0.2;
    double normalization_eps = 1e-6;
    LearningRates lr;

    /// 1 up to `decay_epoch`, `decay_factor` afterwards.
    [[nodiscard]] double lr_scale(int epoch) const;
    /// True on epochs after `depth_start` that are multiples of `depth_every`.
    [[nodiscard]] bool hard_depth_active(int epoch) const;
    void validate() const;
};

struct SupervisionView {
    Camera camera;
    Image image;                ///< 3 channels; may be empty for depth-only views
    std::optional<Image> depth; ///< monocular depth, relative scale
    bool is_input_view = false;
};

/// Trainable parameterization of one kernel.
struct SplatParams {
    Vec3 center = Vec3::Zero();
    double opacity_logit = 0.0;
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1, 0, 0, 0); ///< quaternion (w, x, y, z), not necessarily unit
    Vec3 color = Vec3::Zero();
};

struct ParamGrad {
    Vec3 center = Vec3::Zero();
    double opacity_logit = 0.0;
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    Vec3 color = Vec3::Zero();
};

SplatParams to_params(const GaussianKernel& kernel);
GaussianKernel to_kernel(const SplatParams& params);
std::vector<SplatParams> to_params(std::span<const GaussianKernel> kernels);
std::vector<GaussianKernel> to_kernels(std::span<const SplatParams> params);

struct HardDepthLoss {
    double value = 0.0;
    /// dL/dx_k; all other parameters are frozen for this loss.
    std::vector<Vec3> center_grad;
};

/// Sum over views with a depth map and over patches of
/// || N(D_hard(P)) - N(D_target(P)) ||_2.
HardDepthLoss hard_depth_loss(std::span<const GaussianKernel> kernels, std::span<const SupervisionView> views,
                              const TrainSchedule& schedule, const RenderSettings& settings = {});

struct ColorLoss {
    double value = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    std::vector<ParamGrad> grad;
};

/// L1 + lambda * D-SSIM between the render at `view` and its image.
ColorLoss color_loss(std::span<const SplatParams> params, const SupervisionView& view, double lambda,
                     const RenderSettings& settings = {});

/// Raised when a loss turns non-finite; carries the last finite parameters.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch, std::vector<GaussianKernel> snapshot)
        : Error(what), epoch_(epoch), snapshot_(std::move(snapshot))
    {
    }
    [[nodiscard]] int epoch() const { return epoch_; }
    [[nodiscard]] const std::vector<GaussianKernel>& snapshot() const { return snapshot_; }

private:
    int epoch_;
    std::vector<GaussianKernel> snapshot_;
};

struct EpochRecord {
    int epoch = 0;
    double lr_scale = 1.0;
    double color_loss = 0.0;
    bool hard_depth = false;
    double hard_depth_loss = 0.0;
};

/// Plain SGD on the refinement losses with per-group learning rates.
class Trainer {
public:
    Trainer(std::span<const GaussianKernel> kernels, std::vector<SupervisionView> views, TrainSchedule schedule,
            RenderSettings settings = {});

    /// Runs one epoch (1-indexed): a color step, then a hard-depth step on cadence epochs.
    EpochRecord run_epoch(int epoch);
    /// One SGD step on the color loss of the input view; returns the loss before the step.
    double color_step(double lr_scale);
    /// One SGD step on the hard-depth loss that moves centers only; returns the loss before the step.
    double hard_depth_step(double lr_scale);

    [[nodiscard]] const std::vector<SplatParams>& params() const { return params_; }
    /// Current kernels. Kernels whose non-center parameters never moved keep the
    /// input's opacity, covariances and color bit for bit.
    [[nodiscard]] std::vector<GaussianKernel> kernels() const;
    [[nodiscard]] double scene_extent() const { return extent_; }
    [[nodiscard]] const SupervisionView& input_view() const;

private:
    std::vector<GaussianKernel> base_;
    std::vector<SplatParams> initial_;
    std::vector<SplatParams> params_;
    std::vector<SupervisionView> views_;
    TrainSchedule schedule_;
    RenderSettings settings_;
    double extent_ = 1.0;
    std::size_t input_ = 0;
};

/// Full refinement loop over `schedule.epochs` epochs. Deterministic.
std::vector<GaussianKernel> optimize(std::span<const GaussianKernel> kernels, std::vector<SupervisionView> views,
                                     const TrainSchedule& schedule, const RenderSettings& settings = {},
                                     std::vector<EpochRecord>* trace = nullptr);

} // namespace physgs::optim
