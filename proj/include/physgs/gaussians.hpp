#pragma once

#include "physgs/camera.hpp"
#include "physgs/core.hpp"

#include <optional>
#include <span>
#include <vector>

namespace physgs {

/// One splat primitive.
///
/// `covariance` is the material-space covariance H, `deformation` the
/// deformation gradient F and `world_covariance` the covariance h actually
/// rendered. `make` initializes h = F H F^T; during simulation h follows the
/// kinematics layer's covariance mode.
struct GaussianKernel {
    Vec3 center = Vec3::Zero();
    double opacity = 1.0;
    Mat3 covariance = Mat3::Identity();
    Vec3 color = Vec3::Zero();
    Vec3 rest_center = Vec3::Zero();
    Mat3 deformation = Mat3::Identity();
    Mat3 world_covariance = Mat3::Identity();

    static GaussianKernel make(const Vec3& center, double opacity, const Mat3& covariance, const Vec3& color,
                               const Mat3& deformation = Mat3::Identity());

    /// Recomputes h = F H F^T (exactly symmetric).
    void reset_world_covariance();

    /// Throws Error naming `index` when a field is non-finite or violates its range.
    void validate(std::size_t index) const;
    [[nodiscard]] bool finite() const;
};

/// A kernel projected to the image plane.
struct Splat2D {
    Vec2 mean = Vec2::Zero();
    Mat2 covariance = Mat2::Identity();
    Vec3 conic = Vec3::Zero();
    double depth = 0.0;
    std::size_t kernel = 0;
};

struct RenderSettings {
    /// Contributions with projected weight below this are skipped.
    double min_weight = 1e-4;
    /// Compositing stops once transmittance drops below this.
    double min_transmittance = 1e-4;
    /// Isotropic floor (px^2) added to every 2D covariance.
    double covariance_floor = 0.3;
    /// Kernels with camera-frame z at or below this are culled.
    double near_plane = 1e-3;
    int tile_size = 16;
    Exec exec = Exec::Parallel;
    /// Multiply the hard-depth weight by the kernel opacity.
    bool hard_depth_includes_opacity = false;
};

struct RenderOutput {
    Image color; ///< 3 channels
    Image depth; ///< 1 channel, world units
    Image alpha; ///< 1 channel, in [0, 1]
};

/// Projects one kernel; std::nullopt when it lies behind the near plane.
std::optional<Splat2D> project_kernel(const GaussianKernel& kernel, const Camera& camera,
                                      double covariance_floor = 0.3, double near_plane = 1e-3,
                                      std::size_t index = 0);

/// Projected weight exp(-1/2 d^T conic d) at pixel (px, py).
[[nodiscard]] double splat_weight(const Splat2D& splat, double px, double py);

/// Alpha-composited color, expected depth and accumulated alpha.
RenderOutput render(std::span<const GaussianKernel> kernels, const Camera& camera,
                    const RenderSettings& settings = {});

/// Depth composited with the fixed weights delta (1 - delta)^(rank-1) in place of opacities.
Image render_hard_depth(std::span<const GaussianKernel> kernels, const Camera& camera, double delta,
                        const RenderSettings& settings = {});

/// Gradient of a scalar loss w.r.t. the screen-space quantities of one kernel.
struct ScreenGrad {
    Vec2 mean = Vec2::Zero();
    Vec3 conic = Vec3::Zero();
    double distance = 0.0;
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
};

/// Upstream gradients for `render_backward`; empty images are treated as zero.
struct RenderGrad {
    Image color;
    Image depth;
    Image alpha;
};

/// Back-propagates per-pixel gradients of `render` to every kernel. Entries of
/// culled kernels stay zero. Accumulation order is fixed, so the result does not
/// depend on the thread count.
std::vector<ScreenGrad> render_backward(std::span<const GaussianKernel> kernels, const Camera& camera,
                                        const RenderGrad& upstream, const RenderSettings& settings = {});

/// Back-propagates dL/dD_hard to kernel means, conics and distances.
std::vector<ScreenGrad> hard_depth_backward(std::span<const GaussianKernel> kernels, const Camera& camera,
                                            double delta, const Image& upstream,
                                            const RenderSettings& settings = {});

} // namespace physgs
