#include "physgs/gaussians.hpp"
#include "physgs/projection.hpp"

#include "raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace physgs {

std::optional<Splat2D> project_kernel(const GaussianKernel& kernel, const Camera& camera, double covariance_floor,
                                      double near_plane, std::size_t index)
{
    const Vec3 pc = camera.to_camera(kernel.center);
    if (!(pc(2) > near_plane)) {
        return std::nullopt;
    }
    const ProjectionT<double> p = project_gaussian<double>(kernel.center, kernel.world_covariance, camera,
                                                           covariance_floor);
    Splat2D s;
    s.mean = p.mean;
    s.covariance = p.covariance;
    s.conic = p.conic;
    s.depth = p.distance;
    s.kernel = index;
    // A non-SPD footprint can only come from a degenerate world covariance; fall
    // back to the isotropic floor so the splat stays renderable.
    const double det = s.covariance.determinant();
    if (!(det > 0.0) || !(s.covariance(0, 0) > 0.0)) {
        const double f = std::max(covariance_floor, 1e-6);
        s.covariance = Mat2::Identity() * f;
        s.conic = Vec3(1.0 / f, 0.0, 1.0 / f);
    }
    return s;
}

double splat_weight(const Splat2D& splat, double px, double py)
{
    const double dx = px - splat.mean(0);
    const double dy = py - splat.mean(1);
    const double power = -0.5 * (splat.conic(0) * dx * dx + splat.conic(2) * dy * dy) - splat.conic(1) * dx * dy;
    return std::exp(power);
}

namespace {

using detail::PreparedFrame;

template <class Indices>
void composite_pixel(const PreparedFrame& frame, std::span<const GaussianKernel> kernels, const Indices& list,
                     int x, int y, const RenderSettings& settings, RenderOutput& out)
{
    double transmittance = 1.0;
    double weight_sum = 0.0;
    double depth = 0.0;
    Vec3 color = Vec3::Zero();
    for (const int s : list) {
        const Splat2D& splat = frame.splats[s];
        const double g = splat_weight(splat, x, y);
        if (g < settings.min_weight) {
            continue;
        }
        const GaussianKernel& k = kernels[splat.kernel];
        const double a = k.opacity * g;
        const double w = a * transmittance;
        color += w * k.color;
        depth += w * splat.depth;
        weight_sum += w;
        transmittance *= (1.0 - a);
        if (transmittance < settings.min_transmittance) {
            break;
        }
    }
    for (int c = 0; c < 3; ++c) {
        out.color.at(x, y, c) = color(c);
    }
    out.depth.at(x, y) = depth;
    out.alpha.at(x, y) = std::clamp(weight_sum, 0.0, 1.0);
}

template <class Indices>
double hard_depth_pixel(const PreparedFrame& frame, std::span<const GaussianKernel> kernels, const Indices& list,
                        int x, int y, double delta, const RenderSettings& settings)
{
    double falloff = 1.0; // (1 - delta)^(rank - 1)
    double depth = 0.0;
    for (const int s : list) {
        const Splat2D& splat = frame.splats[s];
        const double g = splat_weight(splat, x, y);
        if (g < settings.min_weight) {
            continue;
        }
        double w = delta * falloff * g;
        if (settings.hard_depth_includes_opacity) {
            w *= kernels[splat.kernel].opacity;
        }
        depth += splat.depth * w;
        falloff *= (1.0 - delta);
        if (falloff < settings.min_transmittance) {
            break;
        }
    }
    return depth;
}

std::vector<int> all_indices(const PreparedFrame& frame)
{
    std::vector<int> idx(frame.splats.size());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

} // namespace

RenderOutput render(std::span<const GaussianKernel> kernels, const Camera& camera, const RenderSettings& settings)
{
    const bool parallel = settings.exec == Exec::Parallel;
    const PreparedFrame frame = detail::prepare_frame(kernels, camera, settings, parallel);

    RenderOutput out;
    out.color = Image(camera.width, camera.height, 3);
    out.depth = Image(camera.width, camera.height, 1);
    out.alpha = Image(camera.width, camera.height, 1);

    if (!parallel) {
        const std::vector<int> all = all_indices(frame);
        for (int y = 0; y < camera.height; ++y) {
            for (int x = 0; x < camera.width; ++x) {
                composite_pixel(frame, kernels, all, x, y, settings, out);
            }
        }
        return out;
    }

    const int tiles = frame.tiles_x * frame.tiles_y;
#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < tiles; ++t) {
        const detail::PixelRect r = frame.tile_rect(t, camera.width, camera.height);
        const auto& list = frame.tile_lists[t];
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                composite_pixel(frame, kernels, list, x, y, settings, out);
            }
        }
    }
    return out;
}

Image render_hard_depth(std::span<const GaussianKernel> kernels, const Camera& camera, double delta,
                        const RenderSettings& settings)
{
    if (!(delta > 0.0 && delta < 1.0)) {
        throw Error("hard-depth delta must lie in (0, 1)");
    }
    const bool parallel = settings.exec == Exec::Parallel;
    const PreparedFrame frame = detail::prepare_frame(kernels, camera, settings, parallel);
    Image depth(camera.width, camera.height, 1);

    if (!parallel) {
        const std::vector<int> all = all_indices(frame);
        for (int y = 0; y < camera.height; ++y) {
            for (int x = 0; x < camera.width; ++x) {
                depth.at(x, y) = hard_depth_pixel(frame, kernels, all, x, y, delta, settings);
            }
        }
        return depth;
    }

    const int tiles = frame.tiles_x * frame.tiles_y;
#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < tiles; ++t) {
        const detail::PixelRect r = frame.tile_rect(t, camera.width, camera.height);
        const auto& list = frame.tile_lists[t];
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                depth.at(x, y) = hard_depth_pixel(frame, kernels, list, x, y, delta, settings);
            }
        }
    }
    return depth;
}

} // namespace physgs
