#include "raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace physgs::detail {

PixelRect PreparedFrame::tile_rect(int tile, int width, int height) const
{
    const int tx = tile % tiles_x;
    const int ty = tile / tiles_x;
    PixelRect r;
    r.x0 = tx * tile_size;
    r.y0 = ty * tile_size;
    r.x1 = std::min(width, r.x0 + tile_size);
    r.y1 = std::min(height, r.y0 + tile_size);
    return r;
}

namespace {

/// Pixel rectangle outside of which the splat weight is below `min_weight`.
PixelRect footprint(const Splat2D& s, double min_weight, int width, int height)
{
    if (!(min_weight > 0.0)) {
        return {0, 0, width, height};
    }
    const double a = s.covariance(0, 0);
    const double b = s.covariance(0, 1);
    const double c = s.covariance(1, 1);
    const double lambda_max = 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    // d^T conic d >= |d|^2 / lambda_max, so weight >= min_weight needs |d|^2 <= 2 ln(1/w) lambda_max.
    const double radius = std::sqrt(2.0 * std::log(1.0 / min_weight) * lambda_max) + 1.0;
    PixelRect r;
    r.x0 = static_cast<int>(std::max(0.0, std::floor(s.mean(0) - radius)));
    r.y0 = static_cast<int>(std::max(0.0, std::floor(s.mean(1) - radius)));
    r.x1 = static_cast<int>(std::min<double>(width, std::ceil(s.mean(0) + radius) + 1.0));
    r.y1 = static_cast<int>(std::min<double>(height, std::ceil(s.mean(1) + radius) + 1.0));
    return r;
}

} // namespace

PreparedFrame prepare_frame(std::span<const GaussianKernel> kernels, const Camera& camera,
                            const RenderSettings& settings, bool bin)
{
    camera.validate();
    const auto n = static_cast<std::ptrdiff_t>(kernels.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        if (!kernels[i].finite()) {
            throw Error("kernel " + std::to_string(i) + ": non-finite value");
        }
    }

    std::vector<std::optional<Splat2D>> projected(kernels.size());
    if (settings.exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            projected[i] = project_kernel(kernels[i], camera, settings.covariance_floor, settings.near_plane,
                                          static_cast<std::size_t>(i));
        }
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            projected[i] = project_kernel(kernels[i], camera, settings.covariance_floor, settings.near_plane,
                                          static_cast<std::size_t>(i));
        }
    }

    PreparedFrame frame;
    frame.splats.reserve(kernels.size());
    for (auto& p : projected) {
        if (p) {
            frame.splats.push_back(*p);
        }
    }
    std::stable_sort(frame.splats.begin(), frame.splats.end(), [](const Splat2D& l, const Splat2D& r) {
        if (l.depth != r.depth) {
            return l.depth < r.depth;
        }
        return l.kernel < r.kernel;
    });

    if (bin) {
        frame.tile_size = std::max(1, settings.tile_size);
        frame.tiles_x = (camera.width + frame.tile_size - 1) / frame.tile_size;
        frame.tiles_y = (camera.height + frame.tile_size - 1) / frame.tile_size;
        frame.tile_lists.assign(static_cast<std::size_t>(frame.tiles_x) * frame.tiles_y, {});
        for (int s = 0; s < static_cast<int>(frame.splats.size()); ++s) {
            const PixelRect r = footprint(frame.splats[s], settings.min_weight, camera.width, camera.height);
            if (r.x0 >= r.x1 || r.y0 >= r.y1) {
                continue;
            }
            const int tx0 = r.x0 / frame.tile_size;
            const int ty0 = r.y0 / frame.tile_size;
            const int tx1 = (r.x1 - 1) / frame.tile_size;
            const int ty1 = (r.y1 - 1) / frame.tile_size;
            for (int ty = ty0; ty <= ty1; ++ty) {
                for (int tx = tx0; tx <= tx1; ++tx) {
                    frame.tile_lists[static_cast<std::size_t>(ty) * frame.tiles_x + tx].push_back(s);
                }
            }
        }
    }
    return frame;
}

} // namespace physgs::detail
