#pragma once

// Shared frame setup for the forward and backward rasterizers: projection,
// depth sort and tile binning.

#include "physgs/gaussians.hpp"

#include <vector>

namespace physgs::detail {

struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0; // exclusive
    int y1 = 0; // exclusive
};

struct PreparedFrame {
    /// Visible splats sorted by (depth, kernel index).
    std::vector<Splat2D> splats;
    int tiles_x = 0;
    int tiles_y = 0;
    int tile_size = 16;
    /// Per tile, indices into `splats` in ascending depth order.
    std::vector<std::vector<int>> tile_lists;

    [[nodiscard]] PixelRect tile_rect(int tile, int width, int height) const;
};

/// Projects, sorts and (for the parallel path) bins kernels. Throws on
/// non-finite kernels, naming the index.
PreparedFrame prepare_frame(std::span<const GaussianKernel> kernels, const Camera& camera,
                            const RenderSettings& settings, bool bin);

} // namespace physgs::detail
