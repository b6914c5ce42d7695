#include "physgs/optim.hpp"

#include <algorithm>
#include <cmath>

namespace physgs::optim {

std::vector<Patch> patchify(const Image& map, int patch_size)
{
    if (patch_size <= 0) {
        throw Error("patchify: patch size must be positive");
    }
    if (map.channels != 1) {
        throw Error("patchify: expected a single-channel map");
    }
    std::vector<Patch> patches;
    const int py = (map.height + patch_size - 1) / patch_size;
    const int px = (map.width + patch_size - 1) / patch_size;
    patches.reserve(static_cast<std::size_t>(px) * py);
    for (int ty = 0; ty < py; ++ty) {
        for (int tx = 0; tx < px; ++tx) {
            Patch p;
            p.x0 = tx * patch_size;
            p.y0 = ty * patch_size;
            p.size = patch_size;
            p.source.reserve(static_cast<std::size_t>(patch_size) * patch_size);
            for (int y = 0; y < patch_size; ++y) {
                for (int x = 0; x < patch_size; ++x) {
                    const int sx = std::min(p.x0 + x, map.width - 1);
                    const int sy = std::min(p.y0 + y, map.height - 1);
                    const std::size_t src = static_cast<std::size_t>(sy) * map.width + sx;
                    p.source.push_back(src);
                    p.values.push_back(map.data[src]);
                }
            }
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

Image unpatchify(std::span<const Patch> patches, int width, int height)
{
    Image out(width, height, 1);
    for (const Patch& p : patches) {
        for (int y = 0; y < p.size; ++y) {
            for (int x = 0; x < p.size; ++x) {
                const int gx = p.x0 + x;
                const int gy = p.y0 + y;
                if (gx < width && gy < height) {
                    out.at(gx, gy) = p.values[static_cast<std::size_t>(y) * p.size + x];
                }
            }
        }
    }
    return out;
}

MapStats map_stats(std::span<const double> values)
{
    MapStats s;
    if (values.empty()) {
        return s;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    s.mean = sum / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

std::vector<double> normalize_patch(std::span<const double> patch, const MapStats& map, double eps)
{
    if (patch.empty()) {
        throw Error("normalize_patch: empty patch");
    }
    const MapStats local = map_stats(patch);
    std::vector<double> out(patch.size());
    for (std::size_t i = 0; i < patch.size(); ++i) {
        out[i] = 0.5 * (patch[i] - local.mean) / (local.std + eps) + 0.5 * (patch[i] - map.mean) / (map.std + eps);
    }
    return out;
}


} // namespace physgs::optim
