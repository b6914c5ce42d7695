#include "physgs/gaussians.hpp"

#include "raster.hpp"

#include <numeric>

namespace physgs {

namespace {

using detail::PreparedFrame;

struct Contribution {
    int slot;     // position in the pixel's candidate list
    double g;     // projected weight
    double a;     // effective opacity
    double trans; // transmittance in front of this splat
    double value; // upstream-weighted payload
};

void add_weight_grad(const Splat2D& s, double x, double y, double g, double d_g, ScreenGrad& out)
{
    const double dx = x - s.mean(0);
    const double dy = y - s.mean(1);
    const double gg = d_g * g;
    out.mean(0) += gg * (s.conic(0) * dx + s.conic(1) * dy);
    out.mean(1) += gg * (s.conic(1) * dx + s.conic(2) * dy);
    out.conic(0) += -0.5 * gg * dx * dx;
    out.conic(1) += -gg * dx * dy;
    out.conic(2) += -0.5 * gg * dy * dy;
}

double pixel_value(const Image& img, int x, int y, int c = 0) { return img.empty() ? 0.0 : img.at(x, y, c); }

/// Backward pass of one pixel; `sink(slot)` returns the ScreenGrad to add into.
template <class Indices, class Sink>
void backward_pixel(const PreparedFrame& frame, std::span<const GaussianKernel> kernels, const Indices& list, int x,
                    int y, const RenderGrad& up, const RenderSettings& settings, std::vector<Contribution>& scratch,
                    Sink&& sink)
{
    const Vec3 g_color(pixel_value(up.color, x, y, 0), pixel_value(up.color, x, y, 1),
                       pixel_value(up.color, x, y, 2));
    const double g_depth = pixel_value(up.depth, x, y);
    const double g_alpha = pixel_value(up.alpha, x, y);

    scratch.clear();
    double transmittance = 1.0;
    for (int slot = 0; slot < static_cast<int>(list.size()); ++slot) {
        const Splat2D& splat = frame.splats[list[slot]];
        const double g = splat_weight(splat, x, y);
        if (g < settings.min_weight) {
            continue;
        }
        const GaussianKernel& k = kernels[splat.kernel];
        const double a = k.opacity * g;
        scratch.push_back({slot, g, a, transmittance, g_color.dot(k.color) + g_depth * splat.depth + g_alpha});
        transmittance *= (1.0 - a);
        if (transmittance < settings.min_transmittance) {
            break;
        }
    }

    // behind = payload composited from everything behind the current splat.
    double behind = 0.0;
    for (auto it = scratch.rbegin(); it != scratch.rend(); ++it) {
        const Splat2D& splat = frame.splats[list[it->slot]];
        const GaussianKernel& k = kernels[splat.kernel];
        const double d_a = it->trans * (it->value - behind);
        behind = it->a * it->value + (1.0 - it->a) * behind;
        const double w = it->a * it->trans;

        ScreenGrad& out = sink(it->slot);
        out.color += w * g_color;
        out.distance += w * g_depth;
        out.opacity += d_a * it->g;
        add_weight_grad(splat, x, y, it->g, d_a * k.opacity, out);
    }
}

template <class Indices, class Sink>
void hard_backward_pixel(const PreparedFrame& frame, std::span<const GaussianKernel> kernels, const Indices& list,
                         int x, int y, double delta, double upstream, const RenderSettings& settings, Sink&& sink)
{
    double falloff = 1.0;
    for (int slot = 0; slot < static_cast<int>(list.size()); ++slot) {
        const Splat2D& splat = frame.splats[list[slot]];
        const double g = splat_weight(splat, x, y);
        if (g < settings.min_weight) {
            continue;
        }
        const double sigma = settings.hard_depth_includes_opacity ? kernels[splat.kernel].opacity : 1.0;
        const double rank_w = delta * falloff;
        ScreenGrad& out = sink(slot);
        out.distance += upstream * rank_w * g * sigma;
        if (settings.hard_depth_includes_opacity) {
            out.opacity += upstream * rank_w * g * splat.depth;
        }
        add_weight_grad(splat, x, y, g, upstream * rank_w * sigma * splat.depth, out);
        falloff *= (1.0 - delta);
        if (falloff < settings.min_transmittance) {
            break;
        }
    }
}

/// Runs `pixel(list, x, y, sink)` over the image and reduces the per-kernel
/// gradients. The parallel path accumulates per tile and reduces tiles in
/// index order, so the result is independent of the thread count.
template <class PixelFn>
std::vector<ScreenGrad> accumulate(const PreparedFrame& frame, std::size_t kernel_count, const Camera& camera,
                                   Exec exec, PixelFn&& pixel)
{
    std::vector<ScreenGrad> grads(kernel_count);
    if (exec == Exec::Serial) {
        std::vector<int> all(frame.splats.size());
        std::iota(all.begin(), all.end(), 0);
        for (int y = 0; y < camera.height; ++y) {
            for (int x = 0; x < camera.width; ++x) {
                pixel(all, x, y, [&](int slot) -> ScreenGrad& { return grads[frame.splats[all[slot]].kernel]; });
            }
        }
        return grads;
    }

    const int tiles = frame.tiles_x * frame.tiles_y;
    std::vector<std::vector<ScreenGrad>> local(tiles);
#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < tiles; ++t) {
        const auto& list = frame.tile_lists[t];
        auto& acc = local[t];
        acc.assign(list.size(), ScreenGrad{});
        const detail::PixelRect r = frame.tile_rect(t, camera.width, camera.height);
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                pixel(list, x, y, [&](int slot) -> ScreenGrad& { return acc[slot]; });
            }
        }
    }
    for (int t = 0; t < tiles; ++t) {
        const auto& list = frame.tile_lists[t];
        for (std::size_t i = 0; i < list.size(); ++i) {
            const ScreenGrad& g = local[t][i];
            ScreenGrad& dst = grads[frame.splats[list[i]].kernel];
            dst.mean += g.mean;
            dst.conic += g.conic;
            dst.distance += g.distance;
            dst.opacity += g.opacity;
            dst.color += g.color;
        }
    }
    return grads;
}

} // namespace

std::vector<ScreenGrad> render_backward(std::span<const GaussianKernel> kernels, const Camera& camera,
                                        const RenderGrad& upstream, const RenderSettings& settings)
{
    const bool parallel = settings.exec == Exec::Parallel;
    const PreparedFrame frame = detail::prepare_frame(kernels, camera, settings, parallel);
    for (const Image* img : {&upstream.color, &upstream.depth, &upstream.alpha}) {
        if (!img->empty() && (img->width != camera.width || img->height != camera.height)) {
            throw Error("render_backward: upstream gradient size does not match the camera");
        }
    }

    if (!parallel) {
        std::vector<Contribution> scratch;
        return accumulate(frame, kernels.size(), camera, Exec::Serial, [&](const auto& list, int x, int y, auto&& sink) {
            backward_pixel(frame, kernels, list, x, y, upstream, settings, scratch, sink);
        });
    }
    return accumulate(frame, kernels.size(), camera, Exec::Parallel, [&](const auto& list, int x, int y, auto&& sink) {
        thread_local std::vector<Contribution> scratch;
        backward_pixel(frame, kernels, list, x, y, upstream, settings, scratch, sink);
    });
}

std::vector<ScreenGrad> hard_depth_backward(std::span<const GaussianKernel> kernels, const Camera& camera,
                                            double delta, const Image& upstream, const RenderSettings& settings)
{
    if (!(delta > 0.0 && delta < 1.0)) {
        throw Error("hard-depth delta must lie in (0, 1)");
    }
    if (upstream.width != camera.width || upstream.height != camera.height) {
        throw Error("hard_depth_backward: upstream gradient size does not match the camera");
    }
    const PreparedFrame frame = detail::prepare_frame(kernels, camera, settings, settings.exec == Exec::Parallel);
    return accumulate(frame, kernels.size(), camera, settings.exec, [&](const auto& list, int x, int y, auto&& sink) {
        const double up = upstream.at(x, y);
        if (up != 0.0) {
            hard_backward_pixel(frame, kernels, list, x, y, delta, up, settings, sink);
        }
    });
}

} // namespace physgs
