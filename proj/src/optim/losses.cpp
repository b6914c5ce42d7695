#include "params_chain.hpp"
#include "physgs/metrics.hpp"

#include <omp.h>

#include <cmath>
#include <string>

namespace physgs::optim {

namespace {

// Residuals this small are rounding noise from the parameter round trip; the
// L1 sign and the patch-norm direction treat them as zero.
constexpr double kResidualTolerance = 1e-12;

// Vector-Jacobian product of y_i = (x_i - m) / (s + eps) with population
// statistics m, s of x. Adds the result into `out` at `targets`.
template <class Target>
void standardize_vjp(std::span<const double> g, std::span<const double> x, const MapStats& st, double eps,
                     Target&& add)
{
    const double n = static_cast<double>(x.size());
    const double denom = st.std + eps;
    double g_mean = 0.0;
    double g_dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        g_mean += g[i];
        g_dot += g[i] * (x[i] - st.mean);
    }
    g_mean /= n;
    const double coupling = st.std > 0.0 ? g_dot / (n * st.std * denom * denom) : 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        add(j, (g[j] - g_mean) / denom - coupling * (x[j] - st.mean));
    }
}

void check_view(const SupervisionView& view, std::size_t index)
{
    view.camera.validate();
    const auto expect = [&](const Image& im, int channels, const char* what) {
        if (im.width != view.camera.width || im.height != view.camera.height || im.channels != channels) {
            throw ValidationError("view " + std::to_string(index) + ": " + what +
                                  " dimensions do not match the camera");
        }
    };
    if (!view.image.empty()) {
        expect(view.image, 3, "image");
    }
    if (view.depth) {
        expect(*view.depth, 1, "depth");
    }
}

struct ViewDepthLoss {
    double value = 0.0;
    Image upstream; // dL/dD_hard
};

ViewDepthLoss view_depth_loss(const Image& hard, const Image& target, const TrainSchedule& schedule)
{
    ViewDepthLoss out;
    out.upstream = Image(hard.width, hard.height, 1);
    const double eps = schedule.normalization_eps;
    const MapStats hard_stats = map_stats(hard.data);
    const MapStats target_stats = map_stats(target.data);
    const std::vector<Patch> hp = patchify(hard, schedule.patch_size);
    const std::vector<Patch> tp = patchify(target, schedule.patch_size);

    // Upstream on the globally standardized map, accumulated over patches.
    std::vector<double> global_up(hard.pixel_count(), 0.0);
    for (std::size_t k = 0; k < hp.size(); ++k) {
        const std::vector<double> a = normalize_patch(hp[k].values, hard_stats, eps);
        const std::vector<double> b = normalize_patch(tp[k].values, target_stats, eps);
        std::vector<double> r(a.size());
        double sq = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            r[i] = a[i] - b[i];
            sq += r[i] * r[i];
        }
        const double norm = std::sqrt(sq);
        out.value += norm;
        if (norm <= kResidualTolerance * std::sqrt(static_cast<double>(r.size()))) {
            continue;
        }
        std::vector<double> g(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            g[i] = 0.5 * r[i] / norm;
            global_up[hp[k].source[i]] += g[i];
        }
        const MapStats local = map_stats(hp[k].values);
        standardize_vjp(g, hp[k].values, local, eps,
                        [&](std::size_t j, double v) { out.upstream.data[hp[k].source[j]] += v; });
    }
    standardize_vjp(global_up, hard.data, hard_stats, eps,
                    [&](std::size_t j, double v) { out.upstream.data[j] += v; });
    return out;
}

bool is_zero(const ScreenGrad& g)
{
    return g.mean.isZero(0.0) && g.conic.isZero(0.0) && g.distance == 0.0 && g.opacity == 0.0 &&
           g.color.isZero(0.0);
}

} // namespace

HardDepthLoss hard_depth_loss(std::span<const GaussianKernel> kernels, std::span<const SupervisionView> views,
                              const TrainSchedule& schedule, const RenderSettings& settings)
{
    HardDepthLoss out;
    out.center_grad.assign(kernels.size(), Vec3::Zero());
    for (std::size_t v = 0; v < views.size(); ++v) {
        const SupervisionView& view = views[v];
        check_view(view, v);
        if (!view.depth) {
            warn("view " + std::to_string(v) + " has no depth map; skipped in the hard-depth loss");
            continue;
        }
        const Image hard = render_hard_depth(kernels, view.camera, schedule.delta, settings);
        const ViewDepthLoss vl = view_depth_loss(hard, *view.depth, schedule);
        out.value += vl.value;
        const std::vector<ScreenGrad> sg =
            hard_depth_backward(kernels, view.camera, schedule.delta, vl.upstream, settings);
        const auto n = static_cast<std::ptrdiff_t>(kernels.size());
#pragma omp parallel for schedule(static) if (settings.exec == Exec::Parallel)
        for (std::ptrdiff_t k = 0; k < n; ++k) {
            if (is_zero(sg[k])) {
                continue;
            }
            out.center_grad[k] += center_gradient(kernels[k].center, kernels[k].world_covariance, sg[k],
                                                  view.camera, settings.covariance_floor);
        }
    }
    return out;
}

ColorLoss color_loss(std::span<const SplatParams> params, const SupervisionView& view, double lambda,
                     const RenderSettings& settings)
{
    check_view(view, 0);
    if (view.image.empty()) {
        throw Error("color_loss: the view has no image");
    }
    const std::vector<GaussianKernel> kernels = to_kernels(params);
    const RenderOutput rendered = render(kernels, view.camera, settings);
    const Image& c = rendered.color;
    const Image& target = view.image;

    ColorLoss out;
    const double n = static_cast<double>(c.data.size());
    RenderGrad up;
    up.color = Image(c.width, c.height, 3);
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        const double d = c.data[i] - target.data[i];
        out.l1 += std::abs(d);
        up.color.data[i] = (d > kResidualTolerance ? 1.0 : (d < -kResidualTolerance ? -1.0 : 0.0)) / n;
    }
    out.l1 /= n;
    if (lambda != 0.0) {
        out.dssim = metrics::dssim(c, target);
        const Image gd = metrics::dssim_gradient(c, target);
        for (std::size_t i = 0; i < gd.data.size(); ++i) {
            up.color.data[i] += lambda * gd.data[i];
        }
    }
    out.value = out.l1 + lambda * out.dssim;

    const std::vector<ScreenGrad> sg = render_backward(kernels, view.camera, up, settings);
    out.grad.assign(params.size(), ParamGrad{});
    const auto count = static_cast<std::ptrdiff_t>(params.size());
#pragma omp parallel for schedule(static) if (settings.exec == Exec::Parallel)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
        if (is_zero(sg[k])) {
            continue;
        }
        out.grad[k] = param_gradient(params[k], sg[k], view.camera, settings.covariance_floor);
    }
    return out;
}

} // namespace physgs::optim
