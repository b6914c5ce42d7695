#include "physgs/metrics.hpp"

#include <cmath>

namespace physgs::metrics {

void ScoreTable::validate() const
{
    if (scores.rows() != static_cast<Eigen::Index>(models.size()) ||
        scores.cols() != static_cast<Eigen::Index>(scenes.size())) {
        throw ValidationError("score table labels do not match its shape");
    }
    if (scores.rows() < 2) {
        throw ValidationError("z-score normalization needs at least two models");
    }
    if (!scores.allFinite()) {
        throw ValidationError("score table has missing or non-finite cells");
    }
}

ZScores zscore_normalize(const ScoreTable& table)
{
    table.validate();
    const Eigen::Index n_models = table.scores.rows();
    const Eigen::Index n_scenes = table.scores.cols();
    ZScores out;
    out.z.resize(n_models, n_scenes);
    for (Eigen::Index t = 0; t < n_scenes; ++t) {
        const Eigen::VectorXd col = table.scores.col(t);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().mean();
        const double sd = std::sqrt(var);
        if (!(sd > 0.0)) {
            throw Error("scene '" + table.scenes[static_cast<std::size_t>(t)] + "' has zero score variance");
        }
        out.z.col(t) = (col.array() - mean) / sd;
    }
    out.model_mean = out.z.rowwise().mean();
    return out;
}

std::vector<double> gaussian_window(int size, double sigma)
{
    std::vector<double> w(static_cast<std::size_t>(size));
    double sum = 0.0;
    const double mid = 0.5 * (size - 1);
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-(i - mid) * (i - mid) / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) {
        v /= sum;
    }
    return w;
}

namespace {

using Plane = std::vector<double>;

/// Separable zero-padded 'same' filtering of one plane.
Plane blur(const Plane& in, int w, int h, const std::vector<double>& k)
{
    const int r = static_cast<int>(k.size()) / 2;
    Plane tmp(in.size(), 0.0);
    Plane out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = 0; t < static_cast<int>(k.size()); ++t) {
                const int xx = x + t - r;
                if (xx >= 0 && xx < w) {
                    s += k[t] * in[static_cast<std::size_t>(y) * w + xx];
                }
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = 0; t < static_cast<int>(k.size()); ++t) {
                const int yy = y + t - r;
                if (yy >= 0 && yy < h) {
                    s += k[t] * tmp[static_cast<std::size_t>(yy) * w + x];
                }
            }
            out[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    return out;
}

Plane channel(const Image& img, int c)
{
    Plane p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = img.data[i * img.channels + c];
    }
    return p;
}

void check_pair(const Image& a, const Image& b)
{
    if (!a.same_shape(b)) {
        throw Error("ssim: image dimensions differ");
    }
    if (a.empty()) {
        throw Error("ssim: empty image");
    }
}

struct Moments {
    Plane mu_a, mu_b, e_aa, e_bb, e_ab;
};

Moments moments(const Plane& a, const Plane& b, int w, int h, const std::vector<double>& k)
{
    Plane aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    return {blur(a, w, h, k), blur(b, w, h, k), blur(aa, w, h, k), blur(bb, w, h, k), blur(ab, w, h, k)};
}

} // namespace

double ssim(const Image& a, const Image& b, const SsimOptions& options)
{
    check_pair(a, b);
    const auto k = gaussian_window(options.window, options.sigma);
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const Moments m = moments(channel(a, c), channel(b, c), a.width, a.height, k);
        for (std::size_t i = 0; i < m.mu_a.size(); ++i) {
            const double ma = m.mu_a[i];
            const double mb = m.mu_b[i];
            const double va = m.e_aa[i] - ma * ma;
            const double vb = m.e_bb[i] - mb * mb;
            const double cov = m.e_ab[i] - ma * mb;
            total += ((2.0 * ma * mb + options.c1) * (2.0 * cov + options.c2)) /
                     ((ma * ma + mb * mb + options.c1) * (va + vb + options.c2));
        }
    }
    return total / static_cast<double>(a.pixel_count() * a.channels);
}

double dssim(const Image& a, const Image& b, const SsimOptions& options) { return 0.5 * (1.0 - ssim(a, b, options)); }

Image dssim_gradient(const Image& a, const Image& b, const SsimOptions& options)
{
    check_pair(a, b);
    const auto k = gaussian_window(options.window, options.sigma);
    const double scale = -0.5 / static_cast<double>(a.pixel_count() * a.channels);
    Image grad(a.width, a.height, a.channels);
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = channel(a, c);
        const Plane pb = channel(b, c);
        const Moments m = moments(pa, pb, a.width, a.height, k);
        // Partial derivatives of the SSIM map w.r.t. mu_a, E[a^2], E[ab] at each pixel.
        Plane d_mu(pa.size()), d_eaa(pa.size()), d_eab(pa.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            const double ma = m.mu_a[i];
            const double mb = m.mu_b[i];
            const double va = m.e_aa[i] - ma * ma;
            const double vb = m.e_bb[i] - mb * mb;
            const double cov = m.e_ab[i] - ma * mb;
            const double l_num = 2.0 * ma * mb + options.c1;
            const double l_den = ma * ma + mb * mb + options.c1;
            const double s_num = 2.0 * cov + options.c2;
            const double s_den = va + vb + options.c2;
            const double val = (l_num * s_num) / (l_den * s_den);
            // d/d(E[a^2]) acts through va only; d/d(E[ab]) through cov only.
            const double d_va = -val / s_den;
            const double d_cov = 2.0 * val / s_num;
            // mu_a enters l_num, l_den, va (-2 ma) and cov (-mb).
            const double d_ma_direct = val * (2.0 * mb / l_num - 2.0 * ma / l_den);
            d_mu[i] = d_ma_direct + d_va * (-2.0 * ma) + d_cov * (-mb);
            d_eaa[i] = d_va;
            d_eab[i] = d_cov;
        }
        const Plane g_mu = blur(d_mu, a.width, a.height, k);
        const Plane g_eaa = blur(d_eaa, a.width, a.height, k);
        const Plane g_eab = blur(d_eab, a.width, a.height, k);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            grad.data[i * a.channels + c] = scale * (g_mu[i] + 2.0 * pa[i] * g_eaa[i] + pb[i] * g_eab[i]);
        }
    }
    return grad;
}

} // namespace physgs::metrics
