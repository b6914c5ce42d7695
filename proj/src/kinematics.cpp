#include "physgs/kinematics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace physgs::kinematics {

std::size_t Binding::filler_count() const { return static_cast<std::size_t>(std::count(interior.begin(), interior.end(), true)); }

namespace {

struct VoxelGrid {
    Vec3 origin;
    double spacing;
    std::array<int, 3> dims;

    [[nodiscard]] std::size_t count() const { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }
    [[nodiscard]] std::size_t index(int i, int j, int k) const
    {
        return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
    }
    [[nodiscard]] Vec3 center(int i, int j, int k) const { return origin + spacing * Vec3(i + 0.5, j + 0.5, k + 0.5); }
    [[nodiscard]] std::array<int, 3> cell_of(const Vec3& x) const
    {
        std::array<int, 3> c{};
        for (int a = 0; a < 3; ++a) {
            c[a] = std::clamp(static_cast<int>(std::floor((x(a) - origin(a)) / spacing)), 0, dims[a] - 1);
        }
        return c;
    }
};

double kernel_std(const GaussianKernel& k)
{
    Eigen::SelfAdjointEigenSolver<Mat3> eig(k.world_covariance, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(eig.eigenvalues()(2), 0.0));
}

} // namespace

Binding bind(std::span<const GaussianKernel> kernels, const mpm::ConstitutiveModel& model, const BindOptions& options)
{
    if (kernels.empty()) {
        throw Error("bind: empty kernel set");
    }
    model.validate();
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        kernels[i].validate(i);
    }

    Vec3 lo = kernels[0].center;
    Vec3 hi = kernels[0].center;
    std::vector<double> stds(kernels.size());
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        lo = lo.cwiseMin(kernels[i].center);
        hi = hi.cwiseMax(kernels[i].center);
        stds[i] = kernel_std(kernels[i]);
    }
    double spacing = options.voxel_spacing;
    if (!(spacing > 0.0)) {
        const double volume = (hi - lo).prod();
        if (volume > 0.0) {
            spacing = std::cbrt(volume / static_cast<double>(kernels.size()));
        } else {
            std::vector<double> sorted = stds;
            std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
            spacing = std::max(sorted[sorted.size() / 2], 1e-6);
        }
    }

    VoxelGrid vox;
    vox.spacing = spacing;
    for (int a = 0; a < 3; ++a) {
        vox.dims[a] = std::max(1, static_cast<int>(std::ceil((hi(a) - lo(a)) / spacing)) + 1);
    }
    const Vec3 extent = spacing * Vec3(vox.dims[0], vox.dims[1], vox.dims[2]);
    vox.origin = 0.5 * (lo + hi) - 0.5 * extent;

    // Accumulated opacity density at voxel centers.
    std::vector<double> density(vox.count(), 0.0);
    std::vector<char> has_center(vox.count(), 0);
    for (std::size_t k = 0; k < kernels.size(); ++k) {
        const GaussianKernel& ker = kernels[k];
        const auto c = vox.cell_of(ker.center);
        has_center[vox.index(c[0], c[1], c[2])] = 1;
        const Mat3 inv = ker.world_covariance.inverse();
        const int r = static_cast<int>(std::ceil(3.0 * stds[k] / spacing));
        for (int i = std::max(0, c[0] - r); i <= std::min(vox.dims[0] - 1, c[0] + r); ++i) {
            for (int j = std::max(0, c[1] - r); j <= std::min(vox.dims[1] - 1, c[1] + r); ++j) {
                for (int l = std::max(0, c[2] - r); l <= std::min(vox.dims[2] - 1, c[2] + r); ++l) {
                    const Vec3 d = vox.center(i, j, l) - ker.center;
                    density[vox.index(i, j, l)] += ker.opacity * std::exp(-0.5 * d.dot(inv * d));
                }
            }
        }
    }

    // A voxel is enclosed when every axis ray from it reaches a voxel holding a kernel center.
    std::vector<char> enclosed(vox.count(), 0);
    for (int i = 0; i < vox.dims[0]; ++i) {
        for (int j = 0; j < vox.dims[1]; ++j) {
            for (int l = 0; l < vox.dims[2]; ++l) {
                const std::size_t idx = vox.index(i, j, l);
                if (has_center[idx]) {
                    continue;
                }
                bool inside = true;
                const std::array<int, 3> p{i, j, l};
                for (int a = 0; a < 3 && inside; ++a) {
                    for (int dir : {-1, 1}) {
                        bool hit = false;
                        std::array<int, 3> q = p;
                        for (q[a] += dir; q[a] >= 0 && q[a] < vox.dims[a]; q[a] += dir) {
                            if (has_center[vox.index(q[0], q[1], q[2])]) {
                                hit = true;
                                break;
                            }
                        }
                        if (!hit) {
                            inside = false;
                            break;
                        }
                    }
                }
                enclosed[idx] = inside ? 1 : 0;
            }
        }
    }

    std::size_t occupied = 0;
    for (std::size_t v = 0; v < vox.count(); ++v) {
        if (density[v] > options.occupancy_threshold || enclosed[v]) {
            ++occupied;
        }
    }
    const double box_volume = extent.prod();
    const double total_volume =
        box_volume * static_cast<double>(std::max<std::size_t>(occupied, 1)) / static_cast<double>(vox.count());

    Binding out;
    out.voxel_spacing = spacing;
    out.total_volume = total_volume;
    for (std::size_t k = 0; k < kernels.size(); ++k) {
        mpm::Particle p;
        p.position = kernels[k].center;
        p.deformation = Mat3::Identity();
        p.material = options.material;
        out.particles.push_back(p);
        out.interior.push_back(false);
        out.bound.push_back({k, k, kernels[k].world_covariance});
    }
    if (options.fill) {
        for (int i = 0; i < vox.dims[0]; ++i) {
            for (int j = 0; j < vox.dims[1]; ++j) {
                for (int l = 0; l < vox.dims[2]; ++l) {
                    if (!enclosed[vox.index(i, j, l)]) {
                        continue;
                    }
                    mpm::Particle p;
                    p.position = vox.center(i, j, l);
                    p.material = options.material;
                    out.particles.push_back(p);
                    out.interior.push_back(true);
                }
            }
        }
    }
    const double volume = total_volume / static_cast<double>(out.particles.size());
    for (auto& p : out.particles) {
        p.rest_volume = volume;
        p.mass = model.density * volume;
    }
    return out;
}

Mat3 update_covariance(const Mat3& h, const Mat3& grad_v, double dt)
{
    Mat3 next = h + dt * (grad_v * h + h * grad_v.transpose());
    next = 0.5 * (next + next.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(next);
    const Vec3 ev = eig.eigenvalues();
    const double floor = std::max(1e-10 * ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev(0) >= floor) {
        return next;
    }
    const Vec3 clamped = ev.cwiseMax(floor);
    Mat3 rebuilt = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (rebuilt + rebuilt.transpose());
}

void sync(std::vector<GaussianKernel>& kernels, std::vector<BoundKernel>& bound,
          std::span<const mpm::Particle> particles, double dt, CovarianceMode mode)
{
    const auto n = static_cast<std::ptrdiff_t>(bound.size());
    for (std::ptrdiff_t b = 0; b < n; ++b) {
        if (bound[b].kernel >= kernels.size() || bound[b].particle >= particles.size()) {
            throw Error("sync: binding " + std::to_string(b) + " refers to a missing kernel or particle");
        }
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < n; ++b) {
        BoundKernel& link = bound[b];
        GaussianKernel& k = kernels[link.kernel];
        const mpm::Particle& p = particles[link.particle];
        k.center = p.position;
        k.deformation = p.deformation;
        if (mode == CovarianceMode::Incremental) {
            if (dt != 0.0) {
                link.world_covariance = update_covariance(link.world_covariance, p.velocity_gradient, dt);
            }
            k.world_covariance = link.world_covariance;
        } else {
            k.reset_world_covariance();
            link.world_covariance = k.world_covariance;
        }
    }
}

DynamicScene::DynamicScene(std::vector<GaussianKernel> kernels, const mpm::ConstitutiveModel& model,
                           const mpm::Grid& grid, const BindOptions& bind_options, SimulationSetup setup)
    : kernels_(std::move(kernels)), setup_(std::move(setup))
{
    BindOptions opts = bind_options;
    opts.material = 0;
    binding_ = kinematics::bind(std::span<const GaussianKernel>(kernels_), model, opts);
    state_.particles = binding_.particles;
    state_.materials = {model};
    state_.grid = mpm::Grid(grid.origin, grid.spacing, grid.dims);
    state_.validate();
    for (const auto& l : setup_.loads) {
        l.validate();
    }
}

mpm::StepReport DynamicScene::advance(double dt)
{
    return mpm::step(state_, dt, setup_.loads, setup_.colliders, setup_.mpm, [&](double h) {
        sync(kernels_, binding_.bound, state_.particles, h, setup_.covariance_mode);
    });
}

} // namespace physgs::kinematics
