#pragma once

#include "physgs/gaussians.hpp"
#include "physgs/mpm/solver.hpp"

#include <span>
#include <vector>

namespace physgs::kinematics {

/// How kernel world covariances follow the simulation.
enum class CovarianceMode {
    /// h <- h + dt (grad_v h + h grad_v^T) every substep.
    Incremental,
    /// h = F H F^T from the particle deformation gradient.
    FromDeformation,
};

struct BindOptions {
    bool fill = false;
    /// Voxel size for volume estimation and filling; <= 0 picks
    /// (centers bounding volume / kernel count)^(1/3).
    double voxel_spacing = 0.0;
    /// Accumulated opacity density above which a voxel counts as occupied.
    double occupancy_threshold = 0.02;
    int material = 0;
};

/// Link between a kernel and the particle that carries it.
struct BoundKernel {
    std::size_t kernel = 0;
    std::size_t particle = 0;
    Mat3 world_covariance = Mat3::Identity();
};

struct Binding {
    std::vector<mpm::Particle> particles;
    std::vector<BoundKernel> bound;
    /// interior[p] is true for filler particles, which carry mass but render nothing.
    std::vector<bool> interior;
    double total_volume = 0.0;
    double voxel_spacing = 0.0;

    [[nodiscard]] std::size_t filler_count() const;
};

/// Turns every kernel into a particle at its center (v = 0, F = I) and,
/// with `fill`, adds interior filler particles. Rest volumes split the
/// occupied volume estimate evenly.
Binding bind(std::span<const GaussianKernel> kernels, const mpm::ConstitutiveModel& model,
             const BindOptions& options = {});

/// One forward-Euler step of dh/dt = grad_v h + h grad_v^T, symmetrized and
/// eigenvalue-floored at 1e-10 times the largest eigenvalue magnitude.
Mat3 update_covariance(const Mat3& h, const Mat3& grad_v, double dt);

/// Copies particle state back to the bound kernels after a completed step of size dt.
void sync(std::vector<GaussianKernel>& kernels, std::vector<BoundKernel>& bound,
          std::span<const mpm::Particle> particles, double dt, CovarianceMode mode);

struct SimulationSetup {
    mpm::MpmConfig mpm;
    CovarianceMode covariance_mode = CovarianceMode::Incremental;
    std::vector<mpm::ExternalLoad> loads;
    std::vector<mpm::Collider> colliders;
};

/// Kernels bound to an MPM state, advanced together.
class DynamicScene {
public:
    DynamicScene(std::vector<GaussianKernel> kernels, const mpm::ConstitutiveModel& model, const mpm::Grid& grid,
                 const BindOptions& bind_options, SimulationSetup setup);

    /// Advances by dt (CFL substepping inside), syncing kernels after every substep.
    mpm::StepReport advance(double dt);

    [[nodiscard]] const std::vector<GaussianKernel>& kernels() const { return kernels_; }
    [[nodiscard]] const mpm::MpmState& state() const { return state_; }
    [[nodiscard]] const Binding& binding() const { return binding_; }
    [[nodiscard]] double time() const { return state_.time; }

private:
    std::vector<GaussianKernel> kernels_;
    Binding binding_;
    mpm::MpmState state_;
    SimulationSetup setup_;
};

} // namespace physgs::kinematics
