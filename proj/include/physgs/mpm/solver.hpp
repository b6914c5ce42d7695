#pragma once

#include "physgs/core.hpp"
#include "physgs/mpm/constitutive.hpp"
#include "physgs/mpm/grid.hpp"

#include <limits>
#include <span>
#include <vector>

namespace physgs::mpm {

struct Particle {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    double mass = 1.0;
    double rest_volume = 1.0;
    Mat3 deformation = Mat3::Identity();
    /// APIC affine velocity matrix.
    Mat3 affine = Mat3::Zero();
    /// Velocity gradient sum_i v_i grad(w_ip)^T from the last G2P.
    Mat3 velocity_gradient = Mat3::Zero();
    double plastic_state = 0.0;
    int material = 0;
};

/// Region of space a load applies to.
struct Region {
    enum class Kind { All, Sphere, Box };
    Kind kind = Kind::All;
    Vec3 center = Vec3::Zero();
    double radius = 0.0;
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    [[nodiscard]] bool contains(const Vec3& x) const;
    void validate() const;
};

/// External load active during [t_begin, t_end].
///
/// - Gravity: `vector` is an acceleration applied to every active node.
/// - PointForce: `vector` is a force density (N/m^3) on particles in the region.
/// - Torque: `vector` is the torque; particle p in the region receives
///   tau x (x_p - c) / sum_q |x_q - c|^2 with c = `center`.
/// - Velocity: particles in the region have their velocity set to `vector`.
struct ExternalLoad {
    enum class Kind { Gravity, PointForce, Torque, Velocity };
    Kind kind = Kind::Gravity;
    Vec3 vector = Vec3::Zero();
    Vec3 center = Vec3::Zero();
    Region region;
    double t_begin = 0.0;
    double t_end = std::numeric_limits<double>::infinity();

    [[nodiscard]] bool active(double t) const { return t >= t_begin && t <= t_end; }
    void validate() const;
};

struct Collider {
    enum class Kind { Plane, Box };
    enum class Mode { Sticky, Separating };
    Kind kind = Kind::Plane;
    Mode mode = Mode::Separating;
    /// Plane: a point on the plane and its outward (free-side) normal.
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::UnitY();
    /// Box obstacle bounds.
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
    double friction = 0.0;
};

enum class Transfer { APIC, PIC };

struct MpmConfig {
    Transfer transfer = Transfer::APIC;
    /// dt <= cfl * h / (c + max|v_p|).
    double cfl = 0.3;
    /// Nodes within `wall_cells` of the grid boundary act as separating walls.
    bool domain_walls = true;
    int wall_cells = 3;
    Exec exec = Exec::Parallel;
};

struct MpmState {
    std::vector<Particle> particles;
    std::vector<ConstitutiveModel> materials;
    Grid grid;
    double time = 0.0;

    void validate() const;
    [[nodiscard]] double total_mass() const;
    [[nodiscard]] Vec3 total_momentum() const;
};

/// Largest stable time step for the current state.
double cfl_timestep(const MpmState& state, const MpmConfig& config);

/// Particle-to-grid transfer followed by the forward-Euler grid momentum
/// update; leaves post-update node velocities in `state.grid`.
void p2g(MpmState& state, double dt, std::span<const ExternalLoad> loads, const MpmConfig& config);

/// Applies colliders (and domain walls when enabled) to grid velocities.
void grid_boundary(Grid& grid, std::span<const Collider> colliders, const MpmConfig& config);

/// Grid-to-particle transfer: velocities, positions, velocity gradients and
/// deformation gradients with plasticity return mapping.
void g2p(MpmState& state, double dt, const MpmConfig& config);

/// Applies velocity-type loads active at the current time.
void apply_velocity_loads(MpmState& state, std::span<const ExternalLoad> loads);

struct StepReport {
    int substeps = 1;
    bool cfl_limited = false;
};

/// One single-dt step: velocity loads, p2g, grid_boundary, g2p; advances time.
void substep(MpmState& state, double dt, std::span<const ExternalLoad> loads, std::span<const Collider> colliders,
             const MpmConfig& config);

/// Advances by dt, splitting into equal substeps when dt exceeds the CFL bound.
/// `on_substep` (optional) runs after each substep with the substep size.
template <class OnSubstep>
StepReport step(MpmState& state, double dt, std::span<const ExternalLoad> loads,
                std::span<const Collider> colliders, const MpmConfig& config, OnSubstep&& on_substep);

StepReport step(MpmState& state, double dt, std::span<const ExternalLoad> loads,
                std::span<const Collider> colliders, const MpmConfig& config);

} // namespace physgs::mpm

#include "physgs/mpm/solver_impl.hpp"
