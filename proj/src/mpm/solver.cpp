#include "physgs/mpm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace physgs::mpm {

bool Region::contains(const Vec3& x) const
{
    switch (kind) {
    case Kind::All:
        return true;
    case Kind::Sphere:
        return (x - center).squaredNorm() <= radius * radius;
    case Kind::Box:
        return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
    }
    return false;
}

void Region::validate() const
{
    if (kind == Kind::Sphere && !(radius > 0.0)) {
        throw ValidationError("sphere region needs radius > 0");
    }
    if (kind == Kind::Box && !(hi.array() > lo.array()).all()) {
        throw ValidationError("box region needs hi > lo on every axis");
    }
}

void ExternalLoad::validate() const
{
    region.validate();
    if (!(t_begin <= t_end)) {
        throw ValidationError("load time window needs t_begin <= t_end");
    }
    if (!vector.allFinite() || !center.allFinite()) {
        throw ValidationError("load has non-finite parameters");
    }
}

void MpmState::validate() const
{
    grid.validate();
    if (materials.empty()) {
        throw ValidationError("simulation has no materials");
    }
    for (const auto& m : materials) {
        m.validate();
    }
    for (std::size_t p = 0; p < particles.size(); ++p) {
        const Particle& q = particles[p];
        if (!(q.mass > 0.0) || !(q.rest_volume > 0.0)) {
            throw ValidationError("particle " + std::to_string(p) + " needs positive mass and volume");
        }
        if (q.material < 0 || q.material >= static_cast<int>(materials.size())) {
            throw ValidationError("particle " + std::to_string(p) + " has an unknown material id");
        }
    }
}

double MpmState::total_mass() const
{
    double m = 0.0;
    for (const auto& p : particles) {
        m += p.mass;
    }
    return m;
}

Vec3 MpmState::total_momentum() const
{
    Vec3 m = Vec3::Zero();
    for (const auto& p : particles) {
        m += p.mass * p.velocity;
    }
    return m;
}

double cfl_timestep(const MpmState& state, const MpmConfig& config)
{
    double c = 0.0;
    for (const auto& m : state.materials) {
        c = std::max(c, m.wave_speed());
    }
    double vmax = 0.0;
    for (const auto& p : state.particles) {
        vmax = std::max(vmax, p.velocity.norm());
    }
    const double speed = c + vmax;
    if (!(speed > 0.0)) {
        return std::numeric_limits<double>::infinity();
    }
    return config.cfl * state.grid.spacing / speed;
}

namespace {

struct ParticleScratch {
    Stencil stencil;
    Mat3 stress_term; // -V0 tau
    Vec3 external;    // external force on the particle (N)
};

double mass_epsilon(const std::vector<Particle>& particles)
{
    if (particles.empty()) {
        return 0.0;
    }
    std::vector<double> m(particles.size());
    std::transform(particles.begin(), particles.end(), m.begin(), [](const Particle& p) { return p.mass; });
    auto mid = m.begin() + static_cast<std::ptrdiff_t>(m.size() / 2);
    std::nth_element(m.begin(), mid, m.end());
    return 1e-12 * *mid;
}

/// Scatters one particle into the grid; `momentum` and `force` are node arrays.
void scatter(const Particle& p, const ParticleScratch& s, const Grid& grid, bool apic, std::vector<double>& mass,
             std::vector<Vec3>& momentum, std::vector<Vec3>& force)
{
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            for (int c = 0; c < 3; ++c) {
                const int i = s.stencil.base[0] + a;
                const int j = s.stencil.base[1] + b;
                const int k = s.stencil.base[2] + c;
                const std::size_t n = grid.index(i, j, k);
                const double w = s.stencil.weight(a, b, c);
                Vec3 v = p.velocity;
                if (apic) {
                    v += p.affine * (grid.node_position(i, j, k) - p.position);
                }
                mass[n] += w * p.mass;
                momentum[n] += (w * p.mass) * v;
                force[n] += s.stress_term * s.stencil.gradient(a, b, c) + w * s.external;
            }
        }
    }
}

} // namespace

void p2g(MpmState& state, double dt, std::span<const ExternalLoad> loads, const MpmConfig& config)
{
    Grid& grid = state.grid;
    const auto np = static_cast<std::ptrdiff_t>(state.particles.size());
    const bool parallel = config.exec == Exec::Parallel;

    // Torque normalizers per load.
    std::vector<double> torque_norm(loads.size(), 0.0);
    for (std::size_t l = 0; l < loads.size(); ++l) {
        if (loads[l].kind != ExternalLoad::Kind::Torque || !loads[l].active(state.time)) {
            continue;
        }
        for (const auto& p : state.particles) {
            if (loads[l].region.contains(p.position)) {
                torque_norm[l] += (p.position - loads[l].center).squaredNorm();
            }
        }
    }

    std::vector<ParticleScratch> scratch(state.particles.size());
    std::string failure;
    auto prepare = [&](std::ptrdiff_t i) {
        const Particle& p = state.particles[i];
        ParticleScratch& s = scratch[i];
        s.stencil = bspline_weights(p.position, grid, static_cast<std::size_t>(i));
        const ConstitutiveModel& model = state.materials[p.material];
        s.stress_term = -p.rest_volume * kirchhoff_stress(p.deformation, model);
        s.external = Vec3::Zero();
        for (std::size_t l = 0; l < loads.size(); ++l) {
            const ExternalLoad& load = loads[l];
            if (!load.active(state.time) || !load.region.contains(p.position)) {
                continue;
            }
            if (load.kind == ExternalLoad::Kind::PointForce) {
                s.external += p.rest_volume * load.vector;
            } else if (load.kind == ExternalLoad::Kind::Torque && torque_norm[l] > 0.0) {
                s.external += load.vector.cross(p.position - load.center) / torque_norm[l];
            }
        }
    };

    if (parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < np; ++i) {
            try {
                prepare(i);
            } catch (const std::exception& e) {
#pragma omp critical(physgs_p2g_error)
                if (failure.empty()) {
                    failure = e.what();
                }
            }
        }
        if (!failure.empty()) {
            throw Error(failure);
        }
    } else {
        for (std::ptrdiff_t i = 0; i < np; ++i) {
            prepare(i);
        }
    }

    grid.clear();
    std::vector<Vec3> force(grid.node_count(), Vec3::Zero());
    std::vector<Vec3>& momentum = grid.velocity;
    const bool apic = config.transfer == Transfer::APIC;

    if (!parallel) {
        for (std::ptrdiff_t i = 0; i < np; ++i) {
            scatter(state.particles[i], scratch[i], grid, apic, grid.mass, momentum, force);
        }
    } else {
        // Colored blocks: particles are binned by the block of their stencil base
        // node. A stencil spans block_size + 2 nodes, so blocks of equal color
        // (same parity per axis, 2 * block_size apart) never share a node. Each
        // node therefore receives contributions in a fixed order, independent of
        // the thread count.
        constexpr int block_size = 4;
        std::array<int, 3> nb{};
        for (int a = 0; a < 3; ++a) {
            nb[a] = (grid.dims[a] + block_size - 1) / block_size;
        }
        const std::size_t block_count = static_cast<std::size_t>(nb[0]) * nb[1] * nb[2];
        std::vector<std::size_t> block_of(state.particles.size());
        std::vector<std::size_t> start(block_count + 1, 0);
        for (std::ptrdiff_t i = 0; i < np; ++i) {
            const auto& b = scratch[i].stencil.base;
            const std::size_t id =
                (static_cast<std::size_t>(b[0] / block_size) * nb[1] + b[1] / block_size) * nb[2] + b[2] / block_size;
            block_of[i] = id;
            ++start[id + 1];
        }
        for (std::size_t b = 0; b < block_count; ++b) {
            start[b + 1] += start[b];
        }
        std::vector<std::size_t> order(state.particles.size());
        {
            std::vector<std::size_t> fill(start.begin(), start.end() - 1);
            for (std::ptrdiff_t i = 0; i < np; ++i) {
                order[fill[block_of[i]]++] = static_cast<std::size_t>(i);
            }
        }
        for (int color = 0; color < 8; ++color) {
            std::vector<std::size_t> blocks;
            for (int bi = color & 1; bi < nb[0]; bi += 2) {
                for (int bj = (color >> 1) & 1; bj < nb[1]; bj += 2) {
                    for (int bk = (color >> 2) & 1; bk < nb[2]; bk += 2) {
                        const std::size_t id = (static_cast<std::size_t>(bi) * nb[1] + bj) * nb[2] + bk;
                        if (start[id + 1] > start[id]) {
                            blocks.push_back(id);
                        }
                    }
                }
            }
            const auto nblocks = static_cast<std::ptrdiff_t>(blocks.size());
#pragma omp parallel for schedule(dynamic, 1)
            for (std::ptrdiff_t bb = 0; bb < nblocks; ++bb) {
                const std::size_t id = blocks[bb];
                for (std::size_t o = start[id]; o < start[id + 1]; ++o) {
                    const std::size_t i = order[o];
                    scatter(state.particles[i], scratch[i], grid, apic, grid.mass, momentum, force);
                }
            }
        }
    }

    // Forward-Euler momentum update on every node.
    const double eps = mass_epsilon(state.particles);
    Vec3 gravity = Vec3::Zero();
    for (const auto& load : loads) {
        if (load.kind == ExternalLoad::Kind::Gravity && load.active(state.time)) {
            gravity += load.vector;
        }
    }
    const auto nn = static_cast<std::ptrdiff_t>(grid.node_count());
    auto update = [&](std::ptrdiff_t n) {
        const double m = grid.mass[n];
        if (m < eps || m <= 0.0) {
            grid.velocity[n] = Vec3::Zero();
            return;
        }
        grid.velocity[n] = (momentum[n] + dt * (force[n] + m * gravity)) / m;
    };
    if (parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t n = 0; n < nn; ++n) {
            update(n);
        }
    } else {
        for (std::ptrdiff_t n = 0; n < nn; ++n) {
            update(n);
        }
    }
}

namespace {

void apply_collider(const Collider& col, const Vec3& x, Vec3& v)
{
    Vec3 n;
    if (col.kind == Collider::Kind::Plane) {
        n = col.normal.normalized();
        if ((x - col.point).dot(n) > 0.0) {
            return;
        }
    } else {
        if (!((x.array() >= col.lo.array()).all() && (x.array() <= col.hi.array()).all())) {
            return;
        }
        // Normal of the nearest face.
        const Vec3 to_lo = x - col.lo;
        const Vec3 to_hi = col.hi - x;
        double best = std::numeric_limits<double>::infinity();
        n = Vec3::Zero();
        for (int a = 0; a < 3; ++a) {
            if (to_lo(a) < best) {
                best = to_lo(a);
                n = -Vec3::Unit(a);
            }
            if (to_hi(a) < best) {
                best = to_hi(a);
                n = Vec3::Unit(a);
            }
        }
    }
    if (col.mode == Collider::Mode::Sticky) {
        v.setZero();
        return;
    }
    const double vn = v.dot(n);
    if (vn >= 0.0) {
        return;
    }
    Vec3 vt = v - vn * n;
    if (col.friction > 0.0) {
        const double vt_norm = vt.norm();
        const double reduce = col.friction * (-vn);
        vt = vt_norm > reduce ? Vec3(vt * (1.0 - reduce / vt_norm)) : Vec3(Vec3::Zero());
    }
    v = vt;
}

} // namespace

void grid_boundary(Grid& grid, std::span<const Collider> colliders, const MpmConfig& config)
{
    const auto nn = static_cast<std::ptrdiff_t>(grid.node_count());
    auto apply = [&](std::ptrdiff_t n) {
        if (grid.mass[n] <= 0.0) {
            return;
        }
        const auto ijk = grid.node_coords(static_cast<std::size_t>(n));
        Vec3& v = grid.velocity[n];
        const Vec3 x = grid.node_position(ijk[0], ijk[1], ijk[2]);
        for (const auto& c : colliders) {
            apply_collider(c, x, v);
        }
        if (config.domain_walls) {
            for (int a = 0; a < 3; ++a) {
                if (ijk[a] < config.wall_cells && v(a) < 0.0) {
                    v(a) = 0.0;
                }
                if (ijk[a] >= grid.dims[a] - config.wall_cells && v(a) > 0.0) {
                    v(a) = 0.0;
                }
            }
        }
    };
    if (config.exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t n = 0; n < nn; ++n) {
            apply(n);
        }
    } else {
        for (std::ptrdiff_t n = 0; n < nn; ++n) {
            apply(n);
        }
    }
}

void g2p(MpmState& state, double dt, const MpmConfig& config)
{
    const Grid& grid = state.grid;
    const double d_inv = 4.0 / (grid.spacing * grid.spacing);
    const bool apic = config.transfer == Transfer::APIC;
    const auto np = static_cast<std::ptrdiff_t>(state.particles.size());
    std::string failure;

    auto gather = [&](std::ptrdiff_t i) {
        Particle& p = state.particles[i];
        const Stencil s = bspline_weights(p.position, grid, static_cast<std::size_t>(i));
        Vec3 v = Vec3::Zero();
        Mat3 b = Mat3::Zero();
        Mat3 grad = Mat3::Zero();
        for (int a = 0; a < 3; ++a) {
            for (int bb = 0; bb < 3; ++bb) {
                for (int c = 0; c < 3; ++c) {
                    const int gi = s.base[0] + a;
                    const int gj = s.base[1] + bb;
                    const int gk = s.base[2] + c;
                    const Vec3& vi = grid.velocity[grid.index(gi, gj, gk)];
                    const double w = s.weight(a, bb, c);
                    v += w * vi;
                    grad += vi * s.gradient(a, bb, c).transpose();
                    if (apic) {
                        b += w * vi * (grid.node_position(gi, gj, gk) - p.position).transpose();
                    }
                }
            }
        }
        p.velocity = v;
        p.affine = apic ? Mat3(d_inv * b) : Mat3::Zero();
        p.velocity_gradient = grad;
        p.position += dt * v;
        const Mat3 trial = (Mat3::Identity() + dt * grad) * p.deformation;
        const ReturnMapResult r = return_map(trial, state.materials[p.material], p.plastic_state);
        p.deformation = r.elastic;
        p.plastic_state = r.plastic_state;
    };

    if (config.exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < np; ++i) {
            try {
                gather(i);
            } catch (const std::exception& e) {
#pragma omp critical(physgs_g2p_error)
                if (failure.empty()) {
                    failure = e.what();
                }
            }
        }
        if (!failure.empty()) {
            throw Error(failure);
        }
    } else {
        for (std::ptrdiff_t i = 0; i < np; ++i) {
            gather(i);
        }
    }
}

void apply_velocity_loads(MpmState& state, std::span<const ExternalLoad> loads)
{
    for (const auto& load : loads) {
        if (load.kind != ExternalLoad::Kind::Velocity || !load.active(state.time)) {
            continue;
        }
        for (auto& p : state.particles) {
            if (load.region.contains(p.position)) {
                p.velocity = load.vector;
                p.affine.setZero();
            }
        }
    }
}

void substep(MpmState& state, double dt, std::span<const ExternalLoad> loads, std::span<const Collider> colliders,
             const MpmConfig& config)
{
    apply_velocity_loads(state, loads);
    p2g(state, dt, loads, config);
    grid_boundary(state.grid, colliders, config);
    g2p(state, dt, config);
    state.time += dt;
}

StepReport step(MpmState& state, double dt, std::span<const ExternalLoad> loads,
                std::span<const Collider> colliders, const MpmConfig& config)
{
    return step(state, dt, loads, colliders, config, [](double) {});
}

} // namespace physgs::mpm
