#pragma once

#include <cmath>
#include <string>

namespace physgs::mpm {

template <class OnSubstep>
StepReport step(MpmState& state, double dt, std::span<const ExternalLoad> loads,
                std::span<const Collider> colliders, const MpmConfig& config, OnSubstep&& on_substep)
{
    StepReport report;
    if (!(dt >= 0.0)) {
        throw Error("step: dt must be >= 0");
    }
    if (dt == 0.0) {
        return report;
    }
    double remaining = dt;
    double limit = cfl_timestep(state, config);
    if (dt > limit) {
        report.cfl_limited = true;
        warn("dt = " + std::to_string(dt) + " exceeds the CFL bound " + std::to_string(limit) +
             "; substepping");
    }
    report.substeps = 0;
    // Re-evaluate the bound each substep since max|v_p| changes.
    while (remaining > 0.0) {
        const int left = static_cast<int>(std::ceil(remaining / limit - 1e-12));
        const double h = left <= 1 ? remaining : remaining / left;
        substep(state, h, loads, colliders, config);
        on_substep(h);
        remaining = left <= 1 ? 0.0 : remaining - h;
        ++report.substeps;
        if (remaining > 0.0) {
            limit = cfl_timestep(state, config);
        }
    }
    return report;
}

} // namespace physgs::mpm
