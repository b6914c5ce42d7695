#pragma once

#include "physgs/core.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace physgs::mpm {

enum class Elasticity { FixedCorotated, NeoHookean, StVK };
enum class Plasticity { None, VonMises, DruckerPrager };

/// Elasticity energy, plasticity return mapping and material parameters.
struct ConstitutiveModel {
    Elasticity elasticity = Elasticity::FixedCorotated;
    double youngs_modulus = 1e5; // Pa
    double poisson_ratio = 0.3;
    double density = 1000.0; // kg/m^3
    Plasticity plasticity = Plasticity::None;
    double yield_stress = 1e3;     // von Mises, Pa
    double friction_angle = 30.0;  // Drucker-Prager, degrees
    double cohesion = 0.0;         // Drucker-Prager, Hencky-strain shift
    /// Fixed-corotated only: clamp singular values of inverted F instead of failing.
    bool clamp_inverted = true;

    [[nodiscard]] double mu() const;
    [[nodiscard]] double lambda() const;
    /// Dilatational wave speed sqrt((lambda + 2 mu) / rho).
    [[nodiscard]] double wave_speed() const;
    /// Drucker-Prager friction coefficient sqrt(2/3) 2 sin(phi) / (3 - sin(phi)).
    [[nodiscard]] double friction_coefficient() const;

    /// Throws ValidationError listing the violated parameter ranges.
    void validate() const;

    /// Named presets: elastic, plasticine (alias viscoplastic), sand (alias
    /// granular), rigid, fracture. Parameter values are documented defaults,
    /// not measured material constants.
    static ConstitutiveModel preset(std::string_view name);
    static std::vector<std::string> preset_names();
};

Elasticity parse_elasticity(std::string_view name);
Plasticity parse_plasticity(std::string_view name);

/// Strain energy density Psi(F).
double energy_density(const Mat3& F, const ConstitutiveModel& model);

/// First Piola-Kirchhoff stress dPsi/dF.
Mat3 first_piola(const Mat3& F, const ConstitutiveModel& model);

/// Kirchhoff stress tau = (dPsi/dF) F^T, the quantity scattered by P2G.
Mat3 kirchhoff_stress(const Mat3& F, const ConstitutiveModel& model);

struct ReturnMapResult {
    Mat3 elastic;
    double plastic_state;
};

/// Projects a trial deformation gradient onto the admissible set. `plastic_state`
/// accumulates the plastic multiplier.
ReturnMapResult return_map(const Mat3& F_trial, const ConstitutiveModel& model, double plastic_state = 0.0);

/// Yield function value in Hencky-strain space; <= 0 means admissible. Always 0
/// for models without plasticity.
double yield_function(const Mat3& F, const ConstitutiveModel& model);

/// SVD with U, V proper rotations; the last singular value carries the sign of det F.
struct RotationSvd {
    Mat3 U;
    Vec3 sigma;
    Mat3 V;
};
RotationSvd rotation_svd(const Mat3& F);

} // namespace physgs::mpm
