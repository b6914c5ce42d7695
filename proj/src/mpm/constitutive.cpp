#include "physgs/mpm/constitutive.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace physgs::mpm {

double ConstitutiveModel::mu() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }

double ConstitutiveModel::lambda() const
{
    return youngs_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
}

double ConstitutiveModel::wave_speed() const { return std::sqrt((lambda() + 2.0 * mu()) / density); }

double ConstitutiveModel::friction_coefficient() const
{
    const double s = std::sin(friction_angle * std::numbers::pi / 180.0);
    return std::sqrt(2.0 / 3.0) * 2.0 * s / (3.0 - s);
}

void ConstitutiveModel::validate() const
{
    std::string errors;
    if (!(youngs_modulus > 0.0)) {
        errors += " youngs_modulus must be > 0;";
    }
    if (!(poisson_ratio > 0.0 && poisson_ratio < 0.5)) {
        errors += " poisson_ratio must lie in (0, 0.5);";
    }
    if (!(density > 0.0)) {
        errors += " density must be > 0;";
    }
    if (plasticity == Plasticity::VonMises && !(yield_stress > 0.0)) {
        errors += " yield_stress must be > 0 for von-mises;";
    }
    if (plasticity == Plasticity::DruckerPrager && !(friction_angle > 0.0 && friction_angle < 90.0)) {
        errors += " friction_angle must lie in (0, 90) degrees for drucker-prager;";
    }
    if (plasticity == Plasticity::DruckerPrager && !(cohesion >= 0.0)) {
        errors += " cohesion must be >= 0;";
    }
    if (!errors.empty()) {
        throw ValidationError("invalid material:" + errors);
    }
}

ConstitutiveModel ConstitutiveModel::preset(std::string_view name)
{
    ConstitutiveModel m;
    if (name == "elastic") {
        m.youngs_modulus = 1e5;
        m.poisson_ratio = 0.3;
        m.density = 1000.0;
    } else if (name == "plasticine" || name == "viscoplastic") {
        m.youngs_modulus = 2e5;
        m.poisson_ratio = 0.3;
        m.density = 1000.0;
        m.plasticity = Plasticity::VonMises;
        m.yield_stress = 3e3;
    } else if (name == "sand" || name == "granular") {
        m.youngs_modulus = 2e5;
        m.poisson_ratio = 0.3;
        m.density = 1500.0;
        m.plasticity = Plasticity::DruckerPrager;
        m.friction_angle = 30.0;
        m.cohesion = 0.0;
    } else if (name == "rigid") {
        m.youngs_modulus = 1e8;
        m.poisson_ratio = 0.3;
        m.density = 1000.0;
    } else if (name == "fracture") {
        m.youngs_modulus = 5e5;
        m.poisson_ratio = 0.3;
        m.density = 1000.0;
        m.plasticity = Plasticity::DruckerPrager;
        m.friction_angle = 40.0;
        m.cohesion = 0.0;
    } else {
        throw ValidationError("unknown material preset '" + std::string(name) + "'");
    }
    return m;
}

std::vector<std::string> ConstitutiveModel::preset_names()
{
    return {"elastic", "plasticine", "viscoplastic", "sand", "granular", "rigid", "fracture"};
}

Elasticity parse_elasticity(std::string_view name)
{
    if (name == "fixed-corotated") {
        return Elasticity::FixedCorotated;
    }
    if (name == "neo-hookean") {
        return Elasticity::NeoHookean;
    }
    if (name == "stvk") {
        return Elasticity::StVK;
    }
    throw ValidationError("unknown elasticity '" + std::string(name) + "'");
}

Plasticity parse_plasticity(std::string_view name)
{
    if (name == "none") {
        return Plasticity::None;
    }
    if (name == "von-mises") {
        return Plasticity::VonMises;
    }
    if (name == "drucker-prager") {
        return Plasticity::DruckerPrager;
    }
    throw ValidationError("unknown plasticity '" + std::string(name) + "'");
}

RotationSvd rotation_svd(const Mat3& F)
{
    Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
    RotationSvd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
    if (out.U.determinant() < 0.0) {
        out.U.col(2) *= -1.0;
        out.sigma(2) *= -1.0;
    }
    if (out.V.determinant() < 0.0) {
        out.V.col(2) *= -1.0;
        out.sigma(2) *= -1.0;
    }
    return out;
}

namespace {

/// Returns F itself, or its clamped reconstruction for an inverted fixed-corotated element.
Mat3 admissible(const Mat3& F, const ConstitutiveModel& model)
{
    const double J = F.determinant();
    if (J > 0.0) {
        return F;
    }
    if (model.elasticity == Elasticity::FixedCorotated && model.clamp_inverted) {
        RotationSvd s = rotation_svd(F);
        s.sigma = s.sigma.cwiseMax(0.05);
        return s.U * s.sigma.asDiagonal() * s.V.transpose();
    }
    throw Error("deformation gradient with det F = " + std::to_string(J) + " <= 0");
}

Mat3 polar_rotation(const Mat3& F)
{
    const RotationSvd s = rotation_svd(F);
    return s.U * s.V.transpose();
}

} // namespace

double energy_density(const Mat3& F_in, const ConstitutiveModel& model)
{
    const Mat3 F = admissible(F_in, model);
    const double mu = model.mu();
    const double la = model.lambda();
    const double J = F.determinant();
    switch (model.elasticity) {
    case Elasticity::FixedCorotated: {
        const Mat3 R = polar_rotation(F);
        return mu * (F - R).squaredNorm() + 0.5 * la * (J - 1.0) * (J - 1.0);
    }
    case Elasticity::NeoHookean: {
        const double logJ = std::log(J);
        return 0.5 * mu * (F.squaredNorm() - 3.0) - mu * logJ + 0.5 * la * logJ * logJ;
    }
    case Elasticity::StVK: {
        const Mat3 E = 0.5 * (F.transpose() * F - Mat3::Identity());
        const double tr = E.trace();
        return mu * E.squaredNorm() + 0.5 * la * tr * tr;
    }
    }
    return 0.0;
}

Mat3 first_piola(const Mat3& F_in, const ConstitutiveModel& model)
{
    const Mat3 F = admissible(F_in, model);
    const double mu = model.mu();
    const double la = model.lambda();
    const double J = F.determinant();
    switch (model.elasticity) {
    case Elasticity::FixedCorotated: {
        const Mat3 R = polar_rotation(F);
        // d det(F)/dF = J F^{-T}, written via the cofactor to stay valid near J = 0.
        Mat3 cof;
        cof.col(0) = F.col(1).cross(F.col(2));
        cof.col(1) = F.col(2).cross(F.col(0));
        cof.col(2) = F.col(0).cross(F.col(1));
        return 2.0 * mu * (F - R) + la * (J - 1.0) * cof;
    }
    case Elasticity::NeoHookean: {
        const Mat3 FinvT = F.inverse().transpose();
        return mu * (F - FinvT) + la * std::log(J) * FinvT;
    }
    case Elasticity::StVK: {
        const Mat3 E = 0.5 * (F.transpose() * F - Mat3::Identity());
        return F * (2.0 * mu * E + la * E.trace() * Mat3::Identity());
    }
    }
    return Mat3::Zero();
}

Mat3 kirchhoff_stress(const Mat3& F_in, const ConstitutiveModel& model)
{
    const Mat3 F = admissible(F_in, model);
    const double mu = model.mu();
    const double la = model.lambda();
    const double J = F.determinant();
    switch (model.elasticity) {
    case Elasticity::FixedCorotated: {
        const Mat3 R = polar_rotation(F);
        return 2.0 * mu * (F - R) * F.transpose() + la * (J - 1.0) * J * Mat3::Identity();
    }
    case Elasticity::NeoHookean:
        return mu * (F * F.transpose() - Mat3::Identity()) + la * std::log(J) * Mat3::Identity();
    case Elasticity::StVK:
        return first_piola(F, model) * F.transpose();
    }
    return Mat3::Zero();
}

namespace {

Vec3 hencky(const Vec3& sigma) { return sigma.cwiseAbs().cwiseMax(1e-4).array().log().matrix(); }

Vec3 deviatoric(const Vec3& eps) { return eps - Vec3::Constant(eps.sum() / 3.0); }

} // namespace

ReturnMapResult return_map(const Mat3& F_trial, const ConstitutiveModel& model, double plastic_state)
{
    if (model.plasticity == Plasticity::None) {
        return {F_trial, plastic_state};
    }
    const RotationSvd s = rotation_svd(F_trial);
    const double mu = model.mu();

    if (model.plasticity == Plasticity::VonMises) {
        const Vec3 eps = hencky(s.sigma);
        const Vec3 dev = deviatoric(eps);
        const double dev_norm = dev.norm();
        const double excess = dev_norm - model.yield_stress / (2.0 * mu);
        if (excess <= 0.0) {
            return {F_trial, plastic_state};
        }
        const Vec3 projected = eps - (excess / dev_norm) * dev;
        const Vec3 sig = projected.array().exp().matrix();
        return {s.U * sig.asDiagonal() * s.V.transpose(), plastic_state + excess};
    }

    // Drucker-Prager, cohesion applied as a shift of the Hencky strain.
    const Vec3 eps = hencky(s.sigma) - Vec3::Constant(model.cohesion);
    const double trace = eps.sum();
    if (trace >= 0.0) {
        // Tension: project to the cone tip.
        const Mat3 tip = s.U * std::exp(model.cohesion) * s.V.transpose();
        return {tip, plastic_state + eps.norm()};
    }
    const Vec3 dev = deviatoric(eps);
    const double dev_norm = dev.norm();
    const double la = model.lambda();
    const double dgamma = dev_norm + (3.0 * la + 2.0 * mu) / (2.0 * mu) * trace * model.friction_coefficient();
    if (dgamma <= 0.0) {
        return {F_trial, plastic_state};
    }
    const Vec3 projected = eps - (dgamma / dev_norm) * dev + Vec3::Constant(model.cohesion);
    const Vec3 sig = projected.array().exp().matrix();
    return {s.U * sig.asDiagonal() * s.V.transpose(), plastic_state + dgamma};
}

double yield_function(const Mat3& F, const ConstitutiveModel& model)
{
    if (model.plasticity == Plasticity::None) {
        return 0.0;
    }
    const RotationSvd s = rotation_svd(F);
    if (model.plasticity == Plasticity::VonMises) {
        return deviatoric(hencky(s.sigma)).norm() - model.yield_stress / (2.0 * model.mu());
    }
    const Vec3 eps = hencky(s.sigma) - Vec3::Constant(model.cohesion);
    const double trace = eps.sum();
    const double mu = model.mu();
    const double cone = deviatoric(eps).norm() +
                        (3.0 * model.lambda() + 2.0 * mu) / (2.0 * mu) * trace * model.friction_coefficient();
    return std::max(cone, trace);
}

} // namespace physgs::mpm
