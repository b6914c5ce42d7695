#include "physgs/gaussians.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace physgs {

namespace {

bool spd(const Mat3& m)
{
    if (!m.allFinite()) {
        return false;
    }
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
        return false;
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(m, Eigen::EigenvaluesOnly);
    const Vec3 ev = eig.eigenvalues();
    return ev(2) > 0.0 && ev(0) > 1e-12 * ev(2);
}

Mat3 symmetrized(const Mat3& m) { return 0.5 * (m + m.transpose()); }

} // namespace

GaussianKernel GaussianKernel::make(const Vec3& center, double opacity, const Mat3& covariance, const Vec3& color,
                                    const Mat3& deformation)
{
    GaussianKernel k;
    k.center = center;
    k.rest_center = center;
    k.opacity = opacity;
    k.covariance = symmetrized(covariance);
    k.color = color;
    k.deformation = deformation;
    k.reset_world_covariance();
    return k;
}

void GaussianKernel::reset_world_covariance()
{
    world_covariance = symmetrized(deformation * covariance * deformation.transpose());
}

bool GaussianKernel::finite() const
{
    return center.allFinite() && std::isfinite(opacity) && covariance.allFinite() && color.allFinite() &&
           rest_center.allFinite() && deformation.allFinite() && world_covariance.allFinite();
}

void GaussianKernel::validate(std::size_t index) const
{
    const std::string where = "kernel " + std::to_string(index) + ": ";
    if (!finite()) {
        throw Error(where + "non-finite value");
    }
    if (opacity < 0.0 || opacity > 1.0) {
        throw Error(where + "opacity outside [0, 1]");
    }
    if ((color.array() < 0.0).any() || (color.array() > 1.0).any()) {
        throw Error(where + "color outside [0, 1]");
    }
    if (!spd(covariance) || !spd(world_covariance)) {
        throw Error(where + "covariance is not symmetric positive definite");
    }
    if (!(deformation.determinant() > 0.0)) {
        throw Error(where + "deformation gradient has det <= 0");
    }
}

} // namespace physgs
