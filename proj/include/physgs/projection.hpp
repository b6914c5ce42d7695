#pragma once

// Scalar-generic EWA projection so the same code path serves the renderer
// (double) and the gradient chain rule (Eigen::AutoDiffScalar).

#include "physgs/camera.hpp"

#include <cmath>

namespace physgs {

template <class T>
struct ProjectionT {
    Eigen::Matrix<T, 2, 1> mean;
    Eigen::Matrix<T, 2, 2> covariance;
    /// Inverse of `covariance` stored as (a, b, c) for [[a, b], [b, c]].
    Eigen::Matrix<T, 3, 1> conic;
    /// Euclidean distance from the camera center.
    T distance;
    /// Camera-frame z.
    T camera_z;
};

/// Projects a world-space Gaussian (center, covariance) with the local affine
/// approximation of the pinhole map. `floor` is added to the 2D covariance
/// diagonal before inversion. Caller must ensure camera_z > 0.
template <class T>
ProjectionT<T> project_gaussian(const Eigen::Matrix<T, 3, 1>& center, const Eigen::Matrix<T, 3, 3>& world_cov,
                                const Camera& cam, double floor)
{
    using std::sqrt;
    const Eigen::Matrix<T, 3, 3> r_wc = cam.rotation.transpose().template cast<T>();
    const Eigen::Matrix<T, 3, 1> rel = center - cam.center.template cast<T>();
    const Eigen::Matrix<T, 3, 1> pc = r_wc * rel;

    ProjectionT<T> out;
    out.camera_z = pc(2);
    const T inv_z = T(1.0) / pc(2);
    out.mean(0) = T(cam.fx) * pc(0) * inv_z + T(cam.cx);
    out.mean(1) = T(cam.fy) * pc(1) * inv_z + T(cam.cy);

    Eigen::Matrix<T, 2, 3> jac;
    jac(0, 0) = T(cam.fx) * inv_z;
    jac(0, 1) = T(0.0);
    jac(0, 2) = -T(cam.fx) * pc(0) * inv_z * inv_z;
    jac(1, 0) = T(0.0);
    jac(1, 1) = T(cam.fy) * inv_z;
    jac(1, 2) = -T(cam.fy) * pc(1) * inv_z * inv_z;

    const Eigen::Matrix<T, 2, 3> m = jac * r_wc;
    out.covariance = m * world_cov * m.transpose();
    out.covariance(0, 1) = T(0.5) * (out.covariance(0, 1) + out.covariance(1, 0));
    out.covariance(1, 0) = out.covariance(0, 1);
    out.covariance(0, 0) += T(floor);
    out.covariance(1, 1) += T(floor);

    const T det = out.covariance(0, 0) * out.covariance(1, 1) - out.covariance(0, 1) * out.covariance(0, 1);
    const T inv_det = T(1.0) / det;
    out.conic(0) = out.covariance(1, 1) * inv_det;
    out.conic(1) = -out.covariance(0, 1) * inv_det;
    out.conic(2) = out.covariance(0, 0) * inv_det;

    out.distance = sqrt(rel.squaredNorm());
    return out;
}

} // namespace physgs
