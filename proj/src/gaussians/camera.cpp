#include "physgs/camera.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace physgs {

void Camera::validate() const
{
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho < 1e-10)) {
        throw ValidationError("camera rotation is not orthonormal (|R^T R - I| = " + std::to_string(ortho) + ")");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw ValidationError("camera focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw ValidationError("camera image size must be positive");
    }
    if (!center.allFinite() || !std::isfinite(cx) || !std::isfinite(cy)) {
        throw ValidationError("camera has non-finite parameters");
    }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height)
{
    const Vec3 forward = (target - eye).normalized();
    // OpenCV convention: y points down in the image, so the camera y axis is -up.
    Vec3 right = forward.cross(-up);
    if (right.norm() < 1e-12) {
        right = forward.unitOrthogonal();
    }
    right.normalize();
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.center = eye;
    cam.rotation.col(0) = right;
    cam.rotation.col(1) = down;
    cam.rotation.col(2) = forward;
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.width = width;
    cam.height = height;
    return cam;
}

Camera Camera::orbit(const Vec3& target, double radius, double azimuth, double elevation, double focal, int width,
                     int height)
{
    const Vec3 dir(std::sin(azimuth) * std::cos(elevation), std::sin(elevation),
                   std::cos(azimuth) * std::cos(elevation));
    Camera cam = look_at(target + radius * dir, target, Vec3::UnitY(), focal, width, height);
    cam.azimuth = azimuth;
    return cam;
}

} // namespace physgs
