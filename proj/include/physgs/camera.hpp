#pragma once

#include "physgs/core.hpp"

namespace physgs {

/// Pinhole camera. `rotation` maps camera axes to world (columns are the
/// camera x/y/z axes expressed in world space); axes follow the OpenCV
/// convention, x right, y down, z forward. Pixel (col, row) sits at the
/// integer image coordinate (col, row).
struct Camera {
    Vec3 center = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    double azimuth = 0.0;

    [[nodiscard]] Vec3 to_camera(const Vec3& world) const { return rotation.transpose() * (world - center); }

    /// Throws ValidationError if the rotation is not orthonormal or intrinsics are invalid.
    void validate() const;

    /// Camera at `eye` looking at `target`; `up` is the world up direction.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                          int height);

    /// Orbit camera around `target` at the given azimuth (radians, about world +y) and
    /// elevation. Azimuth 0 places the camera on the +z side of the target.
    static Camera orbit(const Vec3& target, double radius, double azimuth, double elevation, double focal,
                        int width, int height);
};

} // namespace physgs
