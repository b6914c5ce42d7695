#pragma once

// Chain rule from screen-space gradients to trainable parameters.

#include "physgs/optim.hpp"
#include "physgs/projection.hpp"

namespace physgs::optim {

Mat3 world_covariance(const SplatParams& params);

/// dL/dx for a kernel with fixed world covariance.
Vec3 center_gradient(const Vec3& center, const Mat3& world_cov, const ScreenGrad& g, const Camera& camera,
                     double covariance_floor);

/// dL/dparams for every trainable group.
ParamGrad param_gradient(const SplatParams& params, const ScreenGrad& g, const Camera& camera,
                         double covariance_floor);

} // namespace physgs::optim
