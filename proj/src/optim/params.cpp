#include "params_chain.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>

namespace physgs::optim {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class T>
Eigen::Matrix<T, 3, 3> quat_to_rotation(const Eigen::Matrix<T, 4, 1>& q_raw)
{
    using std::sqrt;
    const T n = sqrt(q_raw.squaredNorm());
    const T w = q_raw(0) / n, x = q_raw(1) / n, y = q_raw(2) / n, z = q_raw(3) / n;
    Eigen::Matrix<T, 3, 3> r;
    r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
        T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
        T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
    return r;
}

template <class T>
Eigen::Matrix<T, 3, 3> covariance_from(const Eigen::Matrix<T, 3, 1>& log_scale, const Eigen::Matrix<T, 4, 1>& q)
{
    using std::exp;
    const Eigen::Matrix<T, 3, 3> r = quat_to_rotation<T>(q);
    Eigen::Matrix<T, 3, 1> var;
    for (int a = 0; a < 3; ++a) {
        var(a) = exp(T(2) * log_scale(a));
    }
    Eigen::Matrix<T, 3, 3> h = r * var.asDiagonal() * r.transpose();
    // Exactly symmetric.
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            const T s = T(0.5) * (h(i, j) + h(j, i));
            h(i, j) = s;
            h(j, i) = s;
        }
    }
    return h;
}

template <class AD>
double contract(const ProjectionT<AD>& p, const ScreenGrad& g, int component)
{
    return g.mean(0) * p.mean(0).derivatives()(component) + g.mean(1) * p.mean(1).derivatives()(component) +
           g.conic(0) * p.conic(0).derivatives()(component) + g.conic(1) * p.conic(1).derivatives()(component) +
           g.conic(2) * p.conic(2).derivatives()(component) + g.distance * p.distance.derivatives()(component);
}

} // namespace

Mat3 world_covariance(const SplatParams& p) { return covariance_from<double>(p.log_scale, p.rotation); }

SplatParams to_params(const GaussianKernel& kernel)
{
    SplatParams p;
    p.center = kernel.center;
    const double s = std::clamp(kernel.opacity, 1e-6, 1.0 - 1e-6);
    p.opacity_logit = std::log(s / (1.0 - s));
    Eigen::SelfAdjointEigenSolver<Mat3> eig(kernel.world_covariance);
    Mat3 r = eig.eigenvectors();
    if (r.determinant() < 0.0) {
        r.col(0) *= -1.0;
    }
    const Vec3 var = eig.eigenvalues().cwiseMax(1e-30);
    p.log_scale = 0.5 * var.array().log().matrix();
    const Eigen::Quaterniond q(r);
    p.rotation = Vec4(q.w(), q.x(), q.y(), q.z());
    p.color = kernel.color;
    return p;
}

GaussianKernel to_kernel(const SplatParams& params)
{
    return GaussianKernel::make(params.center, sigmoid(params.opacity_logit), world_covariance(params),
                                params.color.cwiseMax(0.0).cwiseMin(1.0));
}

std::vector<SplatParams> to_params(std::span<const GaussianKernel> kernels)
{
    std::vector<SplatParams> out;
    out.reserve(kernels.size());
    for (const auto& k : kernels) {
        out.push_back(to_params(k));
    }
    return out;
}

std::vector<GaussianKernel> to_kernels(std::span<const SplatParams> params)
{
    std::vector<GaussianKernel> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        out.push_back(to_kernel(p));
    }
    return out;
}

Vec3 center_gradient(const Vec3& center, const Mat3& world_cov, const ScreenGrad& g, const Camera& camera,
                     double covariance_floor)
{
    using AD = Eigen::AutoDiffScalar<Eigen::Matrix<double, 3, 1>>;
    Eigen::Matrix<AD, 3, 1> x;
    for (int a = 0; a < 3; ++a) {
        x(a) = AD(center(a), 3, a);
    }
    const Eigen::Matrix<AD, 3, 3> h = world_cov.cast<AD>();
    const ProjectionT<AD> p = project_gaussian<AD>(x, h, camera, covariance_floor);
    return {contract(p, g, 0), contract(p, g, 1), contract(p, g, 2)};
}

ParamGrad param_gradient(const SplatParams& params, const ScreenGrad& g, const Camera& camera,
                         double covariance_floor)
{
    using AD = Eigen::AutoDiffScalar<Eigen::Matrix<double, 10, 1>>;
    Eigen::Matrix<AD, 3, 1> x, ls;
    Eigen::Matrix<AD, 4, 1> q;
    for (int a = 0; a < 3; ++a) {
        x(a) = AD(params.center(a), 10, a);
        ls(a) = AD(params.log_scale(a), 10, 3 + a);
    }
    for (int a = 0; a < 4; ++a) {
        q(a) = AD(params.rotation(a), 10, 6 + a);
    }
    const Eigen::Matrix<AD, 3, 3> h = covariance_from<AD>(ls, q);
    const ProjectionT<AD> p = project_gaussian<AD>(x, h, camera, covariance_floor);

    ParamGrad out;
    for (int a = 0; a < 3; ++a) {
        out.center(a) = contract(p, g, a);
        out.log_scale(a) = contract(p, g, 3 + a);
    }
    for (int a = 0; a < 4; ++a) {
        out.rotation(a) = contract(p, g, 6 + a);
    }
    const double s = sigmoid(params.opacity_logit);
    out.opacity_logit = g.opacity * s * (1.0 - s);
    out.color = g.color;
    return out;
}

} // namespace physgs::optim
