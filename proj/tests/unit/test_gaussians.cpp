#include "physgs/gaussians.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace physgs;

namespace {

Camera front_camera(int size = 24, double focal = 60.0)
{
    return Camera::look_at(Vec3(0, 0, -4), Vec3::Zero(), Vec3(0, -1, 0), focal, size, size);
}

double max_abs_diff(const Image& a, const Image& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    }
    return m;
}

} // namespace

TEST(Camera, LookAtIsOrthonormalAndCentersTarget)
{
    const Camera c = front_camera(32);
    EXPECT_LT((c.rotation.transpose() * c.rotation - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(c.rotation.determinant(), 1.0, 1e-12);
    const Vec3 pc = c.to_camera(Vec3::Zero());
    EXPECT_NEAR(pc.x(), 0.0, 1e-12);
    EXPECT_NEAR(pc.y(), 0.0, 1e-12);
    EXPECT_NEAR(pc.z(), 4.0, 1e-12);
    EXPECT_NO_THROW(c.validate());
}

TEST(Camera, OrbitAzimuthZeroSitsOnPositiveZ)
{
    const Camera c = Camera::orbit(Vec3(1, 2, 3), 2.0, 0.0, 0.0, 50.0, 16, 16);
    EXPECT_LT((c.center - Vec3(1, 2, 5)).norm(), 1e-12);
    const Camera q = Camera::orbit(Vec3::Zero(), 2.0, std::numbers::pi / 2.0, 0.0, 50.0, 16, 16);
    EXPECT_NEAR(q.center.x(), 2.0, 1e-12);
}

TEST(Camera, ValidateRejectsBadIntrinsics)
{
    Camera c = front_camera();
    c.fx = -1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = front_camera();
    c.rotation(0, 0) = 2.0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Kernel, MakeComputesWorldCovariance)
{
    Mat3 f;
    f << 1.2, 0.1, 0, 0, 0.9, 0.2, 0.05, 0, 1.1;
    const Mat3 h = Vec3(0.01, 0.02, 0.03).asDiagonal();
    const GaussianKernel k = GaussianKernel::make(Vec3::Zero(), 0.5, h, Vec3(0.1, 0.2, 0.3), f);
    EXPECT_LT((k.world_covariance - f * h * f.transpose()).norm(), 1e-15);
    EXPECT_EQ(k.world_covariance, k.world_covariance.transpose());
    EXPECT_EQ(k.rest_center, k.center);
}

TEST(Kernel, ValidateNamesTheKernel)
{
    GaussianKernel k = GaussianKernel::make(Vec3::Zero(), 0.5, Mat3::Identity(), Vec3::Zero());
    k.opacity = 1.5;
    try {
        k.validate(17);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
    }
    k.opacity = 0.5;
    k.center.x() = std::nan("");
    EXPECT_FALSE(k.finite());
    EXPECT_THROW(k.validate(0), Error);
}

TEST(Projection, MatchesOracle)
{
    std::mt19937_64 rng(1);
    const Camera cam = front_camera();
    for (const auto& k : oracle::random_kernels(rng, 30, Vec3::Zero(), 0.5, 0.1, 0.5)) {
        const auto s = project_kernel(k, cam);
        ASSERT_TRUE(s.has_value());
        const oracle::Footprint f = oracle::project(k, cam, 0.3);
        EXPECT_LT((s->mean - f.mean).norm(), 1e-12);
        EXPECT_NEAR(s->depth, f.distance, 1e-12);
        for (double px : {3.0, 11.5, 20.0}) {
            EXPECT_NEAR(splat_weight(*s, px, 7.0), oracle::gauss(f, px, 7.0), 1e-12);
        }
    }
}

TEST(Projection, CullsBehindCamera)
{
    const Camera cam = front_camera();
    const GaussianKernel k = GaussianKernel::make(Vec3(0, 0, -5), 0.5, 0.01 * Mat3::Identity(), Vec3::Zero());
    EXPECT_FALSE(project_kernel(k, cam).has_value());
}

TEST(Render, EmptySceneIsTransparent)
{
    const RenderOutput r = render(std::vector<GaussianKernel>{}, front_camera(8));
    for (double a : r.alpha.data) {
        EXPECT_EQ(a, 0.0);
    }
    EXPECT_EQ(r.color.channels, 3);
}

TEST(Render, SerialAndParallelAgreeBitwise)
{
    std::mt19937_64 rng(2);
    const auto ks = oracle::random_kernels(rng, 80, Vec3::Zero(), 0.6, 0.1, 0.4);
    RenderSettings s;
    s.exec = Exec::Serial;
    const RenderOutput a = render(ks, front_camera(40), s);
    s.exec = Exec::Parallel;
    const RenderOutput b = render(ks, front_camera(40), s);
    EXPECT_EQ(a.color.data, b.color.data);
    EXPECT_EQ(a.depth.data, b.depth.data);
    EXPECT_EQ(a.alpha.data, b.alpha.data);
}

TEST(Render, DefaultCutoffsStayCloseToExactCompositing)
{
    std::mt19937_64 rng(3);
    const auto ks = oracle::random_kernels(rng, 30, Vec3::Zero(), 0.5, 0.1, 0.3);
    const Camera cam = front_camera();
    RenderSettings exact;
    exact.min_weight = 0.0;
    exact.min_transmittance = 0.0;
    EXPECT_LT(max_abs_diff(render(ks, cam).color, render(ks, cam, exact).color), 5e-3);
}

TEST(Render, AlphaStaysInUnitInterval)
{
    std::mt19937_64 rng(4);
    const auto ks = oracle::random_kernels(rng, 60, Vec3::Zero(), 0.3, 0.1, 0.5, 0.9, 1.0);
    for (double a : render(ks, front_camera()).alpha.data) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(HardDepth, MatchesOracle)
{
    std::mt19937_64 rng(5);
    const auto ks = oracle::random_kernels(rng, 25, Vec3::Zero(), 0.5, 0.1, 0.4);
    const Camera cam = front_camera(16);
    RenderSettings s;
    s.min_weight = 0.0;
    s.min_transmittance = 0.0;
    const Image d = render_hard_depth(ks, cam, 0.9, s);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            EXPECT_NEAR(d.at(x, y), oracle::hard_depth(ks, cam, x, y, 0.9, 0.3), 1e-12);
        }
    }
}

namespace {

double weighted_sum(const RenderOutput& r, const RenderGrad& g)
{
    double s = 0.0;
    for (std::size_t i = 0; i < r.color.data.size(); ++i) {
        s += r.color.data[i] * g.color.data[i];
    }
    for (std::size_t i = 0; i < r.depth.data.size(); ++i) {
        s += r.depth.data[i] * g.depth.data[i] + r.alpha.data[i] * g.alpha.data[i];
    }
    return s;
}

} // namespace

TEST(RenderBackward, ColorOpacityAndMeanMatchFiniteDifferences)
{
    std::mt19937_64 rng(6);
    auto ks = oracle::random_kernels(rng, 6, Vec3::Zero(), 0.3, 0.15, 0.35, 0.3, 0.7);
    const Camera cam = front_camera(16, 30.0);
    RenderSettings s;
    s.min_weight = 0.0;
    s.min_transmittance = 0.0;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    RenderGrad g{Image(16, 16, 3), Image(16, 16, 1), Image(16, 16, 1)};
    for (auto* img : {&g.color, &g.depth, &g.alpha}) {
        for (double& v : img->data) {
            v = u(rng);
        }
    }
    const auto grads = render_backward(ks, cam, g, s);
    const double h = 1e-6;
    for (std::size_t k = 0; k < ks.size(); ++k) {
        auto kp = ks;
        auto km = ks;
        kp[k].opacity += h;
        km[k].opacity -= h;
        const double fd = (weighted_sum(render(kp, cam, s), g) - weighted_sum(render(km, cam, s), g)) / (2 * h);
        EXPECT_NEAR(grads[k].opacity, fd, 1e-6 * std::max(1.0, std::abs(fd)));
        for (int c = 0; c < 3; ++c) {
            kp = ks;
            km = ks;
            kp[k].color(c) += h;
            km[k].color(c) -= h;
            const double fdc =
                (weighted_sum(render(kp, cam, s), g) - weighted_sum(render(km, cam, s), g)) / (2 * h);
            EXPECT_NEAR(grads[k].color(c), fdc, 1e-6 * std::max(1.0, std::abs(fdc)));
        }
    }
}

TEST(RenderBackward, ThreadCountDoesNotChangeResult)
{
    std::mt19937_64 rng(7);
    const auto ks = oracle::random_kernels(rng, 20, Vec3::Zero(), 0.4, 0.1, 0.3);
    const Camera cam = front_camera(40);
    RenderGrad g{Image(40, 40, 3, 0.5), Image(40, 40, 1, -0.2), Image()};
    RenderSettings s;
    const int saved = thread_count();
    set_thread_count(1);
    const auto one = render_backward(ks, cam, g, s);
    set_thread_count(4);
    const auto four = render_backward(ks, cam, g, s);
    set_thread_count(saved);
    s.exec = Exec::Serial;
    const auto serial = render_backward(ks, cam, g, s);
    for (std::size_t k = 0; k < ks.size(); ++k) {
        EXPECT_EQ(one[k].mean, four[k].mean);
        EXPECT_EQ(one[k].conic, four[k].conic);
        EXPECT_EQ(one[k].opacity, four[k].opacity);
        // The serial reference sums pixels in a different order.
        EXPECT_LT((serial[k].mean - one[k].mean).norm(), 1e-12 * (1.0 + one[k].mean.norm()));
        EXPECT_NEAR(serial[k].opacity, one[k].opacity, 1e-12 * (1.0 + std::abs(one[k].opacity)));
    }
}

namespace {

/// 17x17 camera at the origin looking down +z with the principal point on pixel (8, 8).
Camera axis_camera(double focal)
{
    Camera c;
    c.fx = c.fy = focal;
    c.cx = c.cy = 8.0;
    c.width = c.height = 17;
    return c;
}

} // namespace

TEST(Projection, OnAxisIsotropicKernel)
{
    const Camera cam = axis_camera(100.0);
    const double s = 0.05;
    const double z = 2.5;
    const GaussianKernel k = GaussianKernel::make(Vec3(0, 0, z), 0.5, s * s * Mat3::Identity(), Vec3::Zero());
    const auto p = project_kernel(k, cam, 0.0);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->mean, Vec2(8.0, 8.0));
    const double expect = std::pow(100.0 * s / z, 2);
    EXPECT_NEAR(p->covariance(0, 0), expect, 1e-12);
    EXPECT_NEAR(p->covariance(1, 1), expect, 1e-12);
    EXPECT_NEAR(p->covariance(0, 1), 0.0, 1e-15);

    std::mt19937_64 rng(11);
    const GaussianKernel r =
        GaussianKernel::make(Vec3(0, 0, z), 0.5, s * s * Mat3::Identity(), Vec3::Zero(), oracle::random_rotation(rng));
    const auto pr = project_kernel(r, cam, 0.0);
    EXPECT_LT((pr->covariance - p->covariance).norm(), 1e-15);
}

TEST(Projection, CovarianceMatchesNumericalJacobian)
{
    const Camera cam = axis_camera(500.0);
    std::mt19937_64 rng(12);
    const Mat3 h = oracle::random_spd(rng, 0.05, 0.2);
    const Vec3 x(0.3, -0.2, 2.0);
    const GaussianKernel k = GaussianKernel::make(x, 0.5, h, Vec3::Zero());
    const auto p = project_kernel(k, cam, 0.0);
    auto pi = [&](const Vec3& q) { return Vec2(cam.fx * q.x() / q.z() + cam.cx, cam.fy * q.y() / q.z() + cam.cy); };
    Eigen::Matrix<double, 2, 3> jac;
    const double step = 1e-6;
    for (int a = 0; a < 3; ++a) {
        jac.col(a) = (pi(x + step * Vec3::Unit(a)) - pi(x - step * Vec3::Unit(a))) / (2 * step);
    }
    const Mat2 want = jac * h * jac.transpose();
    EXPECT_LT((p->covariance - want).norm(), 1e-6 * want.norm());
}

TEST(Render, SingleOpaqueSplatAtItsMean)
{
    const Camera cam = axis_camera(50.0);
    const Vec3 c(0.2, 0.6, 0.9);
    const GaussianKernel k = GaussianKernel::make(Vec3(0, 0, 3.0), 1.0, 0.01 * Mat3::Identity(), c);
    const RenderOutput r = render(std::vector<GaussianKernel>{k}, cam);
    EXPECT_EQ(r.color.at(8, 8, 0), c(0));
    EXPECT_EQ(r.color.at(8, 8, 1), c(1));
    EXPECT_EQ(r.color.at(8, 8, 2), c(2));
    EXPECT_EQ(r.depth.at(8, 8), 3.0);
    EXPECT_EQ(r.alpha.at(8, 8), 1.0);
}

TEST(Render, TwoCoincidentHalfOpaqueSplats)
{
    const Camera cam = axis_camera(50.0);
    const Vec3 c1(1.0, 0.0, 0.5);
    const Vec3 c2(0.0, 1.0, 0.25);
    // Listed back to front so the sort has work to do.
    const std::vector<GaussianKernel> ks = {
        GaussianKernel::make(Vec3(0, 0, 4.0), 0.5, 0.01 * Mat3::Identity(), c2),
        GaussianKernel::make(Vec3(0, 0, 2.0), 0.5, 0.01 * Mat3::Identity(), c1)};
    const RenderOutput r = render(ks, cam);
    for (int ch = 0; ch < 3; ++ch) {
        EXPECT_DOUBLE_EQ(r.color.at(8, 8, ch), 0.5 * c1(ch) + 0.25 * c2(ch));
    }
    EXPECT_DOUBLE_EQ(r.depth.at(8, 8), 0.5 * 2.0 + 0.25 * 4.0);
    EXPECT_DOUBLE_EQ(r.alpha.at(8, 8), 0.75);
}

TEST(HardDepth, OneAndTwoSplatClosedForms)
{
    const Camera cam = axis_camera(50.0);
    const GaussianKernel near = GaussianKernel::make(Vec3(0, 0, 2.0), 0.3, 0.01 * Mat3::Identity(), Vec3::Zero());
    const GaussianKernel far = GaussianKernel::make(Vec3(0, 0, 5.0), 0.3, 0.01 * Mat3::Identity(), Vec3::Zero());
    EXPECT_DOUBLE_EQ(render_hard_depth(std::vector<GaussianKernel>{near}, cam, 0.99).at(8, 8), 0.99 * 2.0);
    EXPECT_DOUBLE_EQ(render_hard_depth(std::vector<GaussianKernel>{far, near}, cam, 0.99).at(8, 8),
                     0.99 * 2.0 + 0.0099 * 5.0);
    EXPECT_THROW(render_hard_depth(std::vector<GaussianKernel>{near}, cam, 1.0), Error);
}

TEST(HardDepth, TwentySplatsOnOnePixelMatchOracle)
{
    std::mt19937_64 rng(13);
    const Camera cam = axis_camera(40.0);
    const auto ks = oracle::random_kernels(rng, 20, Vec3(0, 0, 3.0), 0.2, 0.2, 0.4);
    RenderSettings s;
    s.min_weight = 0.0;
    s.min_transmittance = 0.0;
    EXPECT_NEAR(render_hard_depth(ks, cam, 0.99, s).at(8, 8), oracle::hard_depth(ks, cam, 8, 8, 0.99, 0.3), 1e-12);
}
