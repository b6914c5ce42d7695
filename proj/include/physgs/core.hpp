#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace physgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for invalid user input (config, files, arguments) detected before work starts.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Execution policy for the data-parallel kernels. `Serial` is the plain-loop
/// reference kept for testing; `Parallel` is the OpenMP path.
enum class Exec { Serial, Parallel };

/// Sets the OpenMP thread count used by `Exec::Parallel` kernels (n <= 0 keeps the default).
void set_thread_count(int n);
int thread_count();

/// Routes non-fatal diagnostics (CFL substepping, skipped views). Defaults to stderr.
void warn(const std::string& message);
/// Replaces the warning sink; an empty function restores the default.
void set_warning_handler(std::function<void(const std::string&)> handler);

/// Dense row-major image of doubles with an arbitrary channel count.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    [[nodiscard]] bool empty() const { return width == 0 || height == 0; }
    [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    [[nodiscard]] std::size_t index(int x, int y, int c = 0) const
    {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    [[nodiscard]] double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    [[nodiscard]] bool same_shape(const Image& o) const
    {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

} // namespace physgs
