#pragma once

#include "physgs/core.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace physgs::mpm {

/// Eulerian background grid. Node (i, j, k) sits at origin + h * (i, j, k).
struct Grid {
    Vec3 origin = Vec3::Zero();
    double spacing = 1.0;
    std::array<int, 3> dims{0, 0, 0};
    std::vector<double> mass;
    std::vector<Vec3> velocity;

    Grid() = default;
    Grid(const Vec3& origin, double spacing, std::array<int, 3> dims);

    [[nodiscard]] std::size_t node_count() const
    {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    [[nodiscard]] std::size_t index(int i, int j, int k) const
    {
        return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
    }
    [[nodiscard]] Vec3 node_position(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
    [[nodiscard]] std::array<int, 3> node_coords(std::size_t idx) const;

    void clear();
    void validate() const;
};

/// Quadratic B-spline weights of one particle over its 3x3x3 node stencil.
struct Stencil {
    std::array<int, 3> base{0, 0, 0};
    /// Per-axis weights for stencil offsets 0, 1, 2.
    std::array<std::array<double, 3>, 3> w{};
    /// Per-axis derivatives d w / d x (world units).
    std::array<std::array<double, 3>, 3> dw{};

    [[nodiscard]] double weight(int a, int b, int c) const { return w[0][a] * w[1][b] * w[2][c]; }
    [[nodiscard]] Vec3 gradient(int a, int b, int c) const
    {
        return {dw[0][a] * w[1][b] * w[2][c], w[0][a] * dw[1][b] * w[2][c], w[0][a] * w[1][b] * dw[2][c]};
    }
};

/// Quadratic B-spline stencil of the particle at `position`. Throws Error
/// naming `particle` when the stencil leaves the grid.
Stencil bspline_weights(const Vec3& position, const Grid& grid, std::size_t particle = 0);

/// 1D quadratic B-spline N(x) with support |x| < 1.5.
double quadratic_bspline(double x);

} // namespace physgs::mpm
