#include "physgs/mpm/grid.hpp"

#include <cmath>
#include <sstream>

namespace physgs::mpm {

Grid::Grid(const Vec3& origin_, double spacing_, std::array<int, 3> dims_)
    : origin(origin_), spacing(spacing_), dims(dims_)
{
    validate();
    mass.assign(node_count(), 0.0);
    velocity.assign(node_count(), Vec3::Zero());
}

std::array<int, 3> Grid::node_coords(std::size_t idx) const
{
    const int k = static_cast<int>(idx % dims[2]);
    idx /= dims[2];
    const int j = static_cast<int>(idx % dims[1]);
    const int i = static_cast<int>(idx / dims[1]);
    return {i, j, k};
}

void Grid::clear()
{
    std::fill(mass.begin(), mass.end(), 0.0);
    std::fill(velocity.begin(), velocity.end(), Vec3::Zero());
}

void Grid::validate() const
{
    if (!(spacing > 0.0)) {
        throw ValidationError("grid spacing must be > 0");
    }
    if (dims[0] < 3 || dims[1] < 3 || dims[2] < 3) {
        throw ValidationError("grid needs at least 3 nodes per axis");
    }
    if (!origin.allFinite()) {
        throw ValidationError("grid origin is not finite");
    }
}

double quadratic_bspline(double x)
{
    const double a = std::abs(x);
    if (a < 0.5) {
        return 0.75 - a * a;
    }
    if (a < 1.5) {
        return 0.5 * (1.5 - a) * (1.5 - a);
    }
    return 0.0;
}

Stencil bspline_weights(const Vec3& position, const Grid& grid, std::size_t particle)
{
    Stencil s;
    const double inv_h = 1.0 / grid.spacing;
    for (int a = 0; a < 3; ++a) {
        const double fx = (position(a) - grid.origin(a)) * inv_h;
        const double base = std::floor(fx - 0.5);
        if (!std::isfinite(fx) || base < 0.0 || base + 2.0 > grid.dims[a] - 1) {
            std::ostringstream msg;
            msg << "particle " << particle << " at (" << position.transpose() << ") is outside the grid interior";
            throw Error(msg.str());
        }
        const double f = fx - base; // in [0.5, 1.5)
        s.base[a] = static_cast<int>(base);
        s.w[a] = {0.5 * (1.5 - f) * (1.5 - f), 0.75 - (f - 1.0) * (f - 1.0), 0.5 * (f - 0.5) * (f - 0.5)};
        s.dw[a] = {-(1.5 - f) * inv_h, -2.0 * (f - 1.0) * inv_h, (f - 0.5) * inv_h};
    }
    return s;
}

} // namespace physgs::mpm
