// Regenerates the bundled synthetic cube fixture under a data directory:
// a coarse splat, supervision views rendered from the clean cube, a
// background image and the scene config.

#include "physgs/io.hpp"
#include "physgs/scene.hpp"

#include <cmath>
#include <iostream>
#include <numbers>

int main(int argc, char** argv)
{
    if (argc != 2) {
        std::cerr << "usage: make_fixture <data-dir>\n";
        return 1;
    }
    namespace fs = std::filesystem;
    using namespace physgs;
    const fs::path root = fs::path(argv[1]) / "cube";

    scene::CubeSpec clean;
    clean.jitter = 0.0;
    const std::vector<GaussianKernel> target = scene::synthetic_cube(clean);
    scene::CubeSpec coarse = clean;
    coarse.jitter = 0.15;
    io::save_splats(scene::synthetic_cube(coarse), root / "cube.ply");

    for (int azimuth : {0, 90, 180, 270}) {
        const double a = azimuth * std::numbers::pi / 180.0;
        const Camera cam = Camera::orbit(clean.center, 1.2, a, 0.25, 96.0, 64, 64);
        const fs::path dir = root / "views" / ("view_" + std::to_string(azimuth));
        const RenderOutput r = render(target, cam);
        io::write_camera(cam, dir / "camera.json");
        io::write_png(r.color, dir / "image.png");
        io::write_pfm(r.depth, dir / "depth.pfm");
    }

    Image bg(128, 128, 3);
    for (int y = 0; y < bg.height; ++y) {
        for (int x = 0; x < bg.width; ++x) {
            const double t = static_cast<double>(y) / (bg.height - 1);
            bg.at(x, y, 0) = 0.55 + 0.3 * t;
            bg.at(x, y, 1) = 0.7 + 0.15 * t;
            bg.at(x, y, 2) = 0.9 - 0.2 * t;
        }
    }
    io::write_png(bg, root / "background.png");
    std::cout << root.string() << '\n';
    return 0;
}
