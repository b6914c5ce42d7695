#pragma once

// Declarative scene configuration and the pipeline stages driven by the CLI.

#include "physgs/gaussians.hpp"
#include "physgs/kinematics.hpp"
#include "physgs/optim.hpp"
#include "physgs/propagate.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace physgs::scene {

namespace fs = std::filesystem;

/// Lattice of isotropic kernels filling an axis-aligned cube.
struct CubeSpec {
    int per_side = 8;
    double size = 0.3;
    Vec3 center = Vec3(0.5, 0.4, 0.5);
    /// Lattice jitter as a fraction of the kernel spacing.
    double jitter = 0.1;
    double opacity = 0.9;
    std::uint64_t seed = 7;
};

std::vector<GaussianKernel> synthetic_cube(const CubeSpec& spec);

struct GridSpec {
    Vec3 origin = Vec3::Zero();
    double spacing = 1.0 / 32.0;
    std::array<int, 3> dims{33, 33, 33};
};

struct SimulationSpec {
    int frames = 24;
    double fps = 24.0;
    mpm::MpmConfig mpm;
    kinematics::CovarianceMode covariance_mode = kinematics::CovarianceMode::Incremental;
    bool fill = false;
    bool dump_particles = false;
};

struct SceneConfig {
    /// Directory relative paths are resolved against.
    fs::path base;
    /// Raw config text, hashed into the manifest.
    std::string text;

    fs::path splats;
    std::optional<CubeSpec> synthetic;

    std::string preset = "elastic";
    mpm::ConstitutiveModel material;
    std::vector<mpm::ExternalLoad> loads;
    GridSpec grid;
    std::vector<mpm::Collider> colliders;
    SimulationSpec simulation;

    Camera render_camera;
    RenderSettings render;
    fs::path views;

    optim::TrainSchedule schedule;

    propagate::InjectionSchedule injection;
    std::uint64_t seed = 0;
    fs::path features;
    int nn_window = -1;

    fs::path frames; ///< blend input; defaults to <output>/frames
    fs::path background;
    Vec3 background_color = Vec3::Ones();

    fs::path scores;

    fs::path output = "out";
};

/// Parses JSON text; every problem found is collected into one ValidationError.
SceneConfig parse_config(const std::string& text, const fs::path& base);
SceneConfig load_config(const fs::path& path);

enum class Command { Optimize, Simulate, Blend, Propagate, Eval };
const char* command_name(Command c);

/// Checks that the inputs `command` reads exist; aggregates all problems.
void check_inputs(const SceneConfig& config, Command command);

/// Splats from the config's PLY, or the synthetic cube.
std::vector<GaussianKernel> load_scene_splats(const SceneConfig& config);

/// Reads view_<azimuth>/{image.png, depth.pfm, camera.json} subdirectories;
/// azimuth 0 is the input view.
std::vector<optim::SupervisionView> load_views(const fs::path& directory);

/// Renders frames 0..N-1, advancing the simulation 1/fps between frames.
/// `on_frame` receives each frame with its index and the scene state.
void simulate(const SceneConfig& config, std::vector<GaussianKernel> kernels,
              const std::function<void(int, const RenderOutput&, const kinematics::DynamicScene&)>& on_frame);

/// Stage drivers. Each writes its outputs and a manifest under config.output.
fs::path run_optimize(const SceneConfig& config);
fs::path run_simulate(const SceneConfig& config);
fs::path run_blend(const SceneConfig& config);
fs::path run_propagate(const SceneConfig& config);
fs::path run_eval(const SceneConfig& config);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
void write_manifest(const SceneConfig& config, Command command, const std::vector<fs::path>& outputs);

/// Library version string recorded in manifests.
const char* version();

} // namespace physgs::scene
