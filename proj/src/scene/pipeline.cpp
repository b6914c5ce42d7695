#include "physgs/io.hpp"
#include "physgs/metrics.hpp"
#include "physgs/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <regex>

namespace physgs::scene {

using nlohmann::json;

const char* version() { return "0.1.0"; }

std::uint64_t fnv1a(const std::string& bytes)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<GaussianKernel> synthetic_cube(const CubeSpec& spec)
{
    if (spec.per_side < 1 || !(spec.size > 0.0)) {
        throw ValidationError("synthetic cube: per_side and size must be positive");
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> jitter(-spec.jitter, spec.jitter);
    const double step = spec.size / spec.per_side;
    const Vec3 lo = spec.center - Vec3::Constant(0.5 * spec.size);
    const double sigma = 0.6 * step;
    std::vector<GaussianKernel> kernels;
    kernels.reserve(static_cast<std::size_t>(spec.per_side) * spec.per_side * spec.per_side);
    for (int i = 0; i < spec.per_side; ++i) {
        for (int j = 0; j < spec.per_side; ++j) {
            for (int k = 0; k < spec.per_side; ++k) {
                const Vec3 cell(i + 0.5, j + 0.5, k + 0.5);
                Vec3 offset;
                for (int a = 0; a < 3; ++a) {
                    offset(a) = jitter(rng);
                }
                const Vec3 x = lo + step * (cell + offset);
                const Vec3 t = (cell / spec.per_side);
                const Vec3 color(0.85 - 0.3 * t.y(), 0.65 + 0.2 * t.x(), 0.35 + 0.2 * t.z());
                kernels.push_back(
                    GaussianKernel::make(x, spec.opacity, sigma * sigma * Mat3::Identity(), color));
            }
        }
    }
    return kernels;
}

std::vector<GaussianKernel> load_scene_splats(const SceneConfig& config)
{
    if (config.synthetic) {
        return synthetic_cube(*config.synthetic);
    }
    return io::load_splats(config.splats);
}

std::vector<optim::SupervisionView> load_views(const fs::path& directory)
{
    if (!fs::is_directory(directory)) {
        throw ValidationError(directory.string() + ": views directory does not exist");
    }
    const std::regex name(R"(view_(-?\d+))");
    std::map<int, fs::path> found;
    for (const auto& entry : fs::directory_iterator(directory)) {
        std::smatch m;
        const std::string stem = entry.path().filename().string();
        if (entry.is_directory() && std::regex_match(stem, m, name)) {
            found[std::stoi(m[1].str())] = entry.path();
        }
    }
    if (found.empty()) {
        throw ValidationError(directory.string() + ": no view_<azimuth> subdirectories");
    }
    std::vector<optim::SupervisionView> views;
    for (const auto& [azimuth, dir] : found) {
        optim::SupervisionView v;
        v.camera = io::read_camera(dir / "camera.json");
        v.is_input_view = azimuth == 0;
        if (fs::exists(dir / "image.png")) {
            Image img = io::read_png(dir / "image.png");
            if (img.channels != 3) {
                throw ValidationError((dir / "image.png").string() + ": expected an RGB image");
            }
            v.image = std::move(img);
        }
        if (fs::exists(dir / "depth.pfm")) {
            v.depth = io::read_pfm(dir / "depth.pfm");
        }
        views.push_back(std::move(v));
    }
    return views;
}

void simulate(const SceneConfig& config, std::vector<GaussianKernel> kernels,
              const std::function<void(int, const RenderOutput&, const kinematics::DynamicScene&)>& on_frame)
{
    kinematics::SimulationSetup setup;
    setup.mpm = config.simulation.mpm;
    setup.covariance_mode = config.simulation.covariance_mode;
    setup.loads = config.loads;
    setup.colliders = config.colliders;
    kinematics::BindOptions bind;
    bind.fill = config.simulation.fill;
    const mpm::Grid grid(config.grid.origin, config.grid.spacing, config.grid.dims);
    kinematics::DynamicScene scene(std::move(kernels), config.material, grid, bind, std::move(setup));

    const double frame_dt = 1.0 / config.simulation.fps;
    for (int j = 0; j < config.simulation.frames; ++j) {
        if (j > 0) {
            scene.advance(frame_dt);
        }
        for (std::size_t k = 0; k < scene.kernels().size(); ++k) {
            if (!scene.kernels()[k].finite()) {
                throw Error("simulation diverged at frame " + std::to_string(j) + " (kernel " +
                            std::to_string(k) + ")");
            }
        }
        const RenderOutput frame = render(scene.kernels(), config.render_camera, config.render);
        on_frame(j, frame, scene);
    }
}

void write_manifest(const SceneConfig& config, Command command, const std::vector<fs::path>& outputs)
{
    char hash[17];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(fnv1a(config.text)));
    json files = json::array();
    for (const auto& p : outputs) {
        files.push_back(fs::relative(p, config.output).generic_string());
    }
    const json manifest = {
        {"command", command_name(command)},
        {"version", version()},
        {"config_hash", std::string("fnv1a64:") + hash},
        {"seed", config.seed},
        {"outputs", files},
    };
    const fs::path path = config.output / (std::string("manifest_") + command_name(command) + ".json");
    io::ensure_parent(path);
    std::ofstream out(path);
    out << manifest.dump(2) << '\n';
    if (!out) {
        throw io::FormatError(path.string() + ": write failed");
    }
}

fs::path run_optimize(const SceneConfig& config)
{
    check_inputs(config, Command::Optimize);
    const std::vector<GaussianKernel> kernels = load_scene_splats(config);
    std::vector<optim::SupervisionView> views = load_views(config.views);
    const std::vector<GaussianKernel> refined = optim::optimize(kernels, std::move(views), config.schedule, config.render);
    const fs::path out = config.output / "refined.ply";
    io::save_splats(refined, out);
    write_manifest(config, Command::Optimize, {out});
    return out;
}

fs::path run_simulate(const SceneConfig& config)
{
    check_inputs(config, Command::Simulate);
    const fs::path dir = config.output / "frames";
    std::vector<fs::path> outputs;
    simulate(config, load_scene_splats(config), [&](int j, const RenderOutput& frame,
                                                    const kinematics::DynamicScene& scene) {
        io::write_frame(frame, dir, j);
        for (const char* ch : {"color.png", "depth.pfm", "alpha.pfm"}) {
            outputs.push_back(io::frame_path(dir, j, ch));
        }
        if (config.simulation.dump_particles) {
            const fs::path p = io::frame_path(config.output / "particles", j, "particles.bin");
            io::write_particles(scene.state().particles, scene.time(), p);
            outputs.push_back(p);
        }
    });
    write_manifest(config, Command::Simulate, outputs);
    return dir;
}

fs::path run_blend(const SceneConfig& config)
{
    check_inputs(config, Command::Blend);
    const fs::path in = config.frames.empty() ? config.output / "frames" : config.frames;
    const fs::path dir = config.output / "blended";
    std::optional<Image> background;
    if (!config.background.empty()) {
        background = io::read_png(config.background);
        if (background->channels != 3) {
            throw ValidationError(config.background.string() + ": background must be an RGB image");
        }
    }
    std::vector<fs::path> outputs;
    for (int j = 0; j < config.simulation.frames; ++j) {
        const Image color = io::read_png(io::frame_path(in, j, "color.png"));
        const Image alpha = io::read_pfm(io::frame_path(in, j, "alpha.pfm"));
        Image bg;
        if (background) {
            bg = *background;
        } else {
            bg = Image(color.width, color.height, 3);
            for (std::size_t p = 0; p < bg.pixel_count(); ++p) {
                for (int c = 0; c < 3; ++c) {
                    bg.data[p * 3 + c] = config.background_color(c);
                }
            }
        }
        const Image blended = propagate::blend(color, alpha, bg);
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", j);
        io::write_png(blended, dir / name);
        outputs.push_back(dir / name);
    }
    write_manifest(config, Command::Blend, outputs);
    return dir;
}

namespace {

fs::path feature_dir(const fs::path& root, int frame)
{
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d", frame);
    return root / name;
}

} // namespace

fs::path run_propagate(const SceneConfig& config)
{
    check_inputs(config, Command::Propagate);
    int total = 0;
    while (fs::is_directory(feature_dir(config.features, total + 1))) {
        ++total;
    }
    if (total == 0) {
        throw ValidationError(config.features.string() + ": no frame_0001 directory");
    }
    const propagate::KeyframeSet keys =
        propagate::select_keyframes(total, config.injection.keyframe_interval, config.seed);

    // Check every needed file before doing any work.
    std::vector<std::string> missing;
    for (int j = 1; j <= total; ++j) {
        std::vector<const char*> files = {"coarse_phi.ften"};
        if (keys.contains(j)) {
            files.insert(files.end(), {"coarse_q.ften", "coarse_k.ften", "enhanced_v.ften"});
        }
        for (const char* f : files) {
            if (!fs::exists(feature_dir(config.features, j) / f)) {
                missing.push_back((feature_dir(config.features, j) / f).string());
            }
        }
    }
    if (!missing.empty()) {
        std::string msg = "propagate: missing feature files:";
        for (const auto& m : missing) {
            msg += "\n  " + m;
        }
        throw ValidationError(msg);
    }

    std::vector<propagate::Tokens> q;
    std::vector<propagate::Tokens> k;
    std::vector<propagate::Tokens> v;
    propagate::KeyframeTokens coarse_keys;
    std::vector<std::uint64_t> value_dims;
    for (int f : keys.frames) {
        const fs::path d = feature_dir(config.features, f);
        q.push_back(io::to_tokens(io::read_tensor(d / "coarse_q.ften")));
        k.push_back(io::to_tokens(io::read_tensor(d / "coarse_k.ften")));
        const io::FeatureTensor vt = io::read_tensor(d / "enhanced_v.ften");
        if (value_dims.empty()) {
            value_dims = vt.dims;
        }
        v.push_back(io::to_tokens(vt));
        coarse_keys[f] = io::to_tokens(io::read_tensor(d / "coarse_phi.ften"));
    }
    const std::vector<propagate::Tokens> enhanced_out = propagate::extended_attention_all(q, k, v);
    propagate::KeyframeTokens enhanced;
    for (std::size_t i = 0; i < keys.frames.size(); ++i) {
        enhanced[keys.frames[i]] = enhanced_out[i];
    }

    const fs::path dir = config.output / "propagated";
    std::vector<fs::path> outputs;
    propagate::NnOptions nn;
    nn.window = config.nn_window;
    for (int j = 1; j <= total; ++j) {
        const io::FeatureTensor phi = io::read_tensor(feature_dir(config.features, j) / "coarse_phi.ften");
        if (nn.window >= 0) {
            if (phi.dims.size() != 3) {
                throw ValidationError("propagate: a windowed search needs rank-3 (rows, cols, d) features");
            }
            nn.grid_width = static_cast<int>(phi.dims[1]);
        }
        const propagate::Tokens coarse = io::to_tokens(phi);
        const propagate::CorrespondenceField field = propagate::correspondence(j, keys, coarse, coarse_keys, nn);
        const propagate::Tokens out = propagate::propagate(j, keys, enhanced, field);
        std::vector<std::uint64_t> dims = value_dims;
        if (static_cast<std::uint64_t>(out.rows()) * out.cols() != io::FeatureTensor{dims, "", {}}.element_count()) {
            dims = {static_cast<std::uint64_t>(out.rows()), static_cast<std::uint64_t>(out.cols())};
        }
        const fs::path p = feature_dir(dir, j).replace_extension(".ften");
        io::write_tensor(io::from_tokens(out, dims, "enhanced"), p);
        outputs.push_back(p);
    }
    const fs::path key_file = dir / "keyframes.json";
    {
        std::ofstream o(key_file);
        o << json{{"total", total}, {"keyframes", keys.frames}}.dump(2) << '\n';
    }
    outputs.push_back(key_file);
    write_manifest(config, Command::Propagate, outputs);
    return dir;
}

fs::path run_eval(const SceneConfig& config)
{
    check_inputs(config, Command::Eval);
    const metrics::ScoreTable table = io::read_scores(config.scores);
    const metrics::ZScores z = metrics::zscore_normalize(table);
    metrics::ScoreTable normalized = table;
    normalized.scores = z.z;
    const fs::path csv = config.output / "zscores.csv";
    io::write_scores(normalized, csv);
    json means = json::object();
    for (std::size_t i = 0; i < table.models.size(); ++i) {
        means[table.models[i]] = z.model_mean(static_cast<Eigen::Index>(i));
    }
    const fs::path summary = config.output / "zscore_means.json";
    {
        std::ofstream o(summary);
        o << json{{"model_mean", means}}.dump(2) << '\n';
    }
    write_manifest(config, Command::Eval, {csv, summary});
    return csv;
}

} // namespace physgs::scene
