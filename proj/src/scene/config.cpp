#include "physgs/io.hpp"
#include "physgs/scene.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace physgs::scene {

using nlohmann::json;

namespace {

/// Field reader that records problems instead of stopping at the first one.
class Reader {
public:
    std::vector<std::string> errors;

    void fail(const std::string& where, const std::string& msg) { errors.push_back(where + ": " + msg); }

    template <class T>
    void get(const json& obj, const std::string& where, const char* key, T& out)
    {
        if (!obj.contains(key)) {
            return;
        }
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception&) {
            fail(where + "." + key, "has the wrong type");
        }
    }

    void vec3(const json& obj, const std::string& where, const char* key, Vec3& out)
    {
        if (!obj.contains(key)) {
            return;
        }
        const json& v = obj.at(key);
        if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
            fail(where + "." + key, "must be an array of 3 numbers");
            return;
        }
        out = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
    }

    void path(const json& obj, const std::string& where, const char* key, const fs::path& base, fs::path& out)
    {
        std::string s;
        get(obj, where, key, s);
        if (!s.empty()) {
            out = fs::path(s).is_absolute() ? fs::path(s) : base / s;
        }
    }

    const json* object(const json& obj, const std::string& where, const char* key)
    {
        if (!obj.contains(key)) {
            return nullptr;
        }
        if (!obj.at(key).is_object()) {
            fail(where + "." + key, "must be an object");
            return nullptr;
        }
        return &obj.at(key);
    }

    template <class F>
    void guard(const std::string& where, F&& f)
    {
        try {
            f();
        } catch (const std::exception& e) {
            fail(where, e.what());
        }
    }
};

void parse_region(Reader& r, const json& j, const std::string& where, mpm::Region& region)
{
    std::string kind = "all";
    r.get(j, where, "kind", kind);
    if (kind == "all") {
        region.kind = mpm::Region::Kind::All;
    } else if (kind == "sphere") {
        region.kind = mpm::Region::Kind::Sphere;
    } else if (kind == "box") {
        region.kind = mpm::Region::Kind::Box;
    } else {
        r.fail(where + ".kind", "unknown region kind '" + kind + "'");
    }
    r.vec3(j, where, "center", region.center);
    r.get(j, where, "radius", region.radius);
    r.vec3(j, where, "lo", region.lo);
    r.vec3(j, where, "hi", region.hi);
}

mpm::ExternalLoad parse_load(Reader& r, const json& j, const std::string& where)
{
    mpm::ExternalLoad load;
    std::string kind;
    r.get(j, where, "kind", kind);
    if (kind == "gravity") {
        load.kind = mpm::ExternalLoad::Kind::Gravity;
    } else if (kind == "point_force") {
        load.kind = mpm::ExternalLoad::Kind::PointForce;
    } else if (kind == "torque") {
        load.kind = mpm::ExternalLoad::Kind::Torque;
    } else if (kind == "velocity") {
        load.kind = mpm::ExternalLoad::Kind::Velocity;
    } else {
        r.fail(where + ".kind", "unknown load kind '" + kind + "'");
    }
    r.vec3(j, where, "vector", load.vector);
    r.vec3(j, where, "center", load.center);
    r.get(j, where, "t_begin", load.t_begin);
    if (j.contains("t_end") && !j.at("t_end").is_null()) {
        r.get(j, where, "t_end", load.t_end);
    }
    if (const json* reg = r.object(j, where, "region")) {
        parse_region(r, *reg, where + ".region", load.region);
    }
    r.guard(where, [&] { load.validate(); });
    return load;
}

mpm::Collider parse_collider(Reader& r, const json& j, const std::string& where)
{
    mpm::Collider c;
    std::string kind = "plane";
    std::string mode = "separating";
    r.get(j, where, "kind", kind);
    r.get(j, where, "mode", mode);
    if (kind == "plane") {
        c.kind = mpm::Collider::Kind::Plane;
    } else if (kind == "box") {
        c.kind = mpm::Collider::Kind::Box;
    } else {
        r.fail(where + ".kind", "unknown collider kind '" + kind + "'");
    }
    if (mode == "sticky") {
        c.mode = mpm::Collider::Mode::Sticky;
    } else if (mode == "separating" || mode == "slip") {
        c.mode = mpm::Collider::Mode::Separating;
    } else {
        r.fail(where + ".mode", "unknown collider mode '" + mode + "'");
    }
    r.vec3(j, where, "point", c.point);
    r.vec3(j, where, "normal", c.normal);
    r.vec3(j, where, "lo", c.lo);
    r.vec3(j, where, "hi", c.hi);
    r.get(j, where, "friction", c.friction);
    if (c.kind == mpm::Collider::Kind::Plane) {
        if (c.normal.norm() == 0.0) {
            r.fail(where + ".normal", "must be non-zero");
        } else {
            c.normal.normalize();
        }
    } else if ((c.hi - c.lo).minCoeff() <= 0.0) {
        r.fail(where, "box needs lo < hi on every axis");
    }
    if (!(c.friction >= 0.0)) {
        r.fail(where + ".friction", "must be non-negative");
    }
    return c;
}

Camera parse_camera(Reader& r, const json& j, const std::string& where, const fs::path& base)
{
    if (j.contains("file")) {
        fs::path file;
        r.path(j, where, "file", base, file);
        Camera cam;
        r.guard(where + ".file", [&] { cam = io::read_camera(file); });
        return cam;
    }
    Vec3 target(0.5, 0.4, 0.5);
    double radius = 1.5;
    double azimuth = 0.0;
    double elevation = 15.0;
    double focal = 160.0;
    int width = 128;
    int height = 128;
    r.vec3(j, where, "target", target);
    r.get(j, where, "radius", radius);
    r.get(j, where, "azimuth_deg", azimuth);
    r.get(j, where, "elevation_deg", elevation);
    r.get(j, where, "focal", focal);
    r.get(j, where, "width", width);
    r.get(j, where, "height", height);
    if (!(radius > 0.0) || !(focal > 0.0) || width <= 0 || height <= 0) {
        r.fail(where, "orbit camera needs positive radius, focal length and image size");
        return {};
    }
    constexpr double deg = std::numbers::pi / 180.0;
    return Camera::orbit(target, radius, azimuth * deg, elevation * deg, focal, width, height);
}

void parse_material(Reader& r, const json& j, const std::string& where, SceneConfig& cfg)
{
    r.get(j, where, "preset", cfg.preset);
    r.guard(where + ".preset", [&] { cfg.material = mpm::ConstitutiveModel::preset(cfg.preset); });
    mpm::ConstitutiveModel& m = cfg.material;
    std::string name;
    if (j.contains("elasticity")) {
        r.get(j, where, "elasticity", name);
        r.guard(where + ".elasticity", [&] { m.elasticity = mpm::parse_elasticity(name); });
    }
    if (j.contains("plasticity")) {
        r.get(j, where, "plasticity", name);
        r.guard(where + ".plasticity", [&] { m.plasticity = mpm::parse_plasticity(name); });
    }
    r.get(j, where, "youngs_modulus", m.youngs_modulus);
    r.get(j, where, "poisson_ratio", m.poisson_ratio);
    r.get(j, where, "density", m.density);
    r.get(j, where, "yield_stress", m.yield_stress);
    r.get(j, where, "friction_angle", m.friction_angle);
    r.get(j, where, "cohesion", m.cohesion);
    r.get(j, where, "clamp_inverted", m.clamp_inverted);
    r.guard(where, [&] { m.validate(); });
}

void parse_schedule(Reader& r, const json& j, const std::string& where, optim::TrainSchedule& s)
{
    r.get(j, where, "epochs", s.epochs);
    r.get(j, where, "decay_epoch", s.decay_epoch);
    r.get(j, where, "decay_factor", s.decay_factor);
    r.get(j, where, "depth_start", s.depth_start);
    r.get(j, where, "depth_every", s.depth_every);
    r.get(j, where, "patch_size", s.patch_size);
    r.get(j, where, "delta", s.delta);
    r.get(j, where, "lambda_dssim", s.lambda_dssim);
    if (const json* lr = r.object(j, where, "lr")) {
        const std::string w = where + ".lr";
        r.get(*lr, w, "position", s.lr.position);
        r.get(*lr, w, "opacity", s.lr.opacity);
        r.get(*lr, w, "scale", s.lr.scale);
        r.get(*lr, w, "rotation", s.lr.rotation);
        r.get(*lr, w, "color", s.lr.color);
    }
    r.guard(where, [&] { s.validate(); });
}

} // namespace

SceneConfig parse_config(const std::string& text, const fs::path& base)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) {
        throw ValidationError("config must be a JSON object");
    }

    Reader r;
    SceneConfig cfg;
    cfg.base = base;
    cfg.text = text;

    r.path(root, "config", "splats", base, cfg.splats);
    if (const json* syn = r.object(root, "config", "synthetic")) {
        CubeSpec cube;
        const std::string w = "synthetic";
        std::string kind = "cube";
        r.get(*syn, w, "kind", kind);
        if (kind != "cube") {
            r.fail(w + ".kind", "only 'cube' is available");
        }
        r.get(*syn, w, "per_side", cube.per_side);
        r.get(*syn, w, "size", cube.size);
        r.vec3(*syn, w, "center", cube.center);
        r.get(*syn, w, "jitter", cube.jitter);
        r.get(*syn, w, "opacity", cube.opacity);
        r.get(*syn, w, "seed", cube.seed);
        if (cube.per_side < 1 || !(cube.size > 0.0) || !(cube.opacity > 0.0 && cube.opacity <= 1.0) ||
            !(cube.jitter >= 0.0 && cube.jitter < 0.5)) {
            r.fail(w, "needs per_side >= 1, size > 0, opacity in (0, 1] and jitter in [0, 0.5)");
        }
        cfg.synthetic = cube;
    }
    if (!cfg.synthetic && cfg.splats.empty()) {
        r.fail("config", "one of 'splats' or 'synthetic' is required");
    }

    if (const json* m = r.object(root, "config", "material")) {
        parse_material(r, *m, "material", cfg);
    } else {
        cfg.material = mpm::ConstitutiveModel::preset(cfg.preset);
    }

    if (root.contains("loads")) {
        if (!root.at("loads").is_array()) {
            r.fail("loads", "must be an array");
        } else {
            for (std::size_t i = 0; i < root.at("loads").size(); ++i) {
                cfg.loads.push_back(parse_load(r, root.at("loads")[i], "loads[" + std::to_string(i) + "]"));
            }
        }
    }
    if (root.contains("colliders")) {
        if (!root.at("colliders").is_array()) {
            r.fail("colliders", "must be an array");
        } else {
            for (std::size_t i = 0; i < root.at("colliders").size(); ++i) {
                cfg.colliders.push_back(
                    parse_collider(r, root.at("colliders")[i], "colliders[" + std::to_string(i) + "]"));
            }
        }
    }

    if (const json* g = r.object(root, "config", "grid")) {
        r.vec3(*g, "grid", "origin", cfg.grid.origin);
        r.get(*g, "grid", "spacing", cfg.grid.spacing);
        r.get(*g, "grid", "dims", cfg.grid.dims);
    }
    r.guard("grid", [&] { mpm::Grid(cfg.grid.origin, cfg.grid.spacing, cfg.grid.dims); });

    if (const json* s = r.object(root, "config", "simulation")) {
        SimulationSpec& sim = cfg.simulation;
        const std::string w = "simulation";
        r.get(*s, w, "frames", sim.frames);
        r.get(*s, w, "fps", sim.fps);
        r.get(*s, w, "cfl", sim.mpm.cfl);
        r.get(*s, w, "domain_walls", sim.mpm.domain_walls);
        r.get(*s, w, "wall_cells", sim.mpm.wall_cells);
        r.get(*s, w, "fill", sim.fill);
        r.get(*s, w, "dump_particles", sim.dump_particles);
        std::string transfer = "apic";
        r.get(*s, w, "transfer", transfer);
        if (transfer == "apic") {
            sim.mpm.transfer = mpm::Transfer::APIC;
        } else if (transfer == "pic") {
            sim.mpm.transfer = mpm::Transfer::PIC;
        } else {
            r.fail(w + ".transfer", "must be 'apic' or 'pic'");
        }
        std::string mode = "incremental";
        r.get(*s, w, "covariance_mode", mode);
        if (mode == "incremental") {
            sim.covariance_mode = kinematics::CovarianceMode::Incremental;
        } else if (mode == "from_deformation") {
            sim.covariance_mode = kinematics::CovarianceMode::FromDeformation;
        } else {
            r.fail(w + ".covariance_mode", "must be 'incremental' or 'from_deformation'");
        }
    }
    if (cfg.simulation.frames < 1) {
        r.fail("simulation.frames", "must be at least 1");
    }
    if (!(cfg.simulation.fps > 0.0)) {
        r.fail("simulation.fps", "must be positive");
    }
    if (!(cfg.simulation.mpm.cfl > 0.0 && cfg.simulation.mpm.cfl <= 1.0)) {
        r.fail("simulation.cfl", "must lie in (0, 1]");
    }
    if (cfg.simulation.mpm.wall_cells < 0) {
        r.fail("simulation.wall_cells", "must be non-negative");
    }

    if (const json* cams = r.object(root, "config", "cameras")) {
        if (const json* rc = r.object(*cams, "cameras", "render")) {
            cfg.render_camera = parse_camera(r, *rc, "cameras.render", base);
        } else {
            cfg.render_camera = parse_camera(r, json::object(), "cameras.render", base);
        }
        r.path(*cams, "cameras", "views", base, cfg.views);
    } else {
        cfg.render_camera = parse_camera(r, json::object(), "cameras.render", base);
    }
    if (const json* rs = r.object(root, "config", "render")) {
        r.get(*rs, "render", "covariance_floor", cfg.render.covariance_floor);
        r.get(*rs, "render", "min_weight", cfg.render.min_weight);
        r.get(*rs, "render", "min_transmittance", cfg.render.min_transmittance);
        r.get(*rs, "render", "tile_size", cfg.render.tile_size);
        r.get(*rs, "render", "hard_depth_includes_opacity", cfg.render.hard_depth_includes_opacity);
        if (cfg.render.tile_size < 1 || !(cfg.render.covariance_floor >= 0.0)) {
            r.fail("render", "tile_size must be positive and covariance_floor non-negative");
        }
    }

    if (const json* o = r.object(root, "config", "optimization")) {
        parse_schedule(r, *o, "optimization", cfg.schedule);
    }

    if (const json* p = r.object(root, "config", "propagation")) {
        const std::string w = "propagation";
        r.get(*p, w, "keyframe_interval", cfg.injection.keyframe_interval);
        r.get(*p, w, "tau_f", cfg.injection.tau_features);
        r.get(*p, w, "tau_a", cfg.injection.tau_attention);
        r.get(*p, w, "sampling_steps", cfg.injection.sampling_steps);
        r.get(*p, w, "guidance", cfg.injection.guidance_enhanced);
        r.get(*p, w, "seed", cfg.seed);
        r.get(*p, w, "window", cfg.nn_window);
        r.path(*p, w, "features", base, cfg.features);
        r.guard(w, [&] { cfg.injection.validate(); });
    }

    r.get(root, "config", "seed", cfg.seed);

    if (const json* b = r.object(root, "config", "blend")) {
        r.path(*b, "blend", "frames", base, cfg.frames);
        r.path(*b, "blend", "background", base, cfg.background);
        r.vec3(*b, "blend", "background_color", cfg.background_color);
        if (cfg.background_color.minCoeff() < 0.0 || cfg.background_color.maxCoeff() > 1.0) {
            r.fail("blend.background_color", "components must lie in [0, 1]");
        }
    }
    if (const json* e = r.object(root, "config", "eval")) {
        r.path(*e, "eval", "scores", base, cfg.scores);
    }
    r.path(root, "config", "output", base, cfg.output);
    if (!root.contains("output")) {
        cfg.output = base / "out";
    }

    static const std::vector<std::string> known = {
        "splats", "synthetic", "material", "loads", "colliders", "grid", "simulation", "cameras", "render",
        "optimization", "propagation", "seed", "blend", "eval", "output", "comment"};
    for (const auto& [key, value] : root.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            r.fail("config", "unknown key '" + key + "'");
        }
    }

    if (!r.errors.empty()) {
        std::string msg = "invalid config (" + std::to_string(r.errors.size()) + " problem" +
                          (r.errors.size() == 1 ? "" : "s") + "):";
        for (const auto& e : r.errors) {
            msg += "\n  " + e;
        }
        throw ValidationError(msg);
    }
    return cfg;
}

SceneConfig load_config(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError(path.string() + ": cannot open config");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

const char* command_name(Command c)
{
    switch (c) {
    case Command::Optimize:
        return "optimize";
    case Command::Simulate:
        return "simulate";
    case Command::Blend:
        return "blend";
    case Command::Propagate:
        return "propagate";
    case Command::Eval:
        return "eval";
    }
    return "unknown";
}

void check_inputs(const SceneConfig& config, Command command)
{
    std::vector<std::string> errors;
    const auto need = [&](const fs::path& p, const char* what) {
        if (p.empty()) {
            errors.push_back(std::string(what) + " is not set");
        } else if (!fs::exists(p)) {
            errors.push_back(std::string(what) + " '" + p.string() + "' does not exist");
        }
    };
    const bool uses_splats = command == Command::Optimize || command == Command::Simulate;
    if (uses_splats && !config.synthetic) {
        need(config.splats, "splats");
    }
    switch (command) {
    case Command::Optimize:
        need(config.views, "cameras.views");
        break;
    case Command::Blend:
        need(config.frames.empty() ? config.output / "frames" : config.frames, "blend.frames");
        if (!config.background.empty()) {
            need(config.background, "blend.background");
        }
        break;
    case Command::Propagate:
        need(config.features, "propagation.features");
        break;
    case Command::Eval:
        need(config.scores, "eval.scores");
        break;
    case Command::Simulate:
        break;
    }
    if (!errors.empty()) {
        std::string msg = std::string(command_name(command)) + ": missing inputs:";
        for (const auto& e : errors) {
            msg += "\n  " + e;
        }
        throw ValidationError(msg);
    }
}

} // namespace physgs::scene
