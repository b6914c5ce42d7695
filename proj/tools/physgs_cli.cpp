// Command-line driver: optimize, simulate, blend, propagate, eval.

#include "physgs/scene.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>

namespace {

using physgs::scene::Command;

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

/// Prints each distinct warning kind once and a repeat count at exit.
class WarningSink {
public:
    void operator()(const std::string& msg)
    {
        const std::string kind = msg.find("CFL") != std::string::npos ? "cfl" : msg;
        if (counts_[kind]++ == 0) {
            std::cerr << "warning: " << msg << '\n';
        }
    }
    void summary() const
    {
        for (const auto& [kind, n] : counts_) {
            if (n > 1) {
                std::cerr << "warning: previous " << (kind == "cfl" ? "CFL substepping" : "warning")
                          << " message repeated " << n - 1 << " more time(s)\n";
            }
        }
    }

private:
    std::map<std::string, int> counts_;
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Physics-driven Gaussian splat dynamics toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out_dir;

    const std::pair<Command, const char*> commands[] = {
        {Command::Optimize, "Refine a coarse splat against supervision views"},
        {Command::Simulate, "Simulate the splat with MPM and render every frame"},
        {Command::Blend, "Blend rendered frames over a background"},
        {Command::Propagate, "Propagate enhanced keyframe features to every frame"},
        {Command::Eval, "Z-score normalize a model-by-scene score table"},
    };
    std::map<CLI::App*, Command> lookup;
    for (const auto& [cmd, help] : commands) {
        CLI::App* sub = app.add_subcommand(physgs::scene::command_name(cmd), help);
        sub->add_option("--config", config_path, "Scene configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Seed overriding the config");
        sub->add_option("--threads", threads, "Worker threads (0 keeps the OpenMP default)")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", out_dir, "Output directory overriding the config");
        lookup[sub] = cmd;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    Command command = Command::Optimize;
    for (const auto& [sub, cmd] : lookup) {
        if (sub->parsed()) {
            command = cmd;
        }
    }

    WarningSink sink;
    physgs::set_warning_handler([&](const std::string& m) { sink(m); });
    physgs::set_thread_count(threads);

    int status = 0;
    try {
        physgs::scene::SceneConfig config = physgs::scene::load_config(config_path);
        if (seed) {
            config.seed = *seed;
        }
        if (!out_dir.empty()) {
            config.output = out_dir;
        }
        physgs::scene::check_inputs(config, command);
        std::filesystem::path result;
        switch (command) {
        case Command::Optimize:
            result = physgs::scene::run_optimize(config);
            break;
        case Command::Simulate:
            result = physgs::scene::run_simulate(config);
            break;
        case Command::Blend:
            result = physgs::scene::run_blend(config);
            break;
        case Command::Propagate:
            result = physgs::scene::run_propagate(config);
            break;
        case Command::Eval:
            result = physgs::scene::run_eval(config);
            break;
        }
        std::cout << result.string() << '\n';
    } catch (const physgs::ValidationError& e) {
        std::cerr << physgs::scene::command_name(command) << ": " << e.what() << '\n';
        status = kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << physgs::scene::command_name(command) << ": " << e.what() << '\n';
        status = kExitRuntime;
    }
    sink.summary();
    physgs::set_warning_handler({});
    return status;
}
