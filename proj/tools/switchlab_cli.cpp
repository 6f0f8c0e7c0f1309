#include <iostream>
#include <string>
#include <utility>

#include "CLI11.hpp"
#include "switchlab/error.hpp"
#include "switchlab/experiment.hpp"
#include "switchlab/io.hpp"

namespace {

struct Flags {
    std::string config;
    switchlab::Overrides overrides;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", f.overrides.seed, "override the config seed");
    sub->add_option("--dt", f.overrides.dt, "override the config time step");
    sub->add_option("--threads", f.overrides.threads, "worker threads");
    sub->add_option("--out", f.overrides.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"switchlab: switching diffusions with path-dependent regime rates"};
    app.set_version_flag("--version", std::string(switchlab::kVersion));
    app.require_subcommand(1);
    Flags flags;
    const std::pair<const char*, const char*> tasks[] = {
        {"simulate", "one trajectory and its jump log"},
        {"scan", "drift-condition scan of a Lyapunov function"},
        {"dynkin", "Monte-Carlo Dynkin residual"},
        {"hitting", "first hitting times of a target set"},
        {"tv", "total-variation distance between two initial laws"},
        {"exit-time", "mean exit time from the elliptic system"},
        {"recurrence", "recurrence indicator v_k on growing domains"},
    };
    for (const auto& [name, about] : tasks) add_common(app.add_subcommand(name, about), flags);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    try {
        auto cfg = switchlab::parse_config_text(switchlab::read_file(flags.config));
        const std::string task = switchlab::canonical_task(sub);
        if (!cfg.task.empty() && cfg.task != task)
            throw switchlab::ConfigError("task", "config names '" + cfg.task + "' but the subcommand is '" + sub + "'");
        cfg.task = task;
        switchlab::apply_overrides(cfg, flags.overrides);
        const auto outcome = switchlab::run_experiment(cfg);
        if (outcome.exit_code != 0) std::cerr << "switchlab: " << outcome.message << "\n";
        else
            for (const auto& a : outcome.artifacts) std::cout << cfg.out << "/" << a << "\n";
        return outcome.exit_code;
    } catch (const switchlab::ConfigError& e) {
        std::cerr << "switchlab: " << e.what() << "\n";
        return 2;
    }
}
