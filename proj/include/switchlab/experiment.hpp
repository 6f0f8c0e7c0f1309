#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "switchlab/lyapunov.hpp"
#include "switchlab/model.hpp"

namespace switchlab {

inline constexpr const char* kVersion = "0.1.0";

struct ModelRef {
    std::string builtin;  // ex1 .. ex4, ex4-point
    BuiltinParams params;
    std::string file;
    std::optional<nlohmann::json> inline_model;
};

struct LyapunovSpec {
    std::string kind = "example1";  // example1 | example4 | expr
    std::optional<double> kappa;
    double weight = 0.1;
    std::string f1 = "x*x";
    std::string f2;  // empty: no integral term
    std::string g = "1";
};

struct TargetSpec {
    std::string shape = "exit-box";  // box | ball | exit-box
    std::vector<double> lo{0.0}, hi{1.0}, center{0.0};
    double radius = 1.0;
    std::vector<std::string> regimes{"*"};
    bool whole_segment = false;
};

/// Every field has a default; tasks read the groups they need.
struct ExperimentConfig {
    ModelRef model;
    std::string task;
    std::uint64_t seed = 1;
    double dt = 1e-3;
    double T = 1.0;
    std::size_t n_paths = 1000;
    unsigned threads = 1;
    std::string mode = "euler-rate";
    double h_cap = 1e6;
    std::uint64_t record_every = 1;
    std::vector<double> x0{1.0};
    int regime0 = 1;
    std::string out = "out";

    LyapunovSpec lyapunov;
    std::string condition = "thm2.2";
    DriftSampler sampler;
    std::optional<DriftConstants> constants;
    std::optional<double> c2_cap;

    TargetSpec target;
    double t_max = 10.0;
    bool bridge = false;

    std::vector<double> x0_b{-1.0};
    int regime0_b = 1;
    double t_end = 10.0;
    std::size_t n_times = 21;
    std::size_t cells = 50;
    double regime_quantile = 0.999;

    std::vector<std::pair<double, double>> domain{{0.0, 1.0}};
    double h = 1e-2;
    int K = 1;
    double tol = 1e-10;
    std::size_t m_max = 10000;

    std::pair<double, double> d1{-1.0, 1.0};
    std::vector<double> ks{10.0, 100.0, 1000.0};
    std::vector<double> probes{2.0};
    std::vector<int> probe_regimes{1};
    double tol_rec = 1e-3;
};

/// Task names accepted in configs; subcommand aliases "scan" and "tv" map to the long names.
std::string canonical_task(std::string_view name);

/// Throws ConfigError carrying the JSON path of the offending field.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_text(const std::string& text);
nlohmann::json config_to_json(const ExperimentConfig& c);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Checks task-specific requirements that do not need the model.
void validate(const ExperimentConfig& c);

/// FNV-1a of the canonical JSON text.
std::string config_hash(const ExperimentConfig& c);

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> dt;
    std::optional<unsigned> threads;
    std::optional<std::string> out;
};

void apply_overrides(ExperimentConfig& c, const Overrides& o);

struct RunOutcome {
    int exit_code = 0;  // 0 ok, 2 config error, 3 numeric failure, 1 other
    std::string message;
    std::vector<std::string> artifacts;
};

/// Runs the task and writes artifacts plus manifest.json into c.out.
RunOutcome run_experiment(const ExperimentConfig& c);

}  // namespace switchlab
