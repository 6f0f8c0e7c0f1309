#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "switchlab/elliptic.hpp"
#include "switchlab/ergostats.hpp"
#include "switchlab/lyapunov.hpp"
#include "switchlab/model.hpp"
#include "switchlab/simulate.hpp"

namespace switchlab {

/// Shortest-round-trip-safe text for a double (%.17g).
std::string fmt(double v);

/// Writes to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

std::string trajectory_csv(const Trajectory& traj);
std::string jumps_csv(const Trajectory& traj);
std::string segment_csv(const SegmentPath& seg);
std::string tv_curve_csv(const TVCurve& curve);
std::string hitting_csv(const HittingBatch& batch);
std::string solution_csv(const EllipticSystem& sys, const std::vector<std::vector<double>>& u);
std::string trace_csv(const IterationTrace& trace);

nlohmann::json verdict_json(const RecurrenceReport& rep);
nlohmann::json drift_report_json(const DriftReport& rep);
nlohmann::json batch_summary_json(std::size_t n_paths, std::size_t censored, std::uint64_t seed, double dt,
                                  JumpMode mode);

/// Model files: {name, n, d?, r, drift, diffusion, kernel: {form, entries, bound}}.
/// drift/diffusion are lists of {regimes, expr: [...]}; a bare string means {"*", [string]}.
/// bound is {"global": M} or {"local": "expr in x=H and i"}.
nlohmann::json model_to_json(const RegimeSwitchingModel& model);
RegimeSwitchingModel model_from_json(const nlohmann::json& j);

}  // namespace switchlab
