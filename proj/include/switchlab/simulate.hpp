#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "switchlab/error.hpp"
#include "switchlab/model.hpp"
#include "switchlab/rng.hpp"
#include "switchlab/segment.hpp"

namespace switchlab {

enum class JumpMode {
    /// One jump at most per step, with probability 1 - exp(-q_i dt).
    EulerRate,
    /// Poisson candidates at a dominating rate, accepted through the interval lookup.
    Thinning
};

JumpMode parse_jump_mode(std::string_view text);
std::string to_string(JumpMode mode);

/// Raised when ||phi|| exceeds the explosion cap or X stops being finite.
class ExplosionGuard : public NumericError {
public:
    using NumericError::NumericError;
};

struct SimOptions {
    JumpMode mode = JumpMode::EulerRate;
    double h_cap = 1e6;
    /// H = ||phi|| + margin when evaluating a local rate bound for thinning.
    double bound_margin = 1.0;
};

/// Returns the j whose interval [sum_{k<j} q_ik, sum_{k<=j} q_ik) contains z; nullopt iff z >= q_i.
std::optional<int> sample_regime_jump(const RateRow& row, double z);

struct HybridState {
    SegmentPath seg;
    int regime = 1;
    double time = 0.0;
    std::uint64_t steps = 0;
    Philox rng{0, 0};
    std::normal_distribution<double> normal{};

    HybridState() = default;
    HybridState(SegmentPath s, int i, std::uint64_t seed, std::uint64_t path)
        : seg(std::move(s)), regime(i), rng(seed, path) {}
};

struct JumpEvent {
    double time;
    int from;
    int to;
};

/// Advances a HybridState by one grid step of size seg.step(); owns scratch buffers.
class Stepper {
public:
    Stepper(const RegimeSwitchingModel& model, SimOptions options);

    /// Jumps are stamped with the end-of-step grid time and appended to `log` when given.
    void step(HybridState& state, std::vector<JumpEvent>* log = nullptr);

    /// sigma(X, a) * dW of the last step (length n).
    const std::vector<double>& last_diffusion_increment() const noexcept { return diff_inc_; }
    /// Brownian increment dW of the last step (length d).
    const std::vector<double>& last_brownian_increment() const noexcept { return dw_; }
    /// Rate row at the start of the last step, for the pre-jump regime.
    const RateRow& last_row() const noexcept { return row_; }
    const RegimeSwitchingModel& model() const noexcept { return model_; }
    const SimOptions& options() const noexcept { return options_; }

private:
    const RegimeSwitchingModel& model_;
    SimOptions options_;
    RateRow row_;
    RateRow scratch_row_;
    std::vector<double> x_, b_, sigma_, dw_, diff_inc_;
};

struct InitialCondition {
    SegmentPath seg;
    int regime = 1;
};

/// Constant initial segment phi = x0 with grid step dt (dt must divide r).
InitialCondition constant_initial(const RegimeSwitchingModel& model, std::span<const double> x0, int regime,
                                  double dt);
/// Number of grid intervals m with m * dt = r; throws DomainError when dt does not divide r.
std::size_t segment_intervals(double delay, double dt);
/// Number of steps covering [0, T]; throws DomainError when dt does not divide T.
std::uint64_t step_count(double horizon, double dt);

struct Trajectory {
    std::size_t dim = 1;
    std::vector<double> times;
    std::vector<double> x;  // times.size() * dim
    std::vector<int> regimes;
    std::vector<JumpEvent> jumps;
    bool censored = false;
    std::string censor_reason;
};

/// Path on [0, T]; `record_every` thins the stored samples (the final time is always stored).
Trajectory simulate_path(const RegimeSwitchingModel& model, const InitialCondition& init, double horizon,
                         std::uint64_t seed, std::uint64_t path_index = 0, SimOptions options = {},
                         std::uint64_t record_every = 1);

/// Point target D x N for hitting times.
struct HitTarget {
    enum class Shape { Box, Ball, BoxExterior };
    Shape shape = Shape::Box;
    std::vector<double> lo, hi;  // Box / BoxExterior (open box for the exterior)
    std::vector<double> center;  // Ball
    double radius = 0.0;
    std::vector<RegimePattern> regimes{RegimePattern{}};
    /// Require every node of the segment to lie in D, not just phi(0).
    bool whole_segment = false;

    static HitTarget box(std::vector<double> lo, std::vector<double> hi);
    static HitTarget ball(std::vector<double> center, double radius);
    /// D = complement of the open box (lo, hi): the hit time is the exit time from the box.
    static HitTarget exit_box(std::vector<double> lo, std::vector<double> hi);

    bool contains_point(std::span<const double> x) const;
    bool contains_regime(int regime) const;
    bool contains(const SegmentPath& seg, int regime) const;
};

struct HitOptions {
    SimOptions sim;
    /// For exit targets: also count Brownian-bridge crossings between grid points, which removes
    /// the O(sqrt(dt)) overshoot bias of discrete monitoring. Off = first grid time in D.
    bool bridge_correction = false;
};

struct HitResult {
    double tau = 0.0;
    bool censored = false;
};

HitResult first_hit(const RegimeSwitchingModel& model, const InitialCondition& init, const HitTarget& target,
                    double t_max, std::uint64_t seed, std::uint64_t path_index = 0, HitOptions options = {});

/// first_hit over paths 0..n-1, stored by path index.
std::vector<HitResult> first_hit_batch(const RegimeSwitchingModel& model, const InitialCondition& init,
                                       const HitTarget& target, double t_max, std::uint64_t seed,
                                       std::size_t n_paths, unsigned threads, HitOptions options = {});

/// Samples of (X(t), a(t)) at the requested grid times across paths.
struct MarginalSamples {
    double time = 0.0;
    std::size_t dim = 1;
    std::vector<double> x;     // n_kept * dim
    std::vector<int> regimes;  // n_kept
    std::size_t censored = 0;

    std::size_t size() const noexcept { return regimes.size(); }
};

std::vector<MarginalSamples> sample_marginals(const RegimeSwitchingModel& model, const InitialCondition& init,
                                              const std::vector<double>& times, std::uint64_t seed,
                                              std::size_t n_paths, unsigned threads, SimOptions options = {});

}  // namespace switchlab
