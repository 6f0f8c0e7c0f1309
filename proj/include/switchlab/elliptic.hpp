#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "switchlab/error.hpp"
#include "switchlab/model.hpp"

namespace switchlab {

using CoefFn = std::function<double(double, int)>;
/// Appends (j, q_ij(x)) for j != i; targets above the truncation level are dropped by the system.
using RatesFn = std::function<void(double, int, std::vector<std::pair<int, double>>&)>;

/// 1-D weakly coupled Dirichlet problem
///   1/2 s^2 u'' + b u' - q_i u + sum_j q_ij u_j = g   in D,   u = f on the boundary,
/// with D a finite union of disjoint open intervals and regimes 1..K.
struct EllipticProblem {
    std::vector<std::pair<double, double>> intervals;
    double h = 1e-2;
    int regimes = 1;
    CoefFn drift;
    CoefFn sigma;
    RatesFn rates;     // empty = no switching
    CoefFn rhs;        // g, empty = 0
    CoefFn boundary;   // f, empty = 0
    int max_halvings = 4;
};

/// Problem with the coefficients of a past-independent scalar model; rates to j > K are dropped.
/// The problem keeps a reference to the model.
EllipticProblem problem_from_model(const RegimeSwitchingModel& model, std::vector<std::pair<double, double>> intervals,
                                   double h, int regimes);

/// Surrogate of the base-set condition: the smallest n0 with sum_{j<=n0} q_ij(x) >= eps0 > 0 for
/// every i in (n0, K] and grid x. M_D is the largest q_i on the grid.
struct BaseSetCheck {
    int n0 = 1;
    double eps0 = 0.0;
    double m_d = 0.0;
    bool holds = false;
};

/// Assembled grid and coefficients; construction halves h until the central scheme is
/// diagonally dominant (h |b| <= s^2 at every interior node).
class EllipticSystem {
public:
    struct Component {
        double lo, hi;
        std::size_t offset;     // index of the node at lo
        std::size_t intervals;  // nodes offset .. offset + intervals
        double h;
    };

    explicit EllipticSystem(EllipticProblem problem);

    const EllipticProblem& problem() const noexcept { return problem_; }
    int regimes() const noexcept { return problem_.regimes; }
    const std::vector<Component>& components() const noexcept { return components_; }
    const std::vector<double>& nodes() const noexcept { return x_; }
    std::size_t node_count() const noexcept { return x_.size(); }
    bool is_boundary(std::size_t p) const noexcept { return boundary_[p]; }
    /// Grid step actually used (largest over components) and the number of halvings applied.
    double h() const noexcept;
    int halvings() const noexcept { return halvings_; }
    /// Smallest s^2 on the grid over all regimes.
    double theta() const noexcept { return theta_; }

    double q_total(int regime, std::size_t p) const { return qtot_[idx(regime, p)]; }
    const std::vector<std::pair<int, double>>& rates(int regime, std::size_t p) const { return rates_[idx(regime, p)]; }
    double rhs(int regime, std::size_t p) const { return g_[idx(regime, p)]; }
    double boundary_value(int regime, std::size_t p) const { return f_[idx(regime, p)]; }
    double lower(int regime, std::size_t p) const { return lo_[idx(regime, p)]; }
    double upper(int regime, std::size_t p) const { return up_[idx(regime, p)]; }
    double diffusion_diag(int regime, std::size_t p) const { return diag_[idx(regime, p)]; }

    BaseSetCheck base_set() const;
    /// Linear interpolation of a grid function at x inside one component.
    double interpolate(const std::vector<double>& u, double x) const;

private:
    std::size_t idx(int regime, std::size_t p) const { return static_cast<std::size_t>(regime - 1) * x_.size() + p; }
    void build_grid(double h);
    bool assemble();

    EllipticProblem problem_;
    std::vector<Component> components_;
    std::vector<double> x_;
    std::vector<bool> boundary_;
    std::vector<double> lo_, up_, diag_, qtot_, g_, f_;
    std::vector<std::vector<std::pair<int, double>>> rates_;
    double theta_ = 0.0;
    int halvings_ = 0;
};

/// Solves 1/2 s^2 u'' + b u' - q_i u = rhs for one regime with the system's boundary data.
/// Entries of `rhs` at boundary nodes are ignored.
std::vector<double> solve_scalar_dirichlet(const EllipticSystem& sys, int regime, std::span<const double> rhs);

struct IterationTrace {
    /// deltas[m] = sup_{x,i} |u_{m+1} - u_m|
    std::vector<double> deltas;
    /// ratios[m] = deltas[m+2] / deltas[m] (NaN when deltas[m] = 0)
    std::vector<double> ratios;
    std::optional<double> bound;
};

class NonConvergence : public NumericError {
public:
    NonConvergence(const std::string& what, IterationTrace trace) : NumericError(what), trace_(std::move(trace)) {}
    const IterationTrace& trace() const noexcept { return trace_; }

private:
    IterationTrace trace_;
};

struct ContractionBound {
    BaseSetCheck base;
    double eps1 = 0.0;
    double p_hat = 0.0;
    double bound = 0.0;
};

/// p_hat = max over i <= n0 and grid x of E[1 - exp(-int_0^tau q_i(Y) ds)], Y the regime-i diffusion,
/// from the PDE 1/2 s^2 w'' + b w' - q_i w = -q_i with w = 0 on the boundary.
ContractionBound contraction_bound(const EllipticSystem& sys);

struct MonteCarloOptions {
    std::size_t n_paths = 2000;
    double dt = 1e-4;
    std::uint64_t seed = 1;
    std::size_t probes_per_component = 9;
    double t_max = 100.0;
    unsigned threads = 1;
};

/// Same p_hat estimated by simulating Y from interior probe points.
double jump_probability_mc(const EllipticSystem& sys, int n0, const MonteCarloOptions& options = {});

struct FixedPointOptions {
    double tol = 1e-10;  // stop when delta <= tol (1 + max |u|)
    std::size_t m_max = 10000;
    unsigned threads = 1;
    bool with_bound = true;
};

struct FixedPointResult {
    std::vector<std::vector<double>> u;  // u[i-1][p]
    IterationTrace trace;
    std::size_t iterations = 0;
};

/// Successive approximation u_{m+1}(., i) = S_i(g_i - sum_j q_ij u_m(., j)) from u_0 = S_i(g_i).
FixedPointResult solve_fixed_point(const EllipticSystem& sys, const FixedPointOptions& options = {});

/// Expected exit time: g = -1, zero boundary data.
FixedPointResult mean_exit_time(EllipticProblem problem, const FixedPointOptions& options = {});

enum class Verdict { Recurrent, Transient, Inconclusive };
std::string to_string(Verdict v);

struct RecurrenceOptions {
    std::vector<double> probes{2.0};
    std::vector<int> probe_regimes{1};
    double tol = 1e-3;
    FixedPointOptions solver{};
};

struct RecurrenceReport {
    std::pair<double, double> d1;
    std::vector<double> ks;
    /// deficit at k: max over probes of 1 - v_k(x, i)
    std::vector<double> deficits;
    /// values[k][probe * regimes + r]
    std::vector<std::vector<double>> values;
    double limit_deficit = 0.0;
    Verdict verdict = Verdict::Inconclusive;
};

/// For each k solves on (-k, l) U (u, k) with data 1 at l, u and 0 at -k, k. The limit deficit is
/// the Aitken extrapolation of the last three deficits. Recurrent: deficits decrease and the limit is
/// <= tol. Transient: the limit is > 10 tol and the last two deficits agree within 10%.
RecurrenceReport recurrence_indicator(const EllipticProblem& base, std::pair<double, double> d1,
                                      const std::vector<double>& ks, const RecurrenceOptions& options = {});

}  // namespace switchlab
