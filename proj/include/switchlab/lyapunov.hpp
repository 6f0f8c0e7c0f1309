#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "switchlab/model.hpp"
#include "switchlab/segment.hpp"
#include "switchlab/simulate.hpp"

namespace switchlab {

using PointFn = std::function<double(std::span<const double>, int)>;
using PointVecFn = std::function<void(std::span<const double>, int, std::span<double>)>;
using TimeFn = std::function<double(double, int)>;

/// One term  int_{-r}^0 g(t, i) f2(phi(t), i) dt  of a cylindrical functional.
struct IntegralTerm {
    PointFn f2;
    TimeFn g;
    TimeFn g_dt;
};

/// V(phi, i) = f1(phi(0), i) + sum of integral terms.
///
/// Vertical derivatives only involve f1; the horizontal derivative only involves the integral
/// terms. f1_grad fills n entries, f1_hess an n x n row-major block.
struct CylindricalLyapunov {
    PointFn f1;
    PointVecFn f1_grad;
    PointVecFn f1_hess;
    std::vector<IntegralTerm> integrals;

    double value(const SegmentPath& seg, int regime) const;
    double integral_part(const SegmentPath& seg, int regime) const;

    static CylindricalLyapunov constant(double c);
    /// f1, f2 and g given as point expressions; g reads its time argument through x.
    /// Derivatives of f1 and g use central differences.
    static CylindricalLyapunov from_expressions(const std::string& f1, const std::optional<std::string>& f2 = {},
                                                const std::optional<std::string>& g = {});
    /// a * V + b * W.
    static CylindricalLyapunov combine(double a, const CylindricalLyapunov& v, double b,
                                       const CylindricalLyapunov& w);
};

/// C^2 cap used in the birth-death example: f(x) = |x| for |x| >= 1 and (-x^4 + 6x^2 + 3)/8 inside.
double quartic_cap(double x);
double quartic_cap_d1(double x);
double quartic_cap_d2(double x);

/// kappa = sup over |x| <= 1, i <= regime_max of |-f'(x) x b(x,i) + f''(x) sigma(x,i)^2 / 2|, with
/// f the quartic cap. Grid maximum followed by a local refinement around the best node.
double example1_kappa(const FunctionalExpr& b, const FunctionalExpr& sigma, int regime_max,
                      std::size_t grid = 4001);

/// V(phi, i) = f(phi(0)) + 2 kappa i with f the quartic cap.
CylindricalLyapunov example1_lyapunov(double kappa);

/// V(phi, i) = U(phi(0)) + w * (i + int_{-r}^0 2^{(t+r)/r} |phi(t)| dt) with U(x) = x^2.
/// The weight 2^{(t+r)/r} makes the horizontal derivative cancel the |phi(0)|, |phi(-r)| terms of
/// the ex4 kernel.
CylindricalLyapunov example4_lyapunov(double delay, double weight);

/// Central-difference gradient / Hessian with steps h (exposed for order studies).
std::vector<double> central_gradient(const PointFn& f, std::span<const double> x, int regime, double h);
std::vector<double> central_hessian(const PointFn& f, std::span<const double> x, int regime, double h);

double horizontal_derivative(const CylindricalLyapunov& v, const SegmentPath& seg, int regime);

struct GeneratorTerms {
    double horizontal = 0.0;
    double drift = 0.0;
    double diffusion = 0.0;
    double switching = 0.0;
    double total() const noexcept { return horizontal + drift + diffusion + switching; }
};

GeneratorTerms generator_terms(const CylindricalLyapunov& v, const RegimeSwitchingModel& model,
                               const SegmentPath& seg, int regime);
double apply_generator(const CylindricalLyapunov& v, const RegimeSwitchingModel& model, const SegmentPath& seg,
                       int regime);

enum class DriftKind {
    /// LV <= C 1{V <= H}
    Recurrence,
    /// LV <= -C1 + C2 1{V <= H}
    PositiveRecurrence,
    /// LV <= -C1 V + C2
    Exponential
};

DriftKind parse_drift_kind(std::string_view text);
std::string to_string(DriftKind kind);

/// Sample set for a drift scan: constant segments phi = x e_1 on a grid of x, plus
/// Brownian-bridge-roughened segments with sup-norm at most `sup_bound`, for regimes 1..regime_max.
struct DriftSampler {
    double x_max = 5.0;
    std::size_t n_constant = 41;
    std::size_t n_rough = 200;
    double rough_amplitude = 1.0;
    double sup_bound = 6.0;
    int regime_max = 10;
    std::size_t intervals = 50;
    std::uint64_t seed = 1;
};

std::vector<std::pair<SegmentPath, int>> drift_sample_points(const RegimeSwitchingModel& model,
                                                             const DriftSampler& sampler);

/// Constants of the drift inequality; `c` and `h` for Recurrence, `c1`, `c2`, `h` otherwise.
struct DriftConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    double h = 0.0;
};

struct DriftPoint {
    double phi0 = 0.0;     // first component of phi(0)
    double phi_r = 0.0;    // first component of phi(-r)
    double sup_norm = 0.0;
    int regime = 1;
    double v = 0.0;
    double lv = 0.0;
    double margin = 0.0;
};

struct DriftReport {
    DriftKind kind = DriftKind::Recurrence;
    DriftConstants constants;
    bool fitted = false;
    std::vector<DriftPoint> points;
    std::vector<std::size_t> violations;
    double worst_margin = 0.0;
    /// V increases along growing |phi(0)| and along growing i beyond the sampled midpoint.
    bool coercive = false;
};

/// Margin of one point: right-hand side minus LV (nonnegative when the inequality holds).
double drift_margin(DriftKind kind, const DriftConstants& c, double v, double lv);

/// Least-violating constants for the sampled (V, LV) pairs.
/// Recurrence: C = max(0, max LV), H = largest V with LV > 0.
/// PositiveRecurrence: H scanned over sampled V values, C1 = -max_{V > H} LV, C2 = max(0, max_{V<=H} LV + C1),
/// keeping the H with the smallest C2 / C1 among C1 > 0.
/// Exponential: C2(C1) = max(0, max(LV + C1 V)). Without a cap, C1 is scanned on a grid in (0, c1_max]
/// keeping the smallest C2 / C1. With c2_cap, C1 is the largest value in [0, c1_max] with C2(C1) <= c2_cap
/// (C1 = 0 when even max LV exceeds the cap).
DriftConstants fit_drift_constants(DriftKind kind, std::span<const double> v, std::span<const double> lv,
                                   double c1_max = 10.0, std::optional<double> c2_cap = {});

DriftReport scan_drift_condition(const CylindricalLyapunov& v, const RegimeSwitchingModel& model,
                                 const DriftSampler& sampler, DriftKind kind,
                                 std::optional<DriftConstants> constants = {}, std::optional<double> c2_cap = {});

struct DynkinResult {
    /// Mean over paths of V(X_T, a(T)) - V(X_0, a(0)) - sum LV dt.
    double residual = 0.0;
    double standard_error = 0.0;
    /// Same mean after subtracting the exact one-step martingale increments (diffusion and
    /// switching); isolates the discretization bias with much smaller noise.
    double deterministic = 0.0;
    double deterministic_se = 0.0;
    std::size_t n_paths = 0;
    std::size_t censored = 0;
};

DynkinResult dynkin_residual(const CylindricalLyapunov& v, const RegimeSwitchingModel& model,
                             const InitialCondition& init, double horizon, std::size_t n_paths,
                             std::uint64_t seed, unsigned threads = 1, SimOptions options = {});

}  // namespace switchlab
