#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "switchlab/expr.hpp"
#include "switchlab/segment.hpp"

namespace switchlab {

/// Set of regimes written "*", "3", "2-5" or "2-" (open ended). Regimes start at 1.
struct RegimePattern {
    int lo = 1;
    int hi = 0;  // 0 = unbounded

    static RegimePattern parse(std::string_view text);
    bool matches(int regime) const noexcept { return regime >= lo && (hi == 0 || regime <= hi); }
    std::string to_string() const;
};

/// Target of a rate entry: "i+k", "i-k" (relative) or "j" (absolute).
struct TargetRule {
    bool relative = true;
    int value = 1;

    static TargetRule parse(std::string_view text);
    int resolve(int regime) const noexcept { return relative ? regime + value : value; }
    std::string to_string() const;
};

enum class KernelForm { BandedBirthDeath, JumpToBase, DenseTruncated, ExpressionTable };

KernelForm parse_kernel_form(std::string_view text);
std::string to_string(KernelForm form);

/// Dominating bound on the total jump rate q_i(phi).
///
/// Global: q_i(phi) <= M everywhere. Local: q_i(phi) <= M_H(i) whenever ||phi|| <= H, where
/// M_H is a point expression evaluated with x := H.
struct RateBound {
    enum class Kind { Global, Local };
    Kind kind = Kind::Global;
    double global = 0.0;
    FunctionalExpr local;

    static RateBound global_bound(double m);
    static RateBound local_bound(const std::string& expr_in_h);
    double at(double h, int regime) const;
};

struct RateEntry {
    RegimePattern from;
    TargetRule to;
    FunctionalExpr rate;  // segment expression
};

/// Outgoing rates of one regime: ascending targets j with q_ij >= 0, plus their sum q_i.
struct RateRow {
    std::vector<std::pair<int, double>> rates;
    double total = 0.0;
};

/// Segment-dependent switching intensities q_ij(phi), finitely supported per row.
class RateKernel {
public:
    RateKernel() = default;
    RateKernel(KernelForm form, std::vector<RateEntry> entries, RateBound bound);

    KernelForm form() const noexcept { return form_; }
    const std::vector<RateEntry>& entries() const noexcept { return entries_; }
    const RateBound& bound() const noexcept { return bound_; }

    /// Regimes j != i with an entry for row i, ascending.
    std::vector<int> support(int regime) const;

    /// Fills `out`; reuses its capacity. Throws ModelError on a negative rate.
    void row(const SegmentPath& seg, int regime, RateRow& out) const;
    RateRow row(const SegmentPath& seg, int regime) const;

    /// True when no entry reads anything but phi(0), so q_ij is a function of the current point.
    bool past_independent() const;

private:
    KernelForm form_ = KernelForm::ExpressionTable;
    std::vector<RateEntry> entries_;
    RateBound bound_;
};

/// Per-regime-pattern family of expression vectors (first matching pattern wins).
struct RegimeTable {
    std::vector<std::pair<RegimePattern, std::vector<FunctionalExpr>>> rows;

    const std::vector<FunctionalExpr>& lookup(int regime) const;
};

/// Hybrid model dX = b(X, a) dt + sigma(X, a) dW with segment-dependent switching of a.
class RegimeSwitchingModel {
public:
    RegimeSwitchingModel() = default;
    RegimeSwitchingModel(std::string name, std::size_t dim, std::size_t noise_dim, double delay,
                         RegimeTable drift, RegimeTable diffusion, RateKernel kernel);

    const std::string& name() const noexcept { return name_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t noise_dim() const noexcept { return noise_dim_; }
    double delay() const noexcept { return delay_; }
    const RateKernel& kernel() const noexcept { return kernel_; }
    const RegimeTable& drift_table() const noexcept { return drift_; }
    const RegimeTable& diffusion_table() const noexcept { return diffusion_; }

    void drift(std::span<const double> x, int regime, std::span<double> out) const;
    /// Row-major n x d matrix sigma(x, i).
    void diffusion(std::span<const double> x, int regime, std::span<double> out) const;
    /// Row-major n x n matrix A = sigma sigma^T.
    void covariance(std::span<const double> x, int regime, std::span<double> out) const;

    double drift1(double x, int regime) const;
    double sigma1(double x, int regime) const;

    void rate_row(const SegmentPath& seg, int regime, RateRow& out) const;
    RateRow rate_row(const SegmentPath& seg, int regime) const;
    /// Rates at a point for past-independent kernels (evaluated on the constant segment phi = x).
    RateRow rate_row_at(std::span<const double> x, int regime) const;

    /// Bound used for thinning at the current segment; H = ||phi|| + margin.
    double rate_bound(const SegmentPath& seg, int regime, double margin) const;

private:
    std::string name_;
    std::size_t dim_ = 1;
    std::size_t noise_dim_ = 1;
    double delay_ = 1.0;
    RegimeTable drift_;
    RegimeTable diffusion_;
    RateKernel kernel_;
};

RateRow rate_row(const RegimeSwitchingModel& model, const SegmentPath& seg, int regime);

/// Free choices left open by the built-in examples.
///   b, sigma: point expressions in x and i (for ex1..ex3 the drift is -x*b(x,i); for ex4 it is b).
///   C: expression in i for the constants C_i >= 0.
struct BuiltinParams {
    std::optional<std::string> b;
    std::optional<std::string> sigma;
    std::optional<std::string> C;
    std::optional<double> r;
};

/// Names: "ex1", "ex2" (birth-death kernel with (1+||phi||)^-1 rates), "ex3" (jump to base driven
/// by the integral of |phi|), "ex4" (rates read |phi(0)| and |phi(-r)|). "ex2" is "ex1" with the
/// extra requirement liminf |x| b(x,i) > 0 on the supplied b; that requirement is not checked.
/// "ex4-point" is "ex4" with phi(-r) replaced by phi(0), so its rates are past-independent.
RegimeSwitchingModel builtin_model(std::string_view name, const BuiltinParams& params);

}  // namespace switchlab
