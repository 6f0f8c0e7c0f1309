#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "switchlab/simulate.hpp"

namespace switchlab {

/// Hitting times of one batch; censored entries carry tau = t_max.
struct HittingBatch {
    std::vector<double> tau;
    std::vector<bool> censored;
    std::string target;
    double t_max = 0.0;

    static HittingBatch from_results(const std::vector<HitResult>& results, double t_max, std::string target = {});
    std::size_t n_paths() const noexcept { return tau.size(); }
};

struct HittingStats {
    std::size_t n_paths = 0;
    std::size_t n_hit = 0;
    double hit_fraction = 0.0;
    double censor_fraction = 0.0;
    /// Mean and standard error over uncensored paths; absent when every path is censored.
    std::optional<double> mean;
    double standard_error = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

HittingStats hitting_stats(const HittingBatch& batch);

/// Tensor grid over space plus regimes 1..regime_cap, everything above the cap pooled.
/// Points outside [lo, hi] are clamped into the edge cells.
struct TVBinning {
    std::vector<double> lo, hi;
    std::vector<std::size_t> cells;
    int regime_cap = 1;

    std::size_t spatial_cells() const;
    std::size_t total_cells() const { return spatial_cells() * static_cast<std::size_t>(regime_cap + 1); }
    std::size_t cell_of(std::span<const double> x, int regime) const;
    std::string describe() const;
};

/// Range from the pooled samples, `cells_per_dim` cells per axis, cap at the given regime quantile.
TVBinning auto_binning(const MarginalSamples& a, const MarginalSamples& b, std::size_t cells_per_dim = 50,
                       double regime_quantile = 0.999);

/// Half the l1 distance between the binned empirical laws.
double empirical_tv(const MarginalSamples& a, const MarginalSamples& b, const TVBinning& bins);

/// Cells holding at least one sample from either set.
std::size_t occupied_cells(const MarginalSamples& a, const MarginalSamples& b, const TVBinning& bins);

/// Twice the expected TV between two independent samples of one law spread over `cells` cells.
double tv_noise_floor(std::size_t cells, std::size_t n_a, std::size_t n_b);

struct TVCurve {
    std::vector<double> times;
    std::vector<double> tv;
    std::vector<std::size_t> n_a, n_b;
    std::vector<double> floor;
    std::string binning;
};

/// TV between the two runs at each common time; binning is rebuilt per time from the pooled samples.
TVCurve tv_curve(const std::vector<MarginalSamples>& a, const std::vector<MarginalSamples>& b,
                 std::size_t cells_per_dim = 50, double regime_quantile = 0.999);

struct RateFit {
    bool ok = false;
    double theta_hat = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t n_used = 0;
    std::string reason;
};

/// Least squares of log TV against t over points above the floor (per-point curve floors unless given).
RateFit fit_exponential_rate(const TVCurve& curve, std::optional<double> floor = std::nullopt);

/// Centered 3-point moving average (endpoints average two points).
std::vector<double> smooth3(const std::vector<double>& v);

}  // namespace switchlab
