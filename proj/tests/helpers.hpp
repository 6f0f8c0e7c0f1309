#pragma once

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "switchlab/model.hpp"

namespace testutil {

using Entry = std::tuple<std::string, std::string, std::string>;  // from, to, rate

/// Scalar model with per-regime drift/sigma expressions and an expression-table kernel.
inline switchlab::RegimeSwitchingModel scalar_model(const std::string& drift, const std::string& sigma,
                                                    const std::vector<Entry>& entries = {}, double bound = 0.0,
                                                    double r = 1.0) {
    using namespace switchlab;
    RegimeTable b, s;
    b.rows.push_back({RegimePattern{}, {FunctionalExpr::parse(drift, ExprKind::Point)}});
    s.rows.push_back({RegimePattern{}, {FunctionalExpr::parse(sigma, ExprKind::Point)}});
    std::vector<RateEntry> e;
    for (const auto& [from, to, rate] : entries)
        e.push_back({RegimePattern::parse(from), TargetRule::parse(to), FunctionalExpr::parse(rate, ExprKind::Segment)});
    return {"test", 1, 1, r, b, s, RateKernel(KernelForm::ExpressionTable, e, RateBound::global_bound(bound))};
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Upper tail of the chi-square distribution via the regularized incomplete gamma series.
inline double chi2_sf(double x, int k) {
    const double a = 0.5 * k, z = 0.5 * x;
    if (z <= 0.0) return 1.0;
    if (z < a + 1.0) {
        double term = 1.0 / a, sum = term;
        for (int n = 1; n < 1000; ++n) {
            term *= z / (a + n);
            sum += term;
            if (term < sum * 1e-16) break;
        }
        return 1.0 - sum * std::exp(-z + a * std::log(z) - std::lgamma(a));
    }
    // continued fraction for the upper tail
    double b = z + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int n = 1; n < 1000; ++n) {
        const double an = -n * (n - a);
        b += 2.0;
        d = an * d + b;
        d = 1.0 / d;
        c = b + an / c;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-z + a * std::log(z) - std::lgamma(a)) * h;
}

/// Kolmogorov distribution tail P(sqrt(n) D > t).
inline double kolmogorov_sf(double t) {
    double s = 0.0;
    for (int k = 1; k < 100; ++k) s += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * t * t);
    return std::min(1.0, std::max(0.0, s));
}

}  // namespace testutil
