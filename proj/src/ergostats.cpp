#include "switchlab/ergostats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "switchlab/error.hpp"

namespace switchlab {

HittingBatch HittingBatch::from_results(const std::vector<HitResult>& results, double t_max, std::string target) {
    HittingBatch batch;
    batch.t_max = t_max;
    batch.target = std::move(target);
    for (const auto& r : results) {
        batch.tau.push_back(r.censored ? t_max : r.tau);
        batch.censored.push_back(r.censored);
    }
    return batch;
}

HittingStats hitting_stats(const HittingBatch& batch) {
    if (batch.n_paths() == 0) throw DomainError("hitting_stats needs at least one path");
    if (batch.censored.size() != batch.tau.size()) throw DomainError("hitting batch columns differ in length");
    HittingStats s;
    s.n_paths = batch.n_paths();
    // Kahan-free two-pass sums over a sorted copy keep the result permutation invariant.
    std::vector<double> hit;
    for (std::size_t k = 0; k < batch.tau.size(); ++k)
        if (!batch.censored[k]) hit.push_back(batch.tau[k]);
    std::sort(hit.begin(), hit.end());
    s.n_hit = hit.size();
    s.hit_fraction = static_cast<double>(s.n_hit) / static_cast<double>(s.n_paths);
    s.censor_fraction = 1.0 - s.hit_fraction;
    if (hit.empty()) return s;
    double mean = 0.0;
    for (double t : hit) mean += t;
    mean /= static_cast<double>(hit.size());
    double ss = 0.0;
    for (double t : hit) ss += (t - mean) * (t - mean);
    const double n = static_cast<double>(hit.size());
    s.mean = mean;
    s.standard_error = hit.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    s.ci_lo = mean - 1.96 * s.standard_error;
    s.ci_hi = mean + 1.96 * s.standard_error;
    return s;
}

std::size_t TVBinning::spatial_cells() const {
    std::size_t c = 1;
    for (auto k : cells) c *= k;
    return c;
}

std::size_t TVBinning::cell_of(std::span<const double> x, int regime) const {
    std::size_t idx = 0;
    for (std::size_t d = 0; d < cells.size(); ++d) {
        const double width = hi[d] - lo[d];
        long k = 0;
        if (width > 0.0) k = static_cast<long>(std::floor((x[d] - lo[d]) / width * static_cast<double>(cells[d])));
        k = std::clamp<long>(k, 0, static_cast<long>(cells[d]) - 1);
        idx = idx * cells[d] + static_cast<std::size_t>(k);
    }
    const int r = std::clamp(regime, 1, regime_cap + 1);
    return idx * static_cast<std::size_t>(regime_cap + 1) + static_cast<std::size_t>(r - 1);
}

std::string TVBinning::describe() const {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t d = 0; d < cells.size(); ++d)
        os << (d ? ";" : "") << "x" << d + 1 << "=[" << lo[d] << "," << hi[d] << "]/" << cells[d];
    os << ";regimes<=" << regime_cap << "+pooled";
    return os.str();
}

namespace {

void check_pair(const MarginalSamples& a, const MarginalSamples& b) {
    if (a.size() == 0 || b.size() == 0) throw DomainError("empirical TV needs two nonempty sample sets");
    if (a.dim != b.dim) throw DomainError("sample sets have different dimensions");
}

std::vector<double> histogram(const MarginalSamples& s, const TVBinning& bins) {
    std::vector<double> h(bins.total_cells(), 0.0);
    for (std::size_t k = 0; k < s.size(); ++k)
        h[bins.cell_of({s.x.data() + k * s.dim, s.dim}, s.regimes[k])] += 1.0;
    return h;
}

}  // namespace

TVBinning auto_binning(const MarginalSamples& a, const MarginalSamples& b, std::size_t cells_per_dim,
                       double regime_quantile) {
    check_pair(a, b);
    if (cells_per_dim == 0) throw DomainError("binning needs at least one cell per axis");
    TVBinning bins;
    bins.lo.assign(a.dim, HUGE_VAL);
    bins.hi.assign(a.dim, -HUGE_VAL);
    bins.cells.assign(a.dim, cells_per_dim);
    std::vector<int> regimes;
    for (const auto* s : {&a, &b}) {
        for (std::size_t k = 0; k < s->size(); ++k)
            for (std::size_t d = 0; d < s->dim; ++d) {
                bins.lo[d] = std::min(bins.lo[d], s->x[k * s->dim + d]);
                bins.hi[d] = std::max(bins.hi[d], s->x[k * s->dim + d]);
            }
        regimes.insert(regimes.end(), s->regimes.begin(), s->regimes.end());
    }
    std::sort(regimes.begin(), regimes.end());
    const double pos = std::clamp(regime_quantile, 0.0, 1.0) * static_cast<double>(regimes.size() - 1);
    bins.regime_cap = std::max(1, regimes[static_cast<std::size_t>(std::ceil(pos))]);
    return bins;
}

double empirical_tv(const MarginalSamples& a, const MarginalSamples& b, const TVBinning& bins) {
    check_pair(a, b);
    if (bins.cells.size() != a.dim) throw DomainError("binning dimension does not match the samples");
    const auto ha = histogram(a, bins);
    const auto hb = histogram(b, bins);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double s = 0.0;
    for (std::size_t c = 0; c < ha.size(); ++c) s += std::abs(ha[c] / na - hb[c] / nb);
    return std::clamp(0.5 * s, 0.0, 1.0);
}

std::size_t occupied_cells(const MarginalSamples& a, const MarginalSamples& b, const TVBinning& bins) {
    const auto ha = histogram(a, bins);
    const auto hb = histogram(b, bins);
    std::size_t n = 0;
    for (std::size_t c = 0; c < ha.size(); ++c) n += (ha[c] + hb[c] > 0.0);
    return n;
}

double tv_noise_floor(std::size_t cells, std::size_t n_a, std::size_t n_b) {
    if (n_a == 0 || n_b == 0) throw DomainError("noise floor needs nonempty samples");
    // E|p_a - p_b| per cell is about sqrt(2/pi * p (1/n_a + 1/n_b)); sum over cells by Cauchy-Schwarz.
    const double inv = 1.0 / static_cast<double>(n_a) + 1.0 / static_cast<double>(n_b);
    return std::sqrt(2.0 * static_cast<double>(cells) * inv / std::numbers::pi);
}

TVCurve tv_curve(const std::vector<MarginalSamples>& a, const std::vector<MarginalSamples>& b,
                 std::size_t cells_per_dim, double regime_quantile) {
    if (a.size() != b.size()) throw DomainError("TV curve needs the same time grid for both runs");
    TVCurve curve;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (std::abs(a[k].time - b[k].time) > 1e-12 * std::max(1.0, std::abs(a[k].time)))
            throw DomainError("TV curve runs disagree on sample times");
        const auto bins = auto_binning(a[k], b[k], cells_per_dim, regime_quantile);
        curve.times.push_back(a[k].time);
        curve.tv.push_back(empirical_tv(a[k], b[k], bins));
        curve.n_a.push_back(a[k].size());
        curve.n_b.push_back(b[k].size());
        curve.floor.push_back(tv_noise_floor(occupied_cells(a[k], b[k], bins), a[k].size(), b[k].size()));
        if (k == 0) curve.binning = bins.describe();
    }
    return curve;
}

RateFit fit_exponential_rate(const TVCurve& curve, std::optional<double> floor) {
    RateFit fit;
    std::vector<double> t, y;
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        const double f = floor ? *floor : (k < curve.floor.size() ? curve.floor[k] : 0.0);
        if (curve.tv[k] > f && curve.tv[k] > 0.0) {
            t.push_back(curve.times[k]);
            y.push_back(std::log(curve.tv[k]));
        }
    }
    fit.n_used = t.size();
    if (t.size() < 3) {
        fit.reason = "fewer than 3 points above the noise floor";
        return fit;
    }
    const double n = static_cast<double>(t.size());
    double mt = 0.0, my = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) mt += t[k], my += y[k];
    mt /= n;
    my /= n;
    double stt = 0.0, sty = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        stt += (t[k] - mt) * (t[k] - mt);
        sty += (t[k] - mt) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (stt == 0.0) {
        fit.reason = "all usable points share one time";
        return fit;
    }
    const double slope = sty / stt;
    fit.ok = true;
    fit.theta_hat = slope == 0.0 ? 0.0 : -slope;
    fit.intercept = my - slope * mt;
    double sse = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        const double e = y[k] - (fit.intercept + slope * t[k]);
        sse += e * e;
    }
    // A flat series is fitted exactly by the zero slope.
    fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    return fit;
}

std::vector<double> smooth3(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
        const std::size_t lo = k == 0 ? 0 : k - 1;
        const std::size_t hi = std::min(v.size() - 1, k + 1);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += v[j];
        out[k] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

}  // namespace switchlab
