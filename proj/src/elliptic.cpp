#include "switchlab/elliptic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "switchlab/parallel.hpp"
#include "switchlab/rng.hpp"

namespace switchlab {

EllipticProblem problem_from_model(const RegimeSwitchingModel& model, std::vector<std::pair<double, double>> intervals,
                                   double h, int regimes) {
    if (model.dim() != 1 || model.noise_dim() != 1)
        throw ModelError("the elliptic solver needs a scalar model with scalar noise");
    if (!model.kernel().past_independent())
        throw ModelError("the elliptic solver needs past-independent switching rates");
    EllipticProblem p;
    p.intervals = std::move(intervals);
    p.h = h;
    p.regimes = regimes;
    p.drift = [&model](double x, int i) { return model.drift1(x, i); };
    p.sigma = [&model](double x, int i) { return model.sigma1(x, i); };
    p.rates = [&model](double x, int i, std::vector<std::pair<int, double>>& out) {
        const double xs[1] = {x};
        const RateRow row = model.rate_row_at(xs, i);
        out.insert(out.end(), row.rates.begin(), row.rates.end());
    };
    return p;
}

EllipticSystem::EllipticSystem(EllipticProblem problem) : problem_(std::move(problem)) {
    if (problem_.intervals.empty()) throw DomainError("elliptic domain has no intervals");
    if (problem_.regimes < 1) throw DomainError("elliptic system needs at least one regime");
    if (!(problem_.h > 0.0)) throw DomainError("grid step must be positive");
    if (!problem_.drift || !problem_.sigma) throw DomainError("elliptic problem needs drift and sigma");
    for (const auto& [a, b] : problem_.intervals)
        if (!(a < b)) throw DomainError("elliptic interval has lo >= hi");
    double h = problem_.h;
    for (halvings_ = 0;; ++halvings_, h *= 0.5) {
        build_grid(h);
        if (assemble()) return;
        if (halvings_ == problem_.max_halvings)
            throw NumericError("central scheme is not diagonally dominant after " + std::to_string(halvings_) +
                               " halvings of h (need h |b| <= sigma^2)");
    }
}

void EllipticSystem::build_grid(double h) {
    components_.clear();
    x_.clear();
    boundary_.clear();
    for (const auto& [a, b] : problem_.intervals) {
        const auto n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil((b - a) / h - 1e-9)));
        components_.push_back({a, b, x_.size(), n, (b - a) / static_cast<double>(n)});
        for (std::size_t k = 0; k <= n; ++k) {
            x_.push_back(k == n ? b : a + (b - a) * static_cast<double>(k) / static_cast<double>(n));
            boundary_.push_back(k == 0 || k == n);
        }
    }
}

bool EllipticSystem::assemble() {
    const std::size_t total = static_cast<std::size_t>(problem_.regimes) * x_.size();
    lo_.assign(total, 0.0);
    up_.assign(total, 0.0);
    diag_.assign(total, 0.0);
    qtot_.assign(total, 0.0);
    g_.assign(total, 0.0);
    f_.assign(total, 0.0);
    rates_.assign(total, {});
    theta_ = std::numeric_limits<double>::infinity();
    std::vector<std::pair<int, double>> scratch;
    for (int i = 1; i <= problem_.regimes; ++i) {
        for (const auto& c : components_) {
            for (std::size_t k = 0; k <= c.intervals; ++k) {
                const std::size_t p = c.offset + k;
                const double x = x_[p];
                const std::size_t at = idx(i, p);
                const double s = problem_.sigma(x, i);
                const double s2 = s * s;
                if (!(s2 > 0.0) || !std::isfinite(s2))
                    throw ModelError("sigma^2 vanishes at x = " + std::to_string(x) + ", regime " + std::to_string(i));
                theta_ = std::min(theta_, s2);
                if (boundary_[p]) {
                    f_[at] = problem_.boundary ? problem_.boundary(x, i) : 0.0;
                    continue;
                }
                const double b = problem_.drift(x, i);
                if (c.h * std::abs(b) > s2) return false;
                lo_[at] = s2 / (2.0 * c.h * c.h) - b / (2.0 * c.h);
                up_[at] = s2 / (2.0 * c.h * c.h) + b / (2.0 * c.h);
                diag_[at] = -s2 / (c.h * c.h);
                g_[at] = problem_.rhs ? problem_.rhs(x, i) : 0.0;
                if (!problem_.rates) continue;
                scratch.clear();
                problem_.rates(x, i, scratch);
                auto& row = rates_[at];
                for (const auto& [j, q] : scratch) {
                    if (q < 0.0 || !std::isfinite(q))
                        throw ModelError("negative or non-finite rate at x = " + std::to_string(x));
                    if (j == i || j < 1 || j > problem_.regimes || q == 0.0) continue;
                    auto it = std::find_if(row.begin(), row.end(), [j = j](const auto& e) { return e.first == j; });
                    if (it == row.end())
                        row.emplace_back(j, q);
                    else
                        it->second += q;
                    qtot_[at] += q;
                }
                std::sort(row.begin(), row.end());
            }
        }
    }
    return true;
}

double EllipticSystem::h() const noexcept {
    double h = 0.0;
    for (const auto& c : components_) h = std::max(h, c.h);
    return h;
}

BaseSetCheck EllipticSystem::base_set() const {
    BaseSetCheck out;
    const int k_max = problem_.regimes;
    for (int i = 1; i <= k_max; ++i)
        for (std::size_t p = 0; p < x_.size(); ++p)
            if (!boundary_[p]) out.m_d = std::max(out.m_d, qtot_[idx(i, p)]);
    for (int n0 = 1; n0 < k_max; ++n0) {
        double eps = std::numeric_limits<double>::infinity();
        for (int i = n0 + 1; i <= k_max && eps > 0.0; ++i)
            for (std::size_t p = 0; p < x_.size(); ++p) {
                if (boundary_[p]) continue;
                double s = 0.0;
                for (const auto& [j, q] : rates_[idx(i, p)])
                    if (j <= n0) s += q;
                eps = std::min(eps, s);
            }
        if (eps > 0.0) {
            out.n0 = n0;
            out.eps0 = eps;
            out.holds = true;
            return out;
        }
    }
    // Every regime is in the base set; the condition holds vacuously.
    out.n0 = k_max;
    out.eps0 = 0.0;
    out.holds = true;
    return out;
}

double EllipticSystem::interpolate(const std::vector<double>& u, double x) const {
    for (const auto& c : components_) {
        if (x < c.lo || x > c.hi) continue;
        const double s = (x - c.lo) / c.h;
        const auto k = std::min(static_cast<std::size_t>(std::floor(s)), c.intervals - 1);
        const double w = s - static_cast<double>(k);
        return (1.0 - w) * u[c.offset + k] + w * u[c.offset + k + 1];
    }
    throw DomainError("point " + std::to_string(x) + " lies outside the elliptic domain");
}

namespace {

std::vector<double> solve_regime(const EllipticSystem& sys, int regime, std::span<const double> rhs,
                                 bool zero_boundary) {
    if (regime < 1 || regime > sys.regimes()) throw DomainError("regime outside 1..K");
    if (rhs.size() != sys.node_count()) throw DomainError("rhs does not match the grid");
    std::vector<double> u(sys.node_count(), 0.0);
    std::vector<double> cp, dp;
    for (const auto& c : sys.components()) {
        const std::size_t first = c.offset;
        const std::size_t last = c.offset + c.intervals;
        const double left = zero_boundary ? 0.0 : sys.boundary_value(regime, first);
        const double right = zero_boundary ? 0.0 : sys.boundary_value(regime, last);
        u[first] = left;
        u[last] = right;
        const std::size_t m = c.intervals - 1;
        cp.assign(m, 0.0);
        dp.assign(m, 0.0);
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t p = first + 1 + k;
            const double a = sys.lower(regime, p);
            const double cu = sys.upper(regime, p);
            const double d = sys.diffusion_diag(regime, p) - sys.q_total(regime, p);
            double r = rhs[p];
            if (k == 0) r -= a * left;
            if (k + 1 == m) r -= cu * right;
            const double pivot = k == 0 ? d : d - a * cp[k - 1];
            if (pivot == 0.0 || !std::isfinite(pivot)) throw NumericError("singular tridiagonal system");
            cp[k] = k + 1 == m ? 0.0 : cu / pivot;
            dp[k] = (k == 0 ? r : r - a * dp[k - 1]) / pivot;
        }
        for (std::size_t k = m; k-- > 0;) {
            const double next = k + 1 == m ? 0.0 : u[first + 2 + k];
            u[first + 1 + k] = dp[k] - cp[k] * next;
        }
    }
    return u;
}

}  // namespace

std::vector<double> solve_scalar_dirichlet(const EllipticSystem& sys, int regime, std::span<const double> rhs) {
    return solve_regime(sys, regime, rhs, false);
}

ContractionBound contraction_bound(const EllipticSystem& sys) {
    ContractionBound cb;
    cb.base = sys.base_set();
    cb.eps1 = (cb.base.n0 < sys.regimes() && cb.base.m_d > 0.0) ? 1.0 - cb.base.eps0 / cb.base.m_d : 0.0;
    std::vector<double> rhs(sys.node_count());
    for (int i = 1; i <= cb.base.n0; ++i) {
        for (std::size_t p = 0; p < rhs.size(); ++p) rhs[p] = -sys.q_total(i, p);
        const auto w = solve_regime(sys, i, rhs, true);
        for (std::size_t p = 0; p < w.size(); ++p)
            if (!sys.is_boundary(p)) cb.p_hat = std::max(cb.p_hat, w[p]);
    }
    cb.p_hat = std::clamp(cb.p_hat, 0.0, 1.0);
    cb.bound = cb.p_hat + (1.0 - cb.p_hat) * cb.eps1;
    return cb;
}

double jump_probability_mc(const EllipticSystem& sys, int n0, const MonteCarloOptions& o) {
    const auto& pr = sys.problem();
    struct Probe {
        double x;
        double lo, hi;
        int regime;
    };
    std::vector<Probe> probes;
    for (int i = 1; i <= n0; ++i)
        for (const auto& c : sys.components())
            for (std::size_t k = 1; k <= o.probes_per_component; ++k)
                probes.push_back({c.lo + (c.hi - c.lo) * static_cast<double>(k) /
                                             static_cast<double>(o.probes_per_component + 1),
                                  c.lo, c.hi, i});
    // q_i between grid nodes is read off the assembled grid by linear interpolation.
    std::vector<std::vector<double>> qgrid(static_cast<std::size_t>(n0));
    for (int i = 1; i <= n0; ++i) {
        auto& g = qgrid[static_cast<std::size_t>(i - 1)];
        g.resize(sys.node_count());
        for (std::size_t p = 0; p < g.size(); ++p) g[p] = sys.q_total(i, p);
        for (const auto& c : sys.components()) {
            g[c.offset] = g[c.offset + 1];
            g[c.offset + c.intervals] = g[c.offset + c.intervals - 1];
        }
    }
    const std::size_t n = o.n_paths;
    std::vector<double> value(probes.size() * n);
    parallel_for(value.size(), o.threads, [&](std::size_t k) {
        const Probe& pb = probes[k / n];
        Philox rng(o.seed, k, 2);
        std::normal_distribution<double> normal;
        const auto& qg = qgrid[static_cast<std::size_t>(pb.regime - 1)];
        const double sq = std::sqrt(o.dt);
        double y = pb.x, integral = 0.0;
        for (double t = 0.0; t < o.t_max; t += o.dt) {
            integral += sys.interpolate(qg, y) * o.dt;
            y += pr.drift(y, pb.regime) * o.dt + pr.sigma(y, pb.regime) * sq * normal(rng);
            if (y <= pb.lo || y >= pb.hi) break;
        }
        value[k] = -std::expm1(-integral);
    });
    double best = 0.0;
    for (std::size_t b = 0; b < probes.size(); ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += value[b * n + k];
        best = std::max(best, s / static_cast<double>(n));
    }
    return best;
}

FixedPointResult solve_fixed_point(const EllipticSystem& sys, const FixedPointOptions& options) {
    const int k_max = sys.regimes();
    const std::size_t np = sys.node_count();
    FixedPointResult res;
    res.u.assign(static_cast<std::size_t>(k_max), {});
    parallel_for(res.u.size(), options.threads, [&](std::size_t r) {
        const int i = static_cast<int>(r) + 1;
        std::vector<double> rhs(np);
        for (std::size_t p = 0; p < np; ++p) rhs[p] = sys.rhs(i, p);
        res.u[r] = solve_regime(sys, i, rhs, false);
    });
    if (options.with_bound && k_max > 1) res.trace.bound = contraction_bound(sys).bound;

    std::vector<std::vector<double>> next(res.u.size());
    for (std::size_t m = 0;; ++m) {
        if (m == options.m_max)
            throw NonConvergence("fixed-point iteration did not converge in " + std::to_string(m) + " steps",
                                 res.trace);
        parallel_for(res.u.size(), options.threads, [&](std::size_t r) {
            const int i = static_cast<int>(r) + 1;
            std::vector<double> rhs(np);
            for (std::size_t p = 0; p < np; ++p) {
                double s = sys.rhs(i, p);
                for (const auto& [j, q] : sys.rates(i, p)) s -= q * res.u[static_cast<std::size_t>(j - 1)][p];
                rhs[p] = s;
            }
            next[r] = solve_regime(sys, i, rhs, false);
        });
        double delta = 0.0, umax = 0.0;
        for (std::size_t r = 0; r < next.size(); ++r)
            for (std::size_t p = 0; p < np; ++p) {
                delta = std::max(delta, std::abs(next[r][p] - res.u[r][p]));
                umax = std::max(umax, std::abs(next[r][p]));
            }
        std::swap(res.u, next);
        res.trace.deltas.push_back(delta);
        if (!std::isfinite(delta)) throw NonConvergence("fixed-point iteration produced non-finite values", res.trace);
        if (delta <= options.tol * (1.0 + umax)) {
            res.iterations = m + 1;
            break;
        }
    }
    const auto& d = res.trace.deltas;
    for (std::size_t m = 0; m + 2 < d.size(); ++m)
        res.trace.ratios.push_back(d[m] > 0.0 ? d[m + 2] / d[m] : std::numeric_limits<double>::quiet_NaN());
    return res;
}

FixedPointResult mean_exit_time(EllipticProblem problem, const FixedPointOptions& options) {
    problem.rhs = [](double, int) { return -1.0; };
    problem.boundary = {};
    return solve_fixed_point(EllipticSystem(std::move(problem)), options);
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Recurrent: return "recurrent";
        case Verdict::Transient: return "transient";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return {};
}

RecurrenceReport recurrence_indicator(const EllipticProblem& base, std::pair<double, double> d1,
                                      const std::vector<double>& ks, const RecurrenceOptions& options) {
    const auto [l, u] = d1;
    if (!(l < u)) throw DomainError("D1 must be a bounded open interval");
    if (ks.empty()) throw DomainError("k schedule is empty");
    for (std::size_t k = 0; k < ks.size(); ++k) {
        if (!(ks[k] > std::max(std::abs(l), std::abs(u))))
            throw DomainError("k schedule must lie beyond D1");
        if (k > 0 && !(ks[k] > ks[k - 1])) throw DomainError("k schedule must be strictly increasing");
    }
    for (double x : options.probes)
        if (x >= l && x <= u) throw DomainError("probe points must lie outside D1");
    RecurrenceReport rep;
    rep.d1 = d1;
    rep.ks = ks;
    for (double k : ks) {
        for (double x : options.probes)
            if (std::abs(x) >= k) throw DomainError("probe point outside (-k, k)");
        EllipticProblem p = base;
        p.intervals = {{-k, l}, {u, k}};
        p.rhs = {};
        p.boundary = [k](double x, int) { return std::abs(x) >= k ? 0.0 : 1.0; };
        const EllipticSystem sys(std::move(p));
        const auto sol = solve_fixed_point(sys, options.solver);
        std::vector<double> vals;
        double deficit = 0.0;
        for (double x : options.probes)
            for (int i : options.probe_regimes) {
                if (i < 1 || i > sys.regimes()) throw DomainError("probe regime outside 1..K");
                const double v = sys.interpolate(sol.u[static_cast<std::size_t>(i - 1)], x);
                vals.push_back(v);
                deficit = std::max(deficit, 1.0 - v);
            }
        rep.values.push_back(std::move(vals));
        rep.deficits.push_back(deficit);
    }
    const auto& d = rep.deficits;
    const std::size_t n = d.size();
    rep.limit_deficit = d.back();
    if (n >= 3) {
        const double d1s = d[n - 2] - d[n - 3];
        const double d2s = d[n - 1] - d[n - 2];
        const double denom = d2s - d1s;
        if (std::abs(denom) > 1e-15 * std::max(1.0, std::abs(d.back())))
            rep.limit_deficit = std::clamp(d.back() - d2s * d2s / denom, 0.0, d.back());
    }
    bool decreasing = n >= 2;
    for (std::size_t k = 1; k < n; ++k) decreasing = decreasing && d[k] < d[k - 1];
    const bool stable = n >= 2 && std::abs(d[n - 1] - d[n - 2]) <= 0.1 * d[n - 1];
    if (decreasing && rep.limit_deficit <= options.tol)
        rep.verdict = Verdict::Recurrent;
    else if (rep.limit_deficit > 10.0 * options.tol && stable)
        rep.verdict = Verdict::Transient;
    else
        rep.verdict = Verdict::Inconclusive;
    return rep;
}

}  // namespace switchlab
