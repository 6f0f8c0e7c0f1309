#include "switchlab/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "switchlab/error.hpp"
#include "switchlab/parallel.hpp"

namespace switchlab {

double CylindricalLyapunov::integral_part(const SegmentPath& seg, int regime) const {
    double s = 0.0;
    for (const auto& term : integrals) s += seg.weighted_integral(term.f2, term.g, regime);
    return s;
}

double CylindricalLyapunov::value(const SegmentPath& seg, int regime) const {
    return f1(seg.newest(), regime) + integral_part(seg, regime);
}

CylindricalLyapunov CylindricalLyapunov::constant(double c) {
    CylindricalLyapunov v;
    v.f1 = [c](std::span<const double>, int) { return c; };
    v.f1_grad = [](std::span<const double>, int, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); };
    v.f1_hess = [](std::span<const double>, int, std::span<double> h) { std::fill(h.begin(), h.end(), 0.0); };
    return v;
}

std::vector<double> central_gradient(const PointFn& f, std::span<const double> x, int regime, double h) {
    std::vector<double> p(x.begin(), x.end());
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double step = h * std::max(1.0, std::abs(x[k]));
        p[k] = x[k] + step;
        const double up = f(p, regime);
        p[k] = x[k] - step;
        const double dn = f(p, regime);
        p[k] = x[k];
        g[k] = (up - dn) / (2.0 * step);
    }
    return g;
}

std::vector<double> central_hessian(const PointFn& f, std::span<const double> x, int regime, double h) {
    const std::size_t n = x.size();
    std::vector<double> p(x.begin(), x.end());
    std::vector<double> hs(n * n);
    const double f0 = f(p, regime);
    for (std::size_t k = 0; k < n; ++k) {
        const double sk = h * std::max(1.0, std::abs(x[k]));
        p[k] = x[k] + sk;
        const double up = f(p, regime);
        p[k] = x[k] - sk;
        const double dn = f(p, regime);
        p[k] = x[k];
        hs[k * n + k] = (up - 2.0 * f0 + dn) / (sk * sk);
        for (std::size_t l = k + 1; l < n; ++l) {
            const double sl = h * std::max(1.0, std::abs(x[l]));
            auto at = [&](double a, double b) {
                p[k] = x[k] + a;
                p[l] = x[l] + b;
                const double v = f(p, regime);
                p[k] = x[k];
                p[l] = x[l];
                return v;
            };
            const double mixed = (at(sk, sl) - at(sk, -sl) - at(-sk, sl) + at(-sk, -sl)) / (4.0 * sk * sl);
            hs[k * n + l] = hs[l * n + k] = mixed;
        }
    }
    return hs;
}

CylindricalLyapunov CylindricalLyapunov::from_expressions(const std::string& f1, const std::optional<std::string>& f2,
                                                          const std::optional<std::string>& g) {
    const auto e1 = FunctionalExpr::parse(f1, ExprKind::Point);
    CylindricalLyapunov v;
    v.f1 = [e1](std::span<const double> x, int i) { return e1.eval_point(x, i); };
    const PointFn f = v.f1;
    v.f1_grad = [f](std::span<const double> x, int i, std::span<double> out) {
        const auto gr = central_gradient(f, x, i, 1e-5);
        std::copy(gr.begin(), gr.end(), out.begin());
    };
    v.f1_hess = [f](std::span<const double> x, int i, std::span<double> out) {
        const auto hs = central_hessian(f, x, i, 1e-3);
        std::copy(hs.begin(), hs.end(), out.begin());
    };
    if (f2) {
        const auto e2 = FunctionalExpr::parse(*f2, ExprKind::Point);
        const auto eg = FunctionalExpr::parse(g.value_or("1"), ExprKind::Point);
        IntegralTerm term;
        term.f2 = [e2](std::span<const double> x, int i) { return e2.eval_point(x, i); };
        term.g = [eg](double t, int i) { return eg.eval_point(t, i); };
        term.g_dt = [eg](double t, int i) {
            const double h = 1e-5 * std::max(1.0, std::abs(t));
            return (eg.eval_point(t + h, i) - eg.eval_point(t - h, i)) / (2.0 * h);
        };
        v.integrals.push_back(std::move(term));
    }
    return v;
}

CylindricalLyapunov CylindricalLyapunov::combine(double a, const CylindricalLyapunov& v, double b,
                                                 const CylindricalLyapunov& w) {
    CylindricalLyapunov out;
    out.f1 = [=](std::span<const double> x, int i) { return a * v.f1(x, i) + b * w.f1(x, i); };
    out.f1_grad = [=](std::span<const double> x, int i, std::span<double> g) {
        std::vector<double> tmp(g.size());
        v.f1_grad(x, i, g);
        w.f1_grad(x, i, tmp);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = a * g[k] + b * tmp[k];
    };
    out.f1_hess = [=](std::span<const double> x, int i, std::span<double> h) {
        std::vector<double> tmp(h.size());
        v.f1_hess(x, i, h);
        w.f1_hess(x, i, tmp);
        for (std::size_t k = 0; k < h.size(); ++k) h[k] = a * h[k] + b * tmp[k];
    };
    auto scaled = [](const IntegralTerm& t, double s) {
        IntegralTerm u = t;
        u.f2 = [f2 = t.f2, s](std::span<const double> x, int i) { return s * f2(x, i); };
        return u;
    };
    for (const auto& t : v.integrals) out.integrals.push_back(scaled(t, a));
    for (const auto& t : w.integrals) out.integrals.push_back(scaled(t, b));
    return out;
}

double quartic_cap(double x) {
    const double a = std::abs(x);
    if (a >= 1.0) return a;
    const double x2 = x * x;
    return (-x2 * x2 + 6.0 * x2 + 3.0) / 8.0;
}

double quartic_cap_d1(double x) {
    if (x >= 1.0) return 1.0;
    if (x <= -1.0) return -1.0;
    return (3.0 * x - x * x * x) / 2.0;
}

double quartic_cap_d2(double x) {
    if (std::abs(x) >= 1.0) return 0.0;
    return 1.5 * (1.0 - x * x);
}

double example1_kappa(const FunctionalExpr& b, const FunctionalExpr& sigma, int regime_max, std::size_t grid) {
    auto objective = [&](double x, int i) {
        const double s = sigma.eval_point(x, i);
        return std::abs(-quartic_cap_d1(x) * x * b.eval_point(x, i) + 0.5 * quartic_cap_d2(x) * s * s);
    };
    grid = std::max<std::size_t>(grid, 3);
    double best = 0.0;
    for (int i = 1; i <= regime_max; ++i) {
        double best_x = -1.0;
        double best_i = -1.0;
        const double step = 2.0 / static_cast<double>(grid - 1);
        for (std::size_t k = 0; k < grid; ++k) {
            const double x = -1.0 + step * static_cast<double>(k);
            const double v = objective(x, i);
            if (v > best_i) best_i = v, best_x = x;
        }
        // Refine on the two neighbouring cells.
        const double lo = std::max(-1.0, best_x - step);
        const double hi = std::min(1.0, best_x + step);
        for (int k = 0; k <= 200; ++k) best_i = std::max(best_i, objective(lo + (hi - lo) * k / 200.0, i));
        best = std::max(best, best_i);
    }
    return best;
}

CylindricalLyapunov example1_lyapunov(double kappa) {
    CylindricalLyapunov v;
    v.f1 = [kappa](std::span<const double> x, int i) { return quartic_cap(x[0]) + 2.0 * kappa * i; };
    v.f1_grad = [](std::span<const double> x, int, std::span<double> g) { g[0] = quartic_cap_d1(x[0]); };
    v.f1_hess = [](std::span<const double> x, int, std::span<double> h) { h[0] = quartic_cap_d2(x[0]); };
    return v;
}

CylindricalLyapunov example4_lyapunov(double delay, double weight) {
    CylindricalLyapunov v;
    v.f1 = [weight](std::span<const double> x, int i) { return x[0] * x[0] + weight * i; };
    v.f1_grad = [](std::span<const double> x, int, std::span<double> g) { g[0] = 2.0 * x[0]; };
    v.f1_hess = [](std::span<const double>, int, std::span<double> h) { h[0] = 2.0; };
    const double rate = std::log(2.0) / delay;
    IntegralTerm term;
    term.f2 = [weight](std::span<const double> x, int) { return weight * std::abs(x[0]); };
    term.g = [rate, delay](double t, int) { return std::exp(rate * (t + delay)); };
    term.g_dt = [rate, delay](double t, int) { return rate * std::exp(rate * (t + delay)); };
    v.integrals.push_back(std::move(term));
    return v;
}

double horizontal_derivative(const CylindricalLyapunov& v, const SegmentPath& seg, int regime) {
    double s = 0.0;
    for (const auto& term : v.integrals) {
        s += term.g(0.0, regime) * term.f2(seg.newest(), regime);
        s -= term.g(-seg.delay(), regime) * term.f2(seg.oldest(), regime);
        s -= seg.weighted_integral(term.f2, term.g_dt, regime);
    }
    return s;
}

GeneratorTerms generator_terms(const CylindricalLyapunov& v, const RegimeSwitchingModel& model,
                               const SegmentPath& seg, int regime) {
    const std::size_t n = model.dim();
    const auto x = seg.newest();
    std::vector<double> b(n), a(n * n), grad(n), hess(n * n);
    model.drift(x, regime, b);
    model.covariance(x, regime, a);
    v.f1_grad(x, regime, grad);
    v.f1_hess(x, regime, hess);

    GeneratorTerms t;
    t.horizontal = horizontal_derivative(v, seg, regime);
    for (std::size_t k = 0; k < n; ++k) t.drift += b[k] * grad[k];
    for (std::size_t k = 0; k < n * n; ++k) t.diffusion += 0.5 * a[k] * hess[k];
    const RateRow row = model.rate_row(seg, regime);
    if (!row.rates.empty()) {
        const double here = v.value(seg, regime);
        for (const auto& [j, q] : row.rates)
            if (q != 0.0) t.switching += q * (v.value(seg, j) - here);
    }
    return t;
}

double apply_generator(const CylindricalLyapunov& v, const RegimeSwitchingModel& model, const SegmentPath& seg,
                       int regime) {
    return generator_terms(v, model, seg, regime).total();
}

DriftKind parse_drift_kind(std::string_view text) {
    if (text == "thm2.2" || text == "recurrence") return DriftKind::Recurrence;
    if (text == "thm2.3" || text == "positive-recurrence") return DriftKind::PositiveRecurrence;
    if (text == "thm2.4" || text == "exponential") return DriftKind::Exponential;
    throw DomainError("unknown drift condition '" + std::string(text) + "'");
}

std::string to_string(DriftKind kind) {
    switch (kind) {
        case DriftKind::Recurrence: return "thm2.2";
        case DriftKind::PositiveRecurrence: return "thm2.3";
        case DriftKind::Exponential: return "thm2.4";
    }
    return {};
}

std::vector<std::pair<SegmentPath, int>> drift_sample_points(const RegimeSwitchingModel& model,
                                                             const DriftSampler& s) {
    const std::size_t n = model.dim();
    const double r = model.delay();
    std::vector<SegmentPath> segments;
    std::vector<double> e(n, 0.0);
    for (std::size_t k = 0; k < s.n_constant; ++k) {
        const double x = s.n_constant == 1 ? 0.0
                                           : -s.x_max + 2.0 * s.x_max * static_cast<double>(k) /
                                                            static_cast<double>(s.n_constant - 1);
        e[0] = x;
        segments.push_back(SegmentPath::constant(e, r, s.intervals));
    }
    Philox rng(s.seed, 0, 7);
    std::normal_distribution<double> normal;
    const double h = r / static_cast<double>(s.intervals);
    for (std::size_t k = 0; k < s.n_rough; ++k) {
        std::vector<double> start(n), end(n);
        for (std::size_t d = 0; d < n; ++d) {
            start[d] = -s.x_max + 2.0 * s.x_max * rng.uniform();
            end[d] = -s.x_max + 2.0 * s.x_max * rng.uniform();
        }
        // Brownian path on the grid, pinned to zero at both ends.
        std::vector<std::vector<double>> walk(s.intervals + 1, std::vector<double>(n, 0.0));
        for (std::size_t m = 1; m <= s.intervals; ++m)
            for (std::size_t d = 0; d < n; ++d)
                walk[m][d] = walk[m - 1][d] + s.rough_amplitude * std::sqrt(h / r) * normal(rng);
        std::vector<std::vector<double>> nodes(s.intervals + 1, std::vector<double>(n));
        double sup = 0.0;
        for (std::size_t m = 0; m <= s.intervals; ++m) {
            const double w = static_cast<double>(m) / static_cast<double>(s.intervals);
            double norm2 = 0.0;
            for (std::size_t d = 0; d < n; ++d) {
                nodes[m][d] = (1.0 - w) * start[d] + w * end[d] + walk[m][d] - w * walk[s.intervals][d];
                norm2 += nodes[m][d] * nodes[m][d];
            }
            sup = std::max(sup, std::sqrt(norm2));
        }
        if (sup > s.sup_bound)
            for (auto& node : nodes)
                for (auto& c : node) c *= s.sup_bound / sup;
        segments.push_back(SegmentPath::from_nodes(nodes, r));
    }
    std::vector<std::pair<SegmentPath, int>> out;
    for (int i = 1; i <= s.regime_max; ++i)
        for (const auto& seg : segments) out.emplace_back(seg, i);
    return out;
}

double drift_margin(DriftKind kind, const DriftConstants& c, double v, double lv) {
    switch (kind) {
        case DriftKind::Recurrence: return (v <= c.h ? c.c1 : 0.0) - lv;
        case DriftKind::PositiveRecurrence: return -c.c1 + (v <= c.h ? c.c2 : 0.0) - lv;
        case DriftKind::Exponential: return -c.c1 * v + c.c2 - lv;
    }
    return 0.0;
}

DriftConstants fit_drift_constants(DriftKind kind, std::span<const double> v, std::span<const double> lv,
                                   double c1_max, std::optional<double> c2_cap) {
    const std::size_t n = v.size();
    if (n == 0 || lv.size() != n) throw DomainError("drift fit needs matching nonempty samples");
    DriftConstants c;
    if (kind == DriftKind::Recurrence) {
        c.c1 = 0.0;
        c.h = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k)
            if (lv[k] > 0.0) {
                c.c1 = std::max(c.c1, lv[k]);
                c.h = std::max(c.h, v[k]);
            }
        if (!std::isfinite(c.h)) c.h = *std::min_element(v.begin(), v.end());
        return c;
    }
    if (kind == DriftKind::PositiveRecurrence) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        // suffix max of LV over points with V above each candidate H
        std::vector<double> suffix(n + 1, -std::numeric_limits<double>::infinity());
        for (std::size_t k = n; k-- > 0;) suffix[k] = std::max(suffix[k + 1], lv[order[k]]);
        double prefix = -std::numeric_limits<double>::infinity();
        double best_ratio = std::numeric_limits<double>::infinity();
        bool found = false;
        for (std::size_t k = 0; k < n; ++k) {
            prefix = std::max(prefix, lv[order[k]]);
            if (k + 1 < n && v[order[k + 1]] == v[order[k]]) continue;
            const double c1 = k + 1 < n ? -suffix[k + 1] : 1.0;
            if (!(c1 > 0.0)) continue;
            const double c2 = std::max(0.0, prefix + c1);
            if (c2 / c1 < best_ratio) {
                best_ratio = c2 / c1;
                c = {c1, c2, v[order[k]]};
                found = true;
            }
        }
        if (!found) {
            // No H separates: report the least-bad constants with C1 = 0.
            c = {0.0, std::max(0.0, *std::max_element(lv.begin(), lv.end())), *std::max_element(v.begin(), v.end())};
        }
        return c;
    }
    if (c2_cap) {
        // C2(C1) is nondecreasing since V > 0, so the cap gives C1 pointwise.
        c.c1 = c1_max;
        for (std::size_t k = 0; k < n; ++k) {
            if (lv[k] > *c2_cap) {
                c.c1 = 0.0;
                break;
            }
            if (v[k] > 0.0) c.c1 = std::min(c.c1, (*c2_cap - lv[k]) / v[k]);
        }
        c.c2 = 0.0;
        for (std::size_t k = 0; k < n; ++k) c.c2 = std::max(c.c2, lv[k] + c.c1 * v[k]);
        return c;
    }
    double best_ratio = std::numeric_limits<double>::infinity();
    constexpr int kGrid = 1000;
    for (int k = 1; k <= kGrid; ++k) {
        const double c1 = c1_max * k / kGrid;
        double c2 = 0.0;
        for (std::size_t m = 0; m < n; ++m) c2 = std::max(c2, lv[m] + c1 * v[m]);
        if (c2 / c1 < best_ratio) {
            best_ratio = c2 / c1;
            c.c1 = c1;
            c.c2 = c2;
        }
    }
    return c;
}

namespace {

bool increasing_tail(const std::vector<double>& seq) {
    if (seq.size() < 2) return false;
    for (std::size_t k = seq.size() / 2 + 1; k < seq.size(); ++k)
        if (!(seq[k] > seq[k - 1])) return false;
    return true;
}

}  // namespace

DriftReport scan_drift_condition(const CylindricalLyapunov& v, const RegimeSwitchingModel& model,
                                 const DriftSampler& sampler, DriftKind kind,
                                 std::optional<DriftConstants> constants, std::optional<double> c2_cap) {
    const auto samples = drift_sample_points(model, sampler);
    if (samples.empty()) throw DomainError("drift sampler produced no points");
    DriftReport rep;
    rep.kind = kind;
    std::vector<double> vs, lvs;
    for (const auto& [seg, i] : samples) {
        DriftPoint p;
        p.phi0 = seg.newest()[0];
        p.phi_r = seg.oldest()[0];
        p.sup_norm = seg.sup_norm();
        p.regime = i;
        p.v = v.value(seg, i);
        p.lv = apply_generator(v, model, seg, i);
        vs.push_back(p.v);
        lvs.push_back(p.lv);
        rep.points.push_back(p);
    }
    rep.fitted = !constants.has_value();
    rep.constants = constants ? *constants : fit_drift_constants(kind, vs, lvs, 10.0, c2_cap);
    rep.worst_margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rep.points.size(); ++k) {
        auto& p = rep.points[k];
        p.margin = drift_margin(kind, rep.constants, p.v, p.lv);
        rep.worst_margin = std::min(rep.worst_margin, p.margin);
        if (p.margin < 0.0) rep.violations.push_back(k);
    }

    const std::size_t n = model.dim();
    std::vector<double> e(n, 0.0);
    std::vector<double> up, down, regimes;
    const std::size_t steps = std::max<std::size_t>(sampler.n_constant / 2, 4);
    for (std::size_t k = 0; k <= steps; ++k) {
        e[0] = sampler.x_max * static_cast<double>(k) / static_cast<double>(steps);
        up.push_back(v.value(SegmentPath::constant(e, model.delay(), sampler.intervals), 1));
        e[0] = -e[0];
        down.push_back(v.value(SegmentPath::constant(e, model.delay(), sampler.intervals), 1));
    }
    std::fill(e.begin(), e.end(), 0.0);
    const auto zero = SegmentPath::constant(e, model.delay(), sampler.intervals);
    for (int i = 1; i <= std::max(sampler.regime_max, 4); ++i) regimes.push_back(v.value(zero, i));
    rep.coercive = increasing_tail(up) && increasing_tail(down) && increasing_tail(regimes);
    return rep;
}

namespace {

struct PathDynkin {
    double residual = 0.0;
    double deterministic = 0.0;
    bool censored = false;
};

PathDynkin dynkin_path(const CylindricalLyapunov& v, const RegimeSwitchingModel& model, const InitialCondition& init,
                       std::uint64_t steps, std::uint64_t seed, std::uint64_t path, const SimOptions& options) {
    const std::size_t n = model.dim();
    HybridState st(init.seg, init.regime, seed, path);
    Stepper stepper(model, options);
    const double dt = init.seg.step();
    std::vector<double> b(n), a(n * n), grad(n), hess(n * n);
    std::vector<std::pair<int, double>> jump_dv;
    RateRow row;
    const double v0 = v.value(st.seg, st.regime);
    double integral = 0.0;
    double martingale = 0.0;
    try {
        for (std::uint64_t k = 0; k < steps; ++k) {
            const int i = st.regime;
            const auto x = st.seg.newest();
            model.drift(x, i, b);
            model.covariance(x, i, a);
            v.f1_grad(x, i, grad);
            v.f1_hess(x, i, hess);
            double lv = horizontal_derivative(v, st.seg, i);
            double trace_ha = 0.0;
            for (std::size_t c = 0; c < n; ++c) lv += b[c] * grad[c];
            for (std::size_t c = 0; c < n * n; ++c) trace_ha += hess[c] * a[c];
            lv += 0.5 * trace_ha;
            model.rate_row(st.seg, i, row);
            jump_dv.clear();
            double compensator = 0.0;
            if (!row.rates.empty()) {
                const double here = v.value(st.seg, i);
                for (const auto& [j, q] : row.rates) {
                    const double dv = v.value(st.seg, j) - here;
                    jump_dv.emplace_back(j, dv);
                    compensator += q * dv;
                }
            }
            lv += compensator;
            integral += lv * dt;

            stepper.step(st);

            const auto& s = stepper.last_diffusion_increment();
            double m = 0.0;
            for (std::size_t c = 0; c < n; ++c) m += grad[c] * s[c];
            for (std::size_t c = 0; c < n; ++c)
                for (std::size_t l = 0; l < n; ++l) m += 0.5 * hess[c * n + l] * s[c] * s[l];
            m -= 0.5 * trace_ha * dt;
            double realized = 0.0;
            for (const auto& [j, dv] : jump_dv)
                if (j == st.regime) realized = dv;
            double expected = compensator * dt;
            if (options.mode == JumpMode::EulerRate && row.total > 0.0)
                expected = -std::expm1(-row.total * dt) / row.total * compensator;
            martingale += m + realized - expected;
        }
    } catch (const ExplosionGuard&) {
        return {0.0, 0.0, true};
    }
    const double residual = v.value(st.seg, st.regime) - v0 - integral;
    return {residual, residual - martingale, false};
}

void mean_and_se(const std::vector<double>& xs, double& mean, double& se) {
    const double n = static_cast<double>(xs.size());
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    se = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

}  // namespace

DynkinResult dynkin_residual(const CylindricalLyapunov& v, const RegimeSwitchingModel& model,
                             const InitialCondition& init, double horizon, std::size_t n_paths,
                             std::uint64_t seed, unsigned threads, SimOptions options) {
    if (n_paths == 0) throw DomainError("dynkin_residual needs at least one path");
    const std::uint64_t steps = step_count(horizon, init.seg.step());
    std::vector<PathDynkin> per(n_paths);
    parallel_for(n_paths, threads, [&](std::size_t p) {
        per[p] = dynkin_path(v, model, init, steps, seed, p, options);
    });
    DynkinResult res;
    std::vector<double> r, d;
    for (const auto& p : per) {
        if (p.censored) {
            ++res.censored;
            continue;
        }
        r.push_back(p.residual);
        d.push_back(p.deterministic);
    }
    res.n_paths = r.size();
    if (r.empty()) throw NumericError("every Dynkin path was censored");
    mean_and_se(r, res.residual, res.standard_error);
    mean_and_se(d, res.deterministic, res.deterministic_se);
    return res;
}

}  // namespace switchlab
