// Acceptance checks: one PASS/FAIL line per criterion with its runtime.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "switchlab/elliptic.hpp"
#include "switchlab/ergostats.hpp"
#include "switchlab/experiment.hpp"
#include "switchlab/io.hpp"
#include "switchlab/lyapunov.hpp"
#include "switchlab/rng.hpp"
#include "switchlab/simulate.hpp"

using namespace switchlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string num(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// Accumulates sub-checks; a failed one is flagged in the detail text.
struct Checks {
    Outcome out;
    void operator()(bool ok, const std::string& what) {
        if (!out.detail.empty()) out.detail += "; ";
        out.detail += (ok ? "" : "FAILED ") + what;
        out.pass = out.pass && ok;
    }
};

RegimeSwitchingModel builtin(const std::string& name, const std::string& b, const std::string& sigma,
                             const std::string& c) {
    BuiltinParams p;
    p.b = b;
    p.sigma = sigma;
    p.C = c;
    return builtin_model(name, p);
}

Outcome jump_target_law() {
    const auto m = builtin("ex1", "1", "1", "0.5");
    const auto seg = SegmentPath::constant(1.0, 1.0, 20);
    const auto row = rate_row(m, seg, 3);
    Philox rng(2024, 0);
    const int n = 100000;
    int to2 = 0, to4 = 0, other = 0;
    for (int k = 0; k < n; ++k) {
        const auto j = sample_regime_jump(row, rng.uniform() * row.total);
        if (j == 2)
            ++to2;
        else if (j == 4)
            ++to4;
        else
            ++other;
    }
    const double e = n / 2.0;
    const double chi2 = (to2 - e) * (to2 - e) / e + (to4 - e) * (to4 - e) / e;
    const double p = testutil::chi2_sf(chi2, 1);
    Checks c;
    c(std::abs(row.total - 2.0) < 1e-12, "q_3 = " + num(row.total));
    c(other == 0, "targets {2,4} only");
    c(p > 1e-3, "counts " + std::to_string(to2) + "/" + std::to_string(to4) + ", chi2 p = " + num(p));
    return c.out;
}

Outcome partition_property() {
    Philox rng(7, 0);
    Checks c;
    std::size_t mismatches = 0, boundary_bad = 0, none_bad = 0;
    for (int k = 0; k < 10000; ++k) {
        RateRow row;
        const int len = 1 + static_cast<int>(rng.uniform() * 6);
        int j = 0;
        for (int e = 0; e < len; ++e) {
            j += 1 + static_cast<int>(rng.uniform() * 3);
            // some zero-width intervals
            const double q = rng.uniform() < 0.15 ? 0.0 : rng.uniform() * 3.0;
            row.rates.emplace_back(j, q);
            row.total += q;
        }
        std::vector<double> cum{0.0};
        for (const auto& [to, q] : row.rates) cum.push_back(cum.back() + q);
        auto oracle = [&](double z) -> std::optional<int> {
            for (std::size_t e = 0; e < row.rates.size(); ++e)
                if (z >= cum[e] && z < cum[e + 1]) return row.rates[e].first;
            return std::nullopt;
        };
        const double z = rng.uniform() * row.total * 1.2;
        if (sample_regime_jump(row, z) != oracle(z) && z < cum.back()) ++mismatches;
        for (double b : cum)
            if (sample_regime_jump(row, b) != oracle(b)) ++boundary_bad;
        if (sample_regime_jump(row, row.total) || sample_regime_jump(row, row.total + 1.0)) ++none_bad;
    }
    c(mismatches == 0, "interior mismatches " + std::to_string(mismatches));
    c(boundary_bad == 0, "boundary mismatches " + std::to_string(boundary_bad));
    c(none_bad == 0, "z >= q_i not none " + std::to_string(none_bad));
    return c.out;
}

Outcome dynkin_identity() {
    const auto m = builtin("ex1", "1", "1", "0");
    const auto one = FunctionalExpr::parse("1", ExprKind::Point);
    const auto v = example1_lyapunov(example1_kappa(one, one, 10));
    const double x0[] = {0.5};
    const auto a = dynkin_residual(v, m, constant_initial(m, x0, 2, 1e-3), 1.0, 10000, 7);
    const auto b = dynkin_residual(v, m, constant_initial(m, x0, 2, 5e-4), 1.0, 10000, 7);
    Checks c;
    c(std::abs(a.residual) <= 3.0 * a.standard_error + 0.05,
      "residual " + num(a.residual) + " (SE " + num(a.standard_error) + ")");
    c(std::abs(b.deterministic) < std::abs(a.deterministic),
      "deterministic " + num(a.deterministic) + " -> " + num(b.deterministic) + " at dt/2");
    c(a.censored == 0 && b.censored == 0, "no censored paths");
    return c.out;
}

Outcome drift_scans() {
    Checks c;
    const auto m1 = builtin("ex1", "1", "1", "0");
    const auto one = FunctionalExpr::parse("1", ExprKind::Point);
    const auto r1 = scan_drift_condition(example1_lyapunov(example1_kappa(one, one, 10)), m1, DriftSampler{},
                                         DriftKind::Recurrence);
    std::size_t sign_bad = 0, sign_checked = 0;
    for (const auto& p : r1.points)
        if (p.regime > 1 && std::abs(p.phi0) >= 1.0) {
            ++sign_checked;
            if (p.lv > 0.0) ++sign_bad;
        }
    c(r1.violations.empty() && r1.coercive, "thm2.2 scan C = " + num(r1.constants.c1) + ", H = " + num(r1.constants.h) +
                                                ", " + std::to_string(r1.violations.size()) + " violations");
    c(sign_bad == 0, "LV <= 0 at " + std::to_string(sign_checked - sign_bad) + "/" + std::to_string(sign_checked) +
                         " points with i > 1, |phi(0)| >= 1");

    const auto m4 = builtin("ex4", "-x", "1", "0");
    const auto r4 = scan_drift_condition(example4_lyapunov(1.0, 0.1), m4, DriftSampler{}, DriftKind::Exponential,
                                         std::nullopt, 2.0);
    c(r4.violations.empty() && r4.coercive && r4.constants.c1 >= 0.5 && r4.constants.c2 <= 2.0,
      "OU thm2.4 scan C1 = " + num(r4.constants.c1) + ", C2 = " + num(r4.constants.c2) + ", " +
          std::to_string(r4.points.size()) + " points");
    return c.out;
}

EllipticProblem brownian_problem(int regimes) {
    EllipticProblem p;
    p.intervals = {{0.0, 1.0}};
    p.h = 1e-2;
    p.regimes = regimes;
    p.drift = [](double, int) { return 0.0; };
    p.sigma = [](double, int) { return 1.0; };
    return p;
}

Outcome exit_time_exactness() {
    Checks c;
    const auto single = mean_exit_time(brownian_problem(1));
    const EllipticSystem sys(brownian_problem(1));
    double err = 0.0;
    for (std::size_t p = 0; p < sys.node_count(); ++p) {
        const double x = sys.nodes()[p];
        err = std::max(err, std::abs(single.u[0][p] - x * (1.0 - x)));
    }
    c(err <= 1e-10, "max node error " + num(err));
    auto pair = brownian_problem(2);
    pair.rates = [](double, int i, std::vector<std::pair<int, double>>& out) { out.emplace_back(3 - i, 1.0); };
    const auto coupled = mean_exit_time(pair);
    double gap = 0.0, err2 = 0.0;
    for (std::size_t p = 0; p < sys.node_count(); ++p) {
        const double x = sys.nodes()[p];
        gap = std::max(gap, std::abs(coupled.u[0][p] - coupled.u[1][p]));
        err2 = std::max(err2, std::abs(coupled.u[0][p] - x * (1.0 - x)));
    }
    c(gap <= 1e-10, "coupled regime gap " + num(gap));
    c(err2 <= 1e-10, "coupled vs x(1-x) " + num(err2));
    return c.out;
}

Outcome contraction() {
    const auto m = builtin("ex4-point", "0", "1", "1");
    auto p = problem_from_model(m, {{0.0, 1.0}}, 1e-2, 6);
    p.rhs = [](double, int) { return -1.0; };
    const EllipticSystem sys(p);
    const auto cb = contraction_bound(sys);
    MonteCarloOptions mc;
    mc.dt = 1e-4;
    const double p_mc = jump_probability_mc(sys, cb.base.n0, mc);
    const double bound_mc = p_mc + (1.0 - p_mc) * cb.eps1;
    const auto r = solve_fixed_point(sys);
    double worst = 0.0;
    for (double q : r.trace.ratios)
        if (std::isfinite(q)) worst = std::max(worst, q);
    bool monotone = true;
    for (std::size_t k = 1; k < r.trace.deltas.size(); ++k)
        monotone = monotone && r.trace.deltas[k] <= r.trace.deltas[k - 1];
    Checks c;
    c(cb.base.holds, "base set n0 = " + std::to_string(cb.base.n0) + ", eps0 = " + num(cb.base.eps0) +
                         ", M_D = " + num(cb.base.m_d));
    c(worst <= bound_mc + 0.05 && worst <= cb.bound + 0.05,
      "max two-step ratio " + num(worst) + " vs bound " + num(bound_mc) + " (MC p = " + num(p_mc) + "), " +
          num(cb.bound) + " (PDE p = " + num(cb.p_hat) + ")");
    c(monotone, std::to_string(r.trace.deltas.size()) + " deltas monotone");
    return c.out;
}

Outcome pde_vs_monte_carlo() {
    const auto m = builtin("ex4-point", "0", "1", "1");
    const auto sol = mean_exit_time(problem_from_model(m, {{0.0, 1.0}}, 1e-2, 6));
    const EllipticSystem sys(problem_from_model(m, {{0.0, 1.0}}, 1e-2, 6));
    Checks c;
    HitOptions opt;
    opt.bridge_correction = true;
    const double x0[] = {0.5};
    for (int i = 1; i <= 3; ++i) {
        const double u = sys.interpolate(sol.u[i - 1], 0.5);
        const auto hits = first_hit_batch(m, constant_initial(m, x0, i, 1e-4), HitTarget::exit_box({0.0}, {1.0}),
                                          20.0, 100 + i, 10000, 1, opt);
        const auto st = hitting_stats(HittingBatch::from_results(hits, 20.0));
        const double mean = st.mean.value_or(NAN);
        c(std::abs(u - mean) <= 3.0 * st.standard_error,
          "i=" + std::to_string(i) + " PDE " + num(u, 6) + " MC " + num(mean, 6) + " +- " + num(st.standard_error, 3));
    }
    return c.out;
}

Outcome recurrence_dichotomy() {
    Checks c;
    auto bm = brownian_problem(1);
    const auto r = recurrence_indicator(bm, {-1.0, 1.0}, {10.0, 100.0, 1000.0});
    double oracle_err = 0.0;
    for (std::size_t k = 0; k < r.ks.size(); ++k)
        oracle_err = std::max(oracle_err, std::abs((1.0 - r.deficits[k]) - (r.ks[k] - 2.0) / (r.ks[k] - 1.0)));
    c(r.verdict == Verdict::Recurrent && r.limit_deficit <= 1e-3,
      "BM " + to_string(r.verdict) + ", limit deficit " + num(r.limit_deficit) + " (raw at k=1000 " +
          num(r.deficits.back()) + ")");
    c(oracle_err < 1e-9, "v_k(2) vs (k-2)/(k-1) " + num(oracle_err));

    auto out = brownian_problem(1);
    out.h = 0.05;
    out.drift = [](double x, int) { return x > 0.0 ? 1.0 : -1.0; };
    const auto t = recurrence_indicator(out, {-1.0, 1.0}, {10.0, 20.0, 40.0});
    const double closed = 1.0 - std::exp(-2.0);  // 1 - v(2) as k -> infinity
    c(t.verdict == Verdict::Transient && t.limit_deficit > 1e-2,
      "outward drift " + to_string(t.verdict) + ", deficit " + num(t.limit_deficit) + " (closed form " +
          num(closed) + ")");
    c(std::abs(t.limit_deficit - closed) < 5e-3, "closed-form gap " + num(std::abs(t.limit_deficit - closed)));
    return c.out;
}

Outcome tv_decay() {
    const auto m = testutil::scalar_model("-x", "1", {{"1", "2", "1"}, {"2", "1", "1"}}, 1.0, 0.1);
    std::vector<double> times;
    for (int k = 0; k <= 20; ++k) times.push_back(0.5 * k);
    const double xa[] = {5.0}, xb[] = {-5.0};
    const auto a = sample_marginals(m, constant_initial(m, xa, 1, 1e-2), times, 1, 10000, 1);
    const auto b = sample_marginals(m, constant_initial(m, xb, 1, 1e-2), times, 1 + 0x9E3779B97F4A7C15ULL, 10000, 1);
    const auto curve = tv_curve(a, b);
    const auto fit = fit_exponential_rate(curve);
    Checks c;
    c(fit.ok && fit.theta_hat > 0.0 && fit.r_squared >= 0.8,
      "theta " + num(fit.theta_hat) + ", r2 " + num(fit.r_squared) + " over " + std::to_string(fit.n_used) + " points");
    c(curve.tv.back() <= 0.08, "TV(10) = " + num(curve.tv.back()) + " (floor " + num(curve.floor.back()) + ")");
    return c.out;
}

const char* kTaskConfigs[] = {
    R"({"task": "simulate", "model": {"builtin": "ex1", "params": {"b": "1", "sigma": "1", "C": "0.5"}},
        "seed": 3, "dt": 0.001, "T": 3.0, "x0": [0.5], "regime0": 2})",
    R"({"task": "scan", "model": {"builtin": "ex4", "params": {"b": "-x", "sigma": "1", "C": "0"}},
        "lyapunov": {"kind": "example4"}, "scan": {"condition": "thm2.4", "c2_cap": 2.0}})",
    R"({"task": "dynkin", "model": {"builtin": "ex1", "params": {"b": "1", "sigma": "1", "C": "0"}},
        "lyapunov": {"kind": "example1"}, "seed": 5, "dt": 0.001, "T": 1.0, "n_paths": 500, "x0": [0.5], "regime0": 2})",
    R"({"task": "hitting", "model": {"builtin": "ex4-point", "params": {"b": "0", "sigma": "1", "C": "1"}},
        "seed": 9, "dt": 0.001, "n_paths": 1000, "x0": [0.5],
        "hitting": {"target": {"shape": "exit-box", "lo": [0.0], "hi": [1.0]}, "t_max": 10.0, "bridge": true}})",
    R"({"task": "tv", "model": {"inline": {"name": "ou", "n": 1, "r": 0.1, "drift": "-x", "diffusion": "1",
        "kernel": {"form": "expression-table", "entries": [{"from": "1", "to": "2", "rate": "1"},
        {"from": "2", "to": "1", "rate": "1"}], "bound": {"global": 1.0}}}},
        "seed": 2, "dt": 0.01, "n_paths": 1000, "x0": [3.0], "tv": {"x0_b": [-3.0], "t_end": 4.0, "n_times": 9}})",
    R"({"task": "exit-time", "model": {"builtin": "ex4-point", "params": {"b": "0", "sigma": "1", "C": "1"}},
        "elliptic": {"domain": [[0.0, 1.0]], "h": 0.01, "K": 6}})",
    R"({"task": "recurrence", "model": {"inline": {"name": "bm", "n": 1, "r": 1.0, "drift": "0", "diffusion": "1",
        "kernel": {"form": "expression-table", "entries": [], "bound": {"global": 0.0}}}},
        "elliptic": {"K": 1}, "recurrence": {"D1": [-1.0, 1.0], "ks": [10, 100, 1000]}})",
};

std::vector<std::pair<std::string, std::string>> csv_files(const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") out.emplace_back(e.path().filename().string(), read_file(e.path()));
    std::sort(out.begin(), out.end());
    return out;
}

Outcome determinism() {
    Checks c;
    const auto root = fs::temp_directory_path() / "switchlab_acceptance_det";
    fs::remove_all(root);
    for (const char* text : kTaskConfigs) {
        auto base = parse_config_text(text);
        std::vector<std::pair<std::string, std::string>> ref;
        bool same = true, ok = true;
        std::size_t files = 0;
        int run = 0;
        for (unsigned threads : {1u, 1u, 2u, 8u}) {
            auto cfg = base;
            cfg.threads = threads;
            cfg.out = (root / (base.task + "_" + std::to_string(run++))).string();
            const auto r = run_experiment(cfg);
            if (r.exit_code != 0) {
                ok = false;
                break;
            }
            const auto got = csv_files(cfg.out);
            if (ref.empty()) {
                ref = got;
                files = got.size();
            } else {
                same = same && got == ref;
            }
        }
        c(ok && same && files > 0, base.task + " " + std::to_string(files) + " csv");
    }
    fs::remove_all(root);
    return c.out;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all = {
        {1, "jump-target law", jump_target_law},
        {2, "interval partition", partition_property},
        {3, "Dynkin identity", dynkin_identity},
        {4, "drift scans", drift_scans},
        {5, "exit-time exactness", exit_time_exactness},
        {6, "fixed-point contraction", contraction},
        {7, "PDE vs Monte Carlo", pde_vs_monte_carlo},
        {8, "recurrence dichotomy", recurrence_dichotomy},
        {9, "TV decay", tv_decay},
        {10, "determinism", determinism},
    };
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s #%-2d %-24s %8.2f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, s, o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
    return failed == 0 ? 0 : 1;
}
