#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "switchlab/elliptic.hpp"
#include "switchlab/error.hpp"

using namespace switchlab;

namespace {

EllipticProblem brownian(double lo = 0.0, double hi = 1.0, double h = 1e-2, int regimes = 1) {
    EllipticProblem p;
    p.intervals = {{lo, hi}};
    p.h = h;
    p.regimes = regimes;
    p.drift = [](double, int) { return 0.0; };
    p.sigma = [](double, int) { return 1.0; };
    return p;
}

double max_node_error(const EllipticSystem& sys, const std::vector<double>& u, const std::function<double(double)>& f) {
    double e = 0.0;
    for (std::size_t p = 0; p < sys.node_count(); ++p) e = std::max(e, std::abs(u[p] - f(sys.nodes()[p])));
    return e;
}

// q_{1,2} = 1, q_{i,i-1} = C + 2|x|, q_{i,i+1} = C + |x| for i >= 2.
RatesFn birth_death(double c) {
    return [c](double x, int i, std::vector<std::pair<int, double>>& out) {
        if (i == 1) {
            out.emplace_back(2, 1.0);
            return;
        }
        out.emplace_back(i - 1, c + 2.0 * std::abs(x));
        out.emplace_back(i + 1, c + std::abs(x));
    };
}

}  // namespace

TEST(ScalarDirichlet, QuadraticIsExact) {
    auto p = brownian();
    p.rhs = [](double, int) { return -1.0; };
    const EllipticSystem sys(p);
    const std::vector<double> rhs(sys.node_count(), -1.0);
    const auto u = solve_scalar_dirichlet(sys, 1, rhs);
    EXPECT_LE(max_node_error(sys, u, [](double x) { return x * (1.0 - x); }), 1e-13);
}

TEST(ScalarDirichlet, ConstantBoundaryDataIsHarmonic) {
    auto p = brownian(-2.0, 3.0, 0.05);
    p.drift = [](double x, int) { return 0.3 * x; };
    p.boundary = [](double, int) { return 2.5; };
    const EllipticSystem sys(p);
    const auto u = solve_scalar_dirichlet(sys, 1, std::vector<double>(sys.node_count(), 0.0));
    EXPECT_LE(max_node_error(sys, u, [](double) { return 2.5; }), 1e-13);
}

TEST(ScalarDirichlet, CoshOracleSecondOrder) {
    // 1/2 u'' - u = 0 on (0,1), u = 1 on the boundary.
    auto exact = [](double x) { return std::cosh(std::sqrt(2.0) * (x - 0.5)) / std::cosh(std::sqrt(2.0) / 2.0); };
    std::vector<double> errs;
    for (double h : {0.1, 0.05, 0.025, 0.0125}) {
        auto p = brownian(0.0, 1.0, h, 2);
        p.rates = [](double, int i, std::vector<std::pair<int, double>>& out) { out.emplace_back(3 - i, 1.0); };
        p.boundary = [](double, int) { return 1.0; };
        const EllipticSystem sys(p);
        EXPECT_DOUBLE_EQ(sys.q_total(1, 3), 1.0);
        const auto u = solve_scalar_dirichlet(sys, 1, std::vector<double>(sys.node_count(), 0.0));
        errs.push_back(max_node_error(sys, u, exact));
    }
    for (std::size_t k = 1; k < errs.size(); ++k) EXPECT_GE(std::log2(errs[k - 1] / errs[k]), 1.8) << k;
    EXPECT_LT(errs.back(), 1e-5);
}

TEST(ScalarDirichlet, MultipleComponents) {
    auto p = brownian();
    p.intervals = {{-3.0, -1.0}, {1.0, 2.0}};
    const EllipticSystem sys(p);
    ASSERT_EQ(sys.components().size(), 2u);
    const std::vector<double> rhs(sys.node_count(), -1.0);
    const auto u = solve_scalar_dirichlet(sys, 1, rhs);
    // (x - lo)(hi - x) on each piece
    for (const auto& c : sys.components())
        for (std::size_t p2 = c.offset; p2 <= c.offset + c.intervals; ++p2) {
            const double x = sys.nodes()[p2];
            EXPECT_NEAR(u[p2], (x - c.lo) * (c.hi - x), 1e-12);
        }
    EXPECT_NEAR(sys.interpolate(u, 1.5), 0.25, 1e-12);
}

TEST(FixedPoint, SingleRegimeOneIteration) {
    auto p = brownian();
    const auto r = mean_exit_time(p);
    EXPECT_LE(r.iterations, 1u);
    EXPECT_NEAR(r.u[0][50], 0.25, 1e-13);
}

TEST(FixedPoint, SymmetricPairIsQuadratic) {
    auto p = brownian(0.0, 1.0, 1e-2, 2);
    p.rates = [](double, int i, std::vector<std::pair<int, double>>& out) { out.emplace_back(3 - i, 1.0); };
    const EllipticSystem sys([&] {
        auto q = p;
        q.rhs = [](double, int) { return -1.0; };
        return q;
    }());
    const auto r = solve_fixed_point(sys);
    for (std::size_t k = 0; k < sys.node_count(); ++k) {
        const double x = sys.nodes()[k];
        EXPECT_NEAR(r.u[0][k], x * (1.0 - x), 1e-10);
        EXPECT_NEAR(r.u[0][k], r.u[1][k], 1e-10);
    }
}

TEST(FixedPoint, SymmetricRegimesAgreeForGeneralData) {
    auto p = brownian(-1.0, 2.0, 0.02, 2);
    p.drift = [](double x, int) { return 0.5 - x; };
    p.sigma = [](double x, int) { return 1.0 + 0.1 * x * x; };
    p.rates = [](double x, int i, std::vector<std::pair<int, double>>& out) { out.emplace_back(3 - i, 2.0 + x * x); };
    p.rhs = [](double x, int) { return -1.0 - x * x; };
    p.boundary = [](double x, int) { return x; };
    const auto r = solve_fixed_point(EllipticSystem(p));
    for (std::size_t k = 0; k < r.u[0].size(); ++k) EXPECT_EQ(r.u[0][k], r.u[1][k]);
}

TEST(FixedPoint, MaximumPrinciple) {
    auto p = brownian(0.0, 2.0, 0.02, 6);
    p.drift = [](double x, int i) { return i % 2 ? 3.0 * x : -2.0; };
    p.rates = birth_death(0.5);
    p.rhs = [](double x, int i) { return -std::abs(std::sin(3.0 * x + i)); };
    p.boundary = [](double x, int) { return x < 1.0 ? 0.0 : 0.7; };
    const auto r = solve_fixed_point(EllipticSystem(p));
    for (const auto& ui : r.u)
        for (double v : ui) EXPECT_GE(v, 0.0);
}

TEST(FixedPoint, DeltasMonotoneAndUnderBound) {
    auto p = brownian(0.0, 1.0, 1e-2, 6);
    p.rates = birth_death(1.0);
    p.rhs = [](double, int) { return -1.0; };
    const EllipticSystem sys(p);
    const auto base = sys.base_set();
    EXPECT_TRUE(base.holds);
    EXPECT_EQ(base.n0, 5);
    const auto r = solve_fixed_point(sys);
    ASSERT_GE(r.trace.deltas.size(), 3u);
    for (std::size_t m = 1; m < r.trace.deltas.size(); ++m)
        EXPECT_LE(r.trace.deltas[m], r.trace.deltas[m - 1] * (1.0 + 1e-12) + 1e-300) << m;
    ASSERT_TRUE(r.trace.bound);
    EXPECT_LT(*r.trace.bound, 1.0);
    for (double ratio : r.trace.ratios)
        if (std::isfinite(ratio)) EXPECT_LE(ratio, *r.trace.bound + 0.05);
}

TEST(FixedPoint, ContractionBoundPieces) {
    auto p = brownian(0.0, 1.0, 1e-2, 6);
    p.rates = birth_death(1.0);
    const EllipticSystem sys(p);
    const auto c = contraction_bound(sys);
    // Interior nodes 0.01 .. 0.99. M_D = max q_i = 2 + 3x at x = 0.99; with n0 = K - 1 the base mass
    // of regime 6 is q_65 = 1 + 2x, smallest at x = 0.01.
    const double md = 2.0 + 3.0 * 0.99, eps0 = 1.0 + 2.0 * 0.01;
    EXPECT_NEAR(c.base.m_d, md, 1e-12);
    EXPECT_NEAR(c.base.eps0, eps0, 1e-12);
    EXPECT_NEAR(c.eps1, 1.0 - eps0 / md, 1e-12);
    EXPECT_GT(c.p_hat, 0.0);
    EXPECT_LT(c.p_hat, 1.0);
    EXPECT_NEAR(c.bound, c.p_hat + (1.0 - c.p_hat) * c.eps1, 1e-12);
}

TEST(FixedPoint, PdeJumpProbabilityMatchesMonteCarlo) {
    auto p = brownian(0.0, 1.0, 1e-2, 6);
    p.rates = birth_death(1.0);
    const EllipticSystem sys(p);
    const auto c = contraction_bound(sys);
    MonteCarloOptions mc;
    mc.dt = 1e-3;
    mc.n_paths = 1000;
    const double est = jump_probability_mc(sys, c.base.n0, mc);
    // discrete monitoring exits late, so the MC value sits slightly above the PDE value
    EXPECT_NEAR(est, c.p_hat, 0.05);
}

TEST(FixedPoint, TruncationStability) {
    auto at = [](int k) {
        auto p = brownian(0.0, 1.0, 1e-2, k);
        // regime-dependent noise so the exit time feels the regime; strong return to regime 1, weak birth
        p.sigma = [](double, int i) { return 1.0 + 0.2 * i; };
        p.rates = [](double, int i, std::vector<std::pair<int, double>>& out) {
            if (i > 1) out.emplace_back(1, 5.0);
            out.emplace_back(i + 1, 0.5);
        };
        return mean_exit_time(p);
    };
    const auto a = at(8), b = at(10);
    EXPECT_GT(std::abs(a.u[0][50] - 0.25), 1e-2);
    for (int i = 1; i <= 4; ++i) EXPECT_LT(std::abs(a.u[i - 1][50] - b.u[i - 1][50]), 1e-6) << i;
}

TEST(FixedPoint, NonConvergenceCarriesTrace) {
    auto p = brownian(0.0, 1.0, 1e-2, 2);
    p.rates = [](double, int i, std::vector<std::pair<int, double>>& out) { out.emplace_back(3 - i, 50.0); };
    p.rhs = [](double, int) { return -1.0; };
    FixedPointOptions o;
    o.m_max = 3;
    try {
        solve_fixed_point(EllipticSystem(p), o);
        FAIL() << "expected NonConvergence";
    } catch (const NonConvergence& e) {
        EXPECT_EQ(e.trace().deltas.size(), 3u);
    }
}

TEST(EllipticSystem, HalvesStepForDominance) {
    auto p = brownian(0.0, 1.0, 0.1);
    p.drift = [](double, int) { return 70.0; };
    const EllipticSystem sys(p);
    EXPECT_EQ(sys.halvings(), 3);  // h |b| = 7, 3.5, 1.75, 0.875
    EXPECT_NEAR(sys.h(), 0.0125, 1e-15);
    p.drift = [](double, int) { return 1000.0; };
    EXPECT_THROW(EllipticSystem{p}, NumericError);
}

TEST(EllipticSystem, RejectsDegenerateInputs) {
    auto p = brownian();
    p.sigma = [](double x, int) { return x < 0.5 ? 1.0 : 0.0; };
    EXPECT_THROW(EllipticSystem{p}, ModelError);
    p = brownian(0.0, 1.0, 1e-2, 2);
    p.rates = [](double, int i, std::vector<std::pair<int, double>>& out) { out.emplace_back(3 - i, -1.0); };
    EXPECT_THROW(EllipticSystem{p}, ModelError);
}

TEST(EllipticSystem, FromPastIndependentModel) {
    BuiltinParams bp;
    bp.b = "0";
    bp.sigma = "1";
    bp.C = "1";
    const auto m = builtin_model("ex4-point", bp);
    const auto p = problem_from_model(m, {{0.0, 1.0}}, 1e-2, 6);
    const EllipticSystem sys(p);
    // q_{6,5} = 1 + 2|x|; the rate to 7 is dropped
    const auto& row = sys.rates(6, 50);
    ASSERT_EQ(row.size(), 1u);
    EXPECT_EQ(row[0].first, 5);
    EXPECT_NEAR(row[0].second, 2.0, 1e-12);
    EXPECT_NEAR(sys.q_total(6, 50), 2.0, 1e-12);
    EXPECT_NEAR(sys.q_total(3, 50), 3.5, 1e-12);

    BuiltinParams bp4 = bp;
    const auto delayed = builtin_model("ex4", bp4);
    EXPECT_THROW(problem_from_model(delayed, {{0.0, 1.0}}, 1e-2, 6), ModelError);
}

TEST(Recurrence, BrownianIsRecurrent) {
    const auto r = recurrence_indicator(brownian(), {-1.0, 1.0}, {10.0, 100.0, 1000.0});
    ASSERT_EQ(r.deficits.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        const double kk = r.ks[k];
        EXPECT_NEAR(r.deficits[k], 1.0 - (kk - 2.0) / (kk - 1.0), 1e-9);
    }
    EXPECT_EQ(r.verdict, Verdict::Recurrent);
    EXPECT_LE(r.limit_deficit, 1e-3);
}

TEST(Recurrence, OutwardDriftIsTransient) {
    auto p = brownian(0.0, 1.0, 0.05);
    p.drift = [](double x, int) { return x > 0.0 ? 1.0 : -1.0; };
    const auto r = recurrence_indicator(p, {-1.0, 1.0}, {10.0, 20.0, 40.0});
    // v(x) = (e^{-2x} - e^{-2k}) / (e^{-2} - e^{-2k}) on (1, k)
    for (std::size_t k = 0; k < r.ks.size(); ++k) {
        const double kk = r.ks[k];
        const double v = (std::exp(-4.0) - std::exp(-2.0 * kk)) / (std::exp(-2.0) - std::exp(-2.0 * kk));
        EXPECT_NEAR(r.deficits[k], 1.0 - v, 5e-3);
    }
    EXPECT_EQ(r.verdict, Verdict::Transient);
    EXPECT_GT(r.limit_deficit, 1e-2);
}

TEST(Recurrence, IdenticalRegimesMatchSingleRegime) {
    auto one = brownian(0.0, 1.0, 0.05);
    auto two = brownian(0.0, 1.0, 0.05, 2);
    two.rates = [](double x, int i, std::vector<std::pair<int, double>>& out) {
        out.emplace_back(3 - i, 1.0 / (1.0 + x * x));
    };
    RecurrenceOptions o;
    o.probe_regimes = {1, 2};
    const std::vector<double> ks{10.0, 100.0, 1000.0};
    const auto a = recurrence_indicator(one, {-1.0, 1.0}, ks);
    const auto b = recurrence_indicator(two, {-1.0, 1.0}, ks, o);
    EXPECT_EQ(a.verdict, b.verdict);
    for (std::size_t k = 0; k < ks.size(); ++k) EXPECT_NEAR(a.deficits[k], b.deficits[k], 1e-8);
}
