#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "switchlab/error.hpp"
#include "switchlab/model.hpp"

using namespace switchlab;

namespace {

using Row = std::vector<std::pair<int, double>>;

BuiltinParams params(const char* b, const char* sigma, const char* c, double r = 1.0) {
    BuiltinParams p;
    p.b = b;
    p.sigma = sigma;
    p.C = c;
    p.r = r;
    return p;
}

// Direct transcriptions of the example kernels.
Row oracle_row(const std::string& name, const SegmentPath& seg, int i, double c) {
    if (i == 1) return {{2, 1.0}};
    double sup = 0.0, integ = 0.0;
    for (std::size_t k = 0; k < seg.node_count(); ++k) {
        const double a = std::abs(seg.node(k)[0]);
        sup = std::max(sup, a);
        integ += (k == 0 || k + 1 == seg.node_count() ? 0.5 : 1.0) * a * seg.step();
    }
    if (name == "ex1") return {{i - 1, c + 1.0 / (1.0 + sup)}, {i + 1, c + 1.0 / (1.0 + sup)}};
    if (name == "ex3") {
        if (i == 2) return {{1, 2.0 * integ}, {3, 2.0 * integ}};
        return {{1, 2.0 * integ}, {i + 1, i * integ}};
    }
    return {{i - 1, c + 2.0 * std::abs(seg.newest()[0])}, {i + 1, c + std::abs(seg.oldest()[0])}};
}

}  // namespace

TEST(Pattern, ParseAndMatch) {
    EXPECT_TRUE(RegimePattern::parse("*").matches(7));
    EXPECT_TRUE(RegimePattern::parse("3").matches(3));
    EXPECT_FALSE(RegimePattern::parse("3").matches(4));
    const auto r = RegimePattern::parse("2-5");
    EXPECT_FALSE(r.matches(1));
    EXPECT_TRUE(r.matches(5));
    EXPECT_FALSE(r.matches(6));
    EXPECT_TRUE(RegimePattern::parse("2-").matches(1000));
    EXPECT_EQ(RegimePattern::parse(RegimePattern::parse("2-5").to_string()).to_string(), "2-5");
    EXPECT_THROW(RegimePattern::parse("0"), Error);
    EXPECT_THROW(RegimePattern::parse("5-2"), Error);
    EXPECT_EQ(TargetRule::parse("i+2").resolve(3), 5);
    EXPECT_EQ(TargetRule::parse("i-1").resolve(3), 2);
    EXPECT_EQ(TargetRule::parse("1").resolve(9), 1);
}

TEST(Model, RateRowsAtReferenceSegments) {
    const auto ex1 = builtin_model("ex1", params("1", "1", "0.5"));
    const auto any = SegmentPath::constant(-0.3, 1.0, 10);
    auto row = ex1.rate_row(any, 1);
    EXPECT_EQ(row.rates, (Row{{2, 1.0}}));
    EXPECT_EQ(row.total, 1.0);

    row = ex1.rate_row(SegmentPath::constant(1.0, 1.0, 10), 3);
    EXPECT_EQ(row.rates, (Row{{2, 1.0}, {4, 1.0}}));
    EXPECT_EQ(row.total, 2.0);

    const auto ex4 = builtin_model("ex4", params("-x", "1", "0"));
    const auto phi = SegmentPath::from_function(1, 1.0, 10, [](double t) { return std::vector<double>{t + 1.0}; });
    row = ex4.rate_row(phi, 2);
    EXPECT_EQ(row.rates, (Row{{1, 2.0}, {3, 0.0}}));
    EXPECT_EQ(row.total, 2.0);
}

TEST(Model, BuiltinEdgeCases) {
    const auto zero = SegmentPath::constant(0.0, 1.0, 10);
    EXPECT_EQ(builtin_model("ex1", params("1", "1", "0")).rate_row(zero, 2).rates, (Row{{1, 1.0}, {3, 1.0}}));
    EXPECT_EQ(builtin_model("ex3", params("1", "1", "0")).rate_row(zero, 5).total, 0.0);
    const auto ex4 = builtin_model("ex4", params("-x", "1", "0"));
    const auto phi = SegmentPath::from_function(1, 1.0, 10, [](double t) { return std::vector<double>{t + 1.0}; });
    for (int i = 2; i < 6; ++i) EXPECT_EQ(ex4.rate_row(phi, i).rates.back().second, 0.0);
    EXPECT_THROW(builtin_model("ex5", params("1", "1", "0")), ModelError);
    BuiltinParams missing;
    missing.sigma = "1";
    EXPECT_THROW(builtin_model("ex1", missing), ModelError);
}

TEST(Model, KernelsMatchHandCodedFormulas) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n;
    std::uniform_int_distribution<int> reg(1, 40);
    for (const std::string name : {"ex1", "ex3", "ex4"}) {
        for (double c : {0.0, 0.75}) {
            char cs[32];
            std::snprintf(cs, sizeof cs, "%.17g", c);
            const auto m = builtin_model(name, params("1", "1", cs, 0.8));
            for (int rep = 0; rep < 1000; ++rep) {
                const double scale = std::exp(2.0 * n(rng));
                std::vector<std::vector<double>> v(9, std::vector<double>(1));
                for (auto& x : v) x[0] = scale * n(rng);
                const auto seg = SegmentPath::from_nodes(v, 0.8);
                const int i = reg(rng);
                const auto row = m.rate_row(seg, i);
                const auto want = oracle_row(name, seg, i, c);
                ASSERT_EQ(row.rates.size(), want.size());
                double total = 0.0;
                for (std::size_t k = 0; k < want.size(); ++k) {
                    EXPECT_EQ(row.rates[k].first, want[k].first);
                    EXPECT_NEAR(row.rates[k].second, want[k].second, 1e-12 * (1 + want[k].second));
                    EXPECT_GE(row.rates[k].second, 0.0);
                    if (k > 0) EXPECT_LT(row.rates[k - 1].first, row.rates[k].first);
                    total += row.rates[k].second;
                }
                EXPECT_NEAR(row.total, total, 1e-12 * (1 + total));
                EXPECT_TRUE(std::isfinite(row.total));
                EXPECT_LE(row.total, m.rate_bound(seg, i, 0.0) * (1 + 1e-12));
            }
        }
    }
}

TEST(Model, RegimeDependentConstants) {
    const auto m = builtin_model("ex1", params("1", "1", "0.1*i"));
    const auto seg = SegmentPath::constant(0.0, 1.0, 4);
    const auto row = m.rate_row(seg, 5);
    EXPECT_NEAR(row.rates[0].second, 1.5, 1e-15);
    EXPECT_LE(row.total, m.rate_bound(seg, 5, 0.0));
}

TEST(Model, CoefficientsAndCovariance) {
    std::vector<RateEntry> none;
    RegimeTable drift;
    drift.rows.push_back({RegimePattern{}, {FunctionalExpr::parse("-x[1]", ExprKind::Point),
                                            FunctionalExpr::parse("x[1]*i", ExprKind::Point)}});
    RegimeTable diff;
    diff.rows.push_back({RegimePattern::parse("1"),
                         {FunctionalExpr::parse("1", ExprKind::Point), FunctionalExpr::parse("x[2]", ExprKind::Point),
                          FunctionalExpr::parse("0", ExprKind::Point), FunctionalExpr::parse("2", ExprKind::Point)}});
    diff.rows.push_back({RegimePattern::parse("2-"),
                         {FunctionalExpr::parse("i", ExprKind::Point), FunctionalExpr::parse("0", ExprKind::Point),
                          FunctionalExpr::parse("0", ExprKind::Point), FunctionalExpr::parse("i", ExprKind::Point)}});
    const RegimeSwitchingModel m("m", 2, 2, 1.0, drift, diff,
                                 RateKernel(KernelForm::ExpressionTable, none, RateBound::global_bound(0.0)));
    const double x[2] = {2.0, 3.0};
    double b[2], a[4];
    m.drift(x, 3, b);
    EXPECT_EQ(b[0], -2.0);
    EXPECT_EQ(b[1], 6.0);
    m.covariance(x, 1, a);
    // sigma = [[1, 3], [0, 2]]
    EXPECT_EQ(a[0], 10.0);
    EXPECT_EQ(a[1], 6.0);
    EXPECT_EQ(a[2], 6.0);
    EXPECT_EQ(a[3], 4.0);
    m.covariance(x, 4, a);
    EXPECT_EQ(a[0], 16.0);
    EXPECT_EQ(a[1], 0.0);
}

TEST(Model, KernelValidation) {
    auto seg_expr = [](const char* s) { return FunctionalExpr::parse(s, ExprKind::Segment); };
    std::vector<RateEntry> abs_target{{RegimePattern{}, TargetRule::parse("3"), seg_expr("1")}};
    EXPECT_THROW(RateKernel(KernelForm::BandedBirthDeath, abs_target, RateBound::global_bound(1)), ModelError);
    std::vector<RateEntry> neg{{RegimePattern{}, TargetRule::parse("i+1"), seg_expr("SEG0")}};
    const RateKernel k(KernelForm::BandedBirthDeath, neg, RateBound::global_bound(1));
    EXPECT_THROW(k.row(SegmentPath::constant(-1.0, 1.0, 2), 1), ModelError);
    std::vector<RateEntry> below{{RegimePattern{}, TargetRule::parse("i-1"), seg_expr("1")}};
    EXPECT_THROW(RateKernel(KernelForm::BandedBirthDeath, below, RateBound::global_bound(1))
                     .row(SegmentPath::constant(0.0, 1.0, 2), 1),
                 ModelError);
    EXPECT_FALSE(builtin_model("ex4", params("-x", "1", "0")).kernel().past_independent());
    EXPECT_TRUE(builtin_model("ex4-point", params("-x", "1", "0")).kernel().past_independent());
    EXPECT_FALSE(builtin_model("ex1", params("1", "1", "0")).kernel().past_independent());
}
