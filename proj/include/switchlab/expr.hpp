#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "switchlab/segment.hpp"

namespace switchlab {

/// Point expressions read a state x in R^n (drift, diffusion, f1, f2, past-independent rates);
/// segment expressions read the trailing window phi (rate kernels).
enum class ExprKind { Point, Segment };

/// Parsed functional expression.
///
/// Grammar:
///   expr   := term (('+'|'-') term)*
///   term   := factor (('*'|'/') factor)*
///   factor := NUMBER | 'i' | 'x' ('[' INDEX ']')? | 'SEG0' ('[' INDEX ']')?
///           | 'SEGR' ('[' INDEX ']')? | 'SUPNORM' | 'INTABS'
///           | func '(' expr (',' expr)? ')' | '(' expr ')' | '-' factor
///   func   := abs | exp | log | pow | min | max
///
/// INDEX is 1-based; a bare `x`, `SEG0` or `SEGR` means component 1.
/// Evaluation never returns NaN or infinity: such results raise EvalError.
class FunctionalExpr {
public:
    FunctionalExpr() = default;

    static FunctionalExpr parse(std::string_view text, ExprKind kind);
    static FunctionalExpr constant(double value, ExprKind kind);

    ExprKind kind() const noexcept { return kind_; }

    /// Canonical, fully parenthesized text that parses back to an equivalent expression.
    std::string to_string() const;

    double eval_point(std::span<const double> x, int regime) const;
    double eval_point(double x, int regime) const;
    double eval_segment(const SegmentPath& seg, int regime) const;

    bool depends_on_regime() const noexcept { return uses_regime_; }
    /// True when the expression reads neither the state nor the regime.
    bool is_constant() const noexcept { return constant_; }
    /// Largest component index referenced (0 when none).
    int max_component() const noexcept { return max_component_; }

    struct Node;
    enum class Op : std::uint8_t {
        Const, Regime, X, Seg0, SegR, SupNorm, IntAbs,
        Add, Sub, Mul, Div, Neg, Abs, Exp, Log, Pow, Min, Max
    };
    struct Instr {
        Op op;
        int index;
        double value;
    };

private:
    double run(std::span<const double> x, const SegmentPath* seg, int regime) const;
    void compile();

    ExprKind kind_ = ExprKind::Point;
    std::shared_ptr<const Node> root_;
    std::vector<Instr> program_;
    std::size_t max_depth_ = 0;
    bool uses_regime_ = false;
    bool constant_ = true;
    int max_component_ = 0;
};

}  // namespace switchlab
