#include "switchlab/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>

#include "switchlab/error.hpp"

namespace switchlab {

struct FunctionalExpr::Node {
    Op op = Op::Const;
    double value = 0.0;
    int index = 0;
    std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using Op = FunctionalExpr::Op;
using NodePtr = std::shared_ptr<const FunctionalExpr::Node>;

NodePtr make(Op op, std::vector<NodePtr> args = {}, double value = 0.0, int index = 0) {
    auto n = std::make_shared<FunctionalExpr::Node>();
    n->op = op;
    n->value = value;
    n->index = index;
    n->args = std::move(args);
    return n;
}

class Parser {
public:
    Parser(std::string_view text, ExprKind kind) : text_(text), kind_(kind) {}

    NodePtr parse() {
        auto e = expr();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr expr() {
        auto lhs = term();
        for (;;) {
            if (accept('+')) lhs = make(Op::Add, {lhs, term()});
            else if (accept('-')) lhs = make(Op::Sub, {lhs, term()});
            else return lhs;
        }
    }

    NodePtr term() {
        auto lhs = factor();
        for (;;) {
            if (accept('*')) lhs = make(Op::Mul, {lhs, factor()});
            else if (accept('/')) lhs = make(Op::Div, {lhs, factor()});
            else return lhs;
        }
    }

    int optional_index() {
        if (!accept('[')) return 1;
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (start == pos_) fail("expected component index");
        int idx = 0;
        std::from_chars(text_.data() + start, text_.data() + pos_, idx);
        if (idx < 1) {
            pos_ = start;
            fail("component index must be >= 1");
        }
        expect(']');
        return idx;
    }

    void require_kind(ExprKind needed, std::string_view symbol, std::size_t at) {
        if (kind_ != needed) {
            pos_ = at;
            fail(std::string(symbol) + (needed == ExprKind::Segment ? " is a segment symbol, not allowed in a point expression"
                                                                    : " is a point symbol, not allowed in a segment expression"));
        }
    }

    NodePtr number() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
            if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
                pos_ = p;
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            }
        }
        double v = 0.0;
        const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
        if (res.ec != std::errc() || res.ptr != text_.data() + pos_) {
            pos_ = start;
            fail("malformed number");
        }
        return make(Op::Const, {}, v);
    }

    NodePtr factor() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        const char c = text_[pos_];
        if (c == '-') {
            ++pos_;
            return make(Op::Neg, {factor()});
        }
        if (c == '(') {
            ++pos_;
            auto e = expr();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                ++pos_;
            const std::string_view id = text_.substr(start, pos_ - start);
            if (id == "i") return make(Op::Regime);
            if (id == "x") {
                require_kind(ExprKind::Point, id, start);
                return make(Op::X, {}, 0.0, optional_index());
            }
            if (id == "SEG0") {
                require_kind(ExprKind::Segment, id, start);
                return make(Op::Seg0, {}, 0.0, optional_index());
            }
            if (id == "SEGR") {
                require_kind(ExprKind::Segment, id, start);
                return make(Op::SegR, {}, 0.0, optional_index());
            }
            if (id == "SUPNORM") {
                require_kind(ExprKind::Segment, id, start);
                return make(Op::SupNorm);
            }
            if (id == "INTABS") {
                require_kind(ExprKind::Segment, id, start);
                return make(Op::IntAbs);
            }
            Op fn;
            int arity;
            if (id == "abs") fn = Op::Abs, arity = 1;
            else if (id == "exp") fn = Op::Exp, arity = 1;
            else if (id == "log") fn = Op::Log, arity = 1;
            else if (id == "pow") fn = Op::Pow, arity = 2;
            else if (id == "min") fn = Op::Min, arity = 2;
            else if (id == "max") fn = Op::Max, arity = 2;
            else {
                pos_ = start;
                fail("unknown identifier '" + std::string(id) + "'");
            }
            expect('(');
            std::vector<NodePtr> args{expr()};
            if (accept(',')) args.push_back(expr());
            if (static_cast<int>(args.size()) != arity)
                fail(std::string(id) + " takes " + std::to_string(arity) + " argument(s)");
            expect(')');
            return make(fn, std::move(args));
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    std::string_view text_;
    ExprKind kind_;
    std::size_t pos_ = 0;
};

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s(buf);
    if (v < 0.0) return "(" + s + ")";
    return s;
}

std::string index_suffix(int idx) { return "[" + std::to_string(idx) + "]"; }

std::string print(const FunctionalExpr::Node& n) {
    auto arg = [&](std::size_t k) { return print(*n.args[k]); };
    switch (n.op) {
        case Op::Const: return format_number(n.value);
        case Op::Regime: return "i";
        case Op::X: return "x" + index_suffix(n.index);
        case Op::Seg0: return "SEG0" + index_suffix(n.index);
        case Op::SegR: return "SEGR" + index_suffix(n.index);
        case Op::SupNorm: return "SUPNORM";
        case Op::IntAbs: return "INTABS";
        case Op::Add: return "(" + arg(0) + "+" + arg(1) + ")";
        case Op::Sub: return "(" + arg(0) + "-" + arg(1) + ")";
        case Op::Mul: return "(" + arg(0) + "*" + arg(1) + ")";
        case Op::Div: return "(" + arg(0) + "/" + arg(1) + ")";
        case Op::Neg: return "(-" + arg(0) + ")";
        case Op::Abs: return "abs(" + arg(0) + ")";
        case Op::Exp: return "exp(" + arg(0) + ")";
        case Op::Log: return "log(" + arg(0) + ")";
        case Op::Pow: return "pow(" + arg(0) + "," + arg(1) + ")";
        case Op::Min: return "min(" + arg(0) + "," + arg(1) + ")";
        case Op::Max: return "max(" + arg(0) + "," + arg(1) + ")";
    }
    return {};
}

const char* op_name(Op op) {
    switch (op) {
        case Op::Div: return "division";
        case Op::Log: return "log";
        case Op::Exp: return "exp";
        case Op::Pow: return "pow";
        default: return "arithmetic";
    }
}

}  // namespace

FunctionalExpr FunctionalExpr::parse(std::string_view text, ExprKind kind) {
    FunctionalExpr e;
    e.kind_ = kind;
    e.root_ = Parser(text, kind).parse();
    e.compile();
    return e;
}

FunctionalExpr FunctionalExpr::constant(double value, ExprKind kind) {
    FunctionalExpr e;
    e.kind_ = kind;
    e.root_ = make(Op::Const, {}, value);
    e.compile();
    return e;
}

std::string FunctionalExpr::to_string() const { return root_ ? print(*root_) : std::string("0"); }

void FunctionalExpr::compile() {
    program_.clear();
    uses_regime_ = false;
    constant_ = true;
    max_component_ = 0;
    std::size_t depth = 0;
    max_depth_ = 0;
    std::function<void(const Node&)> emit = [&](const Node& n) {
        for (const auto& a : n.args) emit(*a);
        program_.push_back({n.op, n.index, n.value});
        if (n.args.empty()) {
            ++depth;
            if (n.op != Op::Const) constant_ = false;
            if (n.op == Op::Regime) uses_regime_ = true;
            if (n.op == Op::X || n.op == Op::Seg0 || n.op == Op::SegR)
                max_component_ = std::max(max_component_, n.index);
        } else {
            depth -= n.args.size() - 1;
        }
        max_depth_ = std::max(max_depth_, depth);
    };
    emit(*root_);
}

double FunctionalExpr::run(std::span<const double> x, const SegmentPath* seg, int regime) const {
    constexpr std::size_t kInline = 32;
    std::array<double, kInline> small{};
    std::vector<double> big;
    double* st = small.data();
    if (max_depth_ > kInline) {
        big.resize(max_depth_);
        st = big.data();
    }
    std::size_t sp = 0;
    auto component = [](std::span<const double> v, int idx) {
        if (static_cast<std::size_t>(idx) > v.size())
            throw EvalError("component index " + std::to_string(idx) + " exceeds dimension " +
                            std::to_string(v.size()));
        return v[static_cast<std::size_t>(idx - 1)];
    };
    for (const Instr& in : program_) {
        switch (in.op) {
            case Op::Const: st[sp++] = in.value; break;
            case Op::Regime: st[sp++] = static_cast<double>(regime); break;
            case Op::X: st[sp++] = component(x, in.index); break;
            case Op::Seg0: st[sp++] = component(seg->newest(), in.index); break;
            case Op::SegR: st[sp++] = component(seg->oldest(), in.index); break;
            case Op::SupNorm: st[sp++] = seg->sup_norm(); break;
            case Op::IntAbs: st[sp++] = seg->abs_integral(); break;
            case Op::Add: --sp; st[sp - 1] += st[sp]; break;
            case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
            case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
            case Op::Div:
                --sp;
                if (st[sp] == 0.0) throw EvalError("division by zero in '" + to_string() + "'");
                st[sp - 1] /= st[sp];
                break;
            case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
            case Op::Abs: st[sp - 1] = std::abs(st[sp - 1]); break;
            case Op::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
            case Op::Log:
                if (!(st[sp - 1] > 0.0)) throw EvalError("log of non-positive value in '" + to_string() + "'");
                st[sp - 1] = std::log(st[sp - 1]);
                break;
            case Op::Pow: --sp; st[sp - 1] = std::pow(st[sp - 1], st[sp]); break;
            case Op::Min: --sp; st[sp - 1] = std::min(st[sp - 1], st[sp]); break;
            case Op::Max: --sp; st[sp - 1] = std::max(st[sp - 1], st[sp]); break;
        }
        if (!std::isfinite(st[sp - 1]))
            throw EvalError(std::string("non-finite ") + op_name(in.op) + " result in '" + to_string() + "'");
    }
    return st[0];
}

double FunctionalExpr::eval_point(std::span<const double> x, int regime) const {
    if (kind_ != ExprKind::Point) throw EvalError("segment expression evaluated at a point");
    return run(x, nullptr, regime);
}

double FunctionalExpr::eval_point(double x, int regime) const {
    const double v[1] = {x};
    return eval_point(std::span<const double>(v, 1), regime);
}

double FunctionalExpr::eval_segment(const SegmentPath& seg, int regime) const {
    if (kind_ != ExprKind::Segment) throw EvalError("point expression evaluated on a segment");
    return run({}, &seg, regime);
}

}  // namespace switchlab
