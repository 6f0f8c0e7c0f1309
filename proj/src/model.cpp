#include "switchlab/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "switchlab/error.hpp"

namespace switchlab {

namespace {

int parse_int(std::string_view s, std::string_view what) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ModelError("malformed " + std::string(what) + " '" + std::string(s) + "'");
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
}

}  // namespace

RegimePattern RegimePattern::parse(std::string_view text) {
    text = trim(text);
    RegimePattern p;
    if (text == "*") return p;
    const auto dash = text.find('-');
    if (dash == std::string_view::npos) {
        p.lo = p.hi = parse_int(text, "regime pattern");
    } else {
        p.lo = parse_int(trim(text.substr(0, dash)), "regime pattern");
        const auto rest = trim(text.substr(dash + 1));
        p.hi = rest.empty() ? 0 : parse_int(rest, "regime pattern");
        if (p.hi != 0 && p.hi < p.lo) throw ModelError("empty regime pattern '" + std::string(text) + "'");
    }
    if (p.lo < 1) throw ModelError("regimes start at 1: '" + std::string(text) + "'");
    return p;
}

std::string RegimePattern::to_string() const {
    if (lo == 1 && hi == 0) return "*";
    if (hi == lo) return std::to_string(lo);
    return std::to_string(lo) + "-" + (hi == 0 ? std::string() : std::to_string(hi));
}

TargetRule TargetRule::parse(std::string_view text) {
    text = trim(text);
    TargetRule t;
    if (!text.empty() && text.front() == 'i') {
        t.relative = true;
        auto rest = trim(text.substr(1));
        if (rest.empty()) throw ModelError("target 'i' is the diagonal, which is always zero");
        const char sign = rest.front();
        if (sign != '+' && sign != '-') throw ModelError("malformed target '" + std::string(text) + "'");
        t.value = parse_int(trim(rest.substr(1)), "target");
        if (sign == '-') t.value = -t.value;
        if (t.value == 0) throw ModelError("target 'i+0' is the diagonal, which is always zero");
    } else {
        t.relative = false;
        t.value = parse_int(text, "target");
        if (t.value < 1) throw ModelError("absolute target must be >= 1");
    }
    return t;
}

std::string TargetRule::to_string() const {
    if (!relative) return std::to_string(value);
    return value > 0 ? "i+" + std::to_string(value) : "i-" + std::to_string(-value);
}

KernelForm parse_kernel_form(std::string_view text) {
    if (text == "banded-birth-death") return KernelForm::BandedBirthDeath;
    if (text == "jump-to-base") return KernelForm::JumpToBase;
    if (text == "dense-truncated") return KernelForm::DenseTruncated;
    if (text == "expression-table") return KernelForm::ExpressionTable;
    throw ModelError("unknown kernel form '" + std::string(text) + "'");
}

std::string to_string(KernelForm form) {
    switch (form) {
        case KernelForm::BandedBirthDeath: return "banded-birth-death";
        case KernelForm::JumpToBase: return "jump-to-base";
        case KernelForm::DenseTruncated: return "dense-truncated";
        case KernelForm::ExpressionTable: return "expression-table";
    }
    return {};
}

RateBound RateBound::global_bound(double m) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ModelError("global rate bound must be finite and >= 0");
    RateBound b;
    b.kind = Kind::Global;
    b.global = m;
    return b;
}

RateBound RateBound::local_bound(const std::string& expr_in_h) {
    RateBound b;
    b.kind = Kind::Local;
    b.local = FunctionalExpr::parse(expr_in_h, ExprKind::Point);
    return b;
}

double RateBound::at(double h, int regime) const {
    if (kind == Kind::Global) return global;
    return local.eval_point(h, regime);
}

RateKernel::RateKernel(KernelForm form, std::vector<RateEntry> entries, RateBound bound)
    : form_(form), entries_(std::move(entries)), bound_(std::move(bound)) {
    for (const auto& e : entries_) {
        if (e.rate.kind() != ExprKind::Segment)
            throw ModelError("rate expressions must be segment expressions");
        switch (form_) {
            case KernelForm::BandedBirthDeath:
                if (!e.to.relative) throw ModelError("banded kernel targets must be relative (i+k / i-k)");
                break;
            case KernelForm::JumpToBase:
                if (!e.to.relative && e.to.value != 1)
                    throw ModelError("jump-to-base kernel: absolute targets must be regime 1");
                break;
            case KernelForm::DenseTruncated:
                if (e.to.relative || e.from.hi == 0)
                    throw ModelError("dense-truncated kernel needs absolute targets and bounded source patterns");
                break;
            case KernelForm::ExpressionTable: break;
        }
    }
}

std::vector<int> RateKernel::support(int regime) const {
    std::vector<int> out;
    for (const auto& e : entries_) {
        if (!e.from.matches(regime)) continue;
        const int j = e.to.resolve(regime);
        if (j != regime && j >= 1) out.push_back(j);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void RateKernel::row(const SegmentPath& seg, int regime, RateRow& out) const {
    if (regime < 1) throw ModelError("regime must be >= 1, got " + std::to_string(regime));
    out.rates.clear();
    out.total = 0.0;
    for (const auto& e : entries_) {
        if (!e.from.matches(regime)) continue;
        const int j = e.to.resolve(regime);
        if (j < 1)
            throw ModelError("rate entry from regime " + std::to_string(regime) + " targets regime " +
                             std::to_string(j));
        if (j == regime) continue;
        const double q = e.rate.eval_segment(seg, regime);
        if (q < 0.0)
            throw ModelError("negative rate q_" + std::to_string(regime) + "," + std::to_string(j) + " = " +
                             std::to_string(q));
        auto it = std::lower_bound(out.rates.begin(), out.rates.end(), j,
                                   [](const auto& p, int v) { return p.first < v; });
        if (it != out.rates.end() && it->first == j) it->second += q;
        else out.rates.insert(it, {j, q});
    }
    for (const auto& [j, q] : out.rates) out.total += q;
}

RateRow RateKernel::row(const SegmentPath& seg, int regime) const {
    RateRow r;
    row(seg, regime, r);
    return r;
}

bool RateKernel::past_independent() const {
    // Rates must be expressible through phi(0) alone; anything reading the window is excluded.
    for (const auto& e : entries_) {
        const std::string s = e.rate.to_string();
        if (s.find("SEGR") != std::string::npos || s.find("SUPNORM") != std::string::npos ||
            s.find("INTABS") != std::string::npos)
            return false;
    }
    return true;
}

const std::vector<FunctionalExpr>& RegimeTable::lookup(int regime) const {
    for (const auto& [pattern, exprs] : rows)
        if (pattern.matches(regime)) return exprs;
    throw ModelError("no expression covers regime " + std::to_string(regime));
}

RegimeSwitchingModel::RegimeSwitchingModel(std::string name, std::size_t dim, std::size_t noise_dim,
                                           double delay, RegimeTable drift, RegimeTable diffusion,
                                           RateKernel kernel)
    : name_(std::move(name)), dim_(dim), noise_dim_(noise_dim), delay_(delay), drift_(std::move(drift)),
      diffusion_(std::move(diffusion)), kernel_(std::move(kernel)) {
    if (dim_ == 0 || noise_dim_ == 0) throw ModelError("model dimensions must be positive");
    if (!(delay_ > 0.0)) throw ModelError("delay r must be positive");
    for (const auto& [p, exprs] : drift_.rows) {
        if (exprs.size() != dim_)
            throw ModelError("drift for regimes " + p.to_string() + " needs " + std::to_string(dim_) + " expressions");
        for (const auto& e : exprs)
            if (e.kind() != ExprKind::Point) throw ModelError("drift must be point expressions");
    }
    for (const auto& [p, exprs] : diffusion_.rows) {
        if (exprs.size() != dim_ * noise_dim_)
            throw ModelError("diffusion for regimes " + p.to_string() + " needs " +
                             std::to_string(dim_ * noise_dim_) + " expressions");
        for (const auto& e : exprs)
            if (e.kind() != ExprKind::Point) throw ModelError("diffusion must be point expressions");
    }
    if (drift_.rows.empty() || diffusion_.rows.empty()) throw ModelError("drift and diffusion are required");
}

void RegimeSwitchingModel::drift(std::span<const double> x, int regime, std::span<double> out) const {
    const auto& exprs = drift_.lookup(regime);
    for (std::size_t k = 0; k < dim_; ++k) out[k] = exprs[k].eval_point(x, regime);
}

void RegimeSwitchingModel::diffusion(std::span<const double> x, int regime, std::span<double> out) const {
    const auto& exprs = diffusion_.lookup(regime);
    for (std::size_t k = 0; k < exprs.size(); ++k) out[k] = exprs[k].eval_point(x, regime);
}

void RegimeSwitchingModel::covariance(std::span<const double> x, int regime, std::span<double> out) const {
    std::vector<double> s(dim_ * noise_dim_);
    diffusion(x, regime, s);
    for (std::size_t k = 0; k < dim_; ++k)
        for (std::size_t l = 0; l < dim_; ++l) {
            double a = 0.0;
            for (std::size_t m = 0; m < noise_dim_; ++m) a += s[k * noise_dim_ + m] * s[l * noise_dim_ + m];
            out[k * dim_ + l] = a;
        }
}

double RegimeSwitchingModel::drift1(double x, int regime) const {
    return drift_.lookup(regime)[0].eval_point(x, regime);
}

double RegimeSwitchingModel::sigma1(double x, int regime) const {
    return diffusion_.lookup(regime)[0].eval_point(x, regime);
}

void RegimeSwitchingModel::rate_row(const SegmentPath& seg, int regime, RateRow& out) const {
    kernel_.row(seg, regime, out);
}

RateRow RegimeSwitchingModel::rate_row(const SegmentPath& seg, int regime) const {
    return kernel_.row(seg, regime);
}

RateRow RegimeSwitchingModel::rate_row_at(std::span<const double> x, int regime) const {
    return kernel_.row(SegmentPath::constant(x, delay_, 1), regime);
}

double RegimeSwitchingModel::rate_bound(const SegmentPath& seg, int regime, double margin) const {
    return kernel_.bound().at(seg.sup_norm() + margin, regime);
}

RateRow rate_row(const RegimeSwitchingModel& model, const SegmentPath& seg, int regime) {
    return model.rate_row(seg, regime);
}

namespace {

FunctionalExpr point(const std::string& s) { return FunctionalExpr::parse(s, ExprKind::Point); }
FunctionalExpr segment(const std::string& s) { return FunctionalExpr::parse(s, ExprKind::Segment); }

RateEntry entry(const char* from, const char* to, const std::string& rate) {
    return {RegimePattern::parse(from), TargetRule::parse(to), segment(rate)};
}

}  // namespace

RegimeSwitchingModel builtin_model(std::string_view name, const BuiltinParams& params) {
    if (name != "ex1" && name != "ex2" && name != "ex3" && name != "ex4" && name != "ex4-point")
        throw ModelError("unknown builtin model '" + std::string(name) + "'");
    if (!params.b) throw ModelError(std::string(name) + ": missing parameter 'b'");
    if (!params.sigma) throw ModelError(std::string(name) + ": missing parameter 'sigma'");
    const double r = params.r.value_or(1.0);
    const std::string c = "(" + params.C.value_or("0") + ")";
    const auto c_expr = point(c);
    if (c_expr.depends_on_regime() == false && c_expr.eval_point(0.0, 1) < 0.0)
        throw ModelError("constants C_i must be >= 0");

    RegimeTable drift;
    RegimeTable diffusion;
    const std::string b = "(" + *params.b + ")";
    drift.rows.push_back({RegimePattern{}, {point(name == "ex4" || name == "ex4-point" ? b : "-(x)*" + b)}});
    diffusion.rows.push_back({RegimePattern{}, {point(*params.sigma)}});

    std::vector<RateEntry> entries;
    RateBound bound;
    // q_i <= max(q_12, 2 C_i + extra(H)).
    auto c_bound = [&](const std::string& extra) {
        return RateBound::local_bound("max(1, 2*" + c + "+" + extra + ")");
    };
    if (name == "ex1" || name == "ex2") {
        entries.push_back(entry("1", "i+1", "1"));
        entries.push_back(entry("2-", "i-1", c + "+1/(1+SUPNORM)"));
        entries.push_back(entry("2-", "i+1", c + "+1/(1+SUPNORM)"));
        if (!c_expr.depends_on_regime()) bound = RateBound::global_bound(std::max(1.0, 2.0 * c_expr.eval_point(0.0, 1) + 2.0));
        else bound = c_bound("2");
        return {std::string(name), 1, 1, r, std::move(drift), std::move(diffusion),
                RateKernel(KernelForm::BandedBirthDeath, std::move(entries), std::move(bound))};
    }
    if (name == "ex3") {
        entries.push_back(entry("1", "i+1", "1"));
        entries.push_back(entry("2-", "1", "2*INTABS"));
        entries.push_back(entry("2-", "i+1", "i*INTABS"));
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", r);
        bound = RateBound::local_bound("max(1, (2+i)*" + std::string(buf) + "*x)");
        return {std::string(name), 1, 1, r, std::move(drift), std::move(diffusion),
                RateKernel(KernelForm::JumpToBase, std::move(entries), std::move(bound))};
    }
    entries.push_back(entry("1", "i+1", "1"));
    entries.push_back(entry("2-", "i-1", c + "+2*abs(SEG0)"));
    entries.push_back(entry("2-", "i+1", c + (name == "ex4" ? "+abs(SEGR)" : "+abs(SEG0)")));
    bound = c_bound("3*x");
    return {std::string(name), 1, 1, r, std::move(drift), std::move(diffusion),
            RateKernel(KernelForm::BandedBirthDeath, std::move(entries), std::move(bound))};
}

}  // namespace switchlab
