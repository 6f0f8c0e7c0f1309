#include "switchlab/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "switchlab/error.hpp"

namespace switchlab {

using nlohmann::json;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw Error("failed writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string(), "cannot open file");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string trajectory_csv(const Trajectory& traj) {
    std::string s = "t";
    for (std::size_t d = 1; d <= traj.dim; ++d) s += ",x_" + std::to_string(d);
    s += ",alpha\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        s += fmt(traj.times[k]);
        for (std::size_t d = 0; d < traj.dim; ++d) s += "," + fmt(traj.x[k * traj.dim + d]);
        s += "," + std::to_string(traj.regimes[k]) + "\n";
    }
    return s;
}

std::string jumps_csv(const Trajectory& traj) {
    std::string s = "t,from,to\n";
    for (const auto& j : traj.jumps) s += fmt(j.time) + "," + std::to_string(j.from) + "," + std::to_string(j.to) + "\n";
    return s;
}

std::string segment_csv(const SegmentPath& seg) {
    std::string s = "t";
    for (std::size_t d = 1; d <= seg.dim(); ++d) s += ",x_" + std::to_string(d);
    s += "\n";
    for (std::size_t k = 0; k < seg.node_count(); ++k) {
        s += fmt(seg.node_time(k));
        for (double v : seg.node(k)) s += "," + fmt(v);
        s += "\n";
    }
    return s;
}

std::string tv_curve_csv(const TVCurve& curve) {
    std::string s = "t,tv,n_a,n_b\n";
    for (std::size_t k = 0; k < curve.times.size(); ++k)
        s += fmt(curve.times[k]) + "," + fmt(curve.tv[k]) + "," + std::to_string(curve.n_a[k]) + "," +
             std::to_string(curve.n_b[k]) + "\n";
    return s;
}

std::string hitting_csv(const HittingBatch& batch) {
    std::string s = "path,tau,censored\n";
    for (std::size_t k = 0; k < batch.tau.size(); ++k)
        s += std::to_string(k) + "," + fmt(batch.tau[k]) + "," + (batch.censored[k] ? "1" : "0") + "\n";
    return s;
}

std::string solution_csv(const EllipticSystem& sys, const std::vector<std::vector<double>>& u) {
    std::string s = "x,i,u\n";
    for (std::size_t r = 0; r < u.size(); ++r)
        for (std::size_t p = 0; p < sys.node_count(); ++p)
            s += fmt(sys.nodes()[p]) + "," + std::to_string(r + 1) + "," + fmt(u[r][p]) + "\n";
    return s;
}

std::string trace_csv(const IterationTrace& trace) {
    std::string s = "m,delta,ratio\n";
    for (std::size_t m = 0; m < trace.deltas.size(); ++m)
        s += std::to_string(m) + "," + fmt(trace.deltas[m]) + "," +
             (m < trace.ratios.size() ? fmt(trace.ratios[m]) : std::string()) + "\n";
    return s;
}

json verdict_json(const RecurrenceReport& rep) {
    return {{"D1", {rep.d1.first, rep.d1.second}},
            {"ks", rep.ks},
            {"deficits", rep.deficits},
            {"limit_deficit", rep.limit_deficit},
            {"verdict", to_string(rep.verdict)}};
}

json drift_report_json(const DriftReport& rep) {
    json violations = json::array();
    for (auto k : rep.violations) {
        const auto& p = rep.points[k];
        violations.push_back({{"phi_summary", {{"phi0", p.phi0}, {"phi_r", p.phi_r}, {"sup", p.sup_norm}}},
                              {"i", p.regime},
                              {"margin", p.margin}});
    }
    return {{"kind", to_string(rep.kind)},
            {"constants", {{"C1", rep.constants.c1}, {"C2", rep.constants.c2}, {"H", rep.constants.h}}},
            {"fitted", rep.fitted},
            {"n_points", rep.points.size()},
            {"worst_margin", rep.worst_margin},
            {"coercive", rep.coercive},
            {"violations", violations}};
}

json batch_summary_json(std::size_t n_paths, std::size_t censored, std::uint64_t seed, double dt, JumpMode mode) {
    return {{"n_paths", n_paths}, {"censored", censored}, {"seed", seed}, {"dt", dt}, {"mode", to_string(mode)}};
}

namespace {

json table_to_json(const RegimeTable& t) {
    json out = json::array();
    for (const auto& [pat, exprs] : t.rows) {
        json e = json::array();
        for (const auto& x : exprs) e.push_back(x.to_string());
        out.push_back({{"regimes", pat.to_string()}, {"expr", e}});
    }
    return out;
}

RegimeTable table_from_json(const json& j_in, const std::string& field, std::size_t width) {
    // a bare string is one row for every regime
    const json j = j_in.is_string() ? json::array({j_in}) : j_in;
    if (!j.is_array()) throw ConfigError(field, "expected a list or a string");
    RegimeTable t;
    for (std::size_t k = 0; k < j.size(); ++k) {
        const std::string at = field + "[" + std::to_string(k) + "]";
        const auto& row = j[k];
        RegimePattern pat;
        std::vector<std::string> texts;
        if (row.is_string()) {
            texts.push_back(row.get<std::string>());
        } else if (row.is_object()) {
            if (row.contains("regimes")) pat = RegimePattern::parse(row.at("regimes").get<std::string>());
            const auto& e = row.at("expr");
            if (e.is_string())
                texts.push_back(e.get<std::string>());
            else
                for (const auto& s : e) texts.push_back(s.get<std::string>());
        } else {
            throw ConfigError(at, "expected a string or {regimes, expr}");
        }
        if (texts.size() != width)
            throw ConfigError(at, "expected " + std::to_string(width) + " expressions, got " +
                                      std::to_string(texts.size()));
        std::vector<FunctionalExpr> exprs;
        for (std::size_t c = 0; c < texts.size(); ++c) {
            try {
                exprs.push_back(FunctionalExpr::parse(texts[c], ExprKind::Point));
            } catch (const ParseError& e) {
                throw ConfigError(at + ".expr[" + std::to_string(c) + "]", e.what());
            }
        }
        t.rows.emplace_back(pat, std::move(exprs));
    }
    return t;
}

}  // namespace

json model_to_json(const RegimeSwitchingModel& model) {
    json entries = json::array();
    for (const auto& e : model.kernel().entries())
        entries.push_back({{"from", e.from.to_string()}, {"to", e.to.to_string()}, {"rate", e.rate.to_string()}});
    const auto& b = model.kernel().bound();
    json bound = b.kind == RateBound::Kind::Global ? json{{"global", b.global}} : json{{"local", b.local.to_string()}};
    return {{"name", model.name()},
            {"n", model.dim()},
            {"d", model.noise_dim()},
            {"r", model.delay()},
            {"drift", table_to_json(model.drift_table())},
            {"diffusion", table_to_json(model.diffusion_table())},
            {"kernel", {{"form", to_string(model.kernel().form())}, {"entries", entries}, {"bound", bound}}}};
}

RegimeSwitchingModel model_from_json(const json& j) {
    try {
        if (!j.is_object()) throw ConfigError("model", "expected an object");
        const std::string name = j.value("name", std::string("custom"));
        const auto n = j.at("n").get<std::size_t>();
        const auto d = j.value("d", n);
        const double r = j.at("r").get<double>();
        if (n == 0 || d == 0) throw ConfigError("model.n", "dimensions must be positive");
        auto drift = table_from_json(j.at("drift"), "model.drift", n);
        auto diffusion = table_from_json(j.at("diffusion"), "model.diffusion", n * d);
        const auto& k = j.at("kernel");
        KernelForm form;
        try {
            form = parse_kernel_form(k.at("form").get<std::string>());
        } catch (const Error& e) {
            throw ConfigError("model.kernel.form", e.what());
        }
        std::vector<RateEntry> entries;
        const auto& ej = k.at("entries");
        for (std::size_t m = 0; m < ej.size(); ++m) {
            const std::string at = "model.kernel.entries[" + std::to_string(m) + "]";
            try {
                entries.push_back({RegimePattern::parse(ej[m].at("from").get<std::string>()),
                                   TargetRule::parse(ej[m].at("to").get<std::string>()),
                                   FunctionalExpr::parse(ej[m].at("rate").get<std::string>(), ExprKind::Segment)});
            } catch (const ConfigError&) {
                throw;
            } catch (const Error& e) {
                throw ConfigError(at, e.what());
            }
        }
        RateBound bound;
        const auto& bj = k.at("bound");
        if (bj.contains("global"))
            bound = RateBound::global_bound(bj.at("global").get<double>());
        else if (bj.contains("local"))
            bound = RateBound::local_bound(bj.at("local").get<std::string>());
        else
            throw ConfigError("model.kernel.bound", "expected {global} or {local}");
        try {
            return {name, n, d, r, std::move(drift), std::move(diffusion),
                    RateKernel(form, std::move(entries), std::move(bound))};
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError("model", e.what());
        }
    } catch (const json::exception& e) {
        throw ConfigError("model", e.what());
    }
}

}  // namespace switchlab
