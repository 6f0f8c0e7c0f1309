#include "switchlab/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <set>

#include "switchlab/elliptic.hpp"
#include "switchlab/ergostats.hpp"
#include "switchlab/error.hpp"
#include "switchlab/io.hpp"
#include "switchlab/simulate.hpp"

namespace switchlab {

using nlohmann::json;

namespace {

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) {
        used_.insert(key);
        return j_.contains(key);
    }
    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(at(key), std::string("wrong type: ") + e.what());
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

void read_pair(Reader& r, const std::string& key, std::pair<double, double>& out) {
    std::vector<double> v;
    r.get(key, v);
    if (!r.has(key)) return;
    if (v.size() != 2) throw ConfigError(r.at(key), "expected [lo, hi]");
    out = {v[0], v[1]};
}

void read_optional_string(Reader& r, const std::string& key, std::optional<std::string>& out) {
    if (!r.has(key)) return;
    std::string s;
    r.get(key, s);
    out = s;
}

}  // namespace

std::string canonical_task(std::string_view name) {
    if (name == "scan" || name == "lyapunov-scan") return "lyapunov-scan";
    if (name == "tv" || name == "tv-decay") return "tv-decay";
    for (const char* t : {"simulate", "dynkin", "hitting", "exit-time", "recurrence"})
        if (name == t) return t;
    throw ConfigError("task", "unknown task '" + std::string(name) + "'");
}

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    Reader r(j, "");
    if (!r.has("model")) throw ConfigError("model", "missing");
    {
        Reader m(r.raw("model"), "model");
        m.get("builtin", c.model.builtin);
        m.get("file", c.model.file);
        if (m.has("inline")) c.model.inline_model = m.raw("inline");
        if (m.has("params")) {
            Reader p(m.raw("params"), "model.params");
            read_optional_string(p, "b", c.model.params.b);
            read_optional_string(p, "sigma", c.model.params.sigma);
            read_optional_string(p, "C", c.model.params.C);
            if (p.has("r")) {
                double v = 0.0;
                p.get("r", v);
                c.model.params.r = v;
            }
            p.finish();
        }
        m.finish();
        const int sources = !c.model.builtin.empty() + !c.model.file.empty() + c.model.inline_model.has_value();
        if (sources != 1) throw ConfigError("model", "give exactly one of builtin, file, inline");
    }
    if (r.has("task")) {
        std::string t;
        r.get("task", t);
        c.task = canonical_task(t);
    }
    r.get("seed", c.seed);
    r.get("dt", c.dt);
    r.get("T", c.T);
    r.get("n_paths", c.n_paths);
    r.get("threads", c.threads);
    r.get("mode", c.mode);
    r.get("h_cap", c.h_cap);
    r.get("record_every", c.record_every);
    r.get("x0", c.x0);
    r.get("regime0", c.regime0);
    r.get("out", c.out);
    if (r.has("lyapunov")) {
        Reader l(r.raw("lyapunov"), "lyapunov");
        l.get("kind", c.lyapunov.kind);
        if (l.has("kappa")) {
            double k = 0.0;
            l.get("kappa", k);
            c.lyapunov.kappa = k;
        }
        l.get("weight", c.lyapunov.weight);
        l.get("f1", c.lyapunov.f1);
        l.get("f2", c.lyapunov.f2);
        l.get("g", c.lyapunov.g);
        l.finish();
    }
    if (r.has("scan")) {
        Reader s(r.raw("scan"), "scan");
        s.get("condition", c.condition);
        if (s.has("sampler")) {
            Reader p(s.raw("sampler"), "scan.sampler");
            p.get("x_max", c.sampler.x_max);
            p.get("n_constant", c.sampler.n_constant);
            p.get("n_rough", c.sampler.n_rough);
            p.get("rough_amplitude", c.sampler.rough_amplitude);
            p.get("sup_bound", c.sampler.sup_bound);
            p.get("regime_max", c.sampler.regime_max);
            p.get("intervals", c.sampler.intervals);
            p.get("seed", c.sampler.seed);
            p.finish();
        }
        if (s.has("constants")) {
            Reader k(s.raw("constants"), "scan.constants");
            DriftConstants dc;
            k.get("C1", dc.c1);
            k.get("C2", dc.c2);
            k.get("H", dc.h);
            k.finish();
            c.constants = dc;
        }
        if (s.has("c2_cap")) {
            double cap = 0.0;
            s.get("c2_cap", cap);
            c.c2_cap = cap;
        }
        s.finish();
    }
    if (r.has("hitting")) {
        Reader h(r.raw("hitting"), "hitting");
        if (h.has("target")) {
            Reader t(h.raw("target"), "hitting.target");
            t.get("shape", c.target.shape);
            t.get("lo", c.target.lo);
            t.get("hi", c.target.hi);
            t.get("center", c.target.center);
            t.get("radius", c.target.radius);
            t.get("regimes", c.target.regimes);
            t.get("whole_segment", c.target.whole_segment);
            t.finish();
        }
        h.get("t_max", c.t_max);
        h.get("bridge", c.bridge);
        h.finish();
    }
    if (r.has("tv")) {
        Reader t(r.raw("tv"), "tv");
        t.get("x0_b", c.x0_b);
        t.get("regime0_b", c.regime0_b);
        t.get("t_end", c.t_end);
        t.get("n_times", c.n_times);
        t.get("cells", c.cells);
        t.get("regime_quantile", c.regime_quantile);
        t.finish();
    }
    if (r.has("elliptic")) {
        Reader e(r.raw("elliptic"), "elliptic");
        if (e.has("domain")) {
            std::vector<std::vector<double>> d;
            e.get("domain", d);
            c.domain.clear();
            for (std::size_t k = 0; k < d.size(); ++k) {
                if (d[k].size() != 2) throw ConfigError("elliptic.domain[" + std::to_string(k) + "]", "expected [lo, hi]");
                c.domain.emplace_back(d[k][0], d[k][1]);
            }
        }
        e.get("h", c.h);
        e.get("K", c.K);
        e.get("tol", c.tol);
        e.get("m_max", c.m_max);
        e.finish();
    }
    if (r.has("recurrence")) {
        Reader e(r.raw("recurrence"), "recurrence");
        read_pair(e, "D1", c.d1);
        e.get("ks", c.ks);
        e.get("probes", c.probes);
        e.get("probe_regimes", c.probe_regimes);
        e.get("tol", c.tol_rec);
        e.finish();
    }
    r.finish();
    return c;
}

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
    json model = json::object();
    if (!c.model.builtin.empty()) {
        model["builtin"] = c.model.builtin;
        json p = json::object();
        if (c.model.params.b) p["b"] = *c.model.params.b;
        if (c.model.params.sigma) p["sigma"] = *c.model.params.sigma;
        if (c.model.params.C) p["C"] = *c.model.params.C;
        if (c.model.params.r) p["r"] = *c.model.params.r;
        model["params"] = p;
    }
    if (!c.model.file.empty()) model["file"] = c.model.file;
    if (c.model.inline_model) model["inline"] = *c.model.inline_model;

    json lyap = {{"kind", c.lyapunov.kind}, {"weight", c.lyapunov.weight}, {"f1", c.lyapunov.f1},
                 {"f2", c.lyapunov.f2},     {"g", c.lyapunov.g}};
    if (c.lyapunov.kappa) lyap["kappa"] = *c.lyapunov.kappa;
    json scan = {{"condition", c.condition},
                 {"sampler",
                  {{"x_max", c.sampler.x_max},
                   {"n_constant", c.sampler.n_constant},
                   {"n_rough", c.sampler.n_rough},
                   {"rough_amplitude", c.sampler.rough_amplitude},
                   {"sup_bound", c.sampler.sup_bound},
                   {"regime_max", c.sampler.regime_max},
                   {"intervals", c.sampler.intervals},
                   {"seed", c.sampler.seed}}}};
    if (c.constants) scan["constants"] = {{"C1", c.constants->c1}, {"C2", c.constants->c2}, {"H", c.constants->h}};
    if (c.c2_cap) scan["c2_cap"] = *c.c2_cap;
    json domain = json::array();
    for (const auto& [a, b] : c.domain) domain.push_back({a, b});

    json j = {{"model", model},
              {"seed", c.seed},
              {"dt", c.dt},
              {"T", c.T},
              {"n_paths", c.n_paths},
              {"threads", c.threads},
              {"mode", c.mode},
              {"h_cap", c.h_cap},
              {"record_every", c.record_every},
              {"x0", c.x0},
              {"regime0", c.regime0},
              {"out", c.out},
              {"lyapunov", lyap},
              {"scan", scan},
              {"hitting",
               {{"target",
                 {{"shape", c.target.shape},
                  {"lo", c.target.lo},
                  {"hi", c.target.hi},
                  {"center", c.target.center},
                  {"radius", c.target.radius},
                  {"regimes", c.target.regimes},
                  {"whole_segment", c.target.whole_segment}}},
                {"t_max", c.t_max},
                {"bridge", c.bridge}}},
              {"tv",
               {{"x0_b", c.x0_b},
                {"regime0_b", c.regime0_b},
                {"t_end", c.t_end},
                {"n_times", c.n_times},
                {"cells", c.cells},
                {"regime_quantile", c.regime_quantile}}},
              {"elliptic", {{"domain", domain}, {"h", c.h}, {"K", c.K}, {"tol", c.tol}, {"m_max", c.m_max}}},
              {"recurrence",
               {{"D1", {c.d1.first, c.d1.second}},
                {"ks", c.ks},
                {"probes", c.probes},
                {"probe_regimes", c.probe_regimes},
                {"tol", c.tol_rec}}}};
    if (!c.task.empty()) j["task"] = c.task;
    return j;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return config_to_json(a) == config_to_json(b); }

void validate(const ExperimentConfig& c) {
    if (c.task.empty()) throw ConfigError("task", "missing");
    canonical_task(c.task);
    if (!(c.dt > 0.0)) throw ConfigError("dt", "must be positive");
    if (!(c.T > 0.0)) throw ConfigError("T", "must be positive");
    if (c.n_paths == 0) throw ConfigError("n_paths", "must be at least 1");
    if (c.threads == 0) throw ConfigError("threads", "must be at least 1");
    if (c.record_every == 0) throw ConfigError("record_every", "must be at least 1");
    if (!(c.h_cap > 0.0)) throw ConfigError("h_cap", "must be positive");
    if (c.regime0 < 1) throw ConfigError("regime0", "regimes start at 1");
    if (c.out.empty()) throw ConfigError("out", "must name a directory");
    try {
        parse_jump_mode(c.mode);
    } catch (const Error& e) {
        throw ConfigError("mode", e.what());
    }
    const std::string& t = c.task;
    if (t == "lyapunov-scan" || t == "dynkin") {
        const auto& k = c.lyapunov.kind;
        if (k != "example1" && k != "example4" && k != "expr")
            throw ConfigError("lyapunov.kind", "expected example1, example4 or expr");
    }
    if (t == "lyapunov-scan") {
        try {
            parse_drift_kind(c.condition);
        } catch (const Error& e) {
            throw ConfigError("scan.condition", e.what());
        }
        if (c.sampler.regime_max < 1) throw ConfigError("scan.sampler.regime_max", "must be at least 1");
        if (c.sampler.intervals == 0) throw ConfigError("scan.sampler.intervals", "must be at least 1");
        if (c.sampler.n_constant + c.sampler.n_rough == 0) throw ConfigError("scan.sampler", "no sample points");
    }
    if (t == "hitting") {
        const auto& s = c.target.shape;
        if (s != "box" && s != "ball" && s != "exit-box")
            throw ConfigError("hitting.target.shape", "expected box, ball or exit-box");
        if (s != "ball" && c.target.lo.size() != c.target.hi.size())
            throw ConfigError("hitting.target.hi", "lo and hi differ in length");
        if (s == "ball" && !(c.target.radius > 0.0)) throw ConfigError("hitting.target.radius", "must be positive");
        if (!(c.t_max > 0.0)) throw ConfigError("hitting.t_max", "must be positive");
        for (std::size_t k = 0; k < c.target.regimes.size(); ++k) {
            try {
                RegimePattern::parse(c.target.regimes[k]);
            } catch (const Error& e) {
                throw ConfigError("hitting.target.regimes[" + std::to_string(k) + "]", e.what());
            }
        }
    }
    if (t == "tv-decay") {
        if (c.regime0_b < 1) throw ConfigError("tv.regime0_b", "regimes start at 1");
        if (!(c.t_end > 0.0)) throw ConfigError("tv.t_end", "must be positive");
        if (c.n_times < 2) throw ConfigError("tv.n_times", "need at least two times");
        if (c.cells == 0) throw ConfigError("tv.cells", "must be at least 1");
    }
    if (t == "exit-time" || t == "recurrence") {
        if (!(c.h > 0.0)) throw ConfigError("elliptic.h", "must be positive");
        if (c.K < 1) throw ConfigError("elliptic.K", "must be at least 1");
        if (!(c.tol > 0.0)) throw ConfigError("elliptic.tol", "must be positive");
        if (c.m_max == 0) throw ConfigError("elliptic.m_max", "must be at least 1");
    }
    if (t == "exit-time") {
        if (c.domain.empty()) throw ConfigError("elliptic.domain", "empty");
        for (std::size_t k = 0; k < c.domain.size(); ++k)
            if (!(c.domain[k].first < c.domain[k].second))
                throw ConfigError("elliptic.domain[" + std::to_string(k) + "]", "needs lo < hi");
    }
    if (t == "recurrence") {
        if (!(c.d1.first < c.d1.second)) throw ConfigError("recurrence.D1", "needs lo < hi");
        if (c.ks.empty()) throw ConfigError("recurrence.ks", "empty");
        for (std::size_t k = 0; k < c.ks.size(); ++k) {
            if (!(c.ks[k] > std::max(std::abs(c.d1.first), std::abs(c.d1.second))))
                throw ConfigError("recurrence.ks[" + std::to_string(k) + "]", "must lie beyond D1");
            if (k > 0 && !(c.ks[k] > c.ks[k - 1]))
                throw ConfigError("recurrence.ks[" + std::to_string(k) + "]", "must increase");
        }
        if (c.probes.empty()) throw ConfigError("recurrence.probes", "empty");
        for (std::size_t k = 0; k < c.probes.size(); ++k)
            if (c.probes[k] >= c.d1.first && c.probes[k] <= c.d1.second)
                throw ConfigError("recurrence.probes[" + std::to_string(k) + "]", "must lie outside D1");
        for (std::size_t k = 0; k < c.probe_regimes.size(); ++k)
            if (c.probe_regimes[k] < 1 || c.probe_regimes[k] > c.K)
                throw ConfigError("recurrence.probe_regimes[" + std::to_string(k) + "]", "outside 1..K");
        if (!(c.tol_rec > 0.0)) throw ConfigError("recurrence.tol", "must be positive");
    }
}

std::string config_hash(const ExperimentConfig& c) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : config_to_json(c).dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void apply_overrides(ExperimentConfig& c, const Overrides& o) {
    if (o.seed) c.seed = *o.seed;
    if (o.dt) c.dt = *o.dt;
    if (o.threads) c.threads = *o.threads;
    if (o.out) c.out = *o.out;
}

namespace {

RegimeSwitchingModel load_model(const ModelRef& ref) {
    if (!ref.builtin.empty()) {
        try {
            return builtin_model(ref.builtin, ref.params);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError("model", e.what());
        }
    }
    if (ref.inline_model) return model_from_json(*ref.inline_model);
    json j;
    try {
        j = json::parse(read_file(ref.file));
    } catch (const json::parse_error& e) {
        throw ConfigError("model.file", std::string("invalid JSON: ") + e.what());
    }
    return model_from_json(j);
}

CylindricalLyapunov build_lyapunov(const ExperimentConfig& c, const RegimeSwitchingModel& model) {
    const auto& l = c.lyapunov;
    if (l.kind == "example4") return example4_lyapunov(model.delay(), l.weight);
    if (l.kind == "expr") {
        try {
            return CylindricalLyapunov::from_expressions(
                l.f1, l.f2.empty() ? std::nullopt : std::optional<std::string>(l.f2), l.g);
        } catch (const Error& e) {
            throw ConfigError("lyapunov", e.what());
        }
    }
    double kappa = 0.0;
    if (l.kappa) {
        kappa = *l.kappa;
    } else {
        const bool ex1 = c.model.builtin == "ex1" || c.model.builtin == "ex2";
        if (!ex1 || !c.model.params.b || !c.model.params.sigma)
            throw ConfigError("lyapunov.kappa", "required unless the model is builtin ex1/ex2");
        kappa = example1_kappa(FunctionalExpr::parse(*c.model.params.b, ExprKind::Point),
                               FunctionalExpr::parse(*c.model.params.sigma, ExprKind::Point),
                               std::max(c.sampler.regime_max, c.regime0));
    }
    return example1_lyapunov(kappa);
}

InitialCondition initial(const ExperimentConfig& c, const RegimeSwitchingModel& model, const std::vector<double>& x0,
                         int regime, const std::string& field) {
    if (x0.size() != model.dim())
        throw ConfigError(field, "has " + std::to_string(x0.size()) + " components, model dimension is " +
                                     std::to_string(model.dim()));
    try {
        return constant_initial(model, x0, regime, c.dt);
    } catch (const DomainError& e) {
        throw ConfigError("dt", e.what());
    }
}

SimOptions sim_options(const ExperimentConfig& c) {
    SimOptions o;
    o.mode = parse_jump_mode(c.mode);
    o.h_cap = c.h_cap;
    return o;
}

HitTarget build_target(const TargetSpec& t) {
    HitTarget target = t.shape == "ball"  ? HitTarget::ball(t.center, t.radius)
                       : t.shape == "box" ? HitTarget::box(t.lo, t.hi)
                                          : HitTarget::exit_box(t.lo, t.hi);
    target.regimes.clear();
    for (const auto& p : t.regimes) target.regimes.push_back(RegimePattern::parse(p));
    target.whole_segment = t.whole_segment;
    return target;
}

std::string target_summary(const TargetSpec& t) {
    json j = {{"shape", t.shape}, {"regimes", t.regimes}};
    if (t.shape == "ball")
        j["center"] = t.center, j["radius"] = t.radius;
    else
        j["lo"] = t.lo, j["hi"] = t.hi;
    return j.dump();
}

class ArtifactWriter {
public:
    ArtifactWriter(std::filesystem::path dir, std::vector<std::string>& names) : dir_(std::move(dir)), names_(names) {}
    void write(const std::string& name, const std::string& content) {
        write_atomic(dir_ / name, content);
        names_.push_back(name);
    }
    void write(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

private:
    std::filesystem::path dir_;
    std::vector<std::string>& names_;
};

void run_task(const ExperimentConfig& c, ArtifactWriter& w) {
    const auto model = load_model(c.model);
    const std::string& t = c.task;
    const SimOptions sim = sim_options(c);

    if (t == "simulate") {
        const auto init = initial(c, model, c.x0, c.regime0, "x0");
        const auto traj = simulate_path(model, init, c.T, c.seed, 0, sim, c.record_every);
        w.write("trajectory.csv", trajectory_csv(traj));
        w.write("jumps.csv", jumps_csv(traj));
        auto summary = batch_summary_json(1, traj.censored ? 1 : 0, c.seed, c.dt, sim.mode);
        if (traj.censored) summary["censor_reason"] = traj.censor_reason;
        w.write("summary.json", summary);
        return;
    }
    if (t == "lyapunov-scan") {
        const auto v = build_lyapunov(c, model);
        const auto rep = scan_drift_condition(v, model, c.sampler, parse_drift_kind(c.condition), c.constants, c.c2_cap);
        std::string csv = "phi0,phi_r,sup,i,v,lv,margin\n";
        for (const auto& p : rep.points)
            csv += fmt(p.phi0) + "," + fmt(p.phi_r) + "," + fmt(p.sup_norm) + "," + std::to_string(p.regime) + "," +
                   fmt(p.v) + "," + fmt(p.lv) + "," + fmt(p.margin) + "\n";
        w.write("scan_points.csv", csv);
        w.write("drift_report.json", drift_report_json(rep));
        return;
    }
    if (t == "dynkin") {
        const auto v = build_lyapunov(c, model);
        const auto init = initial(c, model, c.x0, c.regime0, "x0");
        const auto res = dynkin_residual(v, model, init, c.T, c.n_paths, c.seed, c.threads, sim);
        w.write("dynkin.csv", "residual,standard_error,deterministic,deterministic_se,n_paths,censored\n" +
                                  fmt(res.residual) + "," + fmt(res.standard_error) + "," + fmt(res.deterministic) +
                                  "," + fmt(res.deterministic_se) + "," + std::to_string(res.n_paths) + "," +
                                  std::to_string(res.censored) + "\n");
        w.write("summary.json", batch_summary_json(c.n_paths, res.censored, c.seed, c.dt, sim.mode));
        return;
    }
    if (t == "hitting") {
        const auto init = initial(c, model, c.x0, c.regime0, "x0");
        HitOptions ho;
        ho.sim = sim;
        ho.bridge_correction = c.bridge;
        HitTarget target;
        try {
            target = build_target(c.target);
        } catch (const Error& e) {
            throw ConfigError("hitting.target", e.what());
        }
        const auto results = first_hit_batch(model, init, target, c.t_max, c.seed, c.n_paths, c.threads, ho);
        const auto batch = HittingBatch::from_results(results, c.t_max, target_summary(c.target));
        const auto stats = hitting_stats(batch);
        w.write("hitting.csv", hitting_csv(batch));
        json s = {{"n_paths", stats.n_paths},
                  {"hit_fraction", stats.hit_fraction},
                  {"censor_fraction", stats.censor_fraction},
                  {"target", batch.target},
                  {"t_max", c.t_max}};
        if (stats.mean)
            s["mean_hitting_time"] = *stats.mean, s["standard_error"] = stats.standard_error,
            s["ci95"] = {stats.ci_lo, stats.ci_hi};
        else
            s["mean_hitting_time"] = nullptr, s["flag"] = "all paths censored";
        w.write("hitting_stats.json", s);
        w.write("summary.json",
                batch_summary_json(c.n_paths, stats.n_paths - stats.n_hit, c.seed, c.dt, sim.mode));
        return;
    }
    if (t == "tv-decay") {
        const auto init_a = initial(c, model, c.x0, c.regime0, "x0");
        const auto init_b = initial(c, model, c.x0_b, c.regime0_b, "tv.x0_b");
        std::vector<double> times;
        for (std::size_t k = 0; k < c.n_times; ++k)
            times.push_back(c.t_end * static_cast<double>(k) / static_cast<double>(c.n_times - 1));
        // The second run uses an independent stream family.
        const std::uint64_t seed_b = c.seed + 0x9E3779B97F4A7C15ull;
        const auto a = sample_marginals(model, init_a, times, c.seed, c.n_paths, c.threads, sim);
        const auto b = sample_marginals(model, init_b, times, seed_b, c.n_paths, c.threads, sim);
        const auto curve = tv_curve(a, b, c.cells, c.regime_quantile);
        const auto fit = fit_exponential_rate(curve);
        w.write("tv.csv", tv_curve_csv(curve));
        json f = {{"ok", fit.ok}, {"theta_hat", fit.theta_hat}, {"r_squared", fit.r_squared},
                  {"n_used", fit.n_used}, {"binning", curve.binning}, {"floor", curve.floor}};
        if (!fit.ok) f["reason"] = fit.reason;
        w.write("tv_fit.json", f);
        return;
    }
    FixedPointOptions fo;
    fo.tol = c.tol;
    fo.m_max = c.m_max;
    fo.threads = c.threads;
    if (t == "exit-time") {
        EllipticProblem p = problem_from_model(model, c.domain, c.h, c.K);
        p.rhs = [](double, int) { return -1.0; };
        const EllipticSystem sys(std::move(p));
        const auto res = solve_fixed_point(sys, fo);
        w.write("solution.csv", solution_csv(sys, res.u));
        w.write("trace.csv", trace_csv(res.trace));
        const auto base = sys.base_set();
        json info = {{"iterations", res.iterations},
                     {"h", sys.h()},
                     {"halvings", sys.halvings()},
                     {"base_set", {{"n0", base.n0}, {"eps0", base.eps0}, {"M_D", base.m_d}}}};
        if (res.trace.bound) info["contraction_bound"] = *res.trace.bound;
        w.write("exit_time.json", info);
        return;
    }
    if (t == "recurrence") {
        const EllipticProblem base = problem_from_model(model, {}, c.h, c.K);
        RecurrenceOptions ro;
        ro.probes = c.probes;
        ro.probe_regimes = c.probe_regimes;
        ro.tol = c.tol_rec;
        ro.solver = fo;
        ro.solver.with_bound = false;
        const auto rep = recurrence_indicator(base, c.d1, c.ks, ro);
        std::string csv = "k,deficit\n";
        for (std::size_t k = 0; k < rep.ks.size(); ++k) csv += fmt(rep.ks[k]) + "," + fmt(rep.deficits[k]) + "\n";
        w.write("recurrence.csv", csv);
        w.write("verdict.json", verdict_json(rep));
        return;
    }
    throw ConfigError("task", "unknown task '" + t + "'");
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& c) {
    RunOutcome out;
    const auto start = std::chrono::steady_clock::now();
    json manifest = {{"tool", "switchlab"}, {"version", kVersion}, {"task", c.task},
                     {"seed", c.seed},      {"threads", c.threads}, {"config_hash", config_hash(c)},
                     {"config", config_to_json(c)}};
    std::filesystem::path dir;
    try {
        validate(c);
        dir = c.out;
        std::filesystem::create_directories(dir);
    } catch (const ConfigError& e) {
        out.exit_code = 2;
        out.message = e.what();
        return out;
    } catch (const std::exception& e) {
        out.exit_code = 2;
        out.message = std::string("config: ") + e.what();
        return out;
    }
    ArtifactWriter writer(dir, out.artifacts);
    try {
        run_task(c, writer);
    } catch (const ConfigError& e) {
        out.exit_code = 2;
        out.message = e.what();
    } catch (const ParseError& e) {
        out.exit_code = 2;
        out.message = e.what();
    } catch (const ModelError& e) {
        out.exit_code = 2;
        out.message = e.what();
    } catch (const DomainError& e) {
        out.exit_code = 2;
        out.message = e.what();
    } catch (const NumericError& e) {
        out.exit_code = 3;
        out.message = e.what();
    } catch (const std::exception& e) {
        out.exit_code = 1;
        out.message = e.what();
    }
    manifest["status"] = out.exit_code == 0 ? "ok" : "failed";
    manifest["exit_code"] = out.exit_code;
    if (!out.message.empty()) manifest["error"] = out.message;
    manifest["artifacts"] = out.artifacts;
    manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
        write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        if (out.exit_code == 0) out.exit_code = 1;
        out.message += std::string(out.message.empty() ? "" : "; ") + e.what();
    }
    return out;
}

}  // namespace switchlab
