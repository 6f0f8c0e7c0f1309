#include "switchlab/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "switchlab/parallel.hpp"

namespace switchlab {

JumpMode parse_jump_mode(std::string_view text) {
    if (text == "euler-rate") return JumpMode::EulerRate;
    if (text == "thinning") return JumpMode::Thinning;
    throw DomainError("unknown jump mode '" + std::string(text) + "'");
}

std::string to_string(JumpMode mode) { return mode == JumpMode::EulerRate ? "euler-rate" : "thinning"; }

std::optional<int> sample_regime_jump(const RateRow& row, double z) {
    if (!(z >= 0.0)) return std::nullopt;
    double upper = 0.0;
    for (const auto& [j, q] : row.rates) {
        upper += q;
        if (z < upper) return j;
    }
    return std::nullopt;
}

Stepper::Stepper(const RegimeSwitchingModel& model, SimOptions options)
    : model_(model), options_(options), x_(model.dim()), b_(model.dim()),
      sigma_(model.dim() * model.noise_dim()), dw_(model.noise_dim()), diff_inc_(model.dim()) {}

void Stepper::step(HybridState& st, std::vector<JumpEvent>* log) {
    auto& seg = st.seg;
    const double dt = seg.step();
    const double norm = seg.sup_norm();
    if (!(norm <= options_.h_cap))
        throw ExplosionGuard("segment norm " + std::to_string(norm) + " exceeds explosion cap " +
                             std::to_string(options_.h_cap) + " at t=" + std::to_string(st.time));

    const int before = st.regime;
    model_.rate_row(seg, before, row_);
    const double t_end = static_cast<double>(st.steps + 1) * dt;

    int after = before;
    if (options_.mode == JumpMode::EulerRate) {
        if (row_.total > 0.0) {
            const double u = st.rng.uniform();
            if (u < -std::expm1(-row_.total * dt)) {
                const double z = st.rng.uniform() * row_.total;
                // z < total always; rounding in the cumulative sum can only push it to the last interval.
                after = sample_regime_jump(row_, z).value_or(row_.rates.back().first);
            }
        }
        if (after != before && log) log->push_back({t_end, before, after});
    } else {
        double clock = 0.0;
        const RateRow* current = &row_;
        for (;;) {
            const double bound = model_.rate_bound(seg, after, options_.bound_margin);
            if (bound < current->total)
                throw ModelError("rate bound " + std::to_string(bound) + " below q_" + std::to_string(after) +
                                 " = " + std::to_string(current->total));
            if (bound <= 0.0) break;
            clock += -std::log1p(-st.rng.uniform()) / bound;
            if (clock >= dt) break;
            const double z = st.rng.uniform() * bound;
            if (const auto j = sample_regime_jump(*current, z)) {
                if (log) log->push_back({t_end, after, *j});
                after = *j;
                model_.rate_row(seg, after, scratch_row_);
                current = &scratch_row_;
            }
        }
    }

    // Euler-Maruyama with the pre-jump regime.
    const auto x0 = seg.newest();
    std::copy(x0.begin(), x0.end(), x_.begin());
    model_.drift(x_, before, b_);
    model_.diffusion(x_, before, sigma_);
    const double sq = std::sqrt(dt);
    const std::size_t n = model_.dim();
    const std::size_t d = model_.noise_dim();
    for (auto& w : dw_) w = sq * st.normal(st.rng);
    for (std::size_t k = 0; k < n; ++k) {
        double inc = 0.0;
        for (std::size_t m = 0; m < d; ++m) inc += sigma_[k * d + m] * dw_[m];
        diff_inc_[k] = inc;
        x_[k] += b_[k] * dt + inc;
        if (!std::isfinite(x_[k]))
            throw ExplosionGuard("non-finite state at t=" + std::to_string(t_end));
    }
    seg.push(x_);
    st.regime = after;
    ++st.steps;
    st.time = t_end;
}

std::size_t segment_intervals(double delay, double dt) {
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    const double ratio = delay / dt;
    const auto m = static_cast<std::size_t>(std::llround(ratio));
    if (m == 0 || std::abs(static_cast<double>(m) * dt - delay) > 1e-9 * delay)
        throw DomainError("dt = " + std::to_string(dt) + " does not divide the delay r = " + std::to_string(delay));
    return m;
}

std::uint64_t step_count(double horizon, double dt) {
    if (!(horizon >= 0.0)) throw DomainError("horizon must be >= 0");
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    const auto n = static_cast<std::uint64_t>(std::llround(horizon / dt));
    if (std::abs(static_cast<double>(n) * dt - horizon) > 1e-9 * std::max(horizon, dt))
        throw DomainError("dt = " + std::to_string(dt) + " does not divide the horizon " + std::to_string(horizon));
    return n;
}

InitialCondition constant_initial(const RegimeSwitchingModel& model, std::span<const double> x0, int regime,
                                  double dt) {
    if (x0.size() != model.dim()) throw DomainError("initial point has wrong dimension");
    if (regime < 1) throw DomainError("initial regime must be >= 1");
    return {SegmentPath::constant(x0, model.delay(), segment_intervals(model.delay(), dt)), regime};
}

namespace {

void check_init(const RegimeSwitchingModel& model, const InitialCondition& init) {
    if (init.seg.dim() != model.dim()) throw DomainError("initial segment has wrong dimension");
    if (std::abs(init.seg.delay() - model.delay()) > 1e-12 * model.delay())
        throw DomainError("initial segment delay differs from the model delay");
    if (init.regime < 1) throw DomainError("initial regime must be >= 1");
}

void record(Trajectory& tr, const HybridState& st) {
    tr.times.push_back(st.time);
    const auto x = st.seg.newest();
    tr.x.insert(tr.x.end(), x.begin(), x.end());
    tr.regimes.push_back(st.regime);
}

}  // namespace

Trajectory simulate_path(const RegimeSwitchingModel& model, const InitialCondition& init, double horizon,
                         std::uint64_t seed, std::uint64_t path_index, SimOptions options,
                         std::uint64_t record_every) {
    check_init(model, init);
    const std::uint64_t n = step_count(horizon, init.seg.step());
    record_every = std::max<std::uint64_t>(1, record_every);
    Trajectory tr;
    tr.dim = model.dim();
    HybridState st(init.seg, init.regime, seed, path_index);
    Stepper stepper(model, options);
    record(tr, st);
    try {
        for (std::uint64_t k = 1; k <= n; ++k) {
            stepper.step(st, &tr.jumps);
            if (k % record_every == 0 || k == n) record(tr, st);
        }
    } catch (const ExplosionGuard& e) {
        tr.censored = true;
        tr.censor_reason = e.what();
        if (tr.times.back() != st.time) record(tr, st);
    }
    return tr;
}

HitTarget HitTarget::box(std::vector<double> lo, std::vector<double> hi) {
    HitTarget t;
    t.shape = Shape::Box;
    t.lo = std::move(lo);
    t.hi = std::move(hi);
    return t;
}

HitTarget HitTarget::ball(std::vector<double> center, double radius) {
    HitTarget t;
    t.shape = Shape::Ball;
    t.center = std::move(center);
    t.radius = radius;
    return t;
}

HitTarget HitTarget::exit_box(std::vector<double> lo, std::vector<double> hi) {
    HitTarget t = box(std::move(lo), std::move(hi));
    t.shape = Shape::BoxExterior;
    return t;
}

bool HitTarget::contains_point(std::span<const double> x) const {
    switch (shape) {
        case Shape::Box:
            for (std::size_t k = 0; k < x.size(); ++k)
                if (x[k] < lo[k] || x[k] > hi[k]) return false;
            return true;
        case Shape::BoxExterior:
            for (std::size_t k = 0; k < x.size(); ++k)
                if (x[k] <= lo[k] || x[k] >= hi[k]) return true;
            return false;
        case Shape::Ball: {
            double s = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - center[k]) * (x[k] - center[k]);
            return s <= radius * radius;
        }
    }
    return false;
}

bool HitTarget::contains_regime(int regime) const {
    return std::any_of(regimes.begin(), regimes.end(), [&](const RegimePattern& p) { return p.matches(regime); });
}

bool HitTarget::contains(const SegmentPath& seg, int regime) const {
    if (!contains_regime(regime)) return false;
    if (!whole_segment) return contains_point(seg.newest());
    for (std::size_t k = 0; k < seg.node_count(); ++k)
        if (!contains_point(seg.node(k))) return false;
    return true;
}

HitResult first_hit(const RegimeSwitchingModel& model, const InitialCondition& init, const HitTarget& target,
                    double t_max, std::uint64_t seed, std::uint64_t path_index, HitOptions options) {
    check_init(model, init);
    const std::size_t dim = model.dim();
    if ((target.shape == HitTarget::Shape::Ball ? target.center.size() : target.lo.size()) != dim)
        throw DomainError("target dimension differs from the model dimension");
    if (target.contains(init.seg, init.regime)) return {0.0, false};

    const std::uint64_t n = step_count(t_max, init.seg.step());
    HybridState st(init.seg, init.regime, seed, path_index);
    Stepper stepper(model, options.sim);
    const bool bridge = options.bridge_correction && target.shape == HitTarget::Shape::BoxExterior &&
                        !target.whole_segment;
    Philox bridge_rng(seed, path_index, 1);
    std::vector<double> prev(dim), cov(dim * dim);
    try {
        for (std::uint64_t k = 1; k <= n; ++k) {
            const int regime_before = st.regime;
            if (bridge) {
                const auto x = st.seg.newest();
                std::copy(x.begin(), x.end(), prev.begin());
                model.covariance(prev, regime_before, cov);
            }
            stepper.step(st);
            if (target.contains(st.seg, st.regime)) return {st.time, false};
            if (bridge && target.contains_regime(regime_before)) {
                const double dt = st.seg.step();
                const auto x = st.seg.newest();
                double survive = 1.0;
                for (std::size_t c = 0; c < dim; ++c) {
                    const double a = cov[c * dim + c];
                    if (a <= 0.0) continue;
                    const double lo = target.lo[c], hi = target.hi[c];
                    survive *= 1.0 - std::exp(-2.0 * (prev[c] - lo) * (x[c] - lo) / (a * dt));
                    survive *= 1.0 - std::exp(-2.0 * (hi - prev[c]) * (hi - x[c]) / (a * dt));
                }
                if (bridge_rng.uniform() >= survive) return {st.time, false};
            }
        }
    } catch (const ExplosionGuard&) {
    }
    return {t_max, true};
}

std::vector<HitResult> first_hit_batch(const RegimeSwitchingModel& model, const InitialCondition& init,
                                       const HitTarget& target, double t_max, std::uint64_t seed,
                                       std::size_t n_paths, unsigned threads, HitOptions options) {
    std::vector<HitResult> out(n_paths);
    parallel_for(n_paths, threads, [&](std::size_t p) {
        out[p] = first_hit(model, init, target, t_max, seed, p, options);
    });
    return out;
}

std::vector<MarginalSamples> sample_marginals(const RegimeSwitchingModel& model, const InitialCondition& init,
                                              const std::vector<double>& times, std::uint64_t seed,
                                              std::size_t n_paths, unsigned threads, SimOptions options) {
    check_init(model, init);
    const double dt = init.seg.step();
    std::vector<std::uint64_t> at;
    for (double t : times) at.push_back(step_count(t, dt));
    if (!std::is_sorted(at.begin(), at.end())) throw DomainError("sample times must be increasing");
    const std::size_t dim = model.dim();
    const std::size_t nt = times.size();

    // Per path: value at each time, or censored from some time on.
    std::vector<double> xs(n_paths * nt * dim);
    std::vector<int> regimes(n_paths * nt, 0);
    parallel_for(n_paths, threads, [&](std::size_t p) {
        HybridState st(init.seg, init.regime, seed, p);
        Stepper stepper(model, options);
        std::size_t next = 0;
        try {
            for (std::uint64_t k = 0; next < nt; ++k) {
                if (k > 0) stepper.step(st);
                while (next < nt && at[next] == k) {
                    const auto x = st.seg.newest();
                    std::copy(x.begin(), x.end(), xs.begin() + static_cast<std::ptrdiff_t>((p * nt + next) * dim));
                    regimes[p * nt + next] = st.regime;
                    ++next;
                }
            }
        } catch (const ExplosionGuard&) {
        }
    });

    std::vector<MarginalSamples> out(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        out[t].time = times[t];
        out[t].dim = dim;
        for (std::size_t p = 0; p < n_paths; ++p) {
            const int r = regimes[p * nt + t];
            if (r == 0) {
                ++out[t].censored;
                continue;
            }
            const auto* x = xs.data() + (p * nt + t) * dim;
            out[t].x.insert(out[t].x.end(), x, x + dim);
            out[t].regimes.push_back(r);
        }
    }
    return out;
}

}  // namespace switchlab
