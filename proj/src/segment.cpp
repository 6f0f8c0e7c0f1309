#include "switchlab/segment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "switchlab/error.hpp"

namespace switchlab {

namespace {

double euclid(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

SegmentPath::SegmentPath(std::size_t dim, double delay, std::size_t intervals)
    : dim_(dim), intervals_(intervals), delay_(delay) {
    if (dim == 0) throw DomainError("segment dimension must be positive");
    if (!(delay > 0.0) || !std::isfinite(delay)) throw DomainError("segment delay must be positive");
    if (intervals == 0) throw DomainError("segment needs at least one interval");
    step_ = delay / static_cast<double>(intervals);
    ring_.assign(node_count() * dim_, 0.0);
    norms_.assign(node_count(), 0.0);
    rebuild_caches();
}

SegmentPath SegmentPath::constant(std::span<const double> value, double delay, std::size_t intervals) {
    SegmentPath seg(value.size(), delay, intervals);
    for (std::size_t k = 0; k < seg.node_count(); ++k)
        std::copy(value.begin(), value.end(), seg.ring_.begin() + static_cast<std::ptrdiff_t>(k * seg.dim_));
    seg.rebuild_caches();
    return seg;
}

SegmentPath SegmentPath::constant(double value, double delay, std::size_t intervals) {
    const double v[1] = {value};
    return constant(std::span<const double>(v, 1), delay, intervals);
}

SegmentPath SegmentPath::from_nodes(const std::vector<std::vector<double>>& values, double delay) {
    if (values.size() < 2) throw DomainError("segment needs at least two nodes");
    SegmentPath seg(values.front().size(), delay, values.size() - 1);
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (values[k].size() != seg.dim_)
            throw DomainError("segment node " + std::to_string(k) + " has wrong dimension");
        std::copy(values[k].begin(), values[k].end(), seg.ring_.begin() + static_cast<std::ptrdiff_t>(k * seg.dim_));
    }
    seg.rebuild_caches();
    return seg;
}

SegmentPath SegmentPath::from_function(std::size_t dim, double delay, std::size_t intervals,
                                       const std::function<std::vector<double>(double)>& fn) {
    SegmentPath seg(dim, delay, intervals);
    for (std::size_t k = 0; k < seg.node_count(); ++k) {
        const auto v = fn(seg.node_time(k));
        if (v.size() != dim) throw DomainError("segment function returned wrong dimension");
        std::copy(v.begin(), v.end(), seg.ring_.begin() + static_cast<std::ptrdiff_t>(k * dim));
    }
    seg.rebuild_caches();
    return seg;
}

std::span<const double> SegmentPath::node(std::size_t k) const noexcept {
    const std::size_t slot = (head_ + k) % node_count();
    return {ring_.data() + slot * dim_, dim_};
}

double SegmentPath::node_norm(std::size_t k) const noexcept {
    return norms_[(head_ + k) % node_count()];
}

std::vector<double> SegmentPath::eval_at(double s) const {
    const double half = 0.5 * step_;
    if (!(s >= -delay_ - half && s <= half))
        throw DomainError("segment time " + std::to_string(s) + " outside [-r, 0]");
    s = std::clamp(s, -delay_, 0.0);
    const double u = (s + delay_) / step_;
    const double nearest = std::round(u);
    if (std::abs(u - nearest) <= 1e-9) {
        const auto v = node(static_cast<std::size_t>(nearest));
        return {v.begin(), v.end()};
    }
    const auto k = std::min(static_cast<std::size_t>(std::floor(u)), intervals_ - 1);
    const double w = u - static_cast<double>(k);
    const auto a = node(k);
    const auto b = node(k + 1);
    std::vector<double> out(dim_);
    for (std::size_t d = 0; d < dim_; ++d) out[d] = (1.0 - w) * a[d] + w * b[d];
    return out;
}

double SegmentPath::abs_integral() const noexcept {
    return step_ * (norm_sum_ - 0.5 * (node_norm(0) + node_norm(intervals_)));
}

double SegmentPath::weighted_integral(const std::function<double(std::span<const double>, int)>& f2,
                                      const std::function<double(double, int)>& g, int regime) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < node_count(); ++k) {
        const double w = (k == 0 || k == intervals_) ? 0.5 : 1.0;
        sum += w * g(node_time(k), regime) * f2(node(k), regime);
    }
    return step_ * sum;
}

void SegmentPath::push_norm(double norm) {
    while (!window_max_.empty() && window_max_.back().second <= norm) window_max_.pop_back();
    window_max_.emplace_back(pushed_, norm);
    ++pushed_;
    if (pushed_ <= node_count()) return;
    const std::uint64_t first_live = pushed_ - node_count();
    while (window_max_.front().first < first_live) window_max_.pop_front();
}

void SegmentPath::push(std::span<const double> value) {
    if (value.size() != dim_)
        throw DomainError("advance: value has dimension " + std::to_string(value.size()) +
                          ", segment has " + std::to_string(dim_));
    const std::size_t slot = head_;
    const double dropped = norms_[slot];
    std::copy(value.begin(), value.end(), ring_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
    const double norm = euclid(value);
    norms_[slot] = norm;
    head_ = (head_ + 1) % node_count();
    push_norm(norm);
    // Resum periodically so the running sum cannot drift.
    if (++pushes_since_resum_ >= node_count()) {
        norm_sum_ = 0.0;
        for (std::size_t k = 0; k < node_count(); ++k) norm_sum_ += node_norm(k);
        pushes_since_resum_ = 0;
    } else {
        norm_sum_ += norm - dropped;
    }
}

void SegmentPath::rebuild_caches() {
    head_ = head_ % node_count();
    window_max_.clear();
    pushed_ = 0;
    norm_sum_ = 0.0;
    pushes_since_resum_ = 0;
    // Re-linearize so logical node k sits in slot k.
    std::vector<double> linear(ring_.size());
    for (std::size_t k = 0; k < node_count(); ++k) {
        const auto v = node(k);
        std::copy(v.begin(), v.end(), linear.begin() + static_cast<std::ptrdiff_t>(k * dim_));
    }
    ring_ = std::move(linear);
    head_ = 0;
    for (std::size_t k = 0; k < node_count(); ++k) {
        const double n = euclid(node(k));
        norms_[k] = n;
        norm_sum_ += n;
        push_norm(n);
    }
}

std::vector<std::vector<double>> SegmentPath::nodes() const {
    std::vector<std::vector<double>> out;
    out.reserve(node_count());
    for (std::size_t k = 0; k < node_count(); ++k) {
        const auto v = node(k);
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

bool operator==(const SegmentPath& a, const SegmentPath& b) {
    if (a.dim_ != b.dim_ || a.intervals_ != b.intervals_ || a.delay_ != b.delay_) return false;
    for (std::size_t k = 0; k < a.node_count(); ++k) {
        const auto x = a.node(k);
        const auto y = b.node(k);
        if (!std::equal(x.begin(), x.end(), y.begin())) return false;
    }
    return true;
}

SegmentPath advance(SegmentPath seg, std::span<const double> value) {
    seg.push(value);
    return seg;
}

}  // namespace switchlab
