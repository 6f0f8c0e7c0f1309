#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace switchlab {

/// Trailing path window phi: [-r, 0] -> R^n sampled on a uniform grid of m intervals.
///
/// Node k holds phi(-r + k*step()). Storage is a ring buffer, so push() is O(1)
/// amortized; sup_norm() and abs_integral() are maintained incrementally because
/// rate kernels read them on every simulation step.
class SegmentPath {
public:
    SegmentPath() = default;

    /// Zero segment. `intervals` is m >= 1, so the grid step is delay / m.
    SegmentPath(std::size_t dim, double delay, std::size_t intervals);

    static SegmentPath constant(std::span<const double> value, double delay, std::size_t intervals);
    static SegmentPath constant(double value, double delay, std::size_t intervals);

    /// Build from explicit nodes; values[k] is phi(-r + k*delay/(values.size()-1)).
    static SegmentPath from_nodes(const std::vector<std::vector<double>>& values, double delay);

    /// Sample `fn(t)` at every node t in [-r, 0].
    static SegmentPath from_function(std::size_t dim, double delay, std::size_t intervals,
                                     const std::function<std::vector<double>(double)>& fn);

    std::size_t dim() const noexcept { return dim_; }
    double delay() const noexcept { return delay_; }
    double step() const noexcept { return step_; }
    std::size_t intervals() const noexcept { return intervals_; }
    std::size_t node_count() const noexcept { return intervals_ + 1; }

    double node_time(std::size_t k) const noexcept {
        return -delay_ + static_cast<double>(k) * step_;
    }
    std::span<const double> node(std::size_t k) const noexcept;
    /// phi(0)
    std::span<const double> newest() const noexcept { return node(intervals_); }
    /// phi(-r)
    std::span<const double> oldest() const noexcept { return node(0); }
    /// Euclidean norm |phi(t_k)|.
    double node_norm(std::size_t k) const noexcept;

    /// Piecewise-linear reconstruction. Throws DomainError outside [-r - h/2, h/2].
    std::vector<double> eval_at(double s) const;

    /// Max over nodes of |phi(t_k)|.
    double sup_norm() const noexcept { return window_max_.front().second; }

    /// Trapezoidal integral of |phi(s)| over [-r, 0].
    double abs_integral() const noexcept;

    /// Trapezoidal integral of g(t, i) * f2(phi(t), i) over [-r, 0].
    double weighted_integral(const std::function<double(std::span<const double>, int)>& f2,
                             const std::function<double(double, int)>& g, int regime) const;

    /// Slide the window one step: drop node 0, append `value` as the new phi(0).
    void push(std::span<const double> value);

    std::vector<std::vector<double>> nodes() const;

    friend bool operator==(const SegmentPath& a, const SegmentPath& b);

private:
    void rebuild_caches();
    void push_norm(double norm);

    std::size_t dim_ = 0;
    std::size_t intervals_ = 0;
    double delay_ = 0.0;
    double step_ = 0.0;
    std::vector<double> ring_;     // (m+1) * dim values
    std::vector<double> norms_;    // (m+1) node norms, same ring layout
    std::size_t head_ = 0;         // ring slot of logical node 0
    std::uint64_t pushed_ = 0;     // sequence number of the next pushed node
    std::deque<std::pair<std::uint64_t, double>> window_max_;
    double norm_sum_ = 0.0;
    std::size_t pushes_since_resum_ = 0;
};

/// Value-semantics form of SegmentPath::push.
SegmentPath advance(SegmentPath seg, std::span<const double> value);

}  // namespace switchlab
