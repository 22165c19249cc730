#ifndef TRISIM_SSA_HPP
#define TRISIM_SSA_HPP

// Exact stochastic simulation: Gillespie's direct method and the
// Gibson-Bruck next-reaction method. Both sample the state onto a uniform
// grid by zero-order hold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trisim/error.hpp"
#include "trisim/model.hpp"
#include "trisim/network.hpp"
#include "trisim/rng.hpp"
#include "trisim/trajectory.hpp"

namespace trisim {

enum class SsaMethod { direct, next_reaction };

struct SsaConfig {
  SsaMethod method = SsaMethod::next_reaction;
  /// Event budget between consecutive sample points; exceeding it is an error.
  std::uint64_t max_internal_steps = 1'000'000;
  /// Defaults to the model's sample interval / horizon when unset.
  std::optional<double> sample_interval;
  std::optional<double> horizon;
  std::uint64_t seed = 0;
  /// Verify the priority queue after every firing (next-reaction only; slow).
  bool debug_checks = false;
};

struct SsaEvent {
  double time;
  std::size_t channel;
};
using EventLog = std::vector<SsaEvent>;

/// Binary min-heap over a fixed set of indices with O(log n) key updates.
class IndexedMinQueue {
 public:
  IndexedMinQueue() = default;
  explicit IndexedMinQueue(const std::vector<double>& keys) {
    const std::size_t n = keys.size();
    heap_.resize(n);
    pos_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      heap_[i] = {keys[i], static_cast<std::uint32_t>(i)};
      pos_[i] = static_cast<std::uint32_t>(i);
    }
    for (std::size_t i = n / 2; i-- > 0;) sift_down(i);
  }

  std::size_t size() const noexcept { return heap_.size(); }
  std::size_t top() const { return heap_[0].item; }
  double top_key() const { return heap_[0].key; }
  double key(std::size_t item) const { return heap_[pos_[item]].key; }

  void update(std::size_t item, double key) {
    const std::size_t i = pos_[item];
    const double old = heap_[i].key;
    heap_[i].key = key;
    if (key < old) {
      sift_up(i);
    } else if (key > old) {
      sift_down(i);
    }
  }

  /// Heap order and index bookkeeping both hold.
  bool valid() const {
    for (std::size_t i = 0; i < heap_.size(); ++i) {
      if (pos_[heap_[i].item] != i) return false;
      if (i > 0 && heap_[(i - 1) / 2].key > heap_[i].key) return false;
    }
    return true;
  }

 private:
  struct Entry {
    double key;
    std::uint32_t item;
  };

  void sift_up(std::size_t i) {
    const Entry e = heap_[i];
    while (i > 0) {
      const std::size_t parent = (i - 1) / 2;
      if (!(e.key < heap_[parent].key)) break;
      heap_[i] = heap_[parent];
      pos_[heap_[i].item] = static_cast<std::uint32_t>(i);
      i = parent;
    }
    heap_[i] = e;
    pos_[e.item] = static_cast<std::uint32_t>(i);
  }
  void sift_down(std::size_t i) {
    const std::size_t n = heap_.size();
    const Entry e = heap_[i];
    for (;;) {
      std::size_t child = 2 * i + 1;
      if (child >= n) break;
      if (child + 1 < n && heap_[child + 1].key < heap_[child].key) ++child;
      if (!(heap_[child].key < e.key)) break;
      heap_[i] = heap_[child];
      pos_[heap_[i].item] = static_cast<std::uint32_t>(i);
      i = child;
    }
    heap_[i] = e;
    pos_[e.item] = static_cast<std::uint32_t>(i);
  }

  std::vector<Entry> heap_;
  std::vector<std::uint32_t> pos_;
};

namespace detail {

inline std::vector<double> integer_initial_state(const ModelSpec& m) {
  std::vector<double> x = m.initial_state();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != std::floor(x[i]))
      throw ValidationError("stochastic engines need integer initial counts; '" + m.species[i].name + "' = " +
                            detail::format_number(x[i]));
  return x;
}

// Zero-order-hold recorder onto the grid k * interval, k = 0 .. n-1.
class GridRecorder {
 public:
  GridRecorder(const ModelSpec& m, double interval, double horizon, std::uint64_t budget)
      : traj_(m.species_names(), interval), interval_(interval),
        n_(grid_points(horizon, interval)), budget_(budget) {}

  bool done() const noexcept { return next_ >= n_; }

  /// Records every grid point strictly before t with the current state.
  void advance_to(double t, std::span<const double> state) {
    while (next_ < n_ && static_cast<double>(next_) * interval_ < t) {
      traj_.append(static_cast<double>(next_) * interval_, state);
      ++next_;
      steps_ = 0;
    }
  }

  void count_step(double t) {
    if (++steps_ > budget_)
      throw SimulationError("step budget of " + std::to_string(budget_) + " events per sample interval exhausted", t);
  }

  Trajectory finish(std::span<const double> state) {
    advance_to(std::numeric_limits<double>::infinity(), state);
    return std::move(traj_);
  }

 private:
  Trajectory traj_;
  double interval_;
  std::size_t n_;
  std::size_t next_ = 0;
  std::uint64_t budget_;
  std::uint64_t steps_ = 0;
};

inline void check_config(const SsaConfig& c, double interval, double horizon) {
  if (c.max_internal_steps < 1) throw ValidationError("max_internal_steps must be at least 1");
  if (!(interval > 0.0)) throw ValidationError("sample interval must be positive");
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
}

}  // namespace detail

inline Trajectory simulate_direct(const ModelSpec& m, const SsaConfig& config, EventLog* log = nullptr) {
  const double interval = config.sample_interval.value_or(m.sample_interval);
  const double horizon = config.horizon.value_or(m.horizon);
  detail::check_config(config, interval, horizon);
  const CompiledNetwork net(m);
  const auto& deps = net.graph().dependents;
  const std::size_t nc = net.n_channels();
  Rng rng(config.seed);
  std::vector<double> x = detail::integer_initial_state(m);
  std::vector<double> a(nc);
  for (std::size_t i = 0; i < nc; ++i) a[i] = net.propensity(i, x);

  detail::GridRecorder rec(m, interval, horizon, config.max_internal_steps);
  double t = 0.0;
  while (!rec.done()) {
    double a0 = 0.0;
    for (double ai : a) a0 += ai;
    if (!(a0 > 0.0)) break;
    const double t_next = t + rng.exponential() / a0;
    rec.advance_to(t_next, x);
    if (rec.done()) break;

    const double target = rng.uniform() * a0;
    std::size_t j = 0;
    double acc = a[0];
    while (acc <= target && j + 1 < nc) acc += a[++j];
    while (a[j] == 0.0 && j > 0) --j;  // rounding at the top end

    net.fire(j, x);
    t = t_next;
    if (log) log->push_back({t, j});
    for (std::size_t k : deps[j]) a[k] = net.propensity(k, x);
    rec.count_step(t);
  }
  return rec.finish(x);
}

inline Trajectory simulate_next_reaction(const ModelSpec& m, const SsaConfig& config, EventLog* log = nullptr) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double interval = config.sample_interval.value_or(m.sample_interval);
  const double horizon = config.horizon.value_or(m.horizon);
  detail::check_config(config, interval, horizon);
  const CompiledNetwork net(m);
  const auto& deps = net.graph().dependents;
  const std::size_t nc = net.n_channels();
  Rng rng(config.seed);
  std::vector<double> x = detail::integer_initial_state(m);
  std::vector<double> a(nc);
  std::vector<double> tau(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    a[i] = net.propensity(i, x);
    tau[i] = a[i] > 0.0 ? rng.exponential() / a[i] : inf;
  }
  IndexedMinQueue queue(tau);

  // Dependents other than the channel itself, flattened.
  std::vector<std::size_t> dep_start(nc + 1, 0), dep_list;
  std::vector<char> self_dep(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    for (std::size_t j : deps[i])
      if (j != i) dep_list.push_back(j);
    dep_start[i + 1] = dep_list.size();
    self_dep[i] = net.self_dependent(i);
  }

  detail::GridRecorder rec(m, interval, horizon, config.max_internal_steps);
  double t = 0.0;
  while (!rec.done() && nc > 0) {
    const std::size_t i = queue.top();
    const double t_next = queue.top_key();
    if (t_next == inf) break;
    rec.advance_to(t_next, x);
    if (rec.done()) break;

    net.fire(i, x);
    t = t_next;
    if (log) log->push_back({t, i});
    if (self_dep[i]) a[i] = net.propensity(i, x);
    queue.update(i, a[i] > 0.0 ? t + rng.exponential() / a[i] : inf);
    for (std::size_t k = dep_start[i]; k < dep_start[i + 1]; ++k) {
      const std::size_t j = dep_list[k];
      const double a_old = a[j];
      const double a_new = net.propensity(j, x);
      a[j] = a_new;
      double next = inf;
      if (a_new > 0.0) next = a_old > 0.0 ? t + (a_old / a_new) * (queue.key(j) - t) : t + rng.exponential() / a_new;
      queue.update(j, next);
    }
    if (config.debug_checks) {
      if (!queue.valid()) throw SimulationError("priority queue corrupted", t);
      double true_min = inf;
      for (std::size_t j = 0; j < nc; ++j) true_min = std::min(true_min, queue.key(j));
      if (queue.top_key() != true_min) throw SimulationError("queue minimum is not the earliest firing time", t);
    }
    rec.count_step(t);
  }
  return rec.finish(x);
}

inline Trajectory simulate_ssa(const ModelSpec& m, const SsaConfig& config, EventLog* log = nullptr) {
  return config.method == SsaMethod::direct ? simulate_direct(m, config, log)
                                            : simulate_next_reaction(m, config, log);
}

}  // namespace trisim

#endif  // TRISIM_SSA_HPP
