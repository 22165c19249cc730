#ifndef TRISIM_ODE_HPP
#define TRISIM_ODE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "trisim/error.hpp"
#include "trisim/model.hpp"
#include "trisim/network.hpp"
#include "trisim/trajectory.hpp"

namespace trisim {

struct IntegratorConfig {
  double rtol = 1e-6;
  double atol = 1e-9;
  double initial_step = 1e-3;
  /// Defaults to the model's sample interval.
  std::optional<double> max_step;
  std::uint64_t max_steps = 10'000'000;
  /// When set, take steps of exactly this size with no error control.
  std::optional<double> fixed_step;
};

/// Deterministic right-hand side compiled from the model's reactions.
class OdeSystem {
 public:
  explicit OdeSystem(const ModelSpec& m) : net_(m) {}

  std::size_t size() const noexcept { return net_.n_species(); }

  void operator()(std::span<const double> y, std::span<double> dydt) const {
    std::fill(dydt.begin(), dydt.end(), 0.0);
    for (std::size_t c = 0; c < net_.n_channels(); ++c) {
      const double r = net_.rate(c, y);
      for (const auto& [s, d] : net_.channel(c).delta) dydt[s] += d * r;
    }
  }

 private:
  CompiledNetwork net_;
};

namespace detail {

// Dormand-Prince 5(4) tableau and dense-output weights.
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                          d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                          d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};

class DopriStepper {
 public:
  explicit DopriStepper(const OdeSystem& f)
      : f_(f), n_(f.size()), k1_(n_), k2_(n_), k3_(n_), k4_(n_), k5_(n_), k6_(n_), k7_(n_), tmp_(n_),
        y1_(n_), err_(n_), r1_(n_), r2_(n_), r3_(n_), r4_(n_), r5_(n_) {}

  void init(std::span<const double> y0, double t) {
    f_(y0, k1_);
    check_finite(k1_, t);
  }

  /// One trial step of size h from (t, y). Returns the scaled error norm
  /// (max over components) and leaves the candidate in y1().
  double attempt(std::span<const double> y, double t, double h, double rtol, double atol) {
    using D = Dopri5;
    stage(y, h, {D::a21}, {&k1_}, k2_);
    stage(y, h, {D::a31, D::a32}, {&k1_, &k2_}, k3_);
    stage(y, h, {D::a41, D::a42, D::a43}, {&k1_, &k2_, &k3_}, k4_);
    stage(y, h, {D::a51, D::a52, D::a53, D::a54}, {&k1_, &k2_, &k3_, &k4_}, k5_);
    stage(y, h, {D::a61, D::a62, D::a63, D::a64, D::a65}, {&k1_, &k2_, &k3_, &k4_, &k5_}, k6_);
    for (std::size_t i = 0; i < n_; ++i)
      y1_[i] = y[i] + h * (D::a71 * k1_[i] + D::a73 * k3_[i] + D::a74 * k4_[i] + D::a75 * k5_[i] + D::a76 * k6_[i]);
    f_(y1_, k7_);
    check_finite(k7_, t + h);
    double norm = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      err_[i] = h * (D::e1 * k1_[i] + D::e3 * k3_[i] + D::e4 * k4_[i] + D::e5 * k5_[i] + D::e6 * k6_[i] +
                     D::e7 * k7_[i]);
      const double scale = atol + rtol * std::max(std::abs(y[i]), std::abs(y1_[i]));
      norm = std::max(norm, std::abs(err_[i]) / scale);
    }
    if (!std::isfinite(norm)) norm = std::numeric_limits<double>::infinity();
    return norm;
  }

  /// Prepares dense output for the accepted step and rolls FSAL.
  void accept(std::span<const double> y, double h) {
    using D = Dopri5;
    for (std::size_t i = 0; i < n_; ++i) {
      const double diff = y1_[i] - y[i];
      const double bspl = h * k1_[i] - diff;
      r1_[i] = y[i];
      r2_[i] = diff;
      r3_[i] = bspl;
      r4_[i] = diff - h * k7_[i] - bspl;
      r5_[i] = h * (D::d1 * k1_[i] + D::d3 * k3_[i] + D::d4 * k4_[i] + D::d5 * k5_[i] + D::d6 * k6_[i] +
                    D::d7 * k7_[i]);
    }
    std::swap(k1_, k7_);
  }

  /// Fourth-order continuous extension at theta in [0, 1] of the last accepted step.
  double dense(std::size_t i, double theta) const {
    const double theta1 = 1.0 - theta;
    return r1_[i] + theta * (r2_[i] + theta1 * (r3_[i] + theta * (r4_[i] + theta1 * r5_[i])));
  }

  const std::vector<double>& y1() const noexcept { return y1_; }

 private:
  template <std::size_t N>
  void stage(std::span<const double> y, double h, const double (&a)[N], const std::vector<double>* const (&k)[N],
             std::vector<double>& out) {
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < N; ++j) acc += a[j] * (*k[j])[i];
      tmp_[i] = y[i] + h * acc;
    }
    f_(tmp_, out);
  }

  static void check_finite(const std::vector<double>& v, double t) {
    for (double x : v)
      if (!std::isfinite(x)) throw SimulationError("non-finite derivative", t);
  }

  const OdeSystem& f_;
  std::size_t n_;
  std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, y1_, err_;
  std::vector<double> r1_, r2_, r3_, r4_, r5_;
};

}  // namespace detail

/// Integrates the model's deterministic system from its initial state over
/// [0, horizon] and samples it on the model's grid.
inline Trajectory integrate(const ModelSpec& m, const IntegratorConfig& config = {}) {
  const double interval = m.sample_interval;
  const double max_step = config.max_step.value_or(interval);
  if (!(config.rtol >= 1e-14) || !(config.atol > 0.0) || !(config.initial_step > 0.0) || !(max_step > 0.0) ||
      config.max_steps < 1)
    throw ValidationError("integrator tolerances and step sizes must be positive (rtol >= 1e-14)");
  if (config.fixed_step && !(*config.fixed_step > 0.0)) throw ValidationError("fixed step must be positive");

  const OdeSystem f(m);
  const std::size_t n = f.size();
  const std::size_t n_samples = grid_points(m.horizon, interval);
  const double t_end = static_cast<double>(n_samples - 1) * interval;

  Trajectory traj(m.species_names(), interval);
  std::vector<double> y = m.initial_state();
  std::vector<double> row(n);
  traj.append(0.0, y);
  std::size_t next = 1;
  if (n_samples == 1) return traj;

  detail::DopriStepper stepper(f);
  stepper.init(y, 0.0);

  double t = 0.0;
  double h = config.fixed_step.value_or(std::min(config.initial_step, max_step));
  double err_old = 1e-4;
  constexpr double beta = 0.04, safe = 0.9;
  const double expo1 = 0.2 - beta * 0.75;
  std::uint64_t steps = 0;

  while (next < n_samples) {
    if (++steps > config.max_steps) throw SimulationError("maximum number of integrator steps exceeded", t);
    bool last = false;
    if (t + h * (1.0 + 1e-9) >= t_end) {
      h = t_end - t;
      last = true;
    }
    if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)))
      throw SimulationError("step size underflow (problem may be stiff)", t);

    const double err = stepper.attempt(y, t, h, config.rtol, config.atol);
    bool negative = false;
    for (double v : stepper.y1())
      if (v < -config.atol) negative = true;

    if (!config.fixed_step) {
      if (negative) {
        h *= 0.5;
        continue;
      }
      if (err > 1.0) {
        const double fac11 = std::pow(err, expo1);
        h /= std::min(5.0, fac11 / safe);
        continue;
      }
    }

    stepper.accept(y, h);
    const double t_new = last ? t_end : t + h;
    while (next < n_samples) {
      const double ts = static_cast<double>(next) * interval;
      if (ts > t_new && !(last && next == n_samples - 1)) break;
      const double theta = h > 0.0 ? std::clamp((ts - t) / h, 0.0, 1.0) : 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double v = next == n_samples - 1 && last ? stepper.y1()[i] : stepper.dense(i, theta);
        if (v < 0.0 && v > -config.atol) v = 0.0;
        row[i] = v;
      }
      traj.append(ts, row);
      ++next;
    }
    y = stepper.y1();
    t = t_new;

    if (config.fixed_step) {
      h = *config.fixed_step;
    } else {
      const double fac11 = std::pow(std::max(err, 1e-300), expo1);
      double fac = fac11 / std::pow(err_old, beta);
      fac = std::clamp(fac / safe, 0.1, 5.0);
      h = std::min(h / fac, max_step);
      err_old = std::max(err, 1e-4);
    }
  }
  return traj;
}

}  // namespace trisim

#endif  // TRISIM_ODE_HPP
