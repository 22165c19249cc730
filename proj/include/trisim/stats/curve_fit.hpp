#ifndef TRISIM_STATS_CURVE_FIT_HPP
#define TRISIM_STATS_CURVE_FIT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "trisim/error.hpp"
#include "trisim/stats/extrema.hpp"

namespace trisim {

/// Curve families for extrema sequences:
///   reciprocal5     5 / (a (t + b))
///   parab_up        c + a (t - b)^2
///   parab_down      c - a (t - b)^2
///   parab_anchored  c0 + a (t - b)^2, c0 fixed
///   parab_zero      a (t - b)^2
class CurveFamily {
 public:
  enum class Kind { reciprocal5, parab_up, parab_down, parab_anchored, parab_zero };

  static CurveFamily reciprocal5() { return CurveFamily(Kind::reciprocal5); }
  static CurveFamily parab_up() { return CurveFamily(Kind::parab_up); }
  static CurveFamily parab_down() { return CurveFamily(Kind::parab_down); }
  static CurveFamily parab_anchored(double c0) { return CurveFamily(Kind::parab_anchored, c0); }
  static CurveFamily parab_zero() { return CurveFamily(Kind::parab_zero); }

  /// "reciprocal5", "parab_up", "parab_down", "parab_zero", "parab_anchored:<c0>".
  static CurveFamily parse(std::string_view s) {
    if (s == "reciprocal5") return reciprocal5();
    if (s == "parab_up") return parab_up();
    if (s == "parab_down") return parab_down();
    if (s == "parab_zero") return parab_zero();
    constexpr std::string_view anchored = "parab_anchored:";
    if (s.substr(0, anchored.size()) == anchored) {
      const std::string num(s.substr(anchored.size()));
      std::size_t used = 0;
      double c0 = 0.0;
      try {
        c0 = std::stod(num, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != num.size()) throw ValidationError("bad anchor in curve family '" + std::string(s) + "'");
      return parab_anchored(c0);
    }
    throw ValidationError("unknown curve family '" + std::string(s) + "'");
  }

  Kind kind() const noexcept { return kind_; }
  double anchor() const noexcept { return c0_; }

  std::string name() const {
    switch (kind_) {
      case Kind::reciprocal5: return "reciprocal5";
      case Kind::parab_up: return "parab_up";
      case Kind::parab_down: return "parab_down";
      case Kind::parab_anchored: return "parab_anchored:" + detail::format_number(c0_);
      case Kind::parab_zero: return "parab_zero";
    }
    return {};
  }

  std::vector<std::string> param_names() const {
    if (kind_ == Kind::parab_up || kind_ == Kind::parab_down) return {"a", "b", "c"};
    return {"a", "b"};
  }
  std::size_t n_params() const { return param_names().size(); }

  double operator()(double t, const Eigen::VectorXd& p) const {
    switch (kind_) {
      case Kind::reciprocal5: return 5.0 / (p[0] * (t + p[1]));
      case Kind::parab_up: return p[2] + p[0] * (t - p[1]) * (t - p[1]);
      case Kind::parab_down: return p[2] - p[0] * (t - p[1]) * (t - p[1]);
      case Kind::parab_anchored: return c0_ + p[0] * (t - p[1]) * (t - p[1]);
      case Kind::parab_zero: return p[0] * (t - p[1]) * (t - p[1]);
    }
    return 0.0;
  }

 private:
  explicit CurveFamily(Kind k, double c0 = 0.0) : kind_(k), c0_(c0) {}
  Kind kind_;
  double c0_;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd values;
  double residual_ss = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
  Eigen::MatrixXd covariance;

  std::map<std::string, double> params() const {
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = values[static_cast<Eigen::Index>(i)];
    return out;
  }
  double param(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return values[static_cast<Eigen::Index>(i)];
    throw ValidationError("fit has no parameter '" + std::string(name) + "'");
  }
};

struct FitOptions {
  int max_iterations = 500;
  double lambda0 = 1e-3;
  double rel_ss_tol = 1e-10;
  double grad_tol = 1e-8;
  /// Record the residual sum of squares after every accepted step.
  std::vector<double>* ss_history = nullptr;
};

namespace detail {

struct Residuals {
  const CurveFamily& f;
  const std::vector<ExtremaPoint>& pts;

  Eigen::VectorXd operator()(const Eigen::VectorXd& p) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) r[static_cast<Eigen::Index>(i)] = f(pts[i].time, p) - pts[i].value;
    return r;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& p) const {
    Eigen::MatrixXd J(static_cast<Eigen::Index>(pts.size()), p.size());
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(p[j]));
      Eigen::VectorXd hi = p, lo = p;
      hi[j] += h;
      lo[j] -= h;
      J.col(j) = ((*this)(hi) - (*this)(lo)) / (2.0 * h);
    }
    return J;
  }
};

inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace detail

/// Levenberg-Marquardt least squares with Marquardt's diagonal scaling and
/// central-difference Jacobians.
inline FitResult fit_curve(const CurveFamily& family, const std::vector<ExtremaPoint>& points,
                           const std::map<std::string, double>& init, const FitOptions& opt = {}) {
  const auto names = family.param_names();
  const auto np = static_cast<Eigen::Index>(names.size());
  if (points.size() < names.size())
    throw ValidationError("need at least " + std::to_string(names.size()) + " points to fit " + family.name() +
                          ", got " + std::to_string(points.size()));
  Eigen::VectorXd p(np);
  for (Eigen::Index i = 0; i < np; ++i) {
    const auto it = init.find(names[static_cast<std::size_t>(i)]);
    if (it == init.end()) throw ValidationError("missing initial value for parameter '" + names[i] + "'");
    if (!std::isfinite(it->second)) throw ValidationError("initial value for '" + names[i] + "' is not finite");
    p[i] = it->second;
  }

  const detail::Residuals res{family, points};
  FitResult out;
  out.names = names;

  Eigen::VectorXd r = res(p);
  if (!r.allFinite()) {
    out.values = p;
    out.residual_ss = std::numeric_limits<double>::infinity();
    out.message = "model is not finite at the initial parameters";
    return out;
  }
  double ss = r.squaredNorm();
  double lambda = opt.lambda0;
  Eigen::MatrixXd J = res.jacobian(p);
  Eigen::MatrixXd A;

  for (out.iterations = 1; out.iterations <= opt.max_iterations; ++out.iterations) {
    A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (!detail::all_finite(A) || !g.allFinite()) {
      out.message = "non-finite Jacobian";
      break;
    }
    if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol || ss == 0.0) {
      out.converged = true;
      out.message = "gradient below tolerance";
      break;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> rank_check(A);
    rank_check.setThreshold(1e-12);
    if (rank_check.rank() < np) {
      out.message = "singular normal equations";
      break;
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd M = A;
      M.diagonal() += lambda * A.diagonal();
      const Eigen::VectorXd delta = M.ldlt().solve(-g);
      const Eigen::VectorXd trial = p + delta;
      const Eigen::VectorXd r_trial = res(trial);
      const double ss_trial = r_trial.allFinite() ? r_trial.squaredNorm() : std::numeric_limits<double>::infinity();
      if (delta.allFinite() && ss_trial < ss) {
        const double rel = (ss - ss_trial) / ss;
        p = trial;
        r = r_trial;
        ss = ss_trial;
        lambda = std::max(lambda / 10.0, 1e-300);
        accepted = true;
        if (opt.ss_history) opt.ss_history->push_back(ss);
        if (rel < opt.rel_ss_tol) {
          out.converged = true;
          out.message = "relative decrease below tolerance";
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) break;
      }
    }
    if (out.converged) break;
    if (!accepted) {
      out.converged = true;
      out.message = "no further decrease possible";
      break;
    }
    J = res.jacobian(p);
  }
  if (out.iterations > opt.max_iterations) {
    out.iterations = opt.max_iterations;
    out.message = "iteration limit reached";
  }

  out.values = p;
  out.residual_ss = ss;
  J = res.jacobian(p);
  A = J.transpose() * J;
  const auto dof = static_cast<double>(points.size()) - static_cast<double>(np);
  const double s2 = dof > 0 ? ss / dof : std::numeric_limits<double>::quiet_NaN();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-12);
  if (lu.isInvertible()) {
    out.covariance = s2 * lu.inverse();
  } else {
    out.covariance = Eigen::MatrixXd::Constant(np, np, std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

/// Starting values derived from the data: vertex at the extreme point for the
/// parabolas, a least-squares line through 5/y for reciprocal5.
inline std::map<std::string, double> default_init(const CurveFamily& family, const std::vector<ExtremaPoint>& pts) {
  if (pts.empty()) throw ValidationError("no points");
  using K = CurveFamily::Kind;
  const double t0 = pts.front().time, t1 = pts.back().time;
  const double span = std::max(t1 - t0, 1.0);
  if (family.kind() == K::reciprocal5) {
    // 5/y = a t + a b
    double st = 0, sy = 0, stt = 0, sty = 0;
    std::size_t n = 0;
    for (const auto& q : pts) {
      if (!(q.value > 0)) continue;
      const double z = 5.0 / q.value;
      st += q.time;
      sy += z;
      stt += q.time * q.time;
      sty += q.time * z;
      ++n;
    }
    const double den = static_cast<double>(n) * stt - st * st;
    if (n >= 2 && den != 0.0) {
      const double a = (static_cast<double>(n) * sty - st * sy) / den;
      const double ab = (sy - a * st) / static_cast<double>(n);
      if (a != 0.0) return {{"a", a}, {"b", ab / a}};
    }
    return {{"a", 0.01}, {"b", 10.0}};
  }
  const auto extreme = std::max_element(pts.begin(), pts.end(), [&](const auto& x, const auto& y) {
    return family.kind() == K::parab_down ? x.value < y.value : x.value > y.value;
  });
  const auto far = std::max_element(pts.begin(), pts.end(), [&](const auto& x, const auto& y) {
    return family.kind() == K::parab_down ? x.value > y.value : x.value < y.value;
  });
  const double c = family.kind() == K::parab_anchored ? family.anchor()
                   : family.kind() == K::parab_zero   ? 0.0
                                                      : far->value;
  const double b = far->time;
  const double d = extreme->time - b;
  double a = d != 0.0 ? std::abs(extreme->value - c) / (d * d) : 1.0 / (span * span);
  if (!(a > 0.0) || !std::isfinite(a)) a = 1.0 / (span * span);
  std::map<std::string, double> init{{"a", a}, {"b", b}};
  if (family.n_params() == 3) init["c"] = c;
  return init;
}

}  // namespace trisim

#endif  // TRISIM_STATS_CURVE_FIT_HPP
