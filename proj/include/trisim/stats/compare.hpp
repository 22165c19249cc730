#ifndef TRISIM_STATS_COMPARE_HPP
#define TRISIM_STATS_COMPARE_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trisim/error.hpp"
#include "trisim/stats/curve_fit.hpp"
#include "trisim/stats/extrema.hpp"
#include "trisim/stats/tests.hpp"
#include "trisim/trajectory.hpp"

namespace trisim {

/// Fraction of runs whose species value is at or below threshold at some
/// sampled time no later than by_time.
inline double extinction_fraction(const std::vector<Trajectory>& ensemble, const std::string& species,
                                  double threshold = 0.0, std::optional<double> by_time = std::nullopt) {
  if (ensemble.empty()) throw ValidationError("extinction fraction of an empty ensemble");
  std::size_t hit = 0;
  for (const auto& tr : ensemble) {
    const std::size_t s = tr.species_index(species);
    if (tr.size() == 0) throw ValidationError("empty trajectory");
    const double limit = by_time.value_or(tr.times().back());
    if (limit > tr.times().back() + 1e-9) throw ValidationError("by_time lies beyond the trajectory horizon");
    for (std::size_t k = 0; k < tr.size() && tr.time(k) <= limit + 1e-9; ++k) {
      if (tr.value(k, s) <= threshold) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(ensemble.size());
}

struct CompareOptions {
  ExtremaKind kind = ExtremaKind::maxima;
  ExtremaOptions extrema{5, 20.0};
  /// Empty: derived per run from the data.
  std::map<std::string, double> init;
  FitOptions fit;
  /// Times at which the species values are compared with the rank-sum test.
  std::vector<double> time_slices;
  double extinction_threshold = 0.0;
  std::optional<double> extinction_by;
  std::string label_a = "A";
  std::string label_b = "B";
};

struct RunFit {
  std::size_t run;
  std::size_t n_extrema;
  std::optional<FitResult> fit;  // empty when excluded before fitting
  bool usable = false;
  std::string note;
};

struct ParamTest {
  double mean_a = 0.0, mean_b = 0.0, mean_diff = 0.0;
  double t = 0.0, df = 0.0, p_t = 1.0;
  double U = 0.0, p_u = 1.0;
};

struct SliceTest {
  double time;
  RankSumResult test;
};

struct ComparisonReport {
  std::string species;
  std::string family;
  ExtremaKind kind = ExtremaKind::maxima;
  std::string label_a, label_b;
  std::size_t runs_a = 0, runs_b = 0;
  std::vector<RunFit> fits_a, fits_b;
  std::size_t excluded_a = 0, excluded_b = 0;
  std::map<std::string, ParamTest> tests;
  std::vector<SliceTest> slices;
  double extinction_a = 0.0, extinction_b = 0.0;

  static constexpr const char* kMethodNote =
      "Two-stage approximation to a nonlinear mixed-effects model: each run's extrema sequence is fitted "
      "separately, then each fitted parameter is compared across ensembles (Welch t, Wilcoxon rank-sum).";

  double excluded_fraction() const {
    const double total = static_cast<double>(runs_a + runs_b);
    return total > 0 ? static_cast<double>(excluded_a + excluded_b) / total : 0.0;
  }

  nlohmann::ordered_json to_json() const {
    using nlohmann::ordered_json;
    auto num = [](double v) -> ordered_json { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
    auto fit_list = [&](const std::vector<RunFit>& fits) {
      ordered_json arr = ordered_json::array();
      for (const auto& f : fits) {
        ordered_json j;
        j["run"] = f.run;
        j["n_extrema"] = f.n_extrema;
        j["usable"] = f.usable;
        if (f.fit) {
          ordered_json p;
          for (std::size_t i = 0; i < f.fit->names.size(); ++i)
            p[f.fit->names[i]] = num(f.fit->values[static_cast<Eigen::Index>(i)]);
          j["params"] = p;
          j["residual_ss"] = num(f.fit->residual_ss);
          j["iterations"] = f.fit->iterations;
          j["converged"] = f.fit->converged;
        }
        if (!f.note.empty()) j["note"] = f.note;
        arr.push_back(j);
      }
      return arr;
    };
    ordered_json j;
    j["method"] = kMethodNote;
    j["species"] = species;
    j["family"] = family;
    j["extrema_kind"] = to_string(kind);
    j["ensembles"] = {{label_a, {{"runs", runs_a}, {"excluded", excluded_a}}},
                      {label_b, {{"runs", runs_b}, {"excluded", excluded_b}}}};
    j["fits"] = {{label_a, fit_list(fits_a)}, {label_b, fit_list(fits_b)}};
    ordered_json tj = ordered_json::object();
    for (const auto& [name, t] : tests)
      tj[name] = {{"mean_a", num(t.mean_a)}, {"mean_b", num(t.mean_b)}, {"mean_diff", num(t.mean_diff)},
                  {"t", num(t.t)},           {"df", num(t.df)},         {"p_t", num(t.p_t)},
                  {"U", num(t.U)},           {"p_u", num(t.p_u)}};
    j["tests"] = tj;
    ordered_json sj = ordered_json::array();
    for (const auto& s : slices)
      sj.push_back({{"time", s.time}, {"U", s.test.U}, {"z", num(s.test.z)}, {"p", s.test.p_two_sided},
                    {"exact", s.test.exact}});
    j["time_slices"] = sj;
    j["extinction"] = {{label_a, extinction_a}, {label_b, extinction_b}};
    j["excluded_runs"] = {{label_a, excluded_a}, {label_b, excluded_b}, {"fraction", excluded_fraction()}};
    return j;
  }
};

namespace detail {

inline std::vector<RunFit> fit_ensemble(const std::vector<Trajectory>& runs, const std::string& species,
                                        const CurveFamily& family, const CompareOptions& opt) {
  std::vector<RunFit> fits;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    RunFit rf{i, 0, std::nullopt, false, {}};
    const auto ext = detect_extrema(runs[i], species, opt.kind, opt.extrema);
    rf.n_extrema = ext.points.size();
    if (ext.points.size() < family.n_params()) {
      rf.note = "too few extrema";
      fits.push_back(std::move(rf));
      continue;
    }
    const auto init = opt.init.empty() ? default_init(family, ext.points) : opt.init;
    rf.fit = fit_curve(family, ext.points, init, opt.fit);
    rf.usable = rf.fit->converged && rf.fit->values.allFinite();
    if (!rf.usable) rf.note = rf.fit->message;
    fits.push_back(std::move(rf));
  }
  return fits;
}

inline std::vector<double> sorted_param(const std::vector<RunFit>& fits, std::size_t idx) {
  std::vector<double> v;
  for (const auto& f : fits)
    if (f.usable) v.push_back(f.fit->values[static_cast<Eigen::Index>(idx)]);
  std::sort(v.begin(), v.end());
  return v;
}

inline std::vector<double> sorted_slice(const std::vector<Trajectory>& runs, const std::string& species, double t) {
  std::vector<double> v;
  for (const auto& tr : runs) {
    const std::size_t s = tr.species_index(species);
    const double k = std::round(t / tr.sample_interval());
    if (k < 0 || k >= static_cast<double>(tr.size()) || std::abs(tr.time(static_cast<std::size_t>(k)) - t) > 1e-6)
      throw ValidationError("time slice " + format_number(t) + " is not on the sample grid");
    v.push_back(tr.value(static_cast<std::size_t>(k), s));
  }
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace detail

/// Stage 1 fits each run's extrema sequence; stage 2 compares every fitted
/// parameter between the two ensembles.
inline ComparisonReport two_stage_compare(const std::vector<Trajectory>& a, const std::vector<Trajectory>& b,
                                          const std::string& species, const CurveFamily& family,
                                          const CompareOptions& opt = {}) {
  ComparisonReport rep;
  rep.species = species;
  rep.family = family.name();
  rep.kind = opt.kind;
  rep.label_a = opt.label_a;
  rep.label_b = opt.label_b;
  rep.runs_a = a.size();
  rep.runs_b = b.size();
  rep.fits_a = detail::fit_ensemble(a, species, family, opt);
  rep.fits_b = detail::fit_ensemble(b, species, family, opt);
  auto usable = [](const std::vector<RunFit>& f) {
    return static_cast<std::size_t>(std::count_if(f.begin(), f.end(), [](const RunFit& r) { return r.usable; }));
  };
  const std::size_t ua = usable(rep.fits_a), ub = usable(rep.fits_b);
  rep.excluded_a = a.size() - ua;
  rep.excluded_b = b.size() - ub;
  if (ua < 3 || ub < 3)
    throw ValidationError("too few usable runs after exclusions (" + std::to_string(ua) + " and " +
                          std::to_string(ub) + "; need at least 3 per ensemble)");

  const auto names = family.param_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto va = detail::sorted_param(rep.fits_a, i);
    const auto vb = detail::sorted_param(rep.fits_b, i);
    const auto w = welch_t_test(va, vb);
    const auto r = wilcoxon_rank_sum(va, vb);
    ParamTest pt;
    pt.mean_diff = w.mean_diff;
    pt.mean_a = std::accumulate(va.begin(), va.end(), 0.0) / static_cast<double>(va.size());
    pt.mean_b = std::accumulate(vb.begin(), vb.end(), 0.0) / static_cast<double>(vb.size());
    pt.t = w.t;
    pt.df = w.df;
    pt.p_t = w.p_two_sided;
    pt.U = r.U;
    pt.p_u = r.p_two_sided;
    rep.tests[names[i]] = pt;
  }
  for (double t : opt.time_slices)
    rep.slices.push_back({t, wilcoxon_rank_sum(detail::sorted_slice(a, species, t), detail::sorted_slice(b, species, t))});
  rep.extinction_a = extinction_fraction(a, species, opt.extinction_threshold, opt.extinction_by);
  rep.extinction_b = extinction_fraction(b, species, opt.extinction_threshold, opt.extinction_by);
  return rep;
}

}  // namespace trisim

#endif  // TRISIM_STATS_COMPARE_HPP
