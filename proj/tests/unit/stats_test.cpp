#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "trisim/case_studies.hpp"
#include "trisim/ode.hpp"
#include "trisim/stats/compare.hpp"

using namespace trisim;

namespace {

Trajectory series(const std::vector<double>& values, double dt = 1.0, const std::string& name = "X") {
  Trajectory tr({name}, dt);
  for (std::size_t k = 0; k < values.size(); ++k) tr.append(static_cast<double>(k) * dt, std::vector<double>{values[k]});
  return tr;
}

std::vector<ExtremaPoint> sample(const CurveFamily& f, const Eigen::VectorXd& p, double t0, double t1, double step) {
  std::vector<ExtremaPoint> pts;
  for (double t = t0; t <= t1 + 1e-9; t += step) pts.push_back({t, f(t, p)});
  return pts;
}

// Noisy damped parabola-shaped trajectories whose maxima follow c + a(t - b)^2.
std::vector<Trajectory> parabola_ensemble(double a, double b, double c, int runs, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Trajectory> out;
  for (int r = 0; r < runs; ++r) {
    const double ar = a * (1.0 + 0.05 * noise(gen));
    std::vector<double> v;
    for (int k = 0; k <= 6000; ++k) {
      const double t = 0.1 * k;
      const double envelope = c + ar * (t - b) * (t - b);
      v.push_back(envelope * (0.5 + 0.5 * std::cos(2 * M_PI * t / 60.0)) + 20.0 * noise(gen));
    }
    out.push_back(series(v, 0.1, "T"));
  }
  return out;
}

}  // namespace

TEST(Extrema, SmallSeries) {
  const Trajectory tr = series({0, 1, 0, 2, 0});
  const auto mx = detect_extrema(tr, "X", ExtremaKind::maxima);
  EXPECT_EQ(mx.points, (std::vector<ExtremaPoint>{{1, 1}, {3, 2}}));
  const auto mn = detect_extrema(tr, "X", ExtremaKind::minima);
  EXPECT_EQ(mn.points, (std::vector<ExtremaPoint>{{2, 0}}));
}

TEST(Extrema, DampedCosine) {
  std::vector<double> v;
  for (int k = 0; k <= 6000; ++k) {
    const double t = 0.1 * k;
    v.push_back(std::exp(-t / 200.0) * std::cos(2 * M_PI * t / 100.0));
  }
  const auto mx = detect_extrema(series(v, 0.1), "X", ExtremaKind::maxima, {1, 50.0});
  // derivative zero where tan(w t) = -1/(200 w)
  const double w = 2 * M_PI / 100.0, shift = std::atan(1.0 / (200.0 * w)) / w;
  ASSERT_EQ(mx.points.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(mx.points[i].time, 100.0 * static_cast<double>(i + 1) - shift, 0.1);
  EXPECT_NEAR(shift, 1.2638, 1e-4);
}

TEST(Extrema, MonotoneEmpty) {
  const Trajectory tr = series({1, 2, 3, 4, 5, 6});
  EXPECT_TRUE(detect_extrema(tr, "X", ExtremaKind::maxima).points.empty());
  EXPECT_TRUE(detect_extrema(tr, "X", ExtremaKind::minima).points.empty());
}

TEST(Extrema, PlateauAndSeparation) {
  const Trajectory tr = series({0, 2, 2, 2, 0, 1, 0, 3, 0});
  EXPECT_EQ(detect_extrema(tr, "X", ExtremaKind::maxima).points,
            (std::vector<ExtremaPoint>{{2, 2}, {5, 1}, {7, 3}}));
  EXPECT_EQ(detect_extrema(tr, "X", ExtremaKind::maxima, {1, 4.0}).points,
            (std::vector<ExtremaPoint>{{2, 2}, {7, 3}}));
  EXPECT_EQ(detect_extrema(tr, "X", ExtremaKind::maxima, {1, 6.0}).points, (std::vector<ExtremaPoint>{{7, 3}}));
}

TEST(Extrema, SmoothingReportsRawValues) {
  const Trajectory tr = series({0, 5, 1, 6, 2, 1, 0, 0, 0});
  const auto mx = detect_extrema(tr, "X", ExtremaKind::maxima, {3, 0.0});
  ASSERT_EQ(mx.points.size(), 1u);
  EXPECT_EQ(mx.points[0], (ExtremaPoint{2, 1}));
}

TEST(Extrema, NegationSymmetry) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(200), neg(200);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = std::round(3 * n(gen));
      neg[i] = -v[i];
    }
    const ExtremaOptions opt{static_cast<std::size_t>(1 + 2 * (trial % 3)), static_cast<double>(trial % 4)};
    const auto a = detect_extrema(series(neg), "X", ExtremaKind::maxima, opt);
    auto b = detect_extrema(series(v), "X", ExtremaKind::minima, opt);
    for (auto& p : b.points) p.value = -p.value;
    EXPECT_EQ(a.points, b.points);
  }
}

TEST(Extrema, Errors) {
  const Trajectory tr = series({1, 2, 1});
  EXPECT_THROW(detect_extrema(tr, "Y", ExtremaKind::maxima), ValidationError);
  EXPECT_THROW(detect_extrema(tr, "X", ExtremaKind::maxima, {5, 0}), ValidationError);
  EXPECT_THROW(detect_extrema(tr, "X", ExtremaKind::maxima, {2, 0}), ValidationError);
  EXPECT_THROW(detect_extrema(tr, "X", ExtremaKind::maxima, {1, -1}), ValidationError);
}

TEST(CurveFit, ExactParabola) {
  const auto f = CurveFamily::parab_up();
  Eigen::VectorXd p(3);
  p << 2, 5, 3;
  const auto res = fit_curve(f, sample(f, p, 0, 10, 1), {{"a", 1}, {"b", 1}, {"c", 0}});
  ASSERT_TRUE(res.converged) << res.message;
  EXPECT_NEAR(res.param("a"), 2, 1e-6);
  EXPECT_NEAR(res.param("b"), 5, 1e-6);
  EXPECT_NEAR(res.param("c"), 3, 1e-6);
  EXPECT_LT(res.residual_ss, 1e-12);
}

TEST(CurveFit, Reciprocal) {
  const auto f = CurveFamily::reciprocal5();
  Eigen::VectorXd p(2);
  p << 0.034, 41;
  const auto res = fit_curve(f, sample(f, p, 1, 100, 1), {{"a", 0.01}, {"b", 10}});
  ASSERT_TRUE(res.converged) << res.message;
  EXPECT_NEAR(res.param("a"), 0.034, 1e-4);
  EXPECT_NEAR(res.param("b"), 41, 1e-4);
}

TEST(CurveFit, SingularSystem) {
  const std::vector<ExtremaPoint> pts{{2, 7}, {2, 7}, {2, 7}};
  const auto res = fit_curve(CurveFamily::parab_up(), pts, {{"a", 1}, {"b", 0}, {"c", 0}});
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.message, "singular normal equations");
}

TEST(CurveFit, InputErrors) {
  const std::vector<ExtremaPoint> two{{1, 2}, {2, 3}};
  EXPECT_THROW(fit_curve(CurveFamily::parab_up(), two, {{"a", 1}, {"b", 0}, {"c", 0}}), ValidationError);
  EXPECT_THROW(fit_curve(CurveFamily::parab_zero(), two, {{"a", 1}}), ValidationError);
  EXPECT_THROW(fit_curve(CurveFamily::parab_zero(), two, {{"a", 1}, {"b", NAN}}), ValidationError);
}

TEST(CurveFit, ResidualNeverIncreases) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> n(0.0, 50.0);
  const auto f = CurveFamily::parab_down();
  Eigen::VectorXd p(3);
  p << 0.3, 250, 40000;
  auto pts = sample(f, p, 20, 500, 40);
  for (auto& q : pts) q.value += n(gen);
  std::vector<double> history;
  FitOptions opt;
  opt.ss_history = &history;
  const auto res = fit_curve(f, pts, {{"a", 1}, {"b", 100}, {"c", 30000}}, opt);
  ASSERT_GE(history.size(), 2u);
  for (std::size_t i = 1; i < history.size(); ++i) EXPECT_LE(history[i], history[i - 1]);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.covariance.rows(), 3);
}

TEST(CurveFit, FamiliesParse) {
  EXPECT_EQ(CurveFamily::parse("parab_anchored:40311").anchor(), 40311.0);
  EXPECT_EQ(CurveFamily::parse("parab_anchored:40311").n_params(), 2u);
  EXPECT_EQ(CurveFamily::parse("parab_down").n_params(), 3u);
  EXPECT_EQ(CurveFamily::parse("reciprocal5").n_params(), 2u);
  EXPECT_THROW(CurveFamily::parse("cubic"), ValidationError);
  EXPECT_THROW(CurveFamily::parse("parab_anchored:x"), ValidationError);
  Eigen::VectorXd p(3);
  p << 2, 3, 0;
  EXPECT_EQ(CurveFamily::parse("parab_anchored:10")(5, p), 18.0);
  EXPECT_EQ(CurveFamily::parab_zero()(5, p), 8.0);
}

TEST(RankSum, TinyExact) {
  const std::vector<double> x{1, 2}, y{3, 4};
  const auto r = wilcoxon_rank_sum(x, y);
  EXPECT_EQ(r.U, 0.0);
  EXPECT_TRUE(r.exact);
  EXPECT_DOUBLE_EQ(r.p_two_sided, 1.0 / 3.0);
}

TEST(RankSum, IdenticalSamples) {
  const std::vector<double> x{1.5, 2.5, 3.5, 4.5, 5.5};
  const auto r = wilcoxon_rank_sum(x, x);
  EXPECT_NEAR(r.z, 0.0, 1e-12);
  EXPECT_GE(r.p_two_sided, 0.99);
}

TEST(RankSum, SeparatedNormals) {
  std::mt19937_64 gen(2718);
  std::normal_distribution<double> n;
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(n(gen));
    y.push_back(5.0 + n(gen));
  }
  const auto r = wilcoxon_rank_sum(x, y);
  EXPECT_FALSE(r.exact);
  EXPECT_LT(r.p_two_sided, 1e-10);
}

TEST(RankSum, ExactVersusNormalSixBySix) {
  // all C(12,6) splits of ranks 1..12
  double worst = 0.0;
  for (unsigned mask = 0; mask < (1u << 12); ++mask) {
    if (__builtin_popcount(mask) != 6) continue;
    std::vector<double> x, y;
    for (int i = 0; i < 12; ++i) ((mask >> i) & 1u ? x : y).push_back(i + 1.0);
    const auto exact = wilcoxon_rank_sum(x, y);
    ASSERT_TRUE(exact.exact);
    const auto normal = wilcoxon_rank_sum(x, y, RankSumMethod::normal);
    ASSERT_FALSE(normal.exact);
    const double var = 36.0 * 13.0 / 12.0;
    const double dev = std::max(0.0, std::abs(exact.U - 18.0) - 0.5);
    const double approx = std::min(1.0, std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)));
    ASSERT_NEAR(normal.p_two_sided, approx, 1e-12);
    worst = std::max(worst, std::abs(exact.p_two_sided - approx));
  }
  EXPECT_LE(worst, 0.02);
}

TEST(RankSum, TiesUseApproximation) {
  const std::vector<double> x{1, 2, 2, 3}, y{2, 3, 4, 5};
  const auto r = wilcoxon_rank_sum(x, y);
  EXPECT_FALSE(r.exact);
  EXPECT_EQ(r.U, 2.5);
  EXPECT_GT(r.p_two_sided, 0.0);
  EXPECT_LE(r.p_two_sided, 1.0);
  EXPECT_THROW(wilcoxon_rank_sum(std::vector<double>{}, y), ValidationError);
  EXPECT_THROW(wilcoxon_rank_sum(x, y, RankSumMethod::exact), ValidationError);
  const std::vector<double> u{1, 2, 3}, v{4, 5, 6, 7};
  EXPECT_TRUE(wilcoxon_rank_sum(u, v, RankSumMethod::exact).exact);
  EXPECT_FALSE(wilcoxon_rank_sum(u, v, RankSumMethod::normal).exact);
}

TEST(WelchT, KnownValues) {
  // scipy.stats.ttest_ind(x, y, equal_var=False)
  const std::vector<double> x{27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4};
  const std::vector<double> y{27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4};
  const auto r = welch_t_test(x, y);
  EXPECT_NEAR(r.t, -2.46, 0.01);
  EXPECT_NEAR(r.df, 24.99, 0.05);
  EXPECT_NEAR(r.p_two_sided, 0.021, 0.001);
}

TEST(KsTwoSample, Behaviour) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n;
  std::vector<double> a, b, c;
  for (int i = 0; i < 300; ++i) {
    a.push_back(n(gen));
    b.push_back(n(gen));
    c.push_back(n(gen) + 1.0);
  }
  EXPECT_GT(ks_two_sample(a, b).p_value, 0.01);
  EXPECT_LT(ks_two_sample(a, c).p_value, 1e-6);
  EXPECT_EQ(ks_two_sample(a, a).D, 0.0);
}

TEST(Extinction, Fraction) {
  std::vector<Trajectory> runs{series({3, 2, 0, 0}), series({3, 2, 1, 1}), series({1, 0, 1, 2}), series({5, 5, 5, 5})};
  EXPECT_EQ(extinction_fraction(runs, "X"), 0.5);
  EXPECT_EQ(extinction_fraction(runs, "X", 0.0, 1.0), 0.25);
  EXPECT_EQ(extinction_fraction(runs, "X", 1.0), 0.75);
  EXPECT_THROW(extinction_fraction(runs, "Y"), ValidationError);
  EXPECT_THROW(extinction_fraction(runs, "X", 0.0, 10.0), ValidationError);
}

TEST(Extinction, OdeNeverExtinct) {
  const std::vector<Trajectory> runs{integrate(builtin_model(CaseStudyId::case2()))};
  EXPECT_EQ(extinction_fraction(runs, "T"), 0.0);
}

TEST(TwoStage, DetectsDifferentCurvature) {
  const auto a = parabola_ensemble(0.2, 300, 5000, 12, 1);
  const auto b = parabola_ensemble(0.3, 300, 5000, 12, 2);
  CompareOptions opt;
  opt.extrema = {5, 30.0};
  const auto rep = two_stage_compare(a, b, "T", CurveFamily::parab_up(), opt);
  EXPECT_LT(rep.tests.at("a").p_t, 0.01);
  EXPECT_LT(rep.tests.at("a").p_u, 0.01);
  EXPECT_EQ(rep.excluded_a + rep.excluded_b, 0u);
}

TEST(TwoStage, SameModelNotRejected) {
  const auto a = parabola_ensemble(0.2, 300, 5000, 12, 3);
  const auto b = parabola_ensemble(0.2, 300, 5000, 12, 4);
  CompareOptions opt;
  opt.extrema = {5, 30.0};
  opt.time_slices = {100.0, 250.0};
  const auto rep = two_stage_compare(a, b, "T", CurveFamily::parab_up(), opt);
  for (const auto& [name, t] : rep.tests) {
    EXPECT_GT(t.p_t, 0.01) << name;
    EXPECT_GE(t.p_u, 0.0);
    EXPECT_LE(t.p_u, 1.0);
  }
  EXPECT_EQ(rep.slices.size(), 2u);
  const auto j = rep.to_json();
  for (const char* key : {"ensembles", "fits", "tests", "extinction", "excluded_runs"}) EXPECT_TRUE(j.contains(key));
  EXPECT_TRUE(j["tests"]["a"].contains("p_t"));
  EXPECT_TRUE(j["tests"]["a"].contains("p_u"));
}

TEST(TwoStage, RelabelInvariant) {
  auto a = parabola_ensemble(0.2, 300, 5000, 8, 5);
  auto b = parabola_ensemble(0.25, 300, 5000, 8, 6);
  CompareOptions opt;
  opt.extrema = {5, 30.0};
  const auto before = two_stage_compare(a, b, "T", CurveFamily::parab_up(), opt);
  std::mt19937_64 gen(9);
  std::shuffle(a.begin(), a.end(), gen);
  std::shuffle(b.begin(), b.end(), gen);
  const auto after = two_stage_compare(a, b, "T", CurveFamily::parab_up(), opt);
  for (const auto& [name, t] : before.tests) {
    EXPECT_EQ(t.t, after.tests.at(name).t);
    EXPECT_EQ(t.p_t, after.tests.at(name).p_t);
    EXPECT_EQ(t.p_u, after.tests.at(name).p_u);
  }
}

TEST(TwoStage, TooFewUsableRuns) {
  const auto a = parabola_ensemble(0.2, 300, 5000, 4, 7);
  std::vector<Trajectory> flat;
  for (int i = 0; i < 4; ++i) flat.push_back(series(std::vector<double>(100, 1.0), 0.1, "T"));
  EXPECT_THROW(two_stage_compare(a, flat, "T", CurveFamily::parab_up()), ValidationError);
  EXPECT_THROW(two_stage_compare(a, {}, "T", CurveFamily::parab_up()), ValidationError);
}
