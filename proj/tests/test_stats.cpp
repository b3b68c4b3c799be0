#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "mpbetti/stats.hpp"
#include "oracles.hpp"

using namespace mpbetti;

namespace {

Sampler poisson_sampler(double side = 10.0, double intensity = 2.0) {
  return {"poisson", {2, side}, PoissonSpec{intensity}, DegenerateMarks{0.0}, false};
}

const BifiltrationPlan kPlan{false, 2, 0.5, kDefaultSimplexBudget};

std::vector<std::vector<double>> column(std::initializer_list<double> v) {
  std::vector<std::vector<double>> out;
  for (double x : v) out.push_back({x});
  return out;
}

}  // namespace

TEST(Ripley, SinglePointIsZero) {
  MarkedPointCloud c;
  c.window = {2, 10.0};
  c.points = {{{5.0, 5.0, 0.0}, 0.0}};
  EXPECT_EQ(ripley_k(c, 0.5), 0.0);
}

TEST(Ripley, SparseCloudIsZero) {
  MarkedPointCloud c;
  c.window = {2, 10.0};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) c.points.push_back({{1.0 + 2.0 * i, 1.0 + 2.0 * j, 0.0}, 0.0});
  EXPECT_EQ(ripley_k(c, 0.5), 0.0);
  EXPECT_GT(ripley_k(c, 2.0), 0.0);
}

TEST(Ripley, RadiusMustStayBelowHalfSide) {
  MarkedPointCloud c;
  c.window = {2, 4.0};
  c.points = {{{1.0, 1.0, 0.0}, 0.0}, {{2.0, 2.0, 0.0}, 0.0}};
  EXPECT_THROW(ripley_k(c, 2.0), InvalidArgument);
  EXPECT_THROW(ripley_k(c, 0.0), InvalidArgument);
}

TEST(Ripley, HandComputedBorderCorrection) {
  // Window 4x4, r = 1: only points in [1, 3]^2 serve as centers.
  MarkedPointCloud c;
  c.window = {2, 4.0};
  c.points = {{{2.0, 2.0, 0.0}, 0.0}, {{2.5, 2.0, 0.0}, 0.0}, {{0.2, 0.2, 0.0}, 0.0}, {{0.2, 0.9, 0.0}, 0.0}};
  // centers 0 and 1, each with one neighbor within 1: |W| * 2 / (2 * 4)
  EXPECT_DOUBLE_EQ(ripley_k(c, 1.0), 16.0 * 2.0 / (2.0 * 4.0));
}

TEST(Ripley, UnbiasedForPoisson) {
  auto s = poisson_sampler();
  double total = 0.0;
  const int reps = 1000;
  for (int j = 0; j < reps; ++j) total += ripley_k(s.draw(derive_seed(5, j)).raw, 0.5);
  EXPECT_NEAR(total / reps, M_PI * 0.25, 0.05 * M_PI * 0.25);
}

TEST(Ripley, UnbiasedIn3D) {
  Sampler s{"p3", {3, 6.0}, PoissonSpec{0.5}, DegenerateMarks{0.0}, false};
  double total = 0.0;
  const int reps = 300;
  for (int j = 0; j < reps; ++j) total += ripley_k(s.draw(derive_seed(6, j)).raw, 1.0);
  EXPECT_NEAR(total / reps, 4.0 / 3.0 * M_PI, 0.05 * 4.0 / 3.0 * M_PI);
}

TEST(Calibration, ConstantStatistic) {
  auto c = fit_calibration(column({2.0, 2.0, 2.0, 2.0}));
  EXPECT_EQ(c.sd[0], 0.0);
  EXPECT_TRUE(rejects(c, std::vector<double>{2.5}, 0.05));
  EXPECT_FALSE(rejects(c, std::vector<double>{2.0}, 0.05));
  std::vector<std::vector<double>> flat(10, {1.0, 3.0});
  EXPECT_THROW(fit_calibration(flat), NumericalError);
}

TEST(Calibration, SingularCovarianceAdvisesMoreReplications) {
  std::vector<std::vector<double>> collinear;
  for (int i = 0; i < 20; ++i) collinear.push_back({double(i), 2.0 * i});
  try {
    fit_calibration(collinear);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("calibration"), std::string::npos);
  }
}

TEST(Calibration, TooFewReplications) {
  EXPECT_THROW(fit_calibration(column({1.0})), InvalidArgument);
  std::vector<std::vector<double>> two{{1.0, 2.0}, {2.0, 1.0}};
  EXPECT_THROW(fit_calibration(two), InvalidArgument);
}

TEST(Calibration, CholeskyReproducesCovariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<std::vector<double>> v;
  for (int i = 0; i < 200; ++i) {
    double a = z(rng), b = z(rng), c = z(rng);
    v.push_back({a, a + 0.5 * b, 2.0 * c - a});
  }
  auto cal = fit_calibration(v);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += cal.cholesky[i][k] * cal.cholesky[j][k];
      EXPECT_NEAR(s, cal.covariance[i][j], 1e-9);
      EXPECT_EQ(cal.covariance[i][j], cal.covariance[j][i]);
    }
}

TEST(Calibration, DeterministicAndSelfConsistent) {
  auto s = poisson_sampler(6.0);
  TotalPersistence tp;
  tp.death_cap = 0.5;
  auto a = calibrate_null(s, kPlan, tp, 100, 11);
  auto b = calibrate_null(s, kPlan, tp, 100, 11);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.sd, b.sd);
  auto other = calibrate_null(s, kPlan, tp, 100, 12);
  EXPECT_NE(a.mean, other.mean);
  EXPECT_LE(std::fabs(a.mean[0] - other.mean[0]), 4.0 * a.sd[0] / std::sqrt(100.0));
}

TEST(Testing, AlphaOneRejectsEverything) {
  auto cal = fit_calibration(column({1.0, 2.0, 3.0, 4.0}));
  for (double x : {2.5, 2.4999, 100.0}) EXPECT_TRUE(rejects(cal, std::vector<double>{x}, 1.0));
  std::vector<std::vector<double>> v{{1, 0}, {0, 1}, {1, 1}, {2, 0.5}, {0.3, 0.7}};
  auto cal2 = fit_calibration(v);
  EXPECT_TRUE(rejects(cal2, cal2.mean, 1.0));
}

TEST(Testing, AlphaOutsideRangeThrows) {
  auto cal = fit_calibration(column({1.0, 2.0, 3.0}));
  EXPECT_THROW(rejects(cal, std::vector<double>{1.0}, 0.0), InvalidArgument);
  EXPECT_THROW(make_test_result(cal, 1.5), InvalidArgument);
}

TEST(Testing, SignFlipSymmetry) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(3.0, 2.0);
  std::vector<std::vector<double>> v;
  for (int i = 0; i < 100; ++i) v.push_back({z(rng)});
  auto cal = fit_calibration(v);
  for (int i = 0; i < 1000; ++i) {
    double d = 0.01 * i;
    EXPECT_EQ(rejects(cal, std::vector<double>{cal.mean[0] + d}, 0.05), rejects(cal, std::vector<double>{cal.mean[0] - d}, 0.05));
  }
}

TEST(Testing, ChiSquareOneAgreesWithZTest) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(1.0, 0.5);
  std::vector<std::vector<double>> v;
  for (int i = 0; i < 100; ++i) v.push_back({z(rng)});
  auto cal = fit_calibration(v);
  for (double alpha : {0.01, 0.05, 0.2}) {
    for (int i = 0; i < 2000; ++i) {
      double x = z(rng) * 1.5;
      double zz = standardize(cal, x);
      bool two_sided = std::fabs(zz) >= normal_critical_value(alpha);
      bool chi = mahalanobis_squared(cal, std::vector<double>{x}) >= chi_square_threshold(1, alpha);
      EXPECT_EQ(two_sided, chi);
      EXPECT_EQ(two_sided, rejects(cal, std::vector<double>{x}, alpha));
    }
  }
}

TEST(Testing, Quantiles) {
  EXPECT_NEAR(normal_critical_value(0.05), 1.959963984540054, 1e-12);
  EXPECT_NEAR(chi_square_threshold(2, 0.05), 5.991464547107979, 1e-10);
  EXPECT_NEAR(chi_square_threshold(1, 0.05), 3.841458820694124, 1e-10);
  EXPECT_NEAR(chi_square_threshold(3, 0.01), 11.34486673014437, 1e-10);
}

TEST(Testing, MahalanobisOfIdentityCovariance) {
  NullCalibration c;
  c.mean = {1.0, 2.0};
  c.sd = {1.0, 1.0};
  c.covariance = {{1.0, 0.0}, {0.0, 1.0}};
  c.cholesky = {{1.0, 0.0}, {0.0, 1.0}};
  c.n_calibration = 10;
  EXPECT_DOUBLE_EQ(mahalanobis_squared(c, std::vector<double>{4.0, 6.0}), 25.0);
}

TEST(Gof, NullRejectionRateNearAlpha) {
  auto null = poisson_sampler();
  RipleyK rk{0.5};
  auto cal = calibrate_null(null, kPlan, rk, 400, 21);
  std::vector<Sampler> samplers{null};
  auto r = run_gof_test(cal, samplers, kPlan, rk, 400, 0.05, 21);
  ASSERT_EQ(r.outcomes.size(), 1u);
  EXPECT_GE(r.outcomes[0].rejection_rate(), 0.05 - 3.0 * std::sqrt(0.05 * 0.95 / 400));
  EXPECT_LE(r.outcomes[0].rejection_rate(), 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / 400));
  ASSERT_TRUE(r.acceptance_interval.has_value());
  EXPECT_LT(r.acceptance_interval->first, cal.mean[0]);
}

TEST(Gof, ReproducibleAndOrderIndependent) {
  auto null = poisson_sampler(6.0);
  Sampler matern{"matern", {2, 6.0}, MaternClusterSpec{2.0, 1.0, 0.5}, DegenerateMarks{0.0}, false};
  TotalPersistence tp;
  tp.death_cap = 0.5;
  auto cal = calibrate_null(null, kPlan, tp, 60, 3);
  std::vector<Sampler> samplers{null, matern};
  auto a = run_gof_test(cal, samplers, kPlan, tp, 30, 0.05, 3);
  // Reverse replication order through a custom executor.
  Executor reversed = [](std::size_t n, const std::function<void(std::size_t)>& body) {
    for (std::size_t i = n; i-- > 0;) body(i);
  };
  auto b = run_gof_test(cal, samplers, kPlan, tp, 30, 0.05, 3, reversed);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(a.outcomes[s].values, b.outcomes[s].values);
    EXPECT_EQ(a.outcomes[s].rejections, b.outcomes[s].rejections);
  }
}

TEST(Gof, StandardErrorIsBinomial) {
  ModelOutcome m{"x", std::vector<std::vector<double>>(200, {0.0}), 50};
  EXPECT_DOUBLE_EQ(m.rejection_rate(), 0.25);
  EXPECT_DOUBLE_EQ(m.std_error(), std::sqrt(0.25 * 0.75 / 200));
}

TEST(Statistics, SharedBifiltrationMatchesSeparateEvaluation) {
  auto s = poisson_sampler(6.0).draw(9);
  TotalPersistence one{CechAxis{}, 1, 1, std::nullopt, 0.5};
  TotalPersistence two{CechAxis{}, 1, 2, 0.25, 0.5};
  std::vector<StatisticSpec> specs{one, two, WeightedCoverTP{{one, two}, {1.0 / 3.0, 2.0 / 3.0}}, BivariateTP{one, two},
                                   RipleyK{0.5}};
  auto all = evaluate_statistics(s, kPlan, specs);
  ASSERT_EQ(all.size(), specs.size());
  double a = evaluate_statistic(s, kPlan, one)[0];
  double b = evaluate_statistic(s, kPlan, two)[0];
  EXPECT_EQ(all[0][0], a);
  EXPECT_EQ(all[1][0], b);
  EXPECT_DOUBLE_EQ(all[2][0], a / 3.0 + 2.0 * b / 3.0);
  EXPECT_EQ(all[3], (std::vector<double>{a, b}));
  EXPECT_EQ(all[4][0], ripley_k(s.raw, 0.5));
}

TEST(Statistics, TotalPersistenceMatchesDiagram) {
  auto s = poisson_sampler(6.0).draw(10);
  auto bf = build_multicover(s.view, 1, 2, 0.5);
  auto dgm = persistence_diagram(slice(bf, CechAxis{}), 1);
  TotalPersistence tp{CechAxis{}, 1, 1, std::nullopt, 0.5};
  EXPECT_EQ(evaluate_statistic(s, kPlan, tp)[0], total_persistence(dgm, std::nullopt, 0.5));
}

TEST(Statistics, Validation) {
  WindowSpec w{2, 10.0};
  EXPECT_THROW(validate(StatisticSpec{RipleyK{5.0}}, w), InvalidArgument);
  EXPECT_THROW(validate(StatisticSpec{WeightedCoverTP{{TotalPersistence{}}, {}}}, w), InvalidArgument);
  EXPECT_THROW(validate(StatisticSpec{WeightedCoverTP{{TotalPersistence{}}, {NAN}}}, w), InvalidArgument);
  TotalPersistence bad;
  bad.k = 0;
  EXPECT_THROW(validate(StatisticSpec{bad}, w), InvalidArgument);
  EXPECT_EQ(statistic_dimension(BivariateTP{}), 2u);
  EXPECT_EQ(statistic_dimension(RipleyK{}), 1u);
}

TEST(Normality, ExactQuantilesFitClosely) {
  const std::size_t n = 200;
  std::vector<double> v;
  for (std::size_t i = 1; i <= n; ++i) v.push_back(normal_quantile((static_cast<double>(i) - 0.5) / n));
  auto r = normality_report(v);
  EXPECT_LT(r.ks_distance, 2.0 / n);
  ASSERT_EQ(r.qq.size(), n);
  EXPECT_NEAR(r.qq.front().first, normal_quantile(0.5 / n), 1e-12);
}

TEST(Normality, ConstantInputThrows) {
  EXPECT_THROW(normality_report(std::vector<double>(50, 1.0)), NumericalError);
  EXPECT_THROW(normality_report(std::vector<double>(10, 1.0)), InvalidArgument);
}

TEST(Normality, UniformSampleIsFlagged) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(1000);
  for (auto& x : v) x = u(rng);
  EXPECT_GT(normality_report(v).ks_distance, lilliefors_critical_value(v.size(), 0.01));
}

TEST(Normality, GaussianSampleIsNotFlagged) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(4.0, 3.0);
  std::vector<double> v(1000);
  for (auto& x : v) x = z(rng);
  EXPECT_LT(normality_report(v).ks_distance, lilliefors_critical_value(v.size(), 0.01));
}

TEST(Ks, KnownValues) {
  EXPECT_NEAR(kolmogorov_survival(1.36), 0.0494, 5e-4);
  EXPECT_NEAR(kolmogorov_survival(1.63), 0.0098, 5e-4);
  EXPECT_EQ(ks_two_sample({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_EQ(ks_two_sample({1, 2}, {3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(ks_statistic({0.5}, [](double x) { return x; }), 0.5);
}
