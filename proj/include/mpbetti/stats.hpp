#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "mpbetti/bifiltration.hpp"
#include "mpbetti/errors.hpp"
#include "mpbetti/geometry.hpp"
#include "mpbetti/homology.hpp"
#include "mpbetti/pointproc.hpp"
#include "mpbetti/random.hpp"

namespace mpbetti {

// ---------------------------------------------------------------------------
// Ripley's K

/// Border-corrected K estimate: only points of the eroded window
/// [r, side - r]^d act as centers. Normalized by |W| so that a Poisson
/// pattern gives E K(r) ~ v_d r^d.
inline double ripley_k(const MarkedPointCloud& cloud, double r) {
  const auto& w = cloud.window;
  w.validate();
  if (!(r > 0.0) || !std::isfinite(r)) throw InvalidArgument("Ripley radius must be positive");
  if (2.0 * r >= w.side) throw InvalidArgument("eroded window is empty: radius must be below side/2");
  const std::size_t n = cloud.size();
  if (n < 2) return 0.0;
  std::vector<Point> pos;
  pos.reserve(n);
  for (const auto& p : cloud.points) pos.push_back(p.position);
  GridIndex grid(pos, w.dimension, r);
  std::size_t inner = 0, pairs = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    bool inside = true;
    for (int d = 0; d < w.dimension; ++d)
      if (pos[i][d] < r || pos[i][d] > w.side - r) inside = false;
    if (!inside) continue;
    ++inner;
    pairs += grid.neighbors(i, r).size();
  }
  if (inner == 0) return 0.0;
  return w.volume() * static_cast<double>(pairs) / (static_cast<double>(inner) * static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Statistics

/// Total persistence of one slice of cover level k in degree q.
struct TotalPersistence {
  SliceDirection direction = CechAxis{};
  int q = 1;
  int k = 1;
  std::optional<double> birth_cap;
  double death_cap = 1.0;
};

/// Two total persistences tested jointly (decorrelated, chi-square).
struct BivariateTP {
  TotalPersistence first;
  TotalPersistence second;
};

/// Scalar sum of weighted total persistences, typically over cover levels.
struct WeightedCoverTP {
  std::vector<TotalPersistence> parts;
  std::vector<double> weights;
};

/// K(r) of the raw pattern.
struct RipleyK {
  double radius = 0.5;
};

using StatisticSpec = std::variant<TotalPersistence, BivariateTP, WeightedCoverTP, RipleyK>;

struct NamedStatistic {
  std::string name;
  StatisticSpec spec;
};

inline std::size_t statistic_dimension(const StatisticSpec& s) {
  return std::holds_alternative<BivariateTP>(s) ? 2 : 1;
}

inline void validate(const TotalPersistence& tp) {
  validate(tp.direction);
  if (tp.q < 0) throw InvalidArgument("homology degree must be >= 0");
  if (tp.k < 1) throw InvalidArgument("cover level must be >= 1");
  if (!std::isfinite(tp.death_cap)) throw InvalidArgument("death cap must be finite");
  if (tp.birth_cap && std::isnan(*tp.birth_cap)) throw InvalidArgument("birth cap must not be NaN");
}

inline void validate(const StatisticSpec& s, const WindowSpec& window) {
  std::visit(
      [&](const auto& x) {
        using S = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<S, TotalPersistence>) {
          validate(x);
        } else if constexpr (std::is_same_v<S, BivariateTP>) {
          validate(x.first);
          validate(x.second);
        } else if constexpr (std::is_same_v<S, WeightedCoverTP>) {
          if (x.parts.empty() || x.parts.size() != x.weights.size())
            throw InvalidArgument("weighted statistic needs one weight per part");
          for (const auto& p : x.parts) validate(p);
          for (double w : x.weights)
            if (!std::isfinite(w)) throw InvalidArgument("weights must be finite");
        } else {
          if (!(x.radius > 0.0) || !(2.0 * x.radius < window.side))
            throw InvalidArgument("Ripley radius must lie in (0, side/2)");
        }
      },
      s);
}

/// How the topological view of a sample is filtered.
struct BifiltrationPlan {
  bool graded_by_marks = false;  // marked Cech (true) or multicover (false)
  int q_max = 2;
  double r1_max = 0.5;
  std::size_t budget = kDefaultSimplexBudget;
};

/// One draw: the raw pattern (Ripley) and the pattern the bifiltration is
/// built on. They differ when a coordinate is turned into the mark.
struct Sample {
  MarkedPointCloud raw;
  MarkedPointCloud view;
};

struct Sampler {
  std::string name;
  WindowSpec window;
  ProcessSpec process = PoissonSpec{};
  MarkLaw marks = DegenerateMarks{0.0};
  bool last_coordinate_is_mark = false;

  Sample draw(std::uint64_t seed) const {
    Sample s;
    s.raw = generate(window, process, marks, seed);
    s.view = last_coordinate_is_mark ? last_coordinate_as_mark(s.raw) : s.raw;
    return s;
  }
};

namespace detail {

inline void collect_levels(const TotalPersistence& tp, std::vector<int>& levels) { levels.push_back(tp.k); }

inline std::vector<int> cover_levels(std::span<const StatisticSpec> specs) {
  std::vector<int> levels;
  for (const auto& s : specs) {
    if (const auto* tp = std::get_if<TotalPersistence>(&s)) collect_levels(*tp, levels);
    else if (const auto* bv = std::get_if<BivariateTP>(&s)) {
      collect_levels(bv->first, levels);
      collect_levels(bv->second, levels);
    } else if (const auto* w = std::get_if<WeightedCoverTP>(&s))
      for (const auto& p : w->parts) collect_levels(p, levels);
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

/// Builds each needed layer once and memoizes slices and diagrams.
class SampleEvaluator {
public:
  SampleEvaluator(const Sample& sample, const BifiltrationPlan& plan, std::span<const StatisticSpec> specs)
      : sample_(sample) {
    auto levels = cover_levels(specs);
    bf_.ambient_dim = sample.view.window.dimension;
    bf_.r1_max = plan.r1_max;
    bf_.mark_max = cloud_mark_max(sample.view);
    bf_.q_max = plan.q_max;
    for (int k : levels)
      bf_.add_layer(build_cover_layer(sample.view, k, plan.q_max, plan.r1_max, plan.graded_by_marks, plan.budget));
  }

  double total(const TotalPersistence& tp) {
    if (tp.q + 1 > bf_.q_max) throw InvalidArgument("plan q_max too small for degree " + std::to_string(tp.q));
    auto key = std::make_tuple(tp.k, describe(tp.direction), tp.q);
    auto it = diagrams_.find(key);
    if (it == diagrams_.end()) {
      auto skey = std::make_pair(tp.k, describe(tp.direction));
      auto sit = slices_.find(skey);
      if (sit == slices_.end()) sit = slices_.emplace(skey, slice(bf_, tp.k, tp.direction)).first;
      it = diagrams_.emplace(key, persistence_diagram(sit->second, tp.q)).first;
    }
    return total_persistence(it->second, tp.birth_cap, tp.death_cap);
  }

  std::vector<double> evaluate(const StatisticSpec& s) {
    return std::visit(
        [&](const auto& x) -> std::vector<double> {
          using S = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<S, TotalPersistence>) return {total(x)};
          else if constexpr (std::is_same_v<S, BivariateTP>) return {total(x.first), total(x.second)};
          else if constexpr (std::is_same_v<S, WeightedCoverTP>) {
            double v = 0.0;
            for (std::size_t i = 0; i < x.parts.size(); ++i) v += x.weights[i] * total(x.parts[i]);
            return {v};
          } else {
            return {ripley_k(sample_.raw, x.radius)};
          }
        },
        s);
  }

private:
  const Sample& sample_;
  Bifiltration bf_;
  std::map<std::pair<int, std::string>, SlicedFiltration> slices_;
  std::map<std::tuple<int, std::string, int>, PersistenceDiagram> diagrams_;
};

}  // namespace detail

/// All statistics of one sample; the bifiltration is built once.
inline std::vector<std::vector<double>> evaluate_statistics(const Sample& sample, const BifiltrationPlan& plan,
                                                            std::span<const StatisticSpec> specs) {
  for (const auto& s : specs) validate(s, sample.raw.window);
  detail::SampleEvaluator ev(sample, plan, specs);
  std::vector<std::vector<double>> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(ev.evaluate(s));
  return out;
}

inline std::vector<double> evaluate_statistic(const Sample& sample, const BifiltrationPlan& plan,
                                              const StatisticSpec& spec) {
  return evaluate_statistics(sample, plan, std::span<const StatisticSpec>(&spec, 1)).front();
}

// ---------------------------------------------------------------------------
// Replication driver

/// Runs body(i) for i in [0, n). The default runs sequentially; callers may
/// substitute a parallel executor since every body writes only slot i.
using Executor = std::function<void(std::size_t, const std::function<void(std::size_t)>&)>;

inline void run_sequential(std::size_t n, const std::function<void(std::size_t)>& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

/// Seed of replication j in stream `stream` (calibration or a tested model).
inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t j) {
  return derive_seed(derive_seed(master, stream), j);
}

inline constexpr std::uint64_t kCalibrationStream = 0;

/// Tested model s uses stream s + 1, so model order fixes its seeds.
inline constexpr std::uint64_t test_stream(std::size_t sampler_index) { return sampler_index + 1; }

/// values[rep][statistic] = vector value.
using ReplicationValues = std::vector<std::vector<std::vector<double>>>;

inline ReplicationValues simulate_statistics(const Sampler& sampler, const BifiltrationPlan& plan,
                                             std::span<const StatisticSpec> specs, std::size_t n, std::uint64_t master,
                                             std::uint64_t stream, const Executor& exec = run_sequential) {
  ReplicationValues values(n);
  exec(n, [&](std::size_t j) { values[j] = evaluate_statistics(sampler.draw(replication_seed(master, stream, j)), plan, specs); });
  return values;
}

/// Column i of a replication table: the values of statistic i.
inline std::vector<std::vector<double>> statistic_column(const ReplicationValues& v, std::size_t i) {
  std::vector<std::vector<double>> out;
  out.reserve(v.size());
  for (const auto& rep : v) out.push_back(rep.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Null calibration and tests

struct NullCalibration {
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::vector<double>> covariance;
  std::vector<std::vector<double>> cholesky;  // lower triangular, multivariate only
  std::size_t n_calibration = 0;

  std::size_t dimension() const noexcept { return mean.size(); }
};

/// Mean, sd and (for dimension >= 2) covariance with its Cholesky factor.
inline NullCalibration fit_calibration(const std::vector<std::vector<double>>& samples) {
  if (samples.size() < 2) throw InvalidArgument("calibration needs at least 2 replications");
  const std::size_t dim = samples.front().size();
  if (dim == 0) throw InvalidArgument("statistic has no coordinates");
  for (const auto& x : samples)
    if (x.size() != dim) throw InvalidArgument("calibration samples differ in dimension");
  if (dim > 1 && samples.size() < dim + 1) throw InvalidArgument("multivariate calibration needs n >= dim + 1");
  const double n = static_cast<double>(samples.size());
  NullCalibration c;
  c.n_calibration = samples.size();
  c.mean.assign(dim, 0.0);
  for (const auto& x : samples)
    for (std::size_t i = 0; i < dim; ++i) c.mean[i] += x[i];
  for (auto& m : c.mean) m /= n;
  c.covariance.assign(dim, std::vector<double>(dim, 0.0));
  for (const auto& x : samples)
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j <= i; ++j) c.covariance[i][j] += (x[i] - c.mean[i]) * (x[j] - c.mean[j]);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      c.covariance[i][j] /= n - 1.0;
      c.covariance[j][i] = c.covariance[i][j];
    }
  c.sd.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) c.sd[i] = std::sqrt(c.covariance[i][i]);
  if (dim == 1) {
    c.cholesky = {{c.sd[0]}};
    return c;
  }
  c.cholesky.assign(dim, std::vector<double>(dim, 0.0));
  double scale = 0.0;
  for (std::size_t i = 0; i < dim; ++i) scale = std::max(scale, c.covariance[i][i]);
  for (std::size_t j = 0; j < dim; ++j) {
    double d = c.covariance[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= c.cholesky[j][k] * c.cholesky[j][k];
    if (!(d > 1e-12 * scale) || scale == 0.0)
      throw NumericalError("singular null covariance; increase n_calibration or drop a redundant coordinate");
    c.cholesky[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < dim; ++i) {
      double s = c.covariance[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= c.cholesky[i][k] * c.cholesky[j][k];
      c.cholesky[i][j] = s / c.cholesky[j][j];
    }
  }
  return c;
}

inline NullCalibration calibrate_null(const Sampler& sampler, const BifiltrationPlan& plan, const StatisticSpec& spec,
                                      std::size_t n_calibration, std::uint64_t seed,
                                      const Executor& exec = run_sequential) {
  auto v = simulate_statistics(sampler, plan, std::span<const StatisticSpec>(&spec, 1), n_calibration, seed,
                               kCalibrationStream, exec);
  return fit_calibration(statistic_column(v, 0));
}

/// z_{1 - alpha/2}.
inline double normal_critical_value(double alpha) {
  if (!(alpha > 0.0) || !(alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

/// chi^2_{dim, 1 - alpha}; in dimension 1 the squared normal critical value,
/// so both test paths decide identically.
inline double chi_square_threshold(std::size_t dim, double alpha) {
  if (dim == 0) throw InvalidArgument("dimension must be >= 1");
  if (dim == 1) {
    double z = normal_critical_value(alpha);
    return z * z;
  }
  if (!(alpha > 0.0) || !(alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  if (alpha == 1.0) return 0.0;
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(static_cast<double>(dim)), 1.0 - alpha);
}

/// ||L^{-1}(x - mean)||^2 by forward substitution.
inline double mahalanobis_squared(const NullCalibration& c, std::span<const double> x) {
  const std::size_t dim = c.dimension();
  if (x.size() != dim) throw InvalidArgument("statistic dimension does not match calibration");
  std::vector<double> y(dim);
  double total = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    double s = x[i] - c.mean[i];
    for (std::size_t k = 0; k < i; ++k) s -= c.cholesky[i][k] * y[k];
    y[i] = s / c.cholesky[i][i];
    total += y[i] * y[i];
  }
  return total;
}

/// (x - mean) / sd for a scalar statistic; a degenerate null (sd 0) maps
/// every other value to +-inf.
inline double standardize(const NullCalibration& c, double x) {
  double d = x - c.mean.at(0);
  if (c.sd[0] == 0.0) return d == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d);
  return d / c.sd[0];
}

/// Univariate: |z| >= z_{1-alpha/2}. Multivariate: squared decorrelated
/// norm >= chi^2_{dim, 1-alpha}.
inline bool rejects(const NullCalibration& c, std::span<const double> x, double alpha) {
  if (c.dimension() == 1) {
    if (x.size() != 1) throw InvalidArgument("statistic dimension does not match calibration");
    return std::fabs(standardize(c, x[0])) >= normal_critical_value(alpha);
  }
  return mahalanobis_squared(c, x) >= chi_square_threshold(c.dimension(), alpha);
}

struct ModelOutcome {
  std::string model;
  std::vector<std::vector<double>> values;
  std::size_t rejections = 0;

  std::size_t n_test() const noexcept { return values.size(); }
  double rejection_rate() const noexcept { return values.empty() ? 0.0 : static_cast<double>(rejections) / values.size(); }
  /// Binomial standard error sqrt(p(1-p)/n).
  double std_error() const noexcept {
    if (values.empty()) return 0.0;
    double p = rejection_rate();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(values.size()));
  }
};

struct TestResult {
  double alpha = 0.05;
  std::size_t dimension = 1;
  /// [mean - z sd, mean + z sd] for scalar statistics.
  std::optional<std::pair<double, double>> acceptance_interval;
  /// chi-square threshold on the squared decorrelated norm.
  double threshold = 0.0;
  std::vector<ModelOutcome> outcomes;
};

inline TestResult make_test_result(const NullCalibration& c, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  TestResult r;
  r.alpha = alpha;
  r.dimension = c.dimension();
  r.threshold = chi_square_threshold(c.dimension(), alpha);
  if (c.dimension() == 1) {
    double z = normal_critical_value(alpha);
    r.acceptance_interval = std::make_pair(c.mean[0] - z * c.sd[0], c.mean[0] + z * c.sd[0]);
  }
  return r;
}

inline ModelOutcome score_model(const NullCalibration& c, std::string model, std::vector<std::vector<double>> values,
                                double alpha) {
  ModelOutcome m{std::move(model), std::move(values), 0};
  for (const auto& x : m.values)
    if (rejects(c, x, alpha)) ++m.rejections;
  return m;
}

/// Rejection rate of the calibrated test for each sampler.
inline TestResult run_gof_test(const NullCalibration& c, std::span<const Sampler> samplers, const BifiltrationPlan& plan,
                               const StatisticSpec& spec, std::size_t n_test, double alpha, std::uint64_t seed,
                               const Executor& exec = run_sequential) {
  TestResult r = make_test_result(c, alpha);
  for (std::size_t s = 0; s < samplers.size(); ++s) {
    auto v = simulate_statistics(samplers[s], plan, std::span<const StatisticSpec>(&spec, 1), n_test, seed,
                                 test_stream(s), exec);
    r.outcomes.push_back(score_model(c, samplers[s].name, statistic_column(v, 0), alpha));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Normality diagnostics

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// sup |F_n - F| for a continuous F.
inline double ks_statistic(std::vector<double> values, const std::function<double(double)>& cdf) {
  if (values.empty()) throw InvalidArgument("KS statistic needs a nonempty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double f = cdf(values[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Two-sample sup |F_n - G_m|.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("KS statistic needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// P(K > lambda) for the Kolmogorov distribution.
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Asymptotic p-value of a one-sample KS distance with fully specified F
/// (Stephens' small-sample adjustment).
inline double ks_pvalue(double d, std::size_t n) {
  double rn = std::sqrt(static_cast<double>(n));
  return kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d);
}

/// Critical KS distance when mean and sd are estimated from the sample
/// (Lilliefors, large-n constants); stricter than the plain Kolmogorov bound.
inline double lilliefors_critical_value(std::size_t n, double alpha) {
  if (n < 30) throw InvalidArgument("Lilliefors approximation needs n >= 30");
  double c;
  if (alpha == 0.01) c = 1.031;
  else if (alpha == 0.05) c = 0.886;
  else if (alpha == 0.10) c = 0.805;
  else throw InvalidArgument("Lilliefors critical values tabulated for alpha in {0.01, 0.05, 0.10}");
  return c / std::sqrt(static_cast<double>(n));
}

struct NormalityReport {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> standardized;                  // sorted
  std::vector<std::pair<double, double>> qq;         // (normal quantile, standardized value)
  double ks_distance = 0.0;                          // vs N(mean, sd)
};

inline NormalityReport normality_report(const std::vector<double>& values) {
  if (values.size() < 20) throw InvalidArgument("normality report needs at least 20 values");
  NormalityReport r;
  const double n = static_cast<double>(values.size());
  for (double v : values) r.mean += v;
  r.mean /= n;
  for (double v : values) r.sd += (v - r.mean) * (v - r.mean);
  r.sd = std::sqrt(r.sd / (n - 1.0));
  if (!(r.sd > 0.0)) throw NumericalError("zero variance: sample is constant");
  r.standardized.reserve(values.size());
  for (double v : values) r.standardized.push_back((v - r.mean) / r.sd);
  std::sort(r.standardized.begin(), r.standardized.end());
  r.qq.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    r.qq.emplace_back(normal_quantile((static_cast<double>(i) + 0.5) / n), r.standardized[i]);
  r.ks_distance = ks_statistic(r.standardized, normal_cdf);
  return r;
}

}  // namespace mpbetti
