#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mpbetti/errors.hpp"
#include "mpbetti/format.hpp"
#include "mpbetti/random.hpp"

namespace mpbetti {

inline constexpr int kMaxDimension = 3;

/// Window coordinates; components beyond the window dimension stay 0.
using Point = std::array<double, kMaxDimension>;

inline double squared_distance(const Point& a, const Point& b) noexcept {
  double s = 0.0;
  for (int i = 0; i < kMaxDimension; ++i) {
    double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

inline double distance(const Point& a, const Point& b) noexcept { return std::sqrt(squared_distance(a, b)); }

/// Sampling window [0, side]^dimension.
struct WindowSpec {
  int dimension = 2;
  double side = 1.0;

  void validate() const {
    if (dimension < 1 || dimension > kMaxDimension)
      throw InvalidArgument("window dimension must be in 1.." + std::to_string(kMaxDimension));
    if (!(side > 0.0) || !std::isfinite(side)) throw InvalidArgument("window side must be positive and finite");
  }

  double volume() const { return std::pow(side, dimension); }

  bool contains(const Point& p) const noexcept {
    for (int i = 0; i < dimension; ++i)
      if (p[i] < 0.0 || p[i] > side) return false;
    for (int i = dimension; i < kMaxDimension; ++i)
      if (p[i] != 0.0) return false;
    return true;
  }

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct MarkedPoint {
  Point position{};
  double mark = 0.0;

  friend bool operator==(const MarkedPoint&, const MarkedPoint&) = default;
};

struct SeedProvenance {
  std::uint64_t master = 0;
  std::uint64_t replication = 0;

  friend bool operator==(const SeedProvenance&, const SeedProvenance&) = default;
};

/// Points in generation order.
struct MarkedPointCloud {
  WindowSpec window;
  std::vector<MarkedPoint> points;
  SeedProvenance seed;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  friend bool operator==(const MarkedPointCloud&, const MarkedPointCloud&) = default;
};

// ---------------------------------------------------------------------------
// Mark laws

struct UniformMarks {
  double low = 0.0;
  double high = 1.0;
};

struct DegenerateMarks {
  double value = 0.0;
};

using MarkLaw = std::variant<UniformMarks, DegenerateMarks>;

inline void validate(const MarkLaw& law) {
  if (const auto* u = std::get_if<UniformMarks>(&law)) {
    if (!std::isfinite(u->low) || !std::isfinite(u->high) || u->low < 0.0 || u->high < u->low)
      throw InvalidArgument("uniform mark law needs 0 <= low <= high < inf");
  } else {
    double c = std::get<DegenerateMarks>(law).value;
    if (!std::isfinite(c) || c < 0.0) throw InvalidArgument("degenerate mark must be finite and >= 0");
  }
}

/// Upper end T of the mark range.
inline double mark_upper(const MarkLaw& law) {
  if (const auto* u = std::get_if<UniformMarks>(&law)) return u->high;
  return std::get<DegenerateMarks>(law).value;
}

// ---------------------------------------------------------------------------
// Process specifications

struct PoissonSpec {
  double intensity = 1.0;
};

struct MaternClusterSpec {
  double parent_intensity = 1.0;
  double mean_offspring = 1.0;
  double cluster_radius = 1.0;
};

/// Strauss density beta^n gamma^(#R-close pairs). Unset chain lengths default
/// to 10 * ceil(beta * |W|) birth-death proposals each.
struct StraussSpec {
  double beta = 1.0;
  double gamma = 1.0;
  double interaction_radius = 1.0;
  std::optional<std::size_t> sweeps;
  std::optional<std::size_t> burn_in;
};

/// Each of boxes_per_side^d congruent boxes gets 0, 1 or 2 uniform points.
struct CellSpec {
  int boxes_per_side = 1;
  std::array<double, 3> probs{1.0, 0.0, 0.0};
};

using ProcessSpec = std::variant<PoissonSpec, MaternClusterSpec, StraussSpec, CellSpec>;

inline std::size_t default_strauss_chain(const WindowSpec& w, const StraussSpec& s) {
  return 10 * static_cast<std::size_t>(std::ceil(s.beta * w.volume()));
}

namespace detail {

inline void require_finite_nonneg(double v, const char* what) {
  if (!std::isfinite(v) || v < 0.0) throw InvalidArgument(std::string(what) + " must be finite and >= 0");
}

inline void require_positive(double v, const char* what) {
  if (!std::isfinite(v) || !(v > 0.0)) throw InvalidArgument(std::string(what) + " must be finite and > 0");
}

inline std::size_t draw_poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  std::poisson_distribution<std::size_t> dist(mean);
  return dist(rng);
}

inline Point uniform_in_box(Rng& rng, int dim, const Point& lo, double side) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Point p{};
  for (int i = 0; i < dim; ++i) p[i] = lo[i] + side * u(rng);
  return p;
}

inline Point uniform_in_ball(Rng& rng, int dim, const Point& center, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    Point off{};
    double r2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      off[i] = u(rng);
      r2 += off[i] * off[i];
    }
    if (r2 <= 1.0) {
      Point p = center;
      for (int i = 0; i < dim; ++i) p[i] += radius * off[i];
      return p;
    }
  }
}

inline MarkedPointCloud unmarked(const WindowSpec& w, std::vector<Point> positions, std::uint64_t seed) {
  MarkedPointCloud cloud;
  cloud.window = w;
  cloud.seed = {seed, 0};
  cloud.points.reserve(positions.size());
  for (const auto& p : positions) cloud.points.push_back({p, 0.0});
  return cloud;
}

}  // namespace detail

/// Replaces every mark by an iid draw from `law`; positions are untouched.
inline MarkedPointCloud attach_marks(MarkedPointCloud cloud, const MarkLaw& law, std::uint64_t seed) {
  validate(law);
  Rng rng(derive_seed(seed, Stream::marks));
  if (const auto* u = std::get_if<UniformMarks>(&law)) {
    std::uniform_real_distribution<double> dist(u->low, u->high);
    for (auto& p : cloud.points) p.mark = u->low == u->high ? u->low : dist(rng);
  } else {
    for (auto& p : cloud.points) p.mark = std::get<DegenerateMarks>(law).value;
  }
  return cloud;
}

inline MarkedPointCloud gen_poisson(const WindowSpec& window, double intensity, const MarkLaw& mark_law,
                                    std::uint64_t seed) {
  window.validate();
  detail::require_finite_nonneg(intensity, "intensity");
  Rng rng(derive_seed(seed, Stream::positions));
  std::size_t n = detail::draw_poisson(rng, intensity * window.volume());
  std::vector<Point> pos;
  pos.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pos.push_back(detail::uniform_in_box(rng, window.dimension, Point{}, window.side));
  return attach_marks(detail::unmarked(window, std::move(pos), seed), mark_law, seed);
}

/// Parents live in the window dilated by the cluster radius so that the
/// retained children form a stationary pattern inside the window.
inline MarkedPointCloud gen_matern(const WindowSpec& window, const MaternClusterSpec& spec, const MarkLaw& mark_law,
                                   std::uint64_t seed) {
  window.validate();
  detail::require_finite_nonneg(spec.parent_intensity, "parent intensity");
  detail::require_finite_nonneg(spec.mean_offspring, "mean offspring");
  detail::require_positive(spec.cluster_radius, "cluster radius");
  Rng rng(derive_seed(seed, Stream::positions));
  const double R = spec.cluster_radius;
  const double big_side = window.side + 2.0 * R;
  Point lo{};
  for (int i = 0; i < window.dimension; ++i) lo[i] = -R;
  std::size_t parents = detail::draw_poisson(rng, spec.parent_intensity * std::pow(big_side, window.dimension));
  std::vector<Point> pos;
  for (std::size_t p = 0; p < parents; ++p) {
    Point parent = detail::uniform_in_box(rng, window.dimension, lo, big_side);
    std::size_t children = detail::draw_poisson(rng, spec.mean_offspring);
    for (std::size_t c = 0; c < children; ++c) {
      Point child = detail::uniform_in_ball(rng, window.dimension, parent, R);
      if (window.contains(child)) pos.push_back(child);
    }
  }
  return attach_marks(detail::unmarked(window, std::move(pos), seed), mark_law, seed);
}

/// Birth-death Metropolis-Hastings from the empty configuration, equal birth
/// and death proposal probability. Approximate sampler: the output is the
/// state after burn_in + sweeps proposals.
inline MarkedPointCloud gen_strauss(const WindowSpec& window, const StraussSpec& spec, const MarkLaw& mark_law,
                                    std::uint64_t seed) {
  window.validate();
  detail::require_positive(spec.beta, "beta");
  detail::require_positive(spec.interaction_radius, "interaction radius");
  if (!std::isfinite(spec.gamma) || !(spec.gamma > 0.0) || spec.gamma > 1.0)
    throw InvalidArgument("strauss gamma must lie in (0, 1]");
  const std::size_t sweeps = spec.sweeps.value_or(default_strauss_chain(window, spec));
  const std::size_t burn_in = spec.burn_in.value_or(default_strauss_chain(window, spec));
  if (sweeps < 1) throw InvalidArgument("strauss sweeps must be >= 1");

  Rng rng(derive_seed(seed, Stream::positions));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r2 = spec.interaction_radius * spec.interaction_radius;
  const double beta_vol = spec.beta * window.volume();
  const double log_gamma = std::log(spec.gamma);

  std::vector<Point> state;
  auto close_count = [&](const Point& u, std::size_t skip) {
    std::size_t t = 0;
    for (std::size_t i = 0; i < state.size(); ++i)
      if (i != skip && squared_distance(state[i], u) <= r2) ++t;
    return t;
  };

  const std::size_t total = burn_in + sweeps;
  for (std::size_t step = 0; step < total; ++step) {
    if (unit(rng) < 0.5) {
      Point u = detail::uniform_in_box(rng, window.dimension, Point{}, window.side);
      double t = spec.gamma == 1.0 ? 0.0 : static_cast<double>(close_count(u, state.size()));
      double ratio = beta_vol * std::exp(t * log_gamma) / static_cast<double>(state.size() + 1);
      if (unit(rng) < ratio) state.push_back(u);
    } else {
      if (state.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, state.size() - 1);
      std::size_t idx = pick(rng);
      double t = spec.gamma == 1.0 ? 0.0 : static_cast<double>(close_count(state[idx], idx));
      double ratio = static_cast<double>(state.size()) / (beta_vol * std::exp(t * log_gamma));
      if (unit(rng) < ratio) {
        state[idx] = state.back();
        state.pop_back();
      }
    }
  }
  return attach_marks(detail::unmarked(window, std::move(state), seed), mark_law, seed);
}

inline MarkedPointCloud gen_cell(const WindowSpec& window, const CellSpec& spec, const MarkLaw& mark_law,
                                 std::uint64_t seed) {
  window.validate();
  if (spec.boxes_per_side < 1) throw InvalidArgument("boxes per side must be >= 1");
  double total = 0.0;
  for (double p : spec.probs) {
    if (!std::isfinite(p) || p < 0.0) throw InvalidArgument("cell probabilities must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("cell probabilities must sum to 1");

  Rng rng(derive_seed(seed, Stream::positions));
  std::discrete_distribution<int> count_dist(spec.probs.begin(), spec.probs.end());
  const double box = window.side / spec.boxes_per_side;
  std::size_t boxes = 1;
  for (int i = 0; i < window.dimension; ++i) boxes *= static_cast<std::size_t>(spec.boxes_per_side);

  std::vector<Point> pos;
  for (std::size_t b = 0; b < boxes; ++b) {
    Point lo{};
    std::size_t rest = b;
    for (int i = 0; i < window.dimension; ++i) {
      lo[i] = box * static_cast<double>(rest % spec.boxes_per_side);
      rest /= spec.boxes_per_side;
    }
    int n = count_dist(rng);
    for (int j = 0; j < n; ++j) {
      Point p = detail::uniform_in_box(rng, window.dimension, lo, box);
      for (int i = 0; i < window.dimension; ++i) p[i] = std::min(p[i], window.side);
      pos.push_back(p);
    }
  }
  return attach_marks(detail::unmarked(window, std::move(pos), seed), mark_law, seed);
}

inline MarkedPointCloud generate(const WindowSpec& window, const ProcessSpec& spec, const MarkLaw& mark_law,
                                 std::uint64_t seed) {
  return std::visit(
      [&](const auto& s) -> MarkedPointCloud {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, PoissonSpec>) return gen_poisson(window, s.intensity, mark_law, seed);
        else if constexpr (std::is_same_v<S, MaternClusterSpec>) return gen_matern(window, s, mark_law, seed);
        else if constexpr (std::is_same_v<S, StraussSpec>) return gen_strauss(window, s, mark_law, seed);
        else return gen_cell(window, s, mark_law, seed);
      },
      spec);
}

/// Marking-theorem view: a d-dimensional pattern in [0, n]^d read as a
/// (d-1)-dimensional pattern whose last coordinate becomes the mark in [0, n].
inline MarkedPointCloud last_coordinate_as_mark(const MarkedPointCloud& cloud) {
  const int d = cloud.window.dimension;
  if (d < 2) throw InvalidArgument("need at least two coordinates to split off a mark");
  MarkedPointCloud out;
  out.window = {d - 1, cloud.window.side};
  out.seed = cloud.seed;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    MarkedPoint q;
    for (int i = 0; i < d - 1; ++i) q.position[i] = p.position[i];
    q.mark = p.position[d - 1];
    out.points.push_back(q);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: header x1,...,xd,mark

inline void write_cloud_csv(std::ostream& os, const MarkedPointCloud& cloud) {
  const int d = cloud.window.dimension;
  for (int i = 0; i < d; ++i) os << 'x' << (i + 1) << ',';
  os << "mark\n";
  for (const auto& p : cloud.points) {
    for (int i = 0; i < d; ++i) os << format_real(p.position[i]) << ',';
    os << format_real(p.mark) << '\n';
  }
}

/// Reads a cloud CSV. The window side is `side` when given, else the smallest
/// value covering every coordinate (at least 1).
inline MarkedPointCloud read_cloud_csv(std::istream& is, std::optional<double> side = std::nullopt) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) {
    throw ParseError("missing header", 1);
  }
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split(line, ',');
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1 || d > kMaxDimension || header.back() != "mark") throw ParseError("header must be x1,...,xd,mark", lineno);
  for (int i = 0; i < d; ++i)
    if (header[i] != "x" + std::to_string(i + 1)) throw ParseError("header must be x1,...,xd,mark", lineno);

  MarkedPointCloud cloud;
  double extent = 0.0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (static_cast<int>(fields.size()) != d + 1)
      throw ParseError("expected " + std::to_string(d + 1) + " fields, got " + std::to_string(fields.size()), lineno);
    MarkedPoint p;
    for (int i = 0; i < d; ++i) {
      p.position[i] = parse_real(fields[i], lineno);
      if (p.position[i] < 0.0) throw ParseError("negative coordinate", lineno);
      extent = std::max(extent, p.position[i]);
    }
    p.mark = parse_real(fields[d], lineno);
    if (p.mark < 0.0) throw ParseError("negative mark", lineno);
    cloud.points.push_back(p);
  }
  cloud.window = {d, side.value_or(std::max(1.0, extent))};
  for (const auto& p : cloud.points)
    if (!cloud.window.contains(p.position)) throw ParseError("point outside window", 0);
  return cloud;
}

inline void save_cloud_csv(const std::string& path, const MarkedPointCloud& cloud) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_cloud_csv(os, cloud);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline MarkedPointCloud load_cloud_csv(const std::string& path, std::optional<double> side = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_cloud_csv(is, side);
}

}  // namespace mpbetti
