#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "mpbetti/errors.hpp"
#include "mpbetti/pointproc.hpp"

namespace mpbetti {

/// Strictly increasing vertex indices.
using VertexList = std::vector<std::uint32_t>;

struct VertexListHash {
  std::size_t operator()(const VertexList& v) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto x : v) h = mix64(h ^ x);
    return static_cast<std::size_t>(h);
  }
};

/// A candidate q-simplex over cloud indices, canonical (sorted) form.
struct SimplexCandidate {
  VertexList vertices;

  int dim() const noexcept { return static_cast<int>(vertices.size()) - 1; }
};

/// Simplex with its filtration time.
struct TimedSimplex {
  VertexList vertices;
  double time = 0.0;

  int dim() const noexcept { return static_cast<int>(vertices.size()) - 1; }
};

inline bool dim_lex_less(const VertexList& a, const VertexList& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

// ---------------------------------------------------------------------------
// Smallest enclosing ball

struct Ball {
  Point center{};
  double radius2 = -1.0;  // < 0: empty ball
};

namespace detail {

inline constexpr double kInBallTol = 1e-12;

inline bool in_ball(const Ball& b, const Point& p) noexcept {
  return squared_distance(b.center, p) <= b.radius2 * (1.0 + kInBallTol);
}

/// Smallest ball whose boundary passes through all `support` points: the
/// circumsphere within their affine hull. Affinely dependent supports fall
/// back to the smallest circumsphere of a subset enclosing all of them.
inline Ball support_ball(std::span<const Point> support) {
  Ball b;
  const std::size_t k = support.size();
  if (k == 0) return b;
  if (k == 1) {
    b.center = support[0];
    b.radius2 = 0.0;
    return b;
  }
  const Point& p0 = support[0];
  const std::size_t m = k - 1;
  std::array<Point, kMaxDimension + 1> v{};
  double scale = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (int c = 0; c < kMaxDimension; ++c) v[i][c] = support[i + 1][c] - p0[c];
    scale = std::max(scale, squared_distance(support[i + 1], p0));
  }
  if (m == 1) {
    for (int c = 0; c < kMaxDimension; ++c) b.center[c] = p0[c] + 0.5 * v[0][c];
    b.radius2 = std::max(squared_distance(b.center, p0), squared_distance(b.center, support[1]));
    return b;
  }
  // Gram system A lambda = rhs with A_ij = 2 v_i.v_j, rhs_i = |v_i|^2.
  std::array<std::array<double, kMaxDimension + 2>, kMaxDimension + 1> a{};
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (int c = 0; c < kMaxDimension; ++c) s += v[i][c] * v[j][c];
      a[i][j] = 2.0 * s;
    }
    double s = 0.0;
    for (int c = 0; c < kMaxDimension; ++c) s += v[i][c] * v[i][c];
    a[i][m] = s;
  }
  bool singular = scale == 0.0;
  for (std::size_t col = 0; col < m && !singular; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) <= 1e-12 * scale) {
      singular = true;
      break;
    }
    std::swap(a[piv], a[col]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= m; ++c) a[r][c] -= f * a[col][c];
    }
  }
  if (!singular) {
    b.center = p0;
    for (std::size_t i = 0; i < m; ++i) {
      double lambda = a[i][m] / a[i][i];
      for (int c = 0; c < kMaxDimension; ++c) b.center[c] += lambda * v[i][c];
    }
    b.radius2 = 0.0;
    for (const auto& p : support) b.radius2 = std::max(b.radius2, squared_distance(b.center, p));
    return b;
  }
  Ball best;
  std::array<Point, kMaxDimension + 1> sub{};
  for (std::size_t skip = 0; skip < k; ++skip) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (i != skip) sub[n++] = support[i];
    Ball cand = support_ball(std::span<const Point>(sub.data(), n));
    bool encloses = true;
    for (const auto& p : support) encloses = encloses && in_ball(cand, p);
    if (encloses && (best.radius2 < 0.0 || cand.radius2 < best.radius2)) best = cand;
  }
  return best;
}

/// Welzl's move-to-front recursion over pts[0, end).
inline void mtf_ball(std::vector<Point>& pts, std::size_t end, std::vector<Point>& support, int dim, Ball& ball) {
  ball = support_ball(support);
  if (static_cast<int>(support.size()) == dim + 1) return;
  for (std::size_t i = 0; i < end; ++i) {
    if (in_ball(ball, pts[i])) continue;
    support.push_back(pts[i]);
    mtf_ball(pts, i, support, dim, ball);
    support.pop_back();
    std::rotate(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(i), pts.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  }
}

}  // namespace detail

/// Smallest enclosing ball of `points` living in the first `dim` coordinates.
inline Ball min_enclosing_ball(std::span<const Point> points, int dim = kMaxDimension) {
  if (points.empty()) throw InvalidArgument("min_enclosing_ball of an empty point set");
  std::vector<Point> pts(points.begin(), points.end());
  std::vector<Point> support;
  support.reserve(static_cast<std::size_t>(dim) + 1);
  Ball ball;
  detail::mtf_ball(pts, pts.size(), support, dim, ball);
  ball.radius2 = 0.0;
  for (const auto& p : points) ball.radius2 = std::max(ball.radius2, squared_distance(ball.center, p));
  return ball;
}

/// Cech filtration time: the least t at which the closed t-balls around the
/// points share a common point, i.e. the smallest enclosing ball radius.
inline double cech_time(std::span<const Point> points, int dim = kMaxDimension) {
  if (points.empty()) throw InvalidArgument("cech_time of an empty point set");
  if (points.size() == 1) return 0.0;
  if (points.size() == 2) return 0.5 * distance(points[0], points[1]);
  return std::sqrt(min_enclosing_ball(points, dim).radius2);
}

inline double cech_time(const MarkedPointCloud& cloud, const VertexList& vertices) {
  std::array<Point, 16> small{};
  std::vector<Point> big;
  std::span<const Point> view;
  if (vertices.size() <= small.size()) {
    for (std::size_t i = 0; i < vertices.size(); ++i) small[i] = cloud.points[vertices[i]].position;
    view = std::span<const Point>(small.data(), vertices.size());
  } else {
    for (auto v : vertices) big.push_back(cloud.points[v].position);
    view = big;
  }
  return cech_time(view, cloud.window.dimension);
}

// ---------------------------------------------------------------------------
// Uniform grid for fixed-radius neighbor queries

class GridIndex {
public:
  GridIndex(std::span<const Point> points, int dim, double cell_size)
      : dim_(dim), cell_size_(cell_size), points_(points.begin(), points.end()) {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw InvalidArgument("grid cell size must be positive");
    for (std::uint32_t i = 0; i < points_.size(); ++i) buckets_[key(cell_of(points_[i]))].push_back(i);
  }

  double cell_size() const noexcept { return cell_size_; }
  std::size_t bucket_count() const noexcept { return buckets_.size(); }

  /// Indices j != i with |p_j - p_i| <= radius, ascending. Requires radius <= cell_size.
  std::vector<std::uint32_t> neighbors(std::uint32_t i, double radius) const {
    if (radius > cell_size_) throw InvalidArgument("query radius exceeds grid cell size");
    std::vector<std::uint32_t> out;
    const double r2 = radius * radius;
    const auto c = cell_of(points_[i]);
    std::array<long long, kMaxDimension> off{};
    const int span = 3;
    int total = 1;
    for (int d = 0; d < dim_; ++d) total *= span;
    for (int code = 0; code < total; ++code) {
      int rest = code;
      std::array<long long, kMaxDimension> cc = c;
      for (int d = 0; d < dim_; ++d) {
        off[d] = rest % span - 1;
        rest /= span;
        cc[d] += off[d];
      }
      auto it = buckets_.find(key(cc));
      if (it == buckets_.end()) continue;
      for (auto j : it->second)
        if (j != i && squared_distance(points_[i], points_[j]) <= r2) out.push_back(j);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Bucket holding each point; used for invariant checks.
  std::vector<std::uint32_t> bucket_members() const {
    std::vector<std::uint32_t> all;
    for (const auto& [k, v] : buckets_) all.insert(all.end(), v.begin(), v.end());
    std::sort(all.begin(), all.end());
    return all;
  }

private:
  std::array<long long, kMaxDimension> cell_of(const Point& p) const {
    std::array<long long, kMaxDimension> c{};
    for (int d = 0; d < dim_; ++d) c[d] = static_cast<long long>(std::floor(p[d] / cell_size_));
    return c;
  }

  static std::uint64_t key(const std::array<long long, kMaxDimension>& c) {
    std::uint64_t h = 0;
    for (auto x : c) h = mix64(h ^ static_cast<std::uint64_t>(x));
    return h;
  }

  int dim_;
  double cell_size_;
  std::vector<Point> points_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets_;
};

namespace detail {

/// Raises every time to the max over its facets and drops simplices whose
/// facets are missing or whose time exceeds r_max. Input sorted by (dim, lex).
inline void close_filtration(std::vector<TimedSimplex>& simplices, double r_max) {
  std::unordered_map<VertexList, double, VertexListHash> kept;
  kept.reserve(simplices.size() * 2);
  std::vector<TimedSimplex> out;
  out.reserve(simplices.size());
  VertexList facet;
  for (auto& s : simplices) {
    if (s.vertices.size() >= 2) {
      bool ok = true;
      for (std::size_t drop = 0; drop < s.vertices.size() && ok; ++drop) {
        facet.clear();
        for (std::size_t i = 0; i < s.vertices.size(); ++i)
          if (i != drop) facet.push_back(s.vertices[i]);
        auto it = kept.find(facet);
        if (it == kept.end()) ok = false;
        else s.time = std::max(s.time, it->second);
      }
      if (!ok || s.time > r_max) continue;
    }
    kept.emplace(s.vertices, s.time);
    out.push_back(std::move(s));
  }
  simplices = std::move(out);
}

}  // namespace detail

/// All simplices of dimension <= q_max with Cech time <= r_max, sorted by
/// (dimension, vertex list). A simplex at time t has diameter <= 2t, so
/// candidates come from grid neighborhoods of radius 2 r_max.
inline std::vector<TimedSimplex> enumerate_simplices(const MarkedPointCloud& cloud, int q_max, double r_max) {
  if (q_max < 0) throw InvalidArgument("q_max must be >= 0");
  if (!(r_max >= 0.0) || !std::isfinite(r_max)) throw InvalidArgument("r_max must be finite and >= 0");
  std::vector<TimedSimplex> out;
  const std::size_t n = cloud.size();
  if (n == 0) return out;
  const int dim = cloud.window.dimension;
  for (std::uint32_t i = 0; i < n; ++i) out.push_back({{i}, 0.0});
  if (q_max == 0) return out;

  std::vector<Point> pos;
  pos.reserve(n);
  for (const auto& p : cloud.points) pos.push_back(p.position);
  const double reach = 2.0 * r_max * (1.0 + detail::kInBallTol);
  GridIndex grid(pos, dim, std::max(reach, 1e-300));
  std::vector<std::vector<std::uint32_t>> up(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (auto j : grid.neighbors(i, reach))
      if (j > i) up[i].push_back(j);
  }

  std::vector<Point> buf;
  // depth-first clique extension; cand holds common higher neighbors
  auto extend = [&](auto&& self, VertexList& sigma, const std::vector<std::uint32_t>& cand) -> void {
    for (std::size_t ci = 0; ci < cand.size(); ++ci) {
      const std::uint32_t v = cand[ci];
      sigma.push_back(v);
      buf.clear();
      for (auto s : sigma) buf.push_back(pos[s]);
      double t = cech_time(buf, dim);
      if (t <= r_max) {
        out.push_back({sigma, t});
        if (static_cast<int>(sigma.size()) <= q_max) {
          std::vector<std::uint32_t> next;
          const auto& nv = up[v];
          std::set_intersection(cand.begin() + static_cast<std::ptrdiff_t>(ci) + 1, cand.end(), nv.begin(), nv.end(),
                                std::back_inserter(next));
          if (!next.empty()) self(self, sigma, next);
        }
      }
      sigma.pop_back();
    }
  };
  VertexList sigma;
  for (std::uint32_t i = 0; i < n; ++i) {
    sigma.assign(1, i);
    extend(extend, sigma, up[i]);
  }
  std::sort(out.begin(), out.end(), [](const TimedSimplex& a, const TimedSimplex& b) {
    return dim_lex_less(a.vertices, b.vertices);
  });
  detail::close_filtration(out, r_max);
  return out;
}

}  // namespace mpbetti
