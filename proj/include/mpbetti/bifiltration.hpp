#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mpbetti/errors.hpp"
#include "mpbetti/format.hpp"
#include "mpbetti/geometry.hpp"
#include "mpbetti/pointproc.hpp"

namespace mpbetti {

/// Index (r1, r2, k): Cech radius, mark level, cover depth. The k component
/// is ordered in reverse, so a deeper cover comes earlier.
struct Grade {
  double r1 = 0.0;
  double r2 = 0.0;
  int k = 1;

  friend bool operator==(const Grade&, const Grade&) = default;
};

/// Product order with k reversed.
inline bool grade_leq(const Grade& a, const Grade& b) noexcept { return a.r1 <= b.r1 && a.r2 <= b.r2 && a.k >= b.k; }

/// Least upper bound in the product order.
inline Grade grade_join(const Grade& a, const Grade& b) noexcept {
  return {std::max(a.r1, b.r1), std::max(a.r2, b.r2), std::min(a.k, b.k)};
}

/// Vertices index the owning layer's tuple table; appearance grade (r1, r2).
struct BigradedSimplex {
  VertexList vertices;
  double r1 = 0.0;
  double r2 = 0.0;

  int dim() const noexcept { return static_cast<int>(vertices.size()) - 1; }
};

/// One cover level k of a bifiltration, stored one-critically: simplex sigma
/// is in K_(r1, r2) iff sigma.r1 <= r1 and sigma.r2 <= r2.
class CoverLayer {
public:
  CoverLayer() = default;
  CoverLayer(int k, std::vector<VertexList> tuples, std::vector<BigradedSimplex> simplices)
      : k_(k), tuples_(std::move(tuples)), simplices_(std::move(simplices)) {
    std::sort(simplices_.begin(), simplices_.end(),
              [](const BigradedSimplex& a, const BigradedSimplex& b) { return dim_lex_less(a.vertices, b.vertices); });
    index_.reserve(simplices_.size() * 2);
    for (std::size_t i = 0; i < simplices_.size(); ++i) {
      index_.emplace(simplices_[i].vertices, i);
      const auto d = static_cast<std::size_t>(simplices_[i].dim());
      if (dim_end_.size() <= d) dim_end_.resize(d + 1, i);
      dim_end_[d] = i + 1;
    }
    for (std::size_t d = 1; d < dim_end_.size(); ++d) dim_end_[d] = std::max(dim_end_[d], dim_end_[d - 1]);
  }

  int k() const noexcept { return k_; }
  /// Vertex id -> sorted k-subset of cloud indices.
  const std::vector<VertexList>& tuples() const noexcept { return tuples_; }
  const std::vector<BigradedSimplex>& simplices() const noexcept { return simplices_; }
  int max_dim() const noexcept { return static_cast<int>(dim_end_.size()) - 1; }

  /// Simplices of one dimension, contiguous in (dim, lex) order.
  std::pair<std::size_t, std::size_t> dim_range(int q) const noexcept {
    if (q < 0 || q > max_dim()) return {simplices_.size(), simplices_.size()};
    std::size_t lo = q == 0 ? 0 : dim_end_[static_cast<std::size_t>(q) - 1];
    return {lo, dim_end_[static_cast<std::size_t>(q)]};
  }

  std::optional<std::size_t> find(const VertexList& v) const {
    auto it = index_.find(v);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Vertex id of a k-subset; tuples are kept in lexicographic order.
  std::optional<std::uint32_t> tuple_id(const VertexList& t) const {
    auto it = std::lower_bound(tuples_.begin(), tuples_.end(), t);
    if (it == tuples_.end() || *it != t) return std::nullopt;
    return static_cast<std::uint32_t>(it - tuples_.begin());
  }

  bool contains(std::size_t idx, double r1, double r2) const noexcept {
    const auto& s = simplices_[idx];
    return s.r1 <= r1 && s.r2 <= r2;
  }

  /// Indices (ascending) of q-simplices present at (r1, r2).
  std::vector<std::size_t> simplices_at(int q, double r1, double r2) const {
    std::vector<std::size_t> out;
    auto [lo, hi] = dim_range(q);
    for (std::size_t i = lo; i < hi; ++i)
      if (contains(i, r1, r2)) out.push_back(i);
    return out;
  }

  /// Union of the cloud points a simplex refers to.
  VertexList support_points(const BigradedSimplex& s) const {
    VertexList pts;
    for (auto v : s.vertices) pts.insert(pts.end(), tuples_[v].begin(), tuples_[v].end());
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
  }

private:
  int k_ = 1;
  std::vector<VertexList> tuples_;
  std::vector<BigradedSimplex> simplices_;
  std::unordered_map<VertexList, std::size_t, VertexListHash> index_;
  std::vector<std::size_t> dim_end_;
};

/// Graded simplex family over (r1, r2, k), materialized up to r1_max and q_max.
struct Bifiltration {
  int ambient_dim = 2;
  double r1_max = 0.0;
  double mark_max = 0.0;  // T
  int q_max = 0;
  std::vector<CoverLayer> layers;  // ascending k

  bool empty() const noexcept {
    for (const auto& l : layers)
      if (!l.simplices().empty()) return false;
    return true;
  }

  const CoverLayer* find_layer(int k) const noexcept {
    for (const auto& l : layers)
      if (l.k() == k) return &l;
    return nullptr;
  }

  const CoverLayer& layer(int k) const {
    if (auto* l = find_layer(k)) return *l;
    throw InvalidArgument("bifiltration has no cover level " + std::to_string(k));
  }

  /// Adds (or replaces) a layer built on the same cloud and parameters.
  void add_layer(CoverLayer layer) {
    for (auto& l : layers)
      if (l.k() == layer.k()) {
        l = std::move(layer);
        return;
      }
    layers.push_back(std::move(layer));
    std::sort(layers.begin(), layers.end(), [](const CoverLayer& a, const CoverLayer& b) { return a.k() < b.k(); });
  }
};

inline constexpr std::size_t kDefaultSimplexBudget = 2'000'000;

/// Lexicographically smallest k2 members of a sorted k1-subset. Extended
/// vertex-wise, this is the simplicial map Mult_(r, k1) -> Mult_(r', k2).
inline VertexList vertex_map(const VertexList& phi, int k2) {
  if (k2 < 1) throw InvalidArgument("vertex_map target size must be >= 1");
  if (static_cast<std::size_t>(k2) > phi.size()) throw InvalidArgument("vertex_map target size exceeds tuple size");
  return VertexList(phi.begin(), phi.begin() + k2);
}

namespace detail {

inline double max_mark(const MarkedPointCloud& cloud, const VertexList& pts) {
  double m = 0.0;
  for (auto p : pts) m = std::max(m, cloud.points[p].mark);
  return m;
}

inline double cloud_mark_max(const MarkedPointCloud& cloud) {
  double m = 0.0;
  for (const auto& p : cloud.points) m = std::max(m, p.mark);
  return m;
}

inline VertexList merge_sorted(const VertexList& a, const VertexList& b) {
  VertexList out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

/// Multicover layer: vertices are k-subsets with Cech time <= r_max, and
/// {phi_0..phi_p} is a simplex at r iff their union has Cech time <= r.
inline CoverLayer build_cover_layer(const MarkedPointCloud& cloud, int k, int q_max, double r_max, bool graded_by_marks,
                                    std::size_t budget) {
  if (k < 1) throw InvalidArgument("cover level must be >= 1");
  if (q_max < 0) throw InvalidArgument("q_max must be >= 0");
  if (q_max > cloud.window.dimension + 1) throw InvalidArgument("q_max exceeds ambient dimension + 1");
  if (!(r_max >= 0.0) || !std::isfinite(r_max)) throw InvalidArgument("r_max must be finite and >= 0");
  if (cloud.size() < static_cast<std::size_t>(k)) return CoverLayer(k, {}, {});

  const int dim = cloud.window.dimension;
  auto mark_of = [&](const VertexList& pts) { return graded_by_marks ? max_mark(cloud, pts) : 0.0; };

  if (k == 1) {
    auto timed = enumerate_simplices(cloud, q_max, r_max);
    if (timed.size() > budget) throw ResourceLimit("Cech simplex budget exceeded", timed.size());
    std::vector<VertexList> tuples(cloud.size());
    for (std::uint32_t i = 0; i < cloud.size(); ++i) tuples[i] = {i};
    std::vector<BigradedSimplex> simplices;
    simplices.reserve(timed.size());
    for (auto& t : timed) {
      double r2 = mark_of(t.vertices);
      simplices.push_back({std::move(t.vertices), t.time, r2});
    }
    return CoverLayer(1, std::move(tuples), std::move(simplices));
  }

  // vertices: k-subsets are the (k-1)-simplices of the Cech filtration
  auto base = enumerate_simplices(cloud, k - 1, r_max);
  std::vector<VertexList> tuples;
  std::vector<double> tuple_time;
  for (auto& t : base) {
    if (static_cast<int>(t.vertices.size()) == k) {
      tuples.push_back(std::move(t.vertices));
      tuple_time.push_back(t.time);
    }
  }
  base.clear();
  base.shrink_to_fit();
  if (tuples.size() > budget) throw ResourceLimit("multicover vertex budget exceeded", tuples.size());

  std::vector<Point> pos;
  pos.reserve(cloud.size());
  for (const auto& p : cloud.points) pos.push_back(p.position);
  const double reach = 2.0 * r_max * (1.0 + kInBallTol);
  const double reach2 = reach * reach;

  std::unordered_map<VertexList, double, VertexListHash> union_time;
  std::vector<Point> buf;
  auto time_of = [&](const VertexList& pts) {
    auto it = union_time.find(pts);
    if (it != union_time.end()) return it->second;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        if (squared_distance(pos[pts[i]], pos[pts[j]]) > reach2) {
          union_time.emplace(pts, std::numeric_limits<double>::infinity());
          return std::numeric_limits<double>::infinity();
        }
    buf.clear();
    for (auto p : pts) buf.push_back(pos[p]);
    double t = cech_time(buf, dim);
    union_time.emplace(pts, t);
    return t;
  };

  std::vector<TimedSimplex> out;
  out.reserve(tuples.size());
  for (std::uint32_t v = 0; v < tuples.size(); ++v) out.push_back({{v}, tuple_time[v]});

  if (q_max >= 1) {
    // candidate partners of a tuple have their smallest point within reach of its smallest point
    std::vector<std::vector<std::uint32_t>> by_min(cloud.size());
    for (std::uint32_t v = 0; v < tuples.size(); ++v) by_min[tuples[v][0]].push_back(v);
    GridIndex grid(pos, dim, std::max(reach, 1e-300));
    std::vector<std::vector<std::uint32_t>> near(cloud.size());
    for (std::uint32_t i = 0; i < cloud.size(); ++i) {
      near[i] = grid.neighbors(i, reach);
      near[i].insert(std::lower_bound(near[i].begin(), near[i].end(), i), i);
    }

    std::vector<std::vector<std::uint32_t>> up(tuples.size());
    std::size_t edges = 0;
    for (std::uint32_t a = 0; a < tuples.size(); ++a) {
      for (auto j : near[tuples[a][0]]) {
        for (auto b : by_min[j]) {
          if (b <= a) continue;
          double t = time_of(merge_sorted(tuples[a], tuples[b]));
          if (t <= r_max) up[a].push_back(b);
        }
      }
      std::sort(up[a].begin(), up[a].end());
      edges += up[a].size();
      if (tuples.size() + edges > budget) throw ResourceLimit("multicover simplex budget exceeded", tuples.size() + edges);
    }

    auto extend = [&](auto&& self, VertexList& sigma, const VertexList& pts,
                      const std::vector<std::uint32_t>& cand) -> void {
      for (std::size_t ci = 0; ci < cand.size(); ++ci) {
        const std::uint32_t c = cand[ci];
        VertexList u = merge_sorted(pts, tuples[c]);
        double t = time_of(u);
        if (t > r_max) continue;
        sigma.push_back(c);
        out.push_back({sigma, t});
        if (out.size() > budget) throw ResourceLimit("multicover simplex budget exceeded", out.size());
        if (static_cast<int>(sigma.size()) <= q_max) {
          std::vector<std::uint32_t> next;
          const auto& nc = up[c];
          std::set_intersection(cand.begin() + static_cast<std::ptrdiff_t>(ci) + 1, cand.end(), nc.begin(), nc.end(),
                                std::back_inserter(next));
          if (!next.empty()) self(self, sigma, u, next);
        }
        sigma.pop_back();
      }
    };
    VertexList sigma;
    for (std::uint32_t a = 0; a < tuples.size(); ++a) {
      sigma.assign(1, a);
      extend(extend, sigma, tuples[a], up[a]);
    }
  }

  std::sort(out.begin(), out.end(),
            [](const TimedSimplex& x, const TimedSimplex& y) { return dim_lex_less(x.vertices, y.vertices); });
  close_filtration(out, r_max);

  std::vector<BigradedSimplex> simplices;
  simplices.reserve(out.size());
  CoverLayer probe(k, tuples, {});
  for (auto& t : out) {
    BigradedSimplex s{std::move(t.vertices), t.time, 0.0};
    if (graded_by_marks) s.r2 = max_mark(cloud, probe.support_points(s));
    simplices.push_back(std::move(s));
  }
  return CoverLayer(k, std::move(tuples), std::move(simplices));
}

inline Bifiltration single_layer(const MarkedPointCloud& cloud, int q_max, double r1_max, CoverLayer layer) {
  Bifiltration b;
  b.ambient_dim = cloud.window.dimension;
  b.r1_max = r1_max;
  b.mark_max = cloud_mark_max(cloud);
  b.q_max = q_max;
  b.layers.push_back(std::move(layer));
  return b;
}

}  // namespace detail

/// Cech complexes on the points with mark <= r2, graded (Cech time, max mark).
inline Bifiltration build_marked_cech(const MarkedPointCloud& cloud, int q_max, double r1_max,
                                      std::size_t budget = kDefaultSimplexBudget) {
  return detail::single_layer(cloud, q_max, r1_max, detail::build_cover_layer(cloud, 1, q_max, r1_max, true, budget));
}

/// Fixed-k layer of the multicover bifiltration; marks are ignored (r2 = 0).
inline Bifiltration build_multicover(const MarkedPointCloud& cloud, int k, int q_max, double r_max,
                                     std::size_t budget = kDefaultSimplexBudget) {
  return detail::single_layer(cloud, q_max, r_max, detail::build_cover_layer(cloud, k, q_max, r_max, false, budget));
}

/// Fixed-k layer of the multicover construction on the mark sublevel sets;
/// r2 is the largest mark among all points referenced by the simplex.
inline Bifiltration build_combined(const MarkedPointCloud& cloud, int k, int q_max, double r1_max,
                                   std::size_t budget = kDefaultSimplexBudget) {
  return detail::single_layer(cloud, q_max, r1_max, detail::build_cover_layer(cloud, k, q_max, r1_max, true, budget));
}

/// Combined bifiltration with every cover level in `levels`.
inline Bifiltration build_combined_levels(const MarkedPointCloud& cloud, std::span<const int> levels, int q_max,
                                          double r1_max, std::size_t budget = kDefaultSimplexBudget) {
  Bifiltration b = detail::single_layer(cloud, q_max, r1_max, CoverLayer());
  b.layers.clear();
  for (int k : levels) b.add_layer(detail::build_cover_layer(cloud, k, q_max, r1_max, true, budget));
  return b;
}

// ---------------------------------------------------------------------------
// One-parameter slices

/// Fix r1, filter by mark level.
struct MarkAxis {
  double fixed_r1 = 0.0;
};

/// Fix r2, filter by Cech radius.
struct CechAxis {
  double fixed_r2 = std::numeric_limits<double>::infinity();
};

/// sigma enters at a * r1(sigma) + b * r2(sigma).
struct LinearSlice {
  double a = 1.0;
  double b = 0.0;
};

using SliceDirection = std::variant<MarkAxis, CechAxis, LinearSlice>;

inline void validate(const SliceDirection& dir) {
  if (const auto* l = std::get_if<LinearSlice>(&dir)) {
    if (!std::isfinite(l->a) || !std::isfinite(l->b) || l->a < 0.0 || l->b < 0.0 || (l->a == 0.0 && l->b == 0.0))
      throw InvalidArgument("linear slice needs finite a, b >= 0, not both zero");
  } else if (const auto* m = std::get_if<MarkAxis>(&dir)) {
    if (!(m->fixed_r1 >= 0.0)) throw InvalidArgument("mark-axis slice needs fixed r1 >= 0");
  } else if (!(std::get<CechAxis>(dir).fixed_r2 >= 0.0)) {
    throw InvalidArgument("cech-axis slice needs fixed r2 >= 0");
  }
}

inline std::string describe(const SliceDirection& dir) {
  if (const auto* l = std::get_if<LinearSlice>(&dir)) return "linear(" + format_real(l->a) + "," + format_real(l->b) + ")";
  if (const auto* m = std::get_if<MarkAxis>(&dir)) return "mark(r1=" + format_real(m->fixed_r1) + ")";
  return "cech(r2=" + format_real(std::get<CechAxis>(dir).fixed_r2) + ")";
}

struct FilteredSimplex {
  VertexList vertices;
  double value = 0.0;

  int dim() const noexcept { return static_cast<int>(vertices.size()) - 1; }
};

/// One-parameter filtration ordered by (value, dim, lex); faces precede cofaces.
struct SlicedFiltration {
  std::vector<FilteredSimplex> simplices;
  SliceDirection direction;
  int k = 1;
};

/// Largest slice value at which the sliced sublevel set is complete given the
/// materialized r1 range.
inline double slice_value_cap(const Bifiltration& bf, const SliceDirection& dir) {
  if (const auto* l = std::get_if<LinearSlice>(&dir)) return l->a > 0.0 ? l->a * bf.r1_max : l->b * bf.mark_max;
  if (std::holds_alternative<MarkAxis>(dir)) return bf.mark_max;
  return bf.r1_max;
}

inline SlicedFiltration slice(const Bifiltration& bf, int k, const SliceDirection& dir) {
  validate(dir);
  const CoverLayer& layer = bf.layer(k);
  if (const auto* m = std::get_if<MarkAxis>(&dir); m && m->fixed_r1 > bf.r1_max)
    throw InvalidArgument("mark-axis slice fixes r1 beyond the materialized range");
  SlicedFiltration out{{}, dir, k};
  out.simplices.reserve(layer.simplices().size());
  for (const auto& s : layer.simplices()) {
    double value;
    if (const auto* l = std::get_if<LinearSlice>(&dir)) {
      value = l->a * s.r1 + l->b * s.r2;
    } else if (const auto* m = std::get_if<MarkAxis>(&dir)) {
      if (s.r1 > m->fixed_r1) continue;
      value = s.r2;
    } else {
      if (s.r2 > std::get<CechAxis>(dir).fixed_r2) continue;
      value = s.r1;
    }
    out.simplices.push_back({s.vertices, value});
  }
  std::sort(out.simplices.begin(), out.simplices.end(), [](const FilteredSimplex& a, const FilteredSimplex& b) {
    if (a.value != b.value) return a.value < b.value;
    return dim_lex_less(a.vertices, b.vertices);
  });
  return out;
}

inline SlicedFiltration slice(const Bifiltration& bf, const SliceDirection& dir) {
  if (bf.layers.size() != 1) throw InvalidArgument("slice needs an explicit cover level for multi-layer bifiltrations");
  return slice(bf, bf.layers.front().k(), dir);
}

/// CSV: dim,vertices,r1,r2,k. Vertices are ';'-separated; a k-tuple vertex
/// prints its cloud indices joined by '+'.
inline void write_bifiltration_csv(std::ostream& os, const Bifiltration& bf) {
  os << "dim,vertices,r1,r2,k\n";
  for (const auto& layer : bf.layers) {
    for (const auto& s : layer.simplices()) {
      os << s.dim() << ',';
      for (std::size_t i = 0; i < s.vertices.size(); ++i) {
        if (i) os << ';';
        const auto& t = layer.tuples()[s.vertices[i]];
        for (std::size_t j = 0; j < t.size(); ++j) os << (j ? "+" : "") << t[j];
      }
      os << ',' << format_real(s.r1) << ',' << format_real(s.r2) << ',' << layer.k() << '\n';
    }
  }
}

}  // namespace mpbetti
