#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "mpbetti/bifiltration.hpp"
#include "mpbetti/errors.hpp"
#include "mpbetti/format.hpp"
#include "mpbetti/gf2.hpp"

namespace mpbetti {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Complexes and boundary matrices

/// A finite simplicial complex; simplices grouped by dimension, each group in
/// lexicographic order, which fixes the row/column indexing of boundary matrices.
struct SimplicialComplex {
  std::vector<std::vector<VertexList>> by_dim;

  std::size_t count(int q) const noexcept {
    return q >= 0 && static_cast<std::size_t>(q) < by_dim.size() ? by_dim[static_cast<std::size_t>(q)].size() : 0;
  }

  bool empty() const noexcept { return by_dim.empty() || by_dim[0].empty(); }
};

/// K_(r1, r2, k) as an explicit complex.
inline SimplicialComplex complex_at(const Bifiltration& bf, const Grade& g) {
  SimplicialComplex c;
  const CoverLayer* layer = bf.find_layer(g.k);
  if (!layer) return c;
  for (const auto& s : layer->simplices()) {
    if (s.r1 > g.r1 || s.r2 > g.r2) continue;
    auto d = static_cast<std::size_t>(s.dim());
    if (c.by_dim.size() <= d) c.by_dim.resize(d + 1);
    c.by_dim[d].push_back(s.vertices);
  }
  return c;
}

/// Column j lists the (q-1)-faces of the j-th q-simplex.
inline GF2Matrix boundary_matrix(const SimplicialComplex& c, int q,
                                 GF2Matrix::Storage storage = GF2Matrix::Storage::automatic) {
  const std::size_t ncols = c.count(q);
  const std::size_t nrows = q >= 1 ? c.count(q - 1) : 0;
  if (ncols == 0) return GF2Matrix::zero(nrows, 0, storage);
  std::vector<std::vector<std::uint32_t>> cols(ncols);
  if (q >= 1) {
    std::unordered_map<VertexList, std::uint32_t, VertexListHash> row_of;
    const auto& faces = c.by_dim[static_cast<std::size_t>(q) - 1];
    for (std::uint32_t i = 0; i < faces.size(); ++i) row_of.emplace(faces[i], i);
    VertexList facet;
    const auto& simplices = c.by_dim[static_cast<std::size_t>(q)];
    for (std::size_t j = 0; j < ncols; ++j) {
      const auto& s = simplices[j];
      for (std::size_t drop = 0; drop < s.size(); ++drop) {
        facet.clear();
        for (std::size_t i = 0; i < s.size(); ++i)
          if (i != drop) facet.push_back(s[i]);
        auto it = row_of.find(facet);
        if (it == row_of.end()) throw InvalidArgument("complex is not closed under faces");
        cols[j].push_back(it->second);
      }
    }
  }
  return GF2Matrix(nrows, std::move(cols), storage);
}

// ---------------------------------------------------------------------------
// Persistence diagrams

struct PersistencePair {
  double birth = 0.0;
  double death = kInfinity;

  friend bool operator==(const PersistencePair&, const PersistencePair&) = default;
};

/// Pairs sorted by (birth, death).
struct PersistenceDiagram {
  int q = 0;
  std::vector<PersistencePair> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
};

struct PersistenceOptions {
  bool clearing = true;
  bool keep_zero_length = false;
  GF2Matrix::Storage storage = GF2Matrix::Storage::automatic;
};

namespace detail {

/// Boundary columns of the dim-q simplices of a filtration, rows indexing
/// the dim-(q-1) simplices in filtration order.
inline GF2Matrix filtration_boundary(const SlicedFiltration& f, const std::vector<std::size_t>& rows_pos,
                                     const std::vector<std::size_t>& cols_pos, GF2Matrix::Storage storage) {
  std::unordered_map<VertexList, std::uint32_t, VertexListHash> row_of;
  row_of.reserve(rows_pos.size() * 2);
  for (std::uint32_t i = 0; i < rows_pos.size(); ++i) row_of.emplace(f.simplices[rows_pos[i]].vertices, i);
  std::vector<std::vector<std::uint32_t>> cols(cols_pos.size());
  VertexList facet;
  for (std::size_t j = 0; j < cols_pos.size(); ++j) {
    const auto& s = f.simplices[cols_pos[j]].vertices;
    if (s.size() < 2) continue;
    for (std::size_t drop = 0; drop < s.size(); ++drop) {
      facet.clear();
      for (std::size_t i = 0; i < s.size(); ++i)
        if (i != drop) facet.push_back(s[i]);
      auto it = row_of.find(facet);
      if (it == row_of.end()) throw InvalidArgument("filtration lists a simplex before one of its faces");
      cols[j].push_back(it->second);
    }
  }
  return GF2Matrix(rows_pos.size(), std::move(cols), storage);
}

}  // namespace detail

/// Degree-q diagram by standard column reduction. Features never killed get
/// death +inf. Values are filtration values, not indices.
inline PersistenceDiagram persistence_diagram(const SlicedFiltration& f, int q, const PersistenceOptions& opt = {}) {
  if (q < 0) throw InvalidArgument("homology degree must be >= 0");
  PersistenceDiagram dgm{q, {}};
  std::vector<std::size_t> lower, mid, upper;  // positions of dims q-1, q, q+1
  for (std::size_t i = 0; i < f.simplices.size(); ++i) {
    int d = f.simplices[i].dim();
    if (d == q - 1) lower.push_back(i);
    else if (d == q) mid.push_back(i);
    else if (d == q + 1) upper.push_back(i);
  }
  if (mid.empty()) return dgm;

  GF2Matrix top = detail::filtration_boundary(f, mid, upper, opt.storage);
  auto top_lows = reduce_columns(top);
  std::vector<bool> paired(mid.size(), false);
  for (std::size_t j = 0; j < upper.size(); ++j) {
    if (top_lows[j] == GF2Matrix::kNoPivot) continue;
    auto row = static_cast<std::size_t>(top_lows[j]);
    paired[row] = true;
    dgm.pairs.push_back({f.simplices[mid[row]].value, f.simplices[upper[j]].value});
  }

  std::vector<bool> positive(mid.size(), true);
  if (q >= 1) {
    GF2Matrix bottom = detail::filtration_boundary(f, lower, mid, opt.storage);
    // clearing: a q-simplex that kills a (q+1)-class has a zero reduced column
    auto lows = reduce_columns(bottom, opt.clearing ? paired : std::vector<bool>{});
    for (std::size_t i = 0; i < mid.size(); ++i) positive[i] = lows[i] == GF2Matrix::kNoPivot;
  }
  for (std::size_t i = 0; i < mid.size(); ++i)
    if (positive[i] && !paired[i]) dgm.pairs.push_back({f.simplices[mid[i]].value, kInfinity});

  if (!opt.keep_zero_length)
    std::erase_if(dgm.pairs, [](const PersistencePair& p) { return p.death == p.birth; });
  std::sort(dgm.pairs.begin(), dgm.pairs.end(), [](const PersistencePair& a, const PersistencePair& b) {
    return std::tie(a.birth, a.death) < std::tie(b.birth, b.death);
  });
  return dgm;
}

/// Sum of lifetimes min(D, death_cap) - B over pairs born at or before
/// birth_cap. Features born past death_cap contribute nothing.
inline double total_persistence(const PersistenceDiagram& dgm, std::optional<double> birth_cap, double death_cap) {
  if (!std::isfinite(death_cap)) throw InvalidArgument("death cap must be finite");
  const double bcap = birth_cap.value_or(kInfinity);
  double total = 0.0;
  for (const auto& p : dgm.pairs) {
    if (p.birth > bcap) continue;
    total += std::max(0.0, std::min(p.death, death_cap) - p.birth);
  }
  return total;
}

inline void write_diagram_csv(std::ostream& os, const std::vector<PersistenceDiagram>& diagrams) {
  os << "q,birth,death\n";
  for (const auto& d : diagrams)
    for (const auto& p : d.pairs) os << d.q << ',' << format_real(p.birth) << ',' << format_real(p.death) << '\n';
}

inline std::vector<PersistenceDiagram> read_diagram_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line)) throw ParseError("missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "q,birth,death") throw ParseError("header must be q,birth,death", 1);
  std::map<int, PersistenceDiagram> by_q;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 3) throw ParseError("expected 3 fields", lineno);
    int q = static_cast<int>(parse_real(f[0], lineno));
    auto& d = by_q[q];
    d.q = q;
    d.pairs.push_back({parse_real(f[1], lineno), parse_real(f[2], lineno)});
  }
  std::vector<PersistenceDiagram> out;
  for (auto& [q, d] : by_q) out.push_back(std::move(d));
  return out;
}

// ---------------------------------------------------------------------------
// Rank invariant

struct RankQuery {
  Grade b;
  Grade d;
};

enum class RankMethod { direct, binary_filtration };

namespace detail {

inline void check_grade_range(const Bifiltration& bf, const Grade& g) {
  if (g.r1 > bf.r1_max) throw InvalidArgument("grade r1 exceeds the materialized radius " + format_real(bf.r1_max));
}

inline std::optional<VertexList> map_simplex(const CoverLayer& from, const CoverLayer& to, const VertexList& s) {
  if (from.k() == to.k()) return s;
  VertexList img;
  img.reserve(s.size());
  for (auto v : s) {
    VertexList t = vertex_map(from.tuples()[v], to.k());
    auto id = to.tuple_id(t);
    if (!id) throw std::logic_error("vertex_map image missing from target layer");
    img.push_back(*id);
  }
  std::sort(img.begin(), img.end());
  if (std::adjacent_find(img.begin(), img.end()) != img.end()) return std::nullopt;
  return img;
}

/// dim(f# Z_q(K_b) + B_q(K_d)) - dim(B_q(K_d)), exactly over Z/2.
inline std::size_t rank_direct(const Bifiltration& bf, int q, const Grade& b, const Grade& d) {
  const CoverLayer& lb = bf.layer(b.k);
  const CoverLayer& ld = bf.layer(d.k);
  auto zb_q = lb.simplices_at(q, b.r1, b.r2);
  if (zb_q.empty()) return 0;

  // cycles of K_b
  std::vector<std::vector<std::uint32_t>> cols(zb_q.size());
  std::size_t nrows = 0;
  if (q >= 1) {
    auto faces = lb.simplices_at(q - 1, b.r1, b.r2);
    nrows = faces.size();
    std::unordered_map<std::size_t, std::uint32_t> row_of;
    for (std::uint32_t i = 0; i < faces.size(); ++i) row_of.emplace(faces[i], i);
    VertexList facet;
    for (std::size_t j = 0; j < zb_q.size(); ++j) {
      const auto& s = lb.simplices()[zb_q[j]].vertices;
      for (std::size_t drop = 0; drop < s.size(); ++drop) {
        facet.clear();
        for (std::size_t i = 0; i < s.size(); ++i)
          if (i != drop) facet.push_back(s[i]);
        cols[j].push_back(row_of.at(*lb.find(facet)));
      }
    }
  }
  auto cycles = gf2_kernel_basis(GF2Matrix(nrows, std::move(cols)));
  if (cycles.empty()) return 0;

  // q-chains of K_d, extended by images that float noise kept above grade d
  auto kd_q = ld.simplices_at(q, d.r1, d.r2);
  std::unordered_map<std::size_t, std::uint32_t> row_of;
  for (std::uint32_t i = 0; i < kd_q.size(); ++i) row_of.emplace(kd_q[i], i);
  auto row_for = [&](std::size_t layer_idx) {
    auto [it, inserted] = row_of.emplace(layer_idx, static_cast<std::uint32_t>(row_of.size()));
    return it->second;
  };

  std::vector<std::vector<std::uint32_t>> image_cols;
  image_cols.reserve(cycles.size());
  for (const auto& z : cycles) {
    std::vector<std::uint32_t> col;
    for (auto pos : z) {
      auto img = map_simplex(lb, ld, lb.simplices()[zb_q[pos]].vertices);
      if (!img) continue;
      auto idx = ld.find(*img);
      if (!idx) throw std::logic_error("chain map image missing from target layer");
      col.push_back(row_for(*idx));
    }
    image_cols.push_back(std::move(col));
  }

  std::vector<std::vector<std::uint32_t>> all;
  auto kd_up = ld.simplices_at(q + 1, d.r1, d.r2);
  VertexList facet;
  for (auto idx : kd_up) {
    const auto& s = ld.simplices()[idx].vertices;
    std::vector<std::uint32_t> col;
    for (std::size_t drop = 0; drop < s.size(); ++drop) {
      facet.clear();
      for (std::size_t i = 0; i < s.size(); ++i)
        if (i != drop) facet.push_back(s[i]);
      col.push_back(row_for(*ld.find(facet)));
    }
    all.push_back(std::move(col));
  }
  const std::size_t n_boundary = all.size();
  for (auto& c : image_cols) all.push_back(std::move(c));
  GF2Matrix m(row_of.size(), std::move(all));
  auto lows = reduce_columns(m);
  std::size_t rank = 0;
  for (std::size_t j = n_boundary; j < lows.size(); ++j)
    if (lows[j] != GF2Matrix::kNoPivot) ++rank;
  return rank;
}

/// Two-step filtration: K_b at value 0, K_d \ K_b at value 2; count the
/// degree-q bars born in the first step that never die.
inline std::size_t rank_binary(const Bifiltration& bf, int q, const Grade& b, const Grade& d) {
  const CoverLayer& layer = bf.layer(b.k);
  SlicedFiltration f;
  f.k = b.k;
  f.direction = LinearSlice{1.0, 0.0};
  for (const auto& s : layer.simplices()) {
    if (s.dim() > q + 1) break;
    if (s.dim() < q - 1) continue;
    if (s.r1 <= b.r1 && s.r2 <= b.r2) f.simplices.push_back({s.vertices, 0.0});
    else if (s.r1 <= d.r1 && s.r2 <= d.r2) f.simplices.push_back({s.vertices, 2.0});
  }
  std::stable_sort(f.simplices.begin(), f.simplices.end(),
                   [](const FilteredSimplex& x, const FilteredSimplex& y) { return x.value < y.value; });
  PersistenceOptions opt;
  opt.keep_zero_length = true;
  auto dgm = persistence_diagram(f, q, opt);
  return static_cast<std::size_t>(std::count_if(dgm.pairs.begin(), dgm.pairs.end(), [](const PersistencePair& p) {
    return p.birth == 0.0 && p.death == kInfinity;
  }));
}

}  // namespace detail

/// Persistent Betti number beta_q^{b,d}: rank of H_q(K_b) -> H_q(K_d).
inline std::size_t rank_invariant(const Bifiltration& bf, int q, const RankQuery& query,
                                  RankMethod method = RankMethod::direct) {
  if (q < 0) throw InvalidArgument("homology degree must be >= 0");
  if (!grade_leq(query.b, query.d)) throw InvalidArgument("rank query needs b <= d in the product order");
  if (q + 1 > bf.q_max) throw InvalidArgument("bifiltration was built without dimension q+1 simplices");
  detail::check_grade_range(bf, query.b);
  detail::check_grade_range(bf, query.d);
  if (method == RankMethod::binary_filtration) {
    if (query.b.k != query.d.k) throw UnsupportedMethod("binary filtration needs equal cover levels");
    if (!bf.find_layer(query.b.k)) return 0;
    return detail::rank_binary(bf, q, query.b, query.d);
  }
  if (!bf.find_layer(query.b.k)) return 0;
  if (!bf.find_layer(query.d.k)) throw InvalidArgument("bifiltration has no cover level " + std::to_string(query.d.k));
  return detail::rank_direct(bf, q, query.b, query.d);
}

/// Ordinary Betti number of K_g.
inline std::size_t betti_number(const Bifiltration& bf, int q, const Grade& g) {
  return rank_invariant(bf, q, {g, g});
}

/// Extension to arbitrary pairs: beta^{b, max(b, d)} with the max pointwise.
inline std::size_t extended_rank(const Bifiltration& bf, int q, const Grade& b, const Grade& d) {
  return rank_invariant(bf, q, {b, grade_join(b, d)});
}

// ---------------------------------------------------------------------------
// Block increments

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// One parameter axis of a block: birth and death intervals, either summed
/// over their endpoints or held at fixed levels (birth.hi, death.hi).
struct BlockAxis {
  Interval birth;
  Interval death;
  bool summed = true;

  static BlockAxis fixed(double b, double d) { return {{b, b}, {d, d}, false}; }
};

/// Product of intervals over (r1, r2) with singleton cover levels.
struct Block {
  BlockAxis r1;
  BlockAxis r2;
  int b3 = 1;
  int d3 = 1;
};

namespace detail {

using CornerKey = std::tuple<double, double, double, double>;

/// Rank at a corner, expanding ill-ordered coordinates (b_m > d_m) by the
/// three-term substitution of well-ordered corners.
inline long long corner_rank(const Bifiltration& bf, int q, std::array<double, 2> b, std::array<double, 2> d, int b3,
                             int d3, std::map<CornerKey, long long>& memo) {
  for (int m = 0; m < 2; ++m) {
    if (b[m] > d[m]) {
      auto b_lo = b, d_hi = d, both_b = b, both_d = d;
      d_hi[m] = b[m];
      b_lo[m] = d[m];
      both_b[m] = d[m];
      both_d[m] = b[m];
      return corner_rank(bf, q, b, d_hi, b3, d3, memo) + corner_rank(bf, q, b_lo, d, b3, d3, memo) -
             corner_rank(bf, q, both_b, both_d, b3, d3, memo);
    }
  }
  CornerKey key{b[0], b[1], d[0], d[1]};
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  auto r = static_cast<long long>(rank_invariant(bf, q, {{b[0], b[1], b3}, {d[0], d[1], d3}}));
  memo.emplace(key, r);
  return r;
}

}  // namespace detail

/// Alternating corner sum of the rank invariant over a block. Each summed
/// axis contributes sign(+) at the upper birth end and at the lower death
/// end, so a single summed axis counts diagram points in
/// (b_lo, b_hi] x (d_lo, d_hi]; with both axes summed this is the plain
/// product of the eight corner signs.
inline long long block_increment(const Bifiltration& bf, int q, const Block& e) {
  for (const auto* ax : {&e.r1, &e.r2}) {
    if (ax->birth.lo > ax->birth.hi || ax->death.lo > ax->death.hi) throw InvalidArgument("block interval endpoints out of order");
    if (!ax->summed && (ax->birth.lo != ax->birth.hi || ax->death.lo != ax->death.hi))
      throw InvalidArgument("fixed block axis needs singleton intervals");
  }
  if (e.b3 < e.d3) throw InvalidArgument("block cover levels need b3 >= d3");
  std::map<detail::CornerKey, long long> memo;
  long long total = 0;
  const int n1 = e.r1.summed ? 2 : 1;
  const int n2 = e.r2.summed ? 2 : 1;
  for (int i1 = 0; i1 < n1; ++i1)
    for (int j1 = 0; j1 < n1; ++j1)
      for (int i2 = 0; i2 < n2; ++i2)
        for (int j2 = 0; j2 < n2; ++j2) {
          // index 1 selects the upper endpoint
          double b1 = e.r1.summed ? (i1 ? e.r1.birth.hi : e.r1.birth.lo) : e.r1.birth.hi;
          double d1 = e.r1.summed ? (j1 ? e.r1.death.hi : e.r1.death.lo) : e.r1.death.hi;
          double b2 = e.r2.summed ? (i2 ? e.r2.birth.hi : e.r2.birth.lo) : e.r2.birth.hi;
          double d2 = e.r2.summed ? (j2 ? e.r2.death.hi : e.r2.death.lo) : e.r2.death.hi;
          int sign = 1;
          if (e.r1.summed) sign *= (i1 ? 1 : -1) * (j1 ? -1 : 1);
          if (e.r2.summed) sign *= (i2 ? 1 : -1) * (j2 ? -1 : 1);
          total += sign * detail::corner_rank(bf, q, {b1, b2}, {d1, d2}, e.b3, e.d3, memo);
        }
  return total;
}

}  // namespace mpbetti
