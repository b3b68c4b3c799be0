#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mpbetti/geometry.hpp"
#include "oracles.hpp"

using namespace mpbetti;

namespace {

const double kCircumradius = 1.0 / std::sqrt(3.0);

MarkedPointCloud cloud_of(std::vector<Point> pts, int dim = 2, double side = 10.0) {
  MarkedPointCloud c;
  c.window = {dim, side};
  for (const auto& p : pts) c.points.push_back({p, 0.0});
  return c;
}

}  // namespace

TEST(CechTime, SinglePointIsZero) {
  std::vector<Point> p{{1.0, 2.0, 0.0}};
  EXPECT_EQ(cech_time(p, 2), 0.0);
}

TEST(CechTime, PairIsHalfDistance) {
  std::vector<Point> p{{0.0, 0.0, 0.0}, {2.0, 0.0, 0.0}};
  EXPECT_DOUBLE_EQ(cech_time(p, 2), 1.0);
}

TEST(CechTime, EquilateralTriangleIsCircumradius) {
  auto t = oracle::triangle();
  std::vector<Point> p;
  for (const auto& q : t.points) p.push_back(q.position);
  EXPECT_NEAR(cech_time(p, 2), kCircumradius, 1e-12);
}

TEST(CechTime, ObtuseTriangleUsesLongestEdge) {
  std::vector<Point> p{{0.0, 0.0, 0.0}, {4.0, 0.0, 0.0}, {2.0, 0.5, 0.0}};
  EXPECT_NEAR(cech_time(p, 2), 2.0, 1e-12);
}

TEST(CechTime, EmptyInputThrows) {
  std::vector<Point> none;
  EXPECT_THROW(cech_time(none, 2), InvalidArgument);
}

TEST(CechTime, DegenerateInputs) {
  std::vector<Point> collinear{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {3.0, 0.0, 0.0}};
  EXPECT_NEAR(cech_time(collinear, 2), 1.5, 1e-12);
  std::vector<Point> repeated{{1.0, 1.0, 0.0}, {1.0, 1.0, 0.0}, {2.0, 1.0, 0.0}};
  EXPECT_NEAR(cech_time(repeated, 2), 0.5, 1e-12);
  // Four cospherical points on a circle of radius 1.
  std::vector<Point> square{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {-1.0, 0.0, 0.0}, {0.0, -1.0, 0.0}};
  EXPECT_NEAR(cech_time(square, 2), 1.0, 1e-12);
}

TEST(CechTime, MatchesBruteForceOn200Triples) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<Point> p(3);
    for (auto& x : p) x = {u(rng), u(rng), 0.0};
    EXPECT_NEAR(cech_time(p, 2), oracle::min_max_distance(p, 2), 1e-6) << "triple " << i;
  }
}

TEST(CechTime, MatchesBruteForceIn3D) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    std::vector<Point> p(4);
    for (auto& x : p) x = {u(rng), u(rng), u(rng)};
    EXPECT_NEAR(cech_time(p, 3), oracle::min_max_distance(p, 3), 1e-6) << "tetrahedron " << i;
  }
}

TEST(CechTime, MonotoneUnderInclusion) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<Point> p;
    double prev = 0.0;
    for (int j = 0; j < 5; ++j) {
      p.push_back({u(rng), u(rng), 0.0});
      double t = cech_time(p, 2);
      EXPECT_LE(prev, t + 1e-12);
      prev = t;
    }
  }
}

TEST(CechTime, TranslationInvariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0), shift(-50.0, 50.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<Point> p(4), q(4);
    Point s{shift(rng), shift(rng), shift(rng)};
    for (int j = 0; j < 4; ++j) {
      p[j] = {u(rng), u(rng), u(rng)};
      for (int c = 0; c < 3; ++c) q[j][c] = p[j][c] + s[c];
    }
    EXPECT_NEAR(cech_time(p, 3), cech_time(q, 3), 1e-9);
  }
}

TEST(Enumerate, FarPairGivesVerticesOnly) {
  auto c = cloud_of({{0.0, 0.0, 0.0}, {3.0, 0.0, 0.0}});
  auto s = enumerate_simplices(c, 2, 1.0);
  ASSERT_EQ(s.size(), 2u);
  for (const auto& x : s) EXPECT_EQ(x.dim(), 0);
}

TEST(Enumerate, EquilateralTriangle) {
  auto s = enumerate_simplices(oracle::triangle(), 2, 0.6);
  ASSERT_EQ(s.size(), 7u);
  int edges = 0, triangles = 0;
  for (const auto& x : s) {
    if (x.dim() == 1) {
      ++edges;
      EXPECT_NEAR(x.time, 0.5, 1e-12);
    } else if (x.dim() == 2) {
      ++triangles;
      EXPECT_NEAR(x.time, kCircumradius, 1e-12);
    } else {
      EXPECT_EQ(x.time, 0.0);
    }
  }
  EXPECT_EQ(edges, 3);
  EXPECT_EQ(triangles, 1);
}

TEST(Enumerate, EmptyCloud) { EXPECT_TRUE(enumerate_simplices(cloud_of({}), 2, 1.0).empty()); }

TEST(Enumerate, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const int dim = trial % 3 == 0 ? 3 : 2;
    auto c = oracle::random_cloud(rng, 6 + trial % 10, 2.0, dim);
    const int q_max = dim;
    const double r_max = 0.3 + 0.05 * (trial % 8);
    auto got = enumerate_simplices(c, q_max, r_max);
    auto want = oracle::all_simplices(c, q_max, r_max);
    ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
    for (const auto& s : got) {
      auto it = want.find(s.vertices);
      ASSERT_NE(it, want.end());
      EXPECT_NEAR(s.time, it->second, 1e-12);
    }
  }
}

TEST(Enumerate, DiameterBound) {
  std::mt19937_64 rng(41);
  auto c = oracle::random_cloud(rng, 40, 3.0);
  for (const auto& s : enumerate_simplices(c, 2, 0.6)) {
    if (s.dim() < 1) continue;
    double diam = 0.0;
    for (auto a : s.vertices)
      for (auto b : s.vertices) diam = std::max(diam, distance(c.points[a].position, c.points[b].position));
    EXPECT_LE(diam, 2.0 * s.time * (1.0 + 1e-12));
  }
}

TEST(Enumerate, FacesPrecedeCofaces) {
  std::mt19937_64 rng(42);
  auto c = oracle::random_cloud(rng, 30, 3.0);
  auto s = enumerate_simplices(c, 2, 0.7);
  std::map<VertexList, std::size_t> pos;
  for (std::size_t i = 0; i < s.size(); ++i) pos[s[i].vertices] = i;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].dim() < 1) continue;
    for (std::size_t drop = 0; drop < s[i].vertices.size(); ++drop) {
      VertexList f = s[i].vertices;
      f.erase(f.begin() + static_cast<long>(drop));
      ASSERT_TRUE(pos.count(f));
      EXPECT_LT(pos[f], i);
      EXPECT_LE(s[pos[f]].time, s[i].time);
    }
  }
}

TEST(Grid, EveryPointInOneBucket) {
  std::mt19937_64 rng(3);
  auto c = oracle::random_cloud(rng, 100, 5.0);
  std::vector<Point> pos;
  for (const auto& p : c.points) pos.push_back(p.position);
  GridIndex g(pos, 2, 0.4);
  auto members = g.bucket_members();
  std::sort(members.begin(), members.end());
  ASSERT_EQ(members.size(), pos.size());
  for (std::uint32_t i = 0; i < members.size(); ++i) EXPECT_EQ(members[i], i);
}

TEST(Grid, NeighborQueryIsComplete) {
  std::mt19937_64 rng(4);
  auto c = oracle::random_cloud(rng, 150, 5.0);
  std::vector<Point> pos;
  for (const auto& p : c.points) pos.push_back(p.position);
  const double r = 0.4;
  GridIndex g(pos, 2, 2.0 * r);
  for (std::uint32_t i = 0; i < pos.size(); ++i) {
    auto nb = g.neighbors(i, 2.0 * r);
    std::sort(nb.begin(), nb.end());
    for (std::uint32_t j = 0; j < pos.size(); ++j) {
      if (j == i || distance(pos[i], pos[j]) > 2.0 * r) continue;
      EXPECT_TRUE(std::binary_search(nb.begin(), nb.end(), j)) << i << " " << j;
    }
  }
}
