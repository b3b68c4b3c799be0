#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "mpbetti/cli.hpp"
#include "oracles.hpp"

using namespace mpbetti;
namespace mc = mpbetti::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("mpbetti_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
}

mc::json small_config() {
  return mc::json::parse(R"({
    "window": {"dimension": 2, "side": 4},
    "null": {"name": "Poi", "process": "poisson", "intensity": 2},
    "alternatives": [
      {"name": "Mat", "process": "matern", "parent_intensity": 2, "mean_offspring": 1, "cluster_radius": 0.5},
      {"name": "Str", "process": "strauss", "beta": 2.8, "gamma": 0.6, "interaction_radius": 0.5},
      {"name": "Cell", "process": "cell", "boxes_per_side": 6, "probs": [0.45, 0.1, 0.45]}
    ],
    "bifiltration": {"kind": "multicover", "q_max": 2, "r1_max": 0.5},
    "statistics": [
      {"type": "total_persistence", "name": "tp1", "slice": {"kind": "cech"}, "q": 1, "k": 1, "death_cap": 0.5},
      {"type": "ripley", "name": "rk", "radius": 0.5}
    ],
    "n_calibration": 20,
    "n_test": 2,
    "alpha": 0.05,
    "seed": 7
  })");
}

mc::CommonOptions quiet(const std::string& out) {
  mc::CommonOptions o;
  o.threads = 1;
  o.out = out;
  return o;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(MPBETTI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_csv(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".csv" ? 1 : 0;
  return n;
}

}  // namespace

TEST(Config, ParsesAndRoundTrips) {
  auto c = mc::parse_config(small_config());
  EXPECT_EQ(c.alternatives.size(), 3u);
  EXPECT_EQ(c.statistics.size(), 2u);
  EXPECT_FALSE(c.plan.graded_by_marks);
  auto again = mc::parse_config(mc::to_json(c));
  EXPECT_EQ(mc::to_json(again), mc::to_json(c));
  EXPECT_EQ(mc::config_hash(again), mc::config_hash(c));
}

TEST(Config, UnknownKeysAreErrors) {
  auto j = small_config();
  j["windw"] = 3;
  EXPECT_THROW(mc::parse_config(j), mc::ConfigError);
  auto k = small_config();
  k["statistics"][0]["colour"] = "red";
  EXPECT_THROW(mc::parse_config(k), mc::ConfigError);
}

TEST(Config, InvalidValuesAreErrors) {
  auto bad_gamma = small_config();
  bad_gamma["alternatives"][1]["gamma"] = 0;
  EXPECT_THROW(mc::parse_config(bad_gamma), mc::ConfigError);
  auto bad_cap = small_config();
  bad_cap["statistics"][0]["death_cap"] = 2.0;  // beyond r1_max
  EXPECT_THROW(mc::parse_config(bad_cap), mc::ConfigError);
  auto bad_q = small_config();
  bad_q["statistics"][0]["q"] = 2;
  EXPECT_THROW(mc::parse_config(bad_q), mc::ConfigError);
  auto bad_radius = small_config();
  bad_radius["statistics"][1]["radius"] = 3.0;
  EXPECT_THROW(mc::parse_config(bad_radius), mc::ConfigError);
  auto dup = small_config();
  dup["alternatives"][0]["name"] = "Poi";
  EXPECT_THROW(mc::parse_config(dup), mc::ConfigError);
}

TEST(Config, TablePresetsValidate) {
  for (auto t : {mc::Table::marked3d, mc::Table::multicover2d})
    for (double s : {0.05, 0.2, 0.6, 1.0}) EXPECT_NO_THROW(mc::table_config(t, s));
  auto m = mc::table_config(mc::Table::multicover2d, 1.0);
  EXPECT_EQ(m.n_calibration, 1000u);
  EXPECT_EQ(m.window.side, 10.0);
  EXPECT_EQ(mc::table_config(mc::Table::marked3d, 0.2).n_test, 200u);
  EXPECT_THROW(mc::table_config(mc::Table::marked3d, 0.0), mc::ConfigError);
  EXPECT_THROW(mc::table_config(mc::Table::marked3d, 1.5), mc::ConfigError);
  EXPECT_THROW(mc::parse_table("marked2d"), mc::ConfigError);
}

TEST(Simulate, ZeroTestRepsWritesManifestOnly) {
  TempDir dir;
  auto c = mc::parse_config(small_config());
  c.n_test = 0;
  std::ostringstream log;
  EXPECT_EQ(mc::cmd_simulate(c, quiet(dir / "out"), log), 0u);
  EXPECT_EQ(count_csv(dir / "out"), 0u);
  EXPECT_TRUE(fs::exists(dir / "out/manifest.json"));
}

TEST(Simulate, OneFilePerModelAndReplication) {
  TempDir dir;
  auto c = mc::parse_config(small_config());
  std::ostringstream log;
  EXPECT_EQ(mc::cmd_simulate(c, quiet(dir / "out"), log), 8u);
  EXPECT_EQ(count_csv(dir / "out"), 8u);
  for (const char* m : {"Poi", "Mat", "Str", "Cell"})
    for (int j = 0; j < 2; ++j) EXPECT_TRUE(fs::exists(dir / ("out/" + std::string(m) + "_" + std::to_string(j) + ".csv")));
}

TEST(Simulate, RerunIsByteIdentical) {
  TempDir dir;
  auto c = mc::parse_config(small_config());
  std::ostringstream log;
  mc::cmd_simulate(c, quiet(dir / "a"), log);
  auto o = quiet(dir / "b");
  o.threads = 3;
  mc::cmd_simulate(c, o, log);
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    auto name = e.path().filename().string();
    if (name == "manifest.json") continue;
    EXPECT_EQ(slurp(e.path().string()), slurp(dir / ("b/" + name))) << name;
  }
}

TEST(Simulate, ManifestSeedsReproduceSingleReplication) {
  TempDir dir;
  auto c = mc::parse_config(small_config());
  std::ostringstream log;
  mc::cmd_simulate(c, quiet(dir / "out"), log);
  auto m = mc::json::parse(slurp(dir / "out/manifest.json"));
  EXPECT_EQ(m["version"], mc::kToolVersion);
  EXPECT_EQ(m["config_hash"], "fnv1a64:" + mc::hex64(mc::config_hash(c)));
  const auto& stream = m["streams"][1];
  EXPECT_EQ(stream["model"], "Mat");
  auto seed = stream["seeds"][1].get<std::uint64_t>();
  auto cloud = c.samplers()[1].draw(seed).raw;
  std::ostringstream csv;
  write_cloud_csv(csv, cloud);
  EXPECT_EQ(csv.str(), slurp(dir / "out/Mat_1.csv"));
}

TEST(Diagram, EmptyCloudGivesHeaderOnly) {
  TempDir dir;
  write(dir / "empty.csv", "");
  write(dir / "header.csv", "x1,x2,mark\n");
  for (const char* f : {"empty.csv", "header.csv"}) {
    mc::DiagramOptions o;
    o.cloud = dir / f;
    std::ostringstream out;
    EXPECT_TRUE(mc::cmd_diagram(o, out).empty());
    EXPECT_EQ(out.str(), "q,birth,death\n");
  }
}

TEST(Diagram, TriangleFixture) {
  TempDir dir;
  save_cloud_csv(dir / "tri.csv", oracle::triangle());
  mc::DiagramOptions o;
  o.cloud = dir / "tri.csv";
  std::ostringstream out;
  auto dgm = mc::cmd_diagram(o, out);
  ASSERT_EQ(dgm.size(), 1u);
  EXPECT_NEAR(dgm.pairs[0].birth, 0.5, 1e-12);
  EXPECT_NEAR(dgm.pairs[0].death, 1.0 / std::sqrt(3.0), 1e-12);
  std::istringstream in(out.str());
  auto back = read_diagram_csv(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(total_persistence(back[0], std::nullopt, 1.0), total_persistence(dgm, std::nullopt, 1.0));
}

TEST(Diagram, MalformedCsvNamesLine) {
  TempDir dir;
  write(dir / "bad.csv", "x1,x2,mark\n0.1,0.2,0.3\n0.4,0.5\n");
  mc::DiagramOptions o;
  o.cloud = dir / "bad.csv";
  std::ostringstream out;
  try {
    mc::cmd_diagram(o, out);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Rank, MirrorsLibrary) {
  TempDir dir;
  save_cloud_csv(dir / "tri.csv", oracle::triangle(0.1, 0.2, 0.3));
  mc::RankOptions o;
  o.cloud = dir / "tri.csv";
  o.b = {0.55, 1.0, 1};
  o.d = {0.55, 1.0, 1};
  std::ostringstream out, log;
  EXPECT_EQ(mc::cmd_rank(o, out, log), 1u);
  EXPECT_EQ(out.str(), "1\n");
  EXPECT_NE(log.str().find("time_ms="), std::string::npos);
  o.d = {0.6, 1.0, 1};
  o.method = RankMethod::binary_filtration;
  EXPECT_EQ(mc::cmd_rank(o, out, log), 0u);
  o.b = o.d = {0.0, 0.0, 1};
  EXPECT_EQ(mc::cmd_rank(o, out, log), 0u);
  o.b = {0.6, 1.0, 1};
  o.d = {0.5, 1.0, 1};
  EXPECT_THROW(mc::cmd_rank(o, out, log), InvalidArgument);
}

TEST(Rank, EmptyInputIsZero) {
  TempDir dir;
  write(dir / "empty.csv", "");
  mc::RankOptions o;
  o.cloud = dir / "empty.csv";
  o.b = {0.1, 0.1, 1};
  o.d = {0.2, 0.2, 1};
  std::ostringstream out, log;
  EXPECT_EQ(mc::cmd_rank(o, out, log), 0u);
}

TEST(Args, SliceAndGrade) {
  EXPECT_TRUE(std::holds_alternative<CechAxis>(mc::parse_slice_arg("cech")));
  EXPECT_EQ(std::get<CechAxis>(mc::parse_slice_arg("cech:0.5")).fixed_r2, 0.5);
  EXPECT_EQ(std::get<MarkAxis>(mc::parse_slice_arg("mark:0.25")).fixed_r1, 0.25);
  auto l = std::get<LinearSlice>(mc::parse_slice_arg("linear:20,1"));
  EXPECT_EQ(l.a, 20.0);
  EXPECT_EQ(l.b, 1.0);
  EXPECT_THROW(mc::parse_slice_arg("diagonal"), mc::ConfigError);
  EXPECT_THROW(mc::parse_slice_arg("mark"), mc::ConfigError);
  auto g = mc::parse_grade_arg("0.5,1,2");
  EXPECT_EQ(g.r1, 0.5);
  EXPECT_EQ(g.k, 2);
  EXPECT_THROW(mc::parse_grade_arg("0.5,1"), mc::ConfigError);
  EXPECT_THROW(mc::parse_grade_arg("0.5,1,1.5"), mc::ConfigError);
}

TEST(Gof, OutputsAreDeterministic) {
  TempDir dir;
  auto c = mc::parse_config(small_config());
  std::ostringstream log;
  auto g = mc::cmd_gof(c, quiet(dir / "a"), log);
  auto o = quiet(dir / "b");
  o.threads = 2;
  mc::cmd_gof(c, o, log);
  EXPECT_EQ(slurp(dir / "a/results.csv"), slurp(dir / "b/results.csv"));
  EXPECT_EQ(slurp(dir / "a/raw_values.csv"), slurp(dir / "b/raw_values.csv"));
  ASSERT_EQ(g.results.size(), 2u);
  EXPECT_EQ(g.results[0].outcomes.size(), 4u);
  std::istringstream results(slurp(dir / "a/results.csv"));
  std::string line;
  std::getline(results, line);
  EXPECT_EQ(line, "statistic,model,rejection_rate,std_error,n_test");
  std::size_t rows = 0;
  while (std::getline(results, line)) ++rows;
  EXPECT_EQ(rows, 8u);
}

TEST(Gof, RawValuesMatchSimulatedClouds) {
  // The clouds written by simulate are the ones gof scores.
  TempDir dir;
  auto c = mc::parse_config(small_config());
  std::ostringstream log;
  mc::cmd_simulate(c, quiet(dir / "sim"), log);
  auto g = mc::cmd_gof(c, quiet(dir / "gof"), log);
  auto cloud = load_cloud_csv(dir / "sim/Str_1.csv", 4.0);
  EXPECT_EQ(ripley_k(cloud, 0.5), g.results[1].outcomes[2].values[1][0]);
}

TEST(Executor, ThreadedRunMatchesSequentialAndPropagatesErrors) {
  std::vector<int> a(100, 0), b(100, 0);
  mc::make_executor(4)(100, [&](std::size_t i) { a[i] = static_cast<int>(i * i); });
  run_sequential(100, [&](std::size_t i) { b[i] = static_cast<int>(i * i); });
  EXPECT_EQ(a, b);
  EXPECT_THROW(mc::make_executor(3)(50, [](std::size_t i) {
    if (i == 17) throw ResourceLimit("too big", 5);
  }), ResourceLimit);
}

TEST(Binary, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli("reproduce --table nosuch --scale 0.1"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("gof --config " + (dir / "missing.json")), 2);
  write(dir / "bad.json", R"({"window": {"dimension": 2, "side": 4}, "oops": 1})");
  EXPECT_EQ(run_cli("gof --config " + (dir / "bad.json")), 2);
  write(dir / "bad.csv", "x1,x2,mark\n1,2\n");
  EXPECT_EQ(run_cli("diagram --cloud " + (dir / "bad.csv")), 2);

  std::mt19937_64 rng(1);
  auto big = oracle::random_cloud(rng, 60, 1.0);
  save_cloud_csv(dir / "dense.csv", big);
  EXPECT_EQ(run_cli("diagram --cloud " + (dir / "dense.csv") + " --k 2 --r-max 0.6 --budget 1000"), 3);

  save_cloud_csv(dir / "tri.csv", oracle::triangle());
  EXPECT_EQ(run_cli("diagram --cloud " + (dir / "tri.csv") + " --out " + (dir / "tri_dgm.csv")), 0);
  std::istringstream in(slurp(dir / "tri_dgm.csv"));
  auto back = read_diagram_csv(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].pairs.size(), 1u);
  EXPECT_EQ(run_cli("rank --cloud " + (dir / "tri.csv") + " --q 1 --b 0.55,0,1 --d 0.55,0,1"), 0);
  EXPECT_EQ(run_cli("rank --cloud " + (dir / "tri.csv") + " --q 1 --b 0.6,0,1 --d 0.5,0,1"), 2);
  EXPECT_EQ(run_cli("rank --cloud " + (dir / "tri.csv") + " --q 0 --b 0.5,0,2 --d 0.5,0,1 --method binary"), 2);
}

TEST(Binary, SimulateThroughCommandLine) {
  TempDir dir;
  write(dir / "cfg.json", small_config().dump());
  EXPECT_EQ(run_cli("simulate --config " + (dir / "cfg.json") + " --out " + (dir / "sim") + " --seed 3 --threads 2"), 0);
  EXPECT_EQ(count_csv(dir / "sim"), 8u);
  auto m = mc::json::parse(slurp(dir / "sim/manifest.json"));
  EXPECT_EQ(m["seed"], 3);
}
