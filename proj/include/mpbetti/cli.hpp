#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mpbetti/bifiltration.hpp"
#include "mpbetti/errors.hpp"
#include "mpbetti/format.hpp"
#include "mpbetti/homology.hpp"
#include "mpbetti/pointproc.hpp"
#include "mpbetti/random.hpp"
#include "mpbetti/stats.hpp"

namespace mpbetti::cli {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Bad configuration or usage; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Worker pool

/// Executor running replications on `threads` workers. The first exception
/// stops further work and is rethrown to the caller.
inline Executor make_executor(unsigned threads) {
  if (threads <= 1) return run_sequential;
  return [threads](std::size_t n, const std::function<void(std::size_t)>& body) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!error) error = std::current_exception();
            next.store(n);
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  };
}

inline unsigned default_threads() { return std::max(1U, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
// Configuration

struct ModelConfig {
  std::string name;
  ProcessSpec process;
};

struct ExperimentConfig {
  WindowSpec window{2, 10.0};
  MarkLaw marks = DegenerateMarks{0.0};
  bool last_coordinate_is_mark = false;
  ModelConfig null_model{"Poi", PoissonSpec{2.0}};
  std::vector<ModelConfig> alternatives;
  BifiltrationPlan plan;
  std::vector<NamedStatistic> statistics;
  std::size_t n_calibration = 1000;
  std::size_t n_test = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  /// Null first, then alternatives; index s uses test stream s + 1.
  std::vector<Sampler> samplers() const {
    std::vector<Sampler> out;
    out.push_back({null_model.name, window, null_model.process, marks, last_coordinate_is_mark});
    for (const auto& a : alternatives) out.push_back({a.name, window, a.process, marks, last_coordinate_is_mark});
    return out;
  }

  std::vector<StatisticSpec> specs() const {
    std::vector<StatisticSpec> out;
    for (const auto& s : statistics) out.push_back(s.spec);
    return out;
  }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

inline ProcessSpec parse_process(const json& j, const std::string& where) {
  auto kind = get<std::string>(j, "process", where);
  if (kind == "poisson") {
    check_keys(j, {"name", "process", "intensity"}, where);
    return PoissonSpec{get<double>(j, "intensity", where)};
  }
  if (kind == "matern") {
    check_keys(j, {"name", "process", "parent_intensity", "mean_offspring", "cluster_radius"}, where);
    return MaternClusterSpec{get<double>(j, "parent_intensity", where), get<double>(j, "mean_offspring", where),
                             get<double>(j, "cluster_radius", where)};
  }
  if (kind == "strauss") {
    check_keys(j, {"name", "process", "beta", "gamma", "interaction_radius", "sweeps", "burn_in"}, where);
    StraussSpec s{get<double>(j, "beta", where), get<double>(j, "gamma", where),
                  get<double>(j, "interaction_radius", where), std::nullopt, std::nullopt};
    if (j.contains("sweeps")) s.sweeps = get<std::size_t>(j, "sweeps", where);
    if (j.contains("burn_in")) s.burn_in = get<std::size_t>(j, "burn_in", where);
    return s;
  }
  if (kind == "cell") {
    check_keys(j, {"name", "process", "boxes_per_side", "probs"}, where);
    auto probs = get<std::vector<double>>(j, "probs", where);
    if (probs.size() != 3) throw ConfigError(where + ".probs: expected three probabilities");
    return CellSpec{get<int>(j, "boxes_per_side", where), {probs[0], probs[1], probs[2]}};
  }
  throw ConfigError(where + ": unknown process '" + kind + "'");
}

inline json process_to_json(const ModelConfig& m) {
  json j;
  j["name"] = m.name;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, PoissonSpec>) {
          j["process"] = "poisson";
          j["intensity"] = s.intensity;
        } else if constexpr (std::is_same_v<S, MaternClusterSpec>) {
          j["process"] = "matern";
          j["parent_intensity"] = s.parent_intensity;
          j["mean_offspring"] = s.mean_offspring;
          j["cluster_radius"] = s.cluster_radius;
        } else if constexpr (std::is_same_v<S, StraussSpec>) {
          j["process"] = "strauss";
          j["beta"] = s.beta;
          j["gamma"] = s.gamma;
          j["interaction_radius"] = s.interaction_radius;
          if (s.sweeps) j["sweeps"] = *s.sweeps;
          if (s.burn_in) j["burn_in"] = *s.burn_in;
        } else {
          j["process"] = "cell";
          j["boxes_per_side"] = s.boxes_per_side;
          j["probs"] = s.probs;
        }
      },
      m.process);
  return j;
}

inline ModelConfig parse_model(const json& j, const std::string& where) {
  return {get<std::string>(j, "name", where), parse_process(j, where)};
}

inline SliceDirection parse_slice(const json& j, const std::string& where) {
  auto kind = get<std::string>(j, "kind", where);
  if (kind == "mark") {
    check_keys(j, {"kind", "fixed_r1"}, where);
    return MarkAxis{get<double>(j, "fixed_r1", where)};
  }
  if (kind == "cech") {
    check_keys(j, {"kind", "fixed_r2"}, where);
    return CechAxis{get_or<double>(j, "fixed_r2", std::numeric_limits<double>::infinity(), where)};
  }
  if (kind == "linear") {
    check_keys(j, {"kind", "a", "b"}, where);
    return LinearSlice{get<double>(j, "a", where), get<double>(j, "b", where)};
  }
  throw ConfigError(where + ": unknown slice kind '" + kind + "'");
}

inline json slice_to_json(const SliceDirection& d) {
  if (const auto* m = std::get_if<MarkAxis>(&d)) return {{"kind", "mark"}, {"fixed_r1", m->fixed_r1}};
  if (const auto* l = std::get_if<LinearSlice>(&d)) return {{"kind", "linear"}, {"a", l->a}, {"b", l->b}};
  json j{{"kind", "cech"}};
  double r2 = std::get<CechAxis>(d).fixed_r2;
  if (std::isfinite(r2)) j["fixed_r2"] = r2;
  return j;
}

inline TotalPersistence parse_tp(const json& j, const std::string& where) {
  check_keys(j, {"type", "name", "slice", "q", "k", "birth_cap", "death_cap"}, where);
  TotalPersistence tp;
  tp.direction = parse_slice(get<json>(j, "slice", where), where + ".slice");
  tp.q = get<int>(j, "q", where);
  tp.k = get_or<int>(j, "k", 1, where);
  if (j.contains("birth_cap")) tp.birth_cap = get<double>(j, "birth_cap", where);
  tp.death_cap = get<double>(j, "death_cap", where);
  return tp;
}

inline json tp_to_json(const TotalPersistence& tp) {
  json j{{"slice", slice_to_json(tp.direction)}, {"q", tp.q}, {"k", tp.k}, {"death_cap", tp.death_cap}};
  if (tp.birth_cap) j["birth_cap"] = *tp.birth_cap;
  return j;
}

inline NamedStatistic parse_statistic(const json& j, const std::string& where) {
  auto type = get<std::string>(j, "type", where);
  auto name = get<std::string>(j, "name", where);
  if (type == "total_persistence") return {name, parse_tp(j, where)};
  if (type == "bivariate") {
    check_keys(j, {"type", "name", "first", "second"}, where);
    return {name, BivariateTP{parse_tp(get<json>(j, "first", where), where + ".first"),
                              parse_tp(get<json>(j, "second", where), where + ".second")}};
  }
  if (type == "weighted_cover") {
    check_keys(j, {"type", "name", "parts", "weights"}, where);
    WeightedCoverTP w;
    auto parts = get<json>(j, "parts", where);
    if (!parts.is_array()) throw ConfigError(where + ".parts: expected an array");
    for (std::size_t i = 0; i < parts.size(); ++i)
      w.parts.push_back(parse_tp(parts[i], where + ".parts[" + std::to_string(i) + "]"));
    w.weights = get<std::vector<double>>(j, "weights", where);
    return {name, w};
  }
  if (type == "ripley") {
    check_keys(j, {"type", "name", "radius"}, where);
    return {name, RipleyK{get<double>(j, "radius", where)}};
  }
  throw ConfigError(where + ": unknown statistic type '" + type + "'");
}

inline json statistic_to_json(const NamedStatistic& s) {
  json j;
  std::visit(
      [&](const auto& x) {
        using S = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<S, TotalPersistence>) {
          j = tp_to_json(x);
          j["type"] = "total_persistence";
        } else if constexpr (std::is_same_v<S, BivariateTP>) {
          j = {{"type", "bivariate"}, {"first", tp_to_json(x.first)}, {"second", tp_to_json(x.second)}};
        } else if constexpr (std::is_same_v<S, WeightedCoverTP>) {
          j = {{"type", "weighted_cover"}, {"parts", json::array()}, {"weights", x.weights}};
          for (const auto& p : x.parts) j["parts"].push_back(tp_to_json(p));
        } else {
          j = {{"type", "ripley"}, {"radius", x.radius}};
        }
      },
      s.spec);
  j["name"] = s.name;
  return j;
}

/// Levels within [0, T] x [0, T] x {1..K'}: every cap and fixed level must
/// be reachable by the materialized bifiltration.
inline void check_levels(const TotalPersistence& tp, const ExperimentConfig& c, const std::string& where) {
  if (tp.q + 1 > c.plan.q_max) throw ConfigError(where + ": q + 1 exceeds bifiltration.q_max");
  if (tp.death_cap <= 0.0) throw ConfigError(where + ": death_cap must be positive");
  const double T = c.last_coordinate_is_mark ? c.window.side : mark_upper(c.marks);
  if (const auto* m = std::get_if<MarkAxis>(&tp.direction)) {
    if (m->fixed_r1 > c.plan.r1_max) throw ConfigError(where + ": mark slice fixes r1 beyond r1_max");
    if (tp.death_cap > T && c.plan.graded_by_marks) throw ConfigError(where + ": death_cap exceeds the mark range");
  } else if (const auto* l = std::get_if<LinearSlice>(&tp.direction)) {
    double cap = l->a > 0.0 ? l->a * c.plan.r1_max : l->b * T;
    if (tp.death_cap > cap) throw ConfigError(where + ": death_cap exceeds the completely materialized slice range");
  } else if (tp.death_cap > c.plan.r1_max) {
    throw ConfigError(where + ": death_cap exceeds r1_max");
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  check_keys(j,
             {"window", "marks", "mark_from_last_coordinate", "null", "alternatives", "bifiltration", "statistics",
              "n_calibration", "n_test", "alpha", "seed", "output_dir"},
             "config");
  ExperimentConfig c;
  auto w = get<json>(j, "window", "config");
  check_keys(w, {"dimension", "side"}, "window");
  c.window = {get<int>(w, "dimension", "window"), get<double>(w, "side", "window")};
  if (j.contains("marks")) {
    auto m = get<json>(j, "marks", "config");
    auto law = get<std::string>(m, "law", "marks");
    if (law == "uniform") {
      check_keys(m, {"law", "low", "high"}, "marks");
      c.marks = UniformMarks{get<double>(m, "low", "marks"), get<double>(m, "high", "marks")};
    } else if (law == "degenerate") {
      check_keys(m, {"law", "value"}, "marks");
      c.marks = DegenerateMarks{get<double>(m, "value", "marks")};
    } else {
      throw ConfigError("marks: unknown law '" + law + "'");
    }
  }
  c.last_coordinate_is_mark = get_or<bool>(j, "mark_from_last_coordinate", false, "config");
  c.null_model = parse_model(get<json>(j, "null", "config"), "null");
  if (j.contains("alternatives")) {
    auto alts = get<json>(j, "alternatives", "config");
    if (!alts.is_array()) throw ConfigError("alternatives: expected an array");
    for (std::size_t i = 0; i < alts.size(); ++i)
      c.alternatives.push_back(parse_model(alts[i], "alternatives[" + std::to_string(i) + "]"));
  }
  auto b = get<json>(j, "bifiltration", "config");
  check_keys(b, {"kind", "q_max", "r1_max", "budget"}, "bifiltration");
  auto kind = get<std::string>(b, "kind", "bifiltration");
  if (kind != "marked_cech" && kind != "multicover") throw ConfigError("bifiltration.kind must be marked_cech or multicover");
  c.plan.graded_by_marks = kind == "marked_cech";
  c.plan.q_max = get<int>(b, "q_max", "bifiltration");
  c.plan.r1_max = get<double>(b, "r1_max", "bifiltration");
  c.plan.budget = get_or<std::size_t>(b, "budget", kDefaultSimplexBudget, "bifiltration");
  auto stats = get<json>(j, "statistics", "config");
  if (!stats.is_array() || stats.empty()) throw ConfigError("statistics: expected a nonempty array");
  for (std::size_t i = 0; i < stats.size(); ++i)
    c.statistics.push_back(parse_statistic(stats[i], "statistics[" + std::to_string(i) + "]"));
  c.n_calibration = get_or<std::size_t>(j, "n_calibration", c.n_calibration, "config");
  c.n_test = get_or<std::size_t>(j, "n_test", c.n_test, "config");
  c.alpha = get_or<double>(j, "alpha", c.alpha, "config");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, "config");
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir, "config");

  try {
    c.window.validate();
    validate(c.marks);
    for (const auto& s : c.samplers()) s.draw(0);  // parameter validation on a throwaway draw
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid model parameters: ") + e.what());
  }
  const int topo_dim = c.window.dimension - (c.last_coordinate_is_mark ? 1 : 0);
  if (topo_dim < 1) throw ConfigError("mark_from_last_coordinate needs dimension >= 2");
  if (c.plan.q_max < 1 || c.plan.q_max > topo_dim + 1) throw ConfigError("bifiltration.q_max must lie in [1, d + 1]");
  if (!(c.plan.r1_max > 0.0) || !std::isfinite(c.plan.r1_max)) throw ConfigError("bifiltration.r1_max must be positive");
  if (c.n_calibration < 2) throw ConfigError("n_calibration must be >= 2");
  if (!(c.alpha > 0.0 && c.alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  std::set<std::string> names;
  for (const auto& s : c.samplers())
    if (!names.insert(s.name).second) throw ConfigError("duplicate model name '" + s.name + "'");
  names.clear();
  for (const auto& s : c.statistics) {
    const std::string where = "statistic '" + s.name + "'";
    if (!names.insert(s.name).second) throw ConfigError("duplicate " + where);
    try {
      validate(s.spec, c.window);
    } catch (const InvalidArgument& e) {
      throw ConfigError(where + ": " + e.what());
    }
    std::visit(
        [&](const auto& x) {
          using S = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<S, TotalPersistence>) check_levels(x, c, where);
          else if constexpr (std::is_same_v<S, BivariateTP>) {
            check_levels(x.first, c, where);
            check_levels(x.second, c, where);
          } else if constexpr (std::is_same_v<S, WeightedCoverTP>) {
            for (const auto& p : x.parts) check_levels(p, c, where);
          }
        },
        s.spec);
    if (statistic_dimension(s.spec) > 1 && c.n_calibration < statistic_dimension(s.spec) + 1)
      throw ConfigError(where + ": n_calibration must exceed the statistic dimension");
  }
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  using namespace detail;
  json j;
  j["window"] = {{"dimension", c.window.dimension}, {"side", c.window.side}};
  if (const auto* u = std::get_if<UniformMarks>(&c.marks)) j["marks"] = {{"law", "uniform"}, {"low", u->low}, {"high", u->high}};
  else j["marks"] = {{"law", "degenerate"}, {"value", std::get<DegenerateMarks>(c.marks).value}};
  j["mark_from_last_coordinate"] = c.last_coordinate_is_mark;
  j["null"] = process_to_json(c.null_model);
  j["alternatives"] = json::array();
  for (const auto& a : c.alternatives) j["alternatives"].push_back(process_to_json(a));
  j["bifiltration"] = {{"kind", c.plan.graded_by_marks ? "marked_cech" : "multicover"},
                       {"q_max", c.plan.q_max},
                       {"r1_max", c.plan.r1_max},
                       {"budget", c.plan.budget}};
  j["statistics"] = json::array();
  for (const auto& s : c.statistics) j["statistics"].push_back(statistic_to_json(s));
  j["n_calibration"] = c.n_calibration;
  j["n_test"] = c.n_test;
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return parse_config(j);
}

/// 64-bit FNV-1a of the canonical (sorted-key) JSON text. The output
/// directory does not affect results and is left out.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Paper table presets

enum class Table { marked3d, multicover2d };

inline Table parse_table(const std::string& name) {
  if (name == "marked3d") return Table::marked3d;
  if (name == "multicover2d") return Table::multicover2d;
  throw ConfigError("unknown table '" + name + "' (expected marked3d or multicover2d)");
}

/// Replication count at scale s.
inline std::size_t scaled_reps(double scale) {
  return static_cast<std::size_t>(std::max(2L, std::lround(1000.0 * scale)));
}

/// Window side relative to the full-size study; never below 60% so that the
/// largest radii stay well inside the eroded window.
inline double scaled_side(double full_side, double scale) { return full_side * std::max(0.6, scale); }

inline ExperimentConfig table_config(Table table, double scale) {
  if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("scale must lie in (0, 1]");
  ExperimentConfig c;
  c.n_calibration = c.n_test = scaled_reps(scale);
  c.alpha = 0.05;
  const double probs_a = 0.45, probs_b = 0.1;
  if (table == Table::marked3d) {
    const double side = scaled_side(10.0, scale);
    const int boxes = std::max(1, static_cast<int>(std::lround(6.0 * side / 10.0)));
    c.window = {3, side};
    c.marks = DegenerateMarks{0.0};
    c.last_coordinate_is_mark = true;
    c.null_model = {"Poi", PoissonSpec{0.2}};
    c.alternatives = {{"Mat", MaternClusterSpec{0.2, 1.0, 1.0}},
                      {"Str", StraussSpec{0.25, 0.5, 1.0, std::nullopt, std::nullopt}},
                      {"Cell", CellSpec{boxes, {probs_a, probs_b, probs_a}}}};
    c.plan = {true, 2, 1.0, kDefaultSimplexBudget};
    const double T = side;  // marks are the third coordinate, in [0, side]
    TotalPersistence mark{MarkAxis{0.5}, 1, 1, std::nullopt, T};
    TotalPersistence cech{CechAxis{T}, 1, 1, std::nullopt, c.plan.r1_max};
    auto combined = [&](double a) { return TotalPersistence{LinearSlice{a, 1.0}, 1, 1, std::nullopt, a * c.plan.r1_max}; };
    c.statistics = {{"tp-mark", mark},
                    {"tp-cech", cech},
                    {"tp-combined-5-1", combined(5.0)},
                    {"tp-combined-10-1", combined(10.0)},
                    {"tp-combined-20-1", combined(20.0)},
                    {"tp-bivariate-mark-cech", BivariateTP{mark, cech}},
                    {"ripley-k", RipleyK{1.0}}};
    c.output_dir = "out/marked3d";
  } else {
    const double side = scaled_side(10.0, scale);
    const int boxes = std::max(1, static_cast<int>(std::lround(14.0 * side / 10.0)));
    c.window = {2, side};
    c.null_model = {"Poi", PoissonSpec{2.0}};
    c.alternatives = {{"Mat", MaternClusterSpec{2.0, 1.0, 0.5}},
                      {"Str", StraussSpec{2.8, 0.6, 0.5, std::nullopt, std::nullopt}},
                      {"Cell", CellSpec{boxes, {probs_a, probs_b, probs_a}}}};
    c.plan = {false, 2, 0.5, 12'000'000};
    const double R = c.plan.r1_max;
    auto cover = [&](int k) {
      return TotalPersistence{CechAxis{}, 1, k, k >= 2 ? std::optional<double>(R / 2.0) : std::nullopt, R};
    };
    c.statistics = {{"tp-1cover", cover(1)},
                    {"tp-2cover", cover(2)},
                    {"tp-3cover", cover(3)},
                    {"tp-weighted-1-2", WeightedCoverTP{{cover(1), cover(2)}, {1.0 / 3.0, 2.0 / 3.0}}},
                    {"ripley-k", RipleyK{0.5}}};
    c.output_dir = "out/multicover2d";
  }
  return parse_config(to_json(c));  // same validation path as user configs
}

// ---------------------------------------------------------------------------
// Output helpers

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline json manifest(const ExperimentConfig& c, const std::string& command, bool with_calibration) {
  json m;
  m["tool"] = "mpbetti";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["config_hash"] = "fnv1a64:" + hex64(config_hash(c));
  m["seed"] = c.seed;
  m["config"] = to_json(c);
  m["streams"] = json::array();
  auto stream_entry = [&](const std::string& role, const std::string& model, std::uint64_t stream, std::size_t n) {
    json s{{"role", role}, {"model", model}, {"stream", stream}, {"seeds", json::array()}};
    for (std::size_t j = 0; j < n; ++j) s["seeds"].push_back(replication_seed(c.seed, stream, j));
    m["streams"].push_back(std::move(s));
  };
  auto samplers = c.samplers();
  if (with_calibration) stream_entry("calibration", samplers.front().name, kCalibrationStream, c.n_calibration);
  for (std::size_t s = 0; s < samplers.size(); ++s) stream_entry("test", samplers[s].name, test_stream(s), c.n_test);
  return m;
}

// ---------------------------------------------------------------------------
// Subcommands

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  unsigned threads = default_threads();
  std::optional<std::string> out;
};

inline void apply(ExperimentConfig& c, const CommonOptions& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
}

/// Writes one cloud CSV per test replication of every model plus a manifest.
/// Returns the number of cloud files written.
inline std::size_t cmd_simulate(ExperimentConfig c, const CommonOptions& o, std::ostream& log = std::cout) {
  apply(c, o);
  ensure_dir(c.output_dir);
  auto samplers = c.samplers();
  std::size_t files = 0;
  auto exec = make_executor(o.threads);
  for (std::size_t s = 0; s < samplers.size(); ++s) {
    exec(c.n_test, [&](std::size_t j) {
      auto sample = samplers[s].draw(replication_seed(c.seed, test_stream(s), j));
      save_cloud_csv(c.output_dir + "/" + samplers[s].name + "_" + std::to_string(j) + ".csv", sample.raw);
    });
    files += c.n_test;
  }
  write_text(c.output_dir + "/manifest.json", manifest(c, "simulate", false).dump(2) + "\n");
  log << "wrote " << files << " cloud files to " << c.output_dir << "\n";
  return files;
}

/// Parses "cech", "cech:R2", "mark:R1" or "linear:A,B".
inline SliceDirection parse_slice_arg(const std::string& text) {
  auto colon = text.find(':');
  std::string kind = text.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (kind == "cech") return rest.empty() ? CechAxis{} : CechAxis{parse_real(rest)};
    if (kind == "mark" && !rest.empty()) return MarkAxis{parse_real(rest)};
    if (kind == "linear") {
      auto f = split(rest, ',');
      if (f.size() == 2) return LinearSlice{parse_real(f[0]), parse_real(f[1])};
    }
  } catch (const ParseError& e) {
    throw ConfigError("bad --slice value '" + text + "': " + e.what());
  }
  throw ConfigError("bad --slice value '" + text + "' (expected cech[:r2], mark:r1 or linear:a,b)");
}

/// Parses "r1,r2,k".
inline Grade parse_grade_arg(const std::string& text) {
  auto f = split(text, ',');
  if (f.size() != 3) throw ConfigError("grade must be r1,r2,k: '" + text + "'");
  try {
    double k = parse_real(f[2]);
    if (k != std::floor(k) || k < 1) throw ConfigError("cover level must be a positive integer: '" + text + "'");
    return {parse_real(f[0]), parse_real(f[1]), static_cast<int>(k)};
  } catch (const ParseError& e) {
    throw ConfigError("bad grade '" + text + "': " + e.what());
  }
}

/// Cloud from CSV; a zero-byte file is an empty planar cloud.
inline MarkedPointCloud read_cloud_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  if (is.peek() == std::ifstream::traits_type::eof()) return MarkedPointCloud{{2, 1.0}, {}, {}};
  return read_cloud_csv(is);
}

struct DiagramOptions {
  std::string cloud;
  int q = 1;
  int k = 1;
  SliceDirection slice = CechAxis{};
  double r_max = 1.0;
  std::size_t budget = kDefaultSimplexBudget;
  bool keep_zero_length = false;
};

inline PersistenceDiagram cmd_diagram(const DiagramOptions& o, std::ostream& out) {
  auto cloud = read_cloud_file(o.cloud);
  PersistenceDiagram dgm{o.q, {}};
  if (o.q < 0) throw InvalidArgument("homology degree must be >= 0");
  if (!cloud.points.empty()) {
    const int q_max = std::min(o.q + 1, cloud.window.dimension + 1);
    auto bf = build_combined(cloud, o.k, q_max, o.r_max, o.budget);
    PersistenceOptions popt;
    popt.keep_zero_length = o.keep_zero_length;
    dgm = persistence_diagram(slice(bf, o.k, o.slice), o.q, popt);
  }
  write_diagram_csv(out, {dgm});
  return dgm;
}

struct RankOptions {
  std::string cloud;
  int q = 1;
  Grade b;
  Grade d;
  RankMethod method = RankMethod::direct;
  std::optional<double> r_max;
  std::size_t budget = kDefaultSimplexBudget;
};

/// Materializes every cover level between d.k and b.k up to max(b.r1, d.r1).
inline std::size_t cmd_rank(const RankOptions& o, std::ostream& out, std::ostream& log) {
  auto start = std::chrono::steady_clock::now();
  auto cloud = read_cloud_file(o.cloud);
  std::size_t rank = 0;
  if (!cloud.points.empty()) {
    if (o.q < 0) throw InvalidArgument("homology degree must be >= 0");
    if (!grade_leq(o.b, o.d)) throw InvalidArgument("rank query needs b <= d in the product order");
    const double r_max = o.r_max.value_or(std::max(o.b.r1, o.d.r1));
    std::vector<int> levels;
    for (int k = o.d.k; k <= o.b.k; ++k) levels.push_back(k);
    if (o.method == RankMethod::binary_filtration && o.b.k != o.d.k)
      throw UnsupportedMethod("binary filtration needs equal cover levels");
    auto bf = build_combined_levels(cloud, levels, std::min(o.q + 1, cloud.window.dimension + 1), r_max, o.budget);
    if (o.q + 1 > bf.q_max) {
      // degree above the ambient dimension has no cycles
      rank = 0;
    } else {
      rank = rank_invariant(bf, o.q, {o.b, o.d}, o.method);
    }
  }
  out << rank << "\n";
  auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  log << "time_ms=" << format_real(ms) << "\n";
  return rank;
}

struct GofOutput {
  std::vector<std::string> statistics;
  std::vector<TestResult> results;  // one per statistic
};

inline void write_results_csv(std::ostream& os, const GofOutput& g) {
  os << "statistic,model,rejection_rate,std_error,n_test\n";
  for (std::size_t i = 0; i < g.statistics.size(); ++i)
    for (const auto& m : g.results[i].outcomes)
      os << g.statistics[i] << ',' << m.model << ',' << format_real(m.rejection_rate()) << ','
         << format_real(m.std_error()) << ',' << m.n_test() << '\n';
}

inline void write_raw_csv(std::ostream& os, const GofOutput& g,
                          const std::vector<std::vector<std::vector<double>>>& calibration_values) {
  os << "statistic,model,role,replication,coordinate,value\n";
  for (std::size_t i = 0; i < g.statistics.size(); ++i) {
    for (std::size_t j = 0; j < calibration_values[i].size(); ++j)
      for (std::size_t c = 0; c < calibration_values[i][j].size(); ++c)
        os << g.statistics[i] << ",calibration,calibration," << j << ',' << c << ','
           << format_real(calibration_values[i][j][c]) << '\n';
    for (const auto& m : g.results[i].outcomes)
      for (std::size_t j = 0; j < m.values.size(); ++j)
        for (std::size_t c = 0; c < m.values[j].size(); ++c)
          os << g.statistics[i] << ',' << m.model << ",test," << j << ',' << c << ',' << format_real(m.values[j][c])
             << '\n';
  }
}

/// Calibrates every statistic on the null and tests all models; each cloud
/// is generated and filtered once for all statistics.
inline GofOutput run_experiment(const ExperimentConfig& c, const Executor& exec,
                                std::vector<std::vector<std::vector<double>>>* calibration_values = nullptr) {
  auto samplers = c.samplers();
  auto specs = c.specs();
  auto cal = simulate_statistics(samplers.front(), c.plan, specs, c.n_calibration, c.seed, kCalibrationStream, exec);
  GofOutput g;
  std::vector<NullCalibration> fits;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    g.statistics.push_back(c.statistics[i].name);
    auto column = statistic_column(cal, i);
    try {
      fits.push_back(fit_calibration(column));
    } catch (const NumericalError& e) {
      throw NumericalError("statistic '" + c.statistics[i].name + "': " + e.what());
    }
    g.results.push_back(make_test_result(fits.back(), c.alpha));
    if (calibration_values) calibration_values->push_back(std::move(column));
  }
  for (std::size_t s = 0; s < samplers.size(); ++s) {
    auto v = simulate_statistics(samplers[s], c.plan, specs, c.n_test, c.seed, test_stream(s), exec);
    for (std::size_t i = 0; i < specs.size(); ++i)
      g.results[i].outcomes.push_back(score_model(fits[i], samplers[s].name, statistic_column(v, i), c.alpha));
  }
  return g;
}

inline void print_table(std::ostream& os, const GofOutput& g) {
  std::vector<std::string> models;
  if (!g.results.empty())
    for (const auto& m : g.results.front().outcomes) models.push_back(m.model);
  std::size_t w = 10;
  for (const auto& s : g.statistics) w = std::max(w, s.size());
  os << std::string(w, ' ');
  for (const auto& m : models) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " %16s", m.c_str());
    os << buf;
  }
  os << "\n";
  for (std::size_t i = 0; i < g.statistics.size(); ++i) {
    os << g.statistics[i] << std::string(w - g.statistics[i].size(), ' ');
    for (const auto& m : g.results[i].outcomes) {
      char buf[48];
      std::snprintf(buf, sizeof buf, " %6.1f%% +- %4.1f%%", 100.0 * m.rejection_rate(), 200.0 * m.std_error());
      os << buf;
    }
    os << "\n";
  }
}

inline GofOutput cmd_gof(ExperimentConfig c, const CommonOptions& o, std::ostream& log = std::cout,
                         const std::string& command = "gof") {
  apply(c, o);
  ensure_dir(c.output_dir);
  auto start = std::chrono::steady_clock::now();
  std::vector<std::vector<std::vector<double>>> cal_values;
  auto g = run_experiment(c, make_executor(o.threads), &cal_values);
  std::ostringstream results, raw;
  write_results_csv(results, g);
  write_raw_csv(raw, g, cal_values);
  write_text(c.output_dir + "/results.csv", results.str());
  write_text(c.output_dir + "/raw_values.csv", raw.str());
  write_text(c.output_dir + "/manifest.json", manifest(c, command, true).dump(2) + "\n");
  print_table(log, g);
  auto s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log << "rates +- 2 standard errors; " << c.n_calibration << " calibration / " << c.n_test
      << " test replications; " << format_real(std::round(s * 10.0) / 10.0) << " s\n";
  return g;
}

inline GofOutput cmd_reproduce(Table table, double scale, const CommonOptions& o, std::ostream& log = std::cout) {
  auto c = table_config(table, scale);
  return cmd_gof(c, o, log, "reproduce");
}

}  // namespace mpbetti::cli
