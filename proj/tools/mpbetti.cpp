// Command-line runner: simulate, diagram, rank, gof, reproduce.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mpbetti/cli.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;

void add_common(CLI::App* cmd, mpbetti::cli::CommonOptions& o, std::optional<std::uint64_t>& seed,
                std::optional<std::string>& out) {
  cmd->add_option("--seed", seed, "master seed (overrides the config)");
  cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", out, "output directory (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mpbetti;
  namespace mc = mpbetti::cli;

  CLI::App app{"Multiparameter persistent Betti numbers: bifiltrations, rank invariants and goodness-of-fit tests"};
  app.set_version_flag("--version", std::string(mc::kToolVersion));
  app.require_subcommand(1);

  mc::CommonOptions common;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string config_path;

  auto* simulate = app.add_subcommand("simulate", "write one cloud CSV per test replication of every model");
  simulate->add_option("--config", config_path, "experiment config (JSON)")->required();
  add_common(simulate, common, seed, out);

  mc::DiagramOptions dopt;
  std::string slice_text = "cech";
  std::optional<std::string> diagram_out;
  auto* diagram = app.add_subcommand("diagram", "persistence diagram of one slice of a cloud");
  diagram->add_option("--cloud", dopt.cloud, "cloud CSV (x1,...,xd,mark)")->required();
  diagram->add_option("--q", dopt.q, "homology degree");
  diagram->add_option("--k", dopt.k, "cover level")->check(CLI::PositiveNumber);
  diagram->add_option("--slice", slice_text, "cech[:r2] | mark:r1 | linear:a,b");
  diagram->add_option("--r-max", dopt.r_max, "largest Cech radius materialized");
  diagram->add_option("--budget", dopt.budget, "simplex budget");
  diagram->add_flag("--keep-zero-length", dopt.keep_zero_length, "keep pairs with birth == death");
  diagram->add_option("--out", diagram_out, "diagram CSV path (default: standard output)");

  mc::RankOptions ropt;
  std::string b_text, d_text, method_text = "direct";
  std::optional<double> rank_r_max;
  auto* rank = app.add_subcommand("rank", "persistent Betti number between two grades");
  rank->add_option("--cloud", ropt.cloud, "cloud CSV")->required();
  rank->add_option("--q", ropt.q, "homology degree");
  rank->add_option("--b", b_text, "birth grade r1,r2,k")->required();
  rank->add_option("--d", d_text, "death grade r1,r2,k")->required();
  rank->add_option("--method", method_text, "direct | binary")->check(CLI::IsMember({"direct", "binary"}));
  rank->add_option("--r-max", rank_r_max, "largest Cech radius materialized (default: max of the grades)");
  rank->add_option("--budget", ropt.budget, "simplex budget");

  auto* gof = app.add_subcommand("gof", "calibrate on the null and report rejection rates");
  gof->add_option("--config", config_path, "experiment config (JSON)")->required();
  add_common(gof, common, seed, out);

  std::string table_name;
  double scale = 1.0;
  auto* reproduce = app.add_subcommand("reproduce", "rerun a rejection-rate table at a given scale");
  reproduce->add_option("--table", table_name, "marked3d | multicover2d")->required();
  reproduce->add_option("--scale", scale, "fraction of the full replication count, in (0, 1]");
  add_common(reproduce, common, seed, out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  common.seed = seed;
  common.out = out;

  try {
    if (simulate->parsed()) {
      mc::cmd_simulate(mc::load_config(config_path), common);
    } else if (diagram->parsed()) {
      dopt.slice = mc::parse_slice_arg(slice_text);
      if (diagram_out) {
        std::ofstream os(*diagram_out, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + *diagram_out);
        mc::cmd_diagram(dopt, os);
      } else {
        mc::cmd_diagram(dopt, std::cout);
      }
    } else if (rank->parsed()) {
      ropt.b = mc::parse_grade_arg(b_text);
      ropt.d = mc::parse_grade_arg(d_text);
      ropt.method = method_text == "binary" ? RankMethod::binary_filtration : RankMethod::direct;
      ropt.r_max = rank_r_max;
      mc::cmd_rank(ropt, std::cout, std::cerr);
    } else if (gof->parsed()) {
      mc::cmd_gof(mc::load_config(config_path), common);
    } else if (reproduce->parsed()) {
      mc::cmd_reproduce(mc::parse_table(table_name), scale, common);
    }
  } catch (const ResourceLimit& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBudget;
  } catch (const mc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnsupportedMethod& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
