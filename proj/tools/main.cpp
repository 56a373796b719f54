#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>

#include "sdexit/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool has_seed = false;
};

sdexit::RunConfig load(const CommonArgs& args) {
  sdexit::RunConfig config = sdexit::read_config(args.config_path);
  if (!args.out_override.empty()) config.output = args.out_override;
  if (args.has_seed) config.simulate.seed = args.seed_override;
  return config;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file")->required();
  cmd->add_option("--out", args.out_override, "override the output directory");
  cmd->add_option("--seed", args.seed_override, "override the simulation seed")
      ->each([&args](const std::string&) { args.has_seed = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learn SDE models from sample paths and compute exit statistics"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string source = "true";

  CLI::App* sim = app.add_subcommand("simulate", "generate trajectory files");
  add_common(sim, args);
  CLI::App* learn = app.add_subcommand("learn", "fit a coefficient table from trajectories");
  add_common(learn, args);
  CLI::App* solve = app.add_subcommand("solve", "solve the exit-statistics boundary-value problems");
  add_common(solve, args);
  solve->add_option("--source", source, "model source: true | learned")
      ->check(CLI::IsMember({"true", "learned"}));
  CLI::App* oracle = app.add_subcommand("oracle", "Monte Carlo exit estimates at probe points");
  add_common(oracle, args);
  oracle->add_option("--source", source, "model source: true | learned")
      ->check(CLI::IsMember({"true", "learned"}));
  CLI::App* compare = app.add_subcommand("compare", "true-vs-learned and PDE-vs-oracle errors");
  add_common(compare, args);

  CLI11_PARSE(app, argc, argv);

  try {
    const sdexit::RunConfig config = load(args);
    const std::filesystem::path outdir = config.output;
    if (sim->parsed()) {
      const auto out = sdexit::run_simulate(config, outdir);
      std::printf("wrote %zu trajectory file(s) under %s\n", out.files.size(),
                  outdir.string().c_str());
    } else if (learn->parsed()) {
      const auto out = sdexit::run_learn(config, outdir);
      std::printf("learned %lld x %d coefficient table (condition ~ %.3g)\n",
                  static_cast<long long>(out.table.xi.rows()), out.table.basis.state_dim,
                  out.report.condition_estimate);
    } else if (solve->parsed()) {
      const auto out = sdexit::run_solve(config, outdir, source);
      std::printf("solved %zu field(s) [%s model] under %s\n", out.fields.size(), source.c_str(),
                  (outdir / ("solve_" + source)).string().c_str());
    } else if (oracle->parsed()) {
      const auto out = sdexit::run_oracle(config, outdir, source);
      std::printf("estimated %zu probe point(s); report at %s\n", out.probes.size(),
                  (outdir / "oracle_report.txt").string().c_str());
    } else if (compare->parsed()) {
      const auto out = sdexit::run_compare(config, outdir);
      std::printf("error_u = %.6g\n", out.error_u);
      for (const auto& [gamma, err] : out.error_p)
        std::printf("error_P[%s] = %.6g\n", gamma.c_str(), err);
      if (out.has_oracle)
        std::printf("oracle agreement: %s\n", out.oracle_all_ok ? "ok" : "FAILED");
    }
  } catch (const sdexit::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const sdexit::BlowupError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const sdexit::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
