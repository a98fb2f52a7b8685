#include <CLI11.hpp>
#include <iostream>

#include "gneflex/error.hpp"
#include "gneflex/run_config.hpp"
#include "gneflex/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Distributed v-GNE seeking for network-constrained demand-response bidding"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  double tol = 0.0;
  long max_iter = 0;
  bool force = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides outputs.directory)");
    sub->add_option("--seed", seed, "seed for random initialisation");
    sub->add_option("--tol", tol, "stopping tolerance");
    sub->add_option("--max-iter", max_iter, "iteration cap");
    sub->add_flag("--force", force, "accept explicit gains that fail the preconditioner check");
  };
  CLI::App* run = app.add_subcommand("run", "run the distributed iteration");
  CLI::App* oracle = app.add_subcommand("oracle", "solve the variational inequality centrally");
  CLI::App* tune = app.add_subcommand("tune", "print cocoercivity constants and step sizes");
  CLI::App* compare = app.add_subcommand("compare", "run both solvers and report their agreement");
  for (CLI::App* sub : {run, oracle, tune, compare}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? gneflex::kExitOk : gneflex::kExitConfig;
  }

  CLI::App* chosen = app.get_subcommands().front();
  gneflex::CommandOptions opts;
  if (chosen->count("--out")) opts.out_dir = out_dir;
  if (chosen->count("--seed")) opts.seed = seed;
  if (chosen->count("--tol")) opts.tol = tol;
  if (chosen->count("--max-iter")) opts.max_iter = max_iter;
  opts.force = force;

  gneflex::RunConfig cfg;
  try {
    cfg = gneflex::load_config(config_path);
  } catch (const gneflex::Error& e) {
    std::cerr << "gneflex: " << e.what() << "\n";
    return gneflex::kExitConfig;
  }

  if (chosen == run) return gneflex::cmd_run(cfg, opts, std::cout, std::cerr);
  if (chosen == oracle) return gneflex::cmd_oracle(cfg, opts, std::cout, std::cerr);
  if (chosen == tune) return gneflex::cmd_tune(cfg, opts, std::cout, std::cerr);
  return gneflex::cmd_compare(cfg, opts, std::cout, std::cerr);
}
