#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "pv_lattice/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace pvl::cli;

  CLI::App app{"Per-panel and aggregated photovoltaic array simulator"};
  app.require_subcommand(1);

  RunOptions opt;
  std::string config;
  std::string out_dir = ".";
  std::string models = "both";
  std::size_t points = 0;
  const std::map<std::string, ModelSelection> model_names = {
      {"sdm", ModelSelection::sdm}, {"ppdm", ModelSelection::ppdm}, {"both", ModelSelection::both}};

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Scenario file (TOML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--model", models, "sdm | ppdm | both")->check(CLI::IsMember({"sdm", "ppdm", "both"}));
    sub->add_option("--points", points, "Sweep points (sweep) or coarse MPP points (mpp, audit)")
        ->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
  };

  auto* sweep = app.add_subcommand("sweep", "Trace IV/PV curves to CSV");
  add_common(sweep);
  sweep->add_flag("--cold-start", opt.cold_start, "Solve every point from the initial guess (parallel)");
  auto* mpp = app.add_subcommand("mpp", "Maximum power points and model errors");
  add_common(mpp);
  auto* audit = app.add_subcommand("audit", "Equivalence audit at the per-panel MPP");
  add_common(audit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code::config;
  }

  configure_logging();
  opt.config = config;
  opt.out_dir = out_dir;
  opt.models = model_names.at(models);
  if (points) opt.points = points;

  if (sweep->parsed()) return run_sweep(opt, std::cout, std::cerr);
  if (mpp->parsed()) return run_mpp(opt, std::cout, std::cerr);
  return run_audit(opt, std::cout, std::cerr);
}
