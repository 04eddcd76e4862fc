// Command-line front end: simulate, reconstruct, init-train, stability,
// report. Exit codes: 0 success, 2 bad inputs or configuration, 3 broken
// runtime invariant or failed report check.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amrec/config.hpp"
#include "amrec/errors.hpp"
#include "amrec/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool out_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
  auto* c = cmd->add_option("--config", opts.config_path,
                            "JSON run configuration");
  if (config_required) c->required();
  cmd->add_option("--out", opts.out_dir, "output directory")
      ->each([&opts](const std::string&) { opts.out_set = true; });
  cmd->add_option("--seed", opts.seed, "random seed override")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

amrec::RunConfig load_config(const CommonOpts& opts) {
  amrec::RunConfig cfg = opts.config_path.empty()
                             ? amrec::RunConfig{}
                             : amrec::parse_config_file(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  if (opts.out_set) cfg.out_dir = opts.out_dir;
  amrec::validate_config(cfg);
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-view tomographic reconstruction toolkit"};
  app.require_subcommand(1);

  CommonOpts sim_opts, rec_opts, train_opts, stab_opts;
  std::vector<std::string> report_dirs;
  std::string report_out = "report";

  CLI::App* sim = app.add_subcommand(
      "simulate", "Generate a phantom and its sparse-view measurements");
  add_common(sim, sim_opts, false);

  CLI::App* rec = app.add_subcommand(
      "reconstruct", "Run the dual-domain solver on simulated measurements");
  add_common(rec, rec_opts, true);

  CLI::App* train = app.add_subcommand(
      "init-train", "Fit a convolutional view-advance map on random phantoms");
  add_common(train, train_opts, false);

  CLI::App* stab = app.add_subcommand(
      "stability", "Reconstruct a perturbed phantom and score the change");
  add_common(stab, stab_opts, false);

  CLI::App* rep = app.add_subcommand(
      "report", "Re-derive convergence guarantees from finished run outputs");
  rep->add_option("dirs", report_dirs, "run directories to check")->required();
  rep->add_option("--out", report_out, "report output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return amrec::cmd_simulate(load_config(sim_opts));
    if (rec->parsed()) return amrec::cmd_reconstruct(load_config(rec_opts));
    if (train->parsed()) return amrec::cmd_init_train(load_config(train_opts));
    if (stab->parsed()) return amrec::cmd_stability(load_config(stab_opts));
    if (rep->parsed()) return amrec::cmd_report(report_dirs, report_out);
  } catch (const amrec::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const amrec::InvariantFailure& e) {
    std::cerr << "invariant failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
