// robust-recon: simulate | preprocess | reconstruct | evaluate | sweep
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "rrecon/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kNumerical = 4 };

struct Options {
  std::string config;
  std::optional<double> tau;
  std::optional<std::string> method;
  std::optional<double> alpha;
  std::optional<int> sweeps;
  bool whiten = false;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out = ".";
  std::string in;
};

rrecon::PipelineConfig effective_config(const Options& o) {
  rrecon::PipelineConfig cfg = o.config.empty() ? rrecon::PipelineConfig{} : rrecon::load_config(o.config);
  if (o.tau) cfg.preprocess.tau = *o.tau;
  if (o.method) cfg.solver.method = rrecon::parse_method(*o.method);
  if (o.alpha) cfg.solver.alpha = *o.alpha;
  if (o.sweeps) cfg.solver.cfg.sweeps = *o.sweeps;
  if (o.whiten) cfg.preprocess.whiten = true;
  if (o.seed) cfg.background.params.seed = *o.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust MPI reconstruction pipeline"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "Config file (section.key = value)")->check(CLI::ExistingFile);
    sub->add_option("--tau", o.tau, "SNR threshold");
    sub->add_option("--method", o.method, "l1-L, l2-L or l2-K");
    sub->add_option("--alpha", o.alpha, "Tikhonov parameter");
    sub->add_option("--sweeps", o.sweeps, "Kaczmarz sweeps N");
    sub->add_flag("--whiten", o.whiten, "Whiten rows by the empty-scan std");
    sub->add_option("--seed", o.seed, "Acquisition seed");
    sub->add_option("--jobs", o.jobs, "Concurrent solves (sweep)")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--in", o.in, "Input directory (defaults to --out)");
  };
  auto* simulate = app.add_subcommand("simulate", "Simulate calibration, empty and phantom scans");
  auto* preprocess = app.add_subcommand("preprocess", "Background correction, selection, scaling");
  auto* reconstruct = app.add_subcommand("reconstruct", "Solve the reduced system");
  auto* evaluate = app.add_subcommand("evaluate", "Shift-maximized PSNR and SSIM of a reconstruction");
  auto* sweep = app.add_subcommand("sweep", "Metric tables over alpha and N");
  for (auto* sub : {simulate, preprocess, reconstruct, evaluate, sweep}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    const rrecon::PipelineConfig cfg = effective_config(o);
    const std::string in = o.in.empty() ? o.out : o.in;
    std::string summary;
    if (*simulate) summary = rrecon::cmd_simulate(cfg, o.out);
    else if (*preprocess) summary = rrecon::cmd_preprocess(cfg, in, o.out);
    else if (*reconstruct) summary = rrecon::cmd_reconstruct(cfg, in, o.out);
    else if (*evaluate) summary = rrecon::cmd_evaluate(cfg, in, o.out);
    else summary = rrecon::cmd_sweep(cfg, in, o.out, o.jobs);
    std::cout << summary;
    return kOk;
  } catch (const rrecon::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const rrecon::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const rrecon::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
}
