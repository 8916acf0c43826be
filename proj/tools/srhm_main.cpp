#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include <srhm/harness.hpp>

namespace {

srhm::ExperimentConfig load_or_die(const std::string& path) {
  if (path.empty()) throw srhm::HarnessError("--config is required");
  return srhm::load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse hierarchy model laboratory"};
  app.require_subcommand(1);

  std::string config, out, run_dir, cell, net_path, grammar_path, probe_out;
  int workers = srhm::default_workers();
  int64_t P = 0;
  uint64_t seed = 0;
  srhm::SensitivityOptions probe_opt;

  auto* gen = app.add_subcommand("generate", "write grammars and datasets");
  gen->add_option("--config", config, "experiment config json")->required();
  gen->add_option("--out", out, "output directory (default: config out)");

  auto* sweep = app.add_subcommand("sweep", "run the full experiment grid");
  sweep->add_option("--config", config, "experiment config json")->required();
  sweep->add_option("--out", out, "output directory (default: config out)");
  sweep->add_option("--workers", workers, "worker threads");

  auto* train = app.add_subcommand("train", "train one cell at one point");
  train->add_option("--config", config, "experiment config json")->required();
  train->add_option("--cell", cell, "cell key (optional for 1-cell configs)");
  train->add_option("--p", P, "training set size")->required();
  train->add_option("--seed", seed, "run seed");
  train->add_option("--out", out, "output directory (default: config out)");

  auto* probe = app.add_subcommand("probe", "sensitivities of a saved net");
  probe->add_option("--net", net_path, "network checkpoint")->required();
  probe->add_option("--grammar", grammar_path, "grammar json")->required();
  probe->add_option("--out", probe_out, "report path ('-' for stdout)");
  probe->add_option("--trees", probe_opt.trees, "numerator inputs");
  probe->add_option("--draws", probe_opt.draws, "operator draws per input");
  probe->add_option("--pairs", probe_opt.pairs, "denominator pairs");
  probe->add_option("--seed", probe_opt.seed, "probe seed");
  probe->add_flag("--exhaustive", probe_opt.exhaustive,
                  "enumerate operators and pairs exactly");

  auto* fit = app.add_subcommand("fit", "fit P* scaling laws of a run");
  fit->add_option("dir", run_dir, "sweep output directory")->required();

  auto* scatter =
      app.add_subcommand("scatter", "test error vs output sensitivity");
  scatter->add_option("dir", run_dir, "sweep output directory")->required();

  auto* plot = app.add_subcommand("plot", "learning-curve and P* figures");
  plot->add_option("dir", run_dir, "sweep output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = load_or_die(config);
      return srhm::cmd_generate(cfg, out.empty() ? cfg.out : out);
    }
    if (sweep->parsed()) {
      const auto cfg = load_or_die(config);
      return srhm::cmd_sweep(cfg, out.empty() ? cfg.out : out, workers);
    }
    if (train->parsed()) {
      const auto cfg = load_or_die(config);
      return srhm::cmd_train(cfg, cell, P, seed, out.empty() ? cfg.out : out);
    }
    if (probe->parsed())
      return srhm::cmd_probe(net_path, grammar_path, probe_opt, probe_out);
    if (fit->parsed()) return srhm::cmd_fit(run_dir);
    if (scatter->parsed()) return srhm::cmd_scatter(run_dir);
    if (plot->parsed()) return srhm::cmd_plot(run_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
