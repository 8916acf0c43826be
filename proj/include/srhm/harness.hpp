#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <srhm/grammar.hpp>
#include <srhm/nn.hpp>
#include <srhm/probes.hpp>
#include <srhm/train.hpp>

namespace srhm {

inline constexpr const char* kVersion = "0.1.0";

// configuration and table problems; maps to exit code 2 in the CLI
struct HarnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientPoints : HarnessError {
  using HarnessError::HarnessError;
};

// ---- experiment configuration ---------------------------------------------------

struct Thresholds {
  double epsilon = 0.1;  // test-error level defining P*
  double s2 = 0.3;       // layer-2 synonym sensitivity level for P*_S
  double d2 = 0.1;       // layer-2 diffeo sensitivity level for P*_D
};

// geometric grid of training-set sizes; `explicit_p` wins when nonempty
struct GridSpec {
  std::vector<int64_t> explicit_p;
  int64_t p_min = 16;
  int64_t p_max = 4096;
  double ratio = 2.0;

  std::vector<int64_t> points() const;
};

struct ProbeBudget {
  bool enabled = false;  // measure sensitivities of every trained net
  int trees = 512;
  int draws = 8;
  int pairs = 2048;
};

// grammar-only identity, e.g. nc4_v4_m4_s2_L2_s00_spa_g1; names shared
// artifacts like rule sets and datasets that do not depend on the arch
std::string grammar_key(const GrammarParams& g);

// one resolved grammar x architecture combination
struct CellSpec {
  GrammarParams grammar;
  ArchKind kind = ArchKind::LCN;
  int width = 256;
  Scaling scaling = Scaling::Standard;
  InitMode init = InitMode::Standard;

  bool operator==(const CellSpec&) const = default;

  // canonical filesystem-safe identity, e.g. lcn_w256_std_std_nc4_v4_m4_s2_L2_s00_spa_g1
  std::string key() const;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<CellSpec> cells;  // resolved cross product, document order
  TrainConfig train;            // shared by all cells; train.seed is unused
  GridSpec grid;
  int seeds = 3;  // per (cell, P); run seeds are 0..seeds-1
  int64_t test_size = 2048;
  Thresholds thresholds;
  ProbeBudget probe;
  std::string out = "runs/out";
  nlohmann::json resolved;  // full resolved config, echoed into the manifest
};

// Strict schema: unknown keys are errors, every swept grammar combination is
// validated before anything runs. Swept fields take a scalar or a list:
// grammar n_c/v/m/s/L/s0/sparsity and arch kind/width.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// ---- sweep ----------------------------------------------------------------------

// one (cell, P, seed) record; sensitivities are NaN unless probed
struct CellRow {
  int64_t P = 0;
  uint64_t seed = 0;
  RunPointResult run;
  double s2 = std::numeric_limits<double>::quiet_NaN();
  double d2 = std::numeric_limits<double>::quiet_NaN();
  double s_out = std::numeric_limits<double>::quiet_NaN();
  double d_out = std::numeric_limits<double>::quiet_NaN();
};

// train one cell at one point and optionally probe the trained net
CellRow run_cell_point(const ExperimentConfig& cfg, const CellSpec& cell,
                       int64_t P, uint64_t seed);

struct SweepSummary {
  int64_t total = 0;     // (cell, P, seed) points in the plan
  int64_t executed = 0;  // computed in this invocation
  int64_t resumed = 0;   // fragments found on disk and trusted
  int64_t failed = 0;    // diverged runs (they still produce rows)
  double wall_seconds = 0;
};

// Runs every (cell, P, seed) over a bounded worker pool. Each finished point
// is persisted as one JSON fragment under <out_dir>/cells via a single
// collector (write to temp, atomic rename), so an interrupted sweep resumes
// by skipping existing fragments and never rewrites one. Ends by calling
// merge_outputs.
SweepSummary run_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
                       int workers);

// SRHM_WORKERS environment variable, else hardware concurrency
int default_workers();

// Fragments -> results.csv, curves.csv, pstar.csv and manifest.json.
// Deterministic: rows follow the config's cell order, then P, then seed, and
// numbers are printed in shortest round-trip form, so a rerun with the same
// config and seeds is byte-identical. Wall-clock timing goes only to the
// manifest.
void merge_outputs(const ExperimentConfig& cfg, const std::string& out_dir);

// ---- scaling-law fits -------------------------------------------------------------

// P* laws fit in log space. Both share the n_c m^L core and differ in how
// sparsity enters: "local" uses (s0+1)^L (per-position weights), "shared"
// uses (s0+1)^2 (weight sharing).
double predictor_core(const GrammarParams& g, const std::string& model);

struct FitResult {
  std::string model;  // "local" or "shared"
  std::string kind;   // architecture subset the fit ran on
  int n = 0;
  // slope pinned to 1: log P* = log c + log core
  double c = std::numeric_limits<double>::quiet_NaN();
  double rss = std::numeric_limits<double>::quiet_NaN();
  // free fit: log P* = intercept + slope * log core
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double rss_free = std::numeric_limits<double>::quiet_NaN();
  bool selected = false;  // lowest fixed-slope rss among models of its kind
};

// least squares of log pstar against log core; needs >= 1 point for the
// pinned-slope fit and >= 2 distinct cores for the free fit
FitResult fit_log_model(const std::vector<double>& cores,
                        const std::vector<double>& pstars,
                        const std::string& model, const std::string& kind);

// fits both models per architecture kind present and marks the winner
std::vector<FitResult> fit_pstar_rows(
    const std::vector<std::pair<CellSpec, double>>& rows);

// Spearman rank correlation with average ranks on ties
double spearman(std::vector<double> a, std::vector<double> b);

// ---- commands (CLI entry points, also callable from tests) -----------------------
//
// Exit codes: 0 success, 2 configuration/table error, 3 completed with
// partial failures (some runs diverged or some cells censored).

int cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
              int workers);
int cmd_train(const ExperimentConfig& cfg, const std::string& cell_key,
              int64_t P, uint64_t seed, const std::string& out_dir);
int cmd_probe(const std::string& net_path, const std::string& grammar_path,
              const SensitivityOptions& opt, const std::string& out_path);
int cmd_fit(const std::string& run_dir);
int cmd_scatter(const std::string& run_dir);
int cmd_plot(const std::string& run_dir);

// ---- csv ------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

}  // namespace srhm
