#include <srhm/harness.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <queue>
#include <sstream>
#include <thread>

#include <srhm/io.hpp>
#include <srhm/svg.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace srhm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* to_string(Scaling s) {
  return s == Scaling::MeanField ? "meanfield" : "standard";
}
Scaling scaling_from_string(const std::string& s) {
  if (s == "standard") return Scaling::Standard;
  if (s == "meanfield") return Scaling::MeanField;
  throw HarnessError("unknown scaling: " + s);
}
const char* to_string(InitMode m) {
  return m == InitMode::ConstantFilter ? "constant" : "standard";
}
InitMode init_from_string(const std::string& s) {
  if (s == "standard") return InitMode::Standard;
  if (s == "constant") return InitMode::ConstantFilter;
  throw HarnessError("unknown init: " + s);
}

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw HarnessError(section + " must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || item.key() == k;
    if (!ok)
      throw HarnessError("unknown key '" + item.key() + "' in " + section);
  }
}

// a swept field: scalar or nonempty list
std::vector<json> sweep_values(const json& j, const char* key,
                               const json& dflt) {
  if (!j.contains(key)) return {dflt};
  const json& v = j.at(key);
  if (!v.is_array()) return {v};
  if (v.empty()) throw HarnessError(std::string(key) + " list is empty");
  return std::vector<json>(v.begin(), v.end());
}

int as_int(const json& v, const char* key) {
  if (!v.is_number_integer())
    throw HarnessError(std::string(key) + " must be an integer");
  return v.get<int>();
}

std::string frag_name(const CellSpec& cell, int64_t P, uint64_t seed) {
  return cell.key() + "_P" + std::to_string(P) + "_s" + std::to_string(seed) +
         ".json";
}

}  // namespace

// ---- grid ------------------------------------------------------------------------

std::vector<int64_t> GridSpec::points() const {
  std::vector<int64_t> out;
  if (!explicit_p.empty()) {
    for (int64_t p : explicit_p) {
      if (p < 1) throw HarnessError("grid sizes must be positive");
      if (!out.empty() && p <= out.back())
        throw HarnessError("grid sizes must be strictly increasing");
      out.push_back(p);
    }
    return out;
  }
  if (p_min < 1 || p_max < p_min)
    throw HarnessError("grid needs 1 <= p_min <= p_max");
  if (!(ratio > 1.0)) throw HarnessError("grid ratio must exceed 1");
  double p = double(p_min);
  while (true) {
    int64_t r = std::llround(p);
    if (r > p_max) break;
    if (out.empty() || r != out.back()) out.push_back(r);
    p *= ratio;
  }
  if (out.empty()) throw HarnessError("grid produced no sizes");
  return out;
}

// ---- cells -----------------------------------------------------------------------

std::string grammar_key(const GrammarParams& g) {
  std::string sp = to_string(g.sparsity);
  for (auto& c : sp) c = char(std::tolower(c));
  std::ostringstream os;
  os << "nc" << g.n_c << "_v" << g.v << "_m" << g.m << "_s" << g.s << "_L"
     << g.L << "_s0" << g.s0 << "_sp" << sp << "_g" << g.seed;
  return os.str();
}

std::string CellSpec::key() const {
  std::ostringstream os;
  os << to_string(kind) << "_w" << width << "_"
     << (scaling == Scaling::MeanField ? "mf" : "std") << "_"
     << (init == InitMode::ConstantFilter ? "cf" : "std") << "_"
     << grammar_key(grammar);
  return os.str();
}

// ---- config ----------------------------------------------------------------------

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "config",
             {"name", "grammar", "arch", "train", "grid", "seeds", "test_size",
              "thresholds", "probe", "out"});
  ExperimentConfig cfg;
  cfg.resolved = j;
  if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
  if (j.contains("out")) cfg.out = j.at("out").get<std::string>();

  if (!j.contains("grammar")) throw HarnessError("config needs a grammar");
  const json& jg = j.at("grammar");
  check_keys(jg, "grammar", {"n_c", "v", "m", "s", "L", "s0", "sparsity", "seed"});
  const uint64_t gseed = jg.value("seed", uint64_t(1));

  json ja = j.value("arch", json::object());
  check_keys(ja, "arch", {"kind", "width", "scaling", "init"});
  const Scaling scaling =
      scaling_from_string(ja.value("scaling", std::string("standard")));
  const InitMode init =
      init_from_string(ja.value("init", std::string("standard")));

  // cross product in document order, width innermost
  for (const json& vnc : sweep_values(jg, "n_c", 2))
    for (const json& vv : sweep_values(jg, "v", 2))
      for (const json& vm : sweep_values(jg, "m", 2))
        for (const json& vs : sweep_values(jg, "s", 2))
          for (const json& vL : sweep_values(jg, "L", 2))
            for (const json& vs0 : sweep_values(jg, "s0", 0))
              for (const json& vsp : sweep_values(jg, "sparsity", "none"))
                for (const json& vk : sweep_values(ja, "kind", "lcn"))
                  for (const json& vw : sweep_values(ja, "width", 256)) {
                    CellSpec cell;
                    cell.grammar.n_c = as_int(vnc, "n_c");
                    cell.grammar.v = as_int(vv, "v");
                    cell.grammar.m = as_int(vm, "m");
                    cell.grammar.s = as_int(vs, "s");
                    cell.grammar.L = as_int(vL, "L");
                    cell.grammar.s0 = as_int(vs0, "s0");
                    cell.grammar.sparsity =
                        sparsity_from_string(vsp.get<std::string>());
                    cell.grammar.seed = gseed;
                    cell.kind = arch_from_string(vk.get<std::string>());
                    cell.width = as_int(vw, "width");
                    if (cell.width < 1) throw HarnessError("width must be positive");
                    cell.scaling = scaling;
                    cell.init = init;
                    try {
                      cell.grammar.validate();
                    } catch (const std::exception& e) {
                      throw HarnessError("invalid combination " + cell.key() +
                                         ": " + e.what());
                    }
                    cfg.cells.push_back(std::move(cell));
                  }

  json jt = j.value("train", json::object());
  check_keys(jt, "train", {"lr", "batch", "momentum", "stop_loss", "max_steps"});
  cfg.train.lr = jt.value("lr", cfg.train.lr);
  cfg.train.batch = jt.value("batch", cfg.train.batch);
  cfg.train.momentum = jt.value("momentum", cfg.train.momentum);
  cfg.train.stop_loss = jt.value("stop_loss", cfg.train.stop_loss);
  cfg.train.max_steps = jt.value("max_steps", cfg.train.max_steps);
  try {
    cfg.train.validate();
  } catch (const std::exception& e) {
    throw HarnessError(std::string("invalid train config: ") + e.what());
  }

  json jr = j.value("grid", json::object());
  check_keys(jr, "grid", {"p", "p_min", "p_max", "ratio"});
  if (jr.contains("p"))
    cfg.grid.explicit_p = jr.at("p").get<std::vector<int64_t>>();
  cfg.grid.p_min = jr.value("p_min", cfg.grid.p_min);
  cfg.grid.p_max = jr.value("p_max", cfg.grid.p_max);
  cfg.grid.ratio = jr.value("ratio", cfg.grid.ratio);
  cfg.grid.points();  // validates

  cfg.seeds = j.value("seeds", cfg.seeds);
  if (cfg.seeds < 1) throw HarnessError("seeds must be positive");
  cfg.test_size = j.value("test_size", cfg.test_size);
  if (cfg.test_size < 1) throw HarnessError("test_size must be positive");

  json jth = j.value("thresholds", json::object());
  check_keys(jth, "thresholds", {"epsilon", "s2", "d2"});
  cfg.thresholds.epsilon = jth.value("epsilon", cfg.thresholds.epsilon);
  cfg.thresholds.s2 = jth.value("s2", cfg.thresholds.s2);
  cfg.thresholds.d2 = jth.value("d2", cfg.thresholds.d2);
  for (double t : {cfg.thresholds.epsilon, cfg.thresholds.s2, cfg.thresholds.d2})
    if (!(t > 0.0) || !(t < 1.0))
      throw HarnessError("thresholds must lie in (0, 1)");

  json jp = j.value("probe", json::object());
  check_keys(jp, "probe", {"enabled", "trees", "draws", "pairs"});
  cfg.probe.enabled = jp.value("enabled", cfg.probe.enabled);
  cfg.probe.trees = jp.value("trees", cfg.probe.trees);
  cfg.probe.draws = jp.value("draws", cfg.probe.draws);
  cfg.probe.pairs = jp.value("pairs", cfg.probe.pairs);
  if (cfg.probe.trees < 1 || cfg.probe.draws < 1 || cfg.probe.pairs < 1)
    throw HarnessError("probe budgets must be positive");

  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw HarnessError("cannot parse " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---- single point ------------------------------------------------------------------

namespace {

RunPointConfig point_config(const ExperimentConfig& cfg, const CellSpec& cell) {
  RunPointConfig rp;
  rp.kind = cell.kind;
  rp.width = cell.width;
  rp.scaling = cell.scaling;
  rp.init = cell.init;
  rp.train = cfg.train;
  rp.test_size = size_t(cfg.test_size);
  return rp;
}

void probe_row(CellRow& row, const Network<float>& net, const RuleSet& rules,
               const ProbeBudget& budget, uint64_t seed) {
  SensitivityOptions so;
  so.trees = budget.trees;
  so.draws = budget.draws;
  so.pairs = budget.pairs;
  so.seed = seed;  // probe streams are label-split, disjoint from training
  auto rep = sensitivity_report(net, rules, so);
  if (rules.params.L >= 2) {
    row.s2 = rep.s_hidden[1][0];
    row.d2 = rep.d_hidden[1][0];
  }
  row.s_out = rep.s_output[0];
  row.d_out = rep.d_output[0];
}

}  // namespace

CellRow run_cell_point(const ExperimentConfig& cfg, const CellSpec& cell,
                       int64_t P, uint64_t seed) {
  auto rules = build_ruleset(cell.grammar);
  CellRow row;
  row.P = P;
  row.seed = seed;
  auto [res, net] = run_point_net<float>(rules, point_config(cfg, cell),
                                         size_t(P), seed);
  row.run = res;
  if (cfg.probe.enabled && !res.diverged)
    probe_row(row, net, rules, cfg.probe, seed);
  return row;
}

// ---- fragments ---------------------------------------------------------------------

namespace {

struct FragmentRow {
  CellRow row;
  std::string status;   // ok | diverged | error
  std::string message;  // only for error
};

json fragment_to_json(const CellSpec& cell, const FragmentRow& f) {
  json j;
  j["version"] = kVersion;
  j["cell"] = cell.key();
  j["P"] = f.row.P;
  j["seed"] = f.row.seed;
  j["status"] = f.status;
  if (!f.message.empty()) j["message"] = f.message;
  j["converged"] = f.row.run.converged;
  j["steps"] = f.row.run.steps;
  j["epochs"] = f.row.run.epochs;
  j["wall_seconds"] = f.row.run.wall_seconds;
  if (std::isfinite(f.row.run.final_loss))
    j["train_loss"] = f.row.run.final_loss;
  if (std::isfinite(f.row.run.test_err)) j["test_err"] = f.row.run.test_err;
  if (std::isfinite(f.row.s2)) j["s2"] = f.row.s2;
  if (std::isfinite(f.row.d2)) j["d2"] = f.row.d2;
  if (std::isfinite(f.row.s_out)) j["s_out"] = f.row.s_out;
  if (std::isfinite(f.row.d_out)) j["d_out"] = f.row.d_out;
  return j;
}

FragmentRow fragment_from_json(const json& j) {
  FragmentRow f;
  f.row.P = j.at("P").get<int64_t>();
  f.row.seed = j.at("seed").get<uint64_t>();
  f.status = j.at("status").get<std::string>();
  f.message = j.value("message", std::string());
  f.row.run.converged = j.value("converged", false);
  f.row.run.diverged = f.status == "diverged";
  f.row.run.steps = j.value("steps", int64_t(0));
  f.row.run.epochs = j.value("epochs", int64_t(0));
  f.row.run.wall_seconds = j.value("wall_seconds", 0.0);
  f.row.run.final_loss = j.value("train_loss", kNaN);
  f.row.run.test_err = j.value("test_err", kNaN);
  f.row.s2 = j.value("s2", kNaN);
  f.row.d2 = j.value("d2", kNaN);
  f.row.s_out = j.value("s_out", kNaN);
  f.row.d_out = j.value("d_out", kNaN);
  return f;
}

struct MergedData {
  // per cell, rows ordered by (P, seed); missing fragments are errors
  std::vector<std::vector<FragmentRow>> per_cell;
  int64_t failed = 0;
};

MergedData read_fragments(const ExperimentConfig& cfg,
                          const std::string& out_dir) {
  MergedData md;
  md.per_cell.resize(cfg.cells.size());
  const auto grid = cfg.grid.points();
  const fs::path dir = fs::path(out_dir) / "cells";
  for (size_t ci = 0; ci < cfg.cells.size(); ++ci)
    for (int64_t P : grid)
      for (int sd = 0; sd < cfg.seeds; ++sd) {
        const fs::path p = dir / frag_name(cfg.cells[ci], P, uint64_t(sd));
        if (!fs::exists(p))
          throw HarnessError("missing result fragment " + p.string());
        FragmentRow f;
        try {
          f = fragment_from_json(json::parse(read_file(p.string())));
        } catch (const json::exception& e) {
          throw HarnessError("corrupt fragment " + p.string() + ": " +
                             e.what());
        }
        if (f.status != "ok") ++md.failed;
        md.per_cell[ci].push_back(std::move(f));
      }
  return md;
}

// ---- csv writers -----------------------------------------------------------------

std::string cell_columns(const CellSpec& c) {
  const auto& g = c.grammar;
  std::string sp = to_string(g.sparsity);
  std::ostringstream os;
  os << c.key() << ',' << g.n_c << ',' << g.v << ',' << g.m << ',' << g.s
     << ',' << g.L << ',' << g.s0 << ',' << sp << ',' << g.seed << ','
     << to_string(c.kind) << ',' << c.width << ','
     << to_string(c.scaling) << ',' << to_string(c.init);
  return os.str();
}

constexpr const char* kCellHeader =
    "cell,n_c,v,m,s,L,s0,sparsity,grammar_seed,kind,width,scaling,init";

void write_results_csv(const ExperimentConfig& cfg, const MergedData& md,
                       const std::string& out_dir) {
  std::string csv = std::string(kCellHeader) +
                    ",P,seed,status,converged,steps,epochs,train_loss,"
                    "test_err,s2,d2,s_out,d_out\n";
  for (size_t ci = 0; ci < cfg.cells.size(); ++ci) {
    const std::string cc = cell_columns(cfg.cells[ci]);
    for (const auto& f : md.per_cell[ci]) {
      csv += cc + ',' + std::to_string(f.row.P) + ',' +
             std::to_string(f.row.seed) + ',' + f.status + ',' +
             (f.row.run.converged ? "1" : "0") + ',' +
             std::to_string(f.row.run.steps) + ',' +
             std::to_string(f.row.run.epochs) + ',' +
             fmt_double(f.row.run.final_loss) + ',' +
             fmt_double(f.row.run.test_err) + ',' + fmt_double(f.row.s2) +
             ',' + fmt_double(f.row.d2) + ',' + fmt_double(f.row.s_out) +
             ',' + fmt_double(f.row.d_out) + '\n';
    }
  }
  write_file_atomic((fs::path(out_dir) / "results.csv").string(), csv);
}

struct CurvePointAgg {
  int64_t P = 0;
  int seeds = 0, ok = 0;
  double mean_err = kNaN, min_err = kNaN, max_err = kNaN;
  double mean_s2 = kNaN, mean_d2 = kNaN, mean_s_out = kNaN, mean_d_out = kNaN;
};

std::vector<CurvePointAgg> aggregate_cell(const ExperimentConfig& cfg,
                                          const std::vector<FragmentRow>& rows) {
  std::vector<CurvePointAgg> out;
  const auto grid = cfg.grid.points();
  for (size_t pi = 0; pi < grid.size(); ++pi) {
    CurvePointAgg a;
    a.P = grid[pi];
    double sum = 0, s2 = 0, d2 = 0, so = 0, dc = 0;
    int n_s2 = 0, n_d2 = 0, n_so = 0, n_do = 0;
    for (int sd = 0; sd < cfg.seeds; ++sd) {
      const auto& f = rows[pi * size_t(cfg.seeds) + size_t(sd)];
      ++a.seeds;
      if (f.status != "ok" || !std::isfinite(f.row.run.test_err)) continue;
      ++a.ok;
      sum += f.row.run.test_err;
      a.min_err = a.ok == 1 ? f.row.run.test_err
                            : std::min(a.min_err, f.row.run.test_err);
      a.max_err = a.ok == 1 ? f.row.run.test_err
                            : std::max(a.max_err, f.row.run.test_err);
      if (std::isfinite(f.row.s2)) s2 += f.row.s2, ++n_s2;
      if (std::isfinite(f.row.d2)) d2 += f.row.d2, ++n_d2;
      if (std::isfinite(f.row.s_out)) so += f.row.s_out, ++n_so;
      if (std::isfinite(f.row.d_out)) dc += f.row.d_out, ++n_do;
    }
    if (a.ok > 0) a.mean_err = sum / a.ok;
    if (n_s2 > 0) a.mean_s2 = s2 / n_s2;
    if (n_d2 > 0) a.mean_d2 = d2 / n_d2;
    if (n_so > 0) a.mean_s_out = so / n_so;
    if (n_do > 0) a.mean_d_out = dc / n_do;
    out.push_back(a);
  }
  return out;
}

void write_curves_csv(const ExperimentConfig& cfg, const MergedData& md,
                      const std::string& out_dir) {
  std::string csv = std::string(kCellHeader) +
                    ",P,seeds,ok,mean_err,min_err,max_err,mean_s2,mean_d2,"
                    "mean_s_out,mean_d_out\n";
  for (size_t ci = 0; ci < cfg.cells.size(); ++ci) {
    const std::string cc = cell_columns(cfg.cells[ci]);
    for (const auto& a : aggregate_cell(cfg, md.per_cell[ci]))
      csv += cc + ',' + std::to_string(a.P) + ',' + std::to_string(a.seeds) +
             ',' + std::to_string(a.ok) + ',' + fmt_double(a.mean_err) + ',' +
             fmt_double(a.min_err) + ',' + fmt_double(a.max_err) + ',' +
             fmt_double(a.mean_s2) + ',' + fmt_double(a.mean_d2) + ',' +
             fmt_double(a.mean_s_out) + ',' + fmt_double(a.mean_d_out) + '\n';
  }
  write_file_atomic((fs::path(out_dir) / "curves.csv").string(), csv);
}

PStarResult pstar_of(const std::vector<std::pair<double, double>>& curve,
                     double thr) {
  if (curve.empty()) return {};
  return extract_pstar(curve, thr);
}

void write_pstar_csv(const ExperimentConfig& cfg, const MergedData& md,
                     const std::string& out_dir) {
  std::string csv = std::string(kCellHeader) +
                    ",threshold,pstar,reached,censored,pstar_s,pstar_d,"
                    "core_local,core_shared,pred_local,pred_shared\n";
  for (size_t ci = 0; ci < cfg.cells.size(); ++ci) {
    const auto& cell = cfg.cells[ci];
    auto agg = aggregate_cell(cfg, md.per_cell[ci]);
    std::vector<std::pair<double, double>> err, s2c, d2c;
    for (const auto& a : agg) {
      if (std::isfinite(a.mean_err)) err.push_back({double(a.P), a.mean_err});
      if (std::isfinite(a.mean_s2)) s2c.push_back({double(a.P), a.mean_s2});
      if (std::isfinite(a.mean_d2)) d2c.push_back({double(a.P), a.mean_d2});
    }
    const auto pe = pstar_of(err, cfg.thresholds.epsilon);
    const auto ps = pstar_of(s2c, cfg.thresholds.s2);
    const auto pd = pstar_of(d2c, cfg.thresholds.d2);
    // sensitivity crossings carry no flag columns, so only genuine crossings
    // from above are reported
    const double ps_val = ps.reached && !ps.censored ? ps.pstar : kNaN;
    const double pd_val = pd.reached && !pd.censored ? pd.pstar : kNaN;
    csv += cell_columns(cell) + ',' + fmt_double(cfg.thresholds.epsilon) +
           ',' + fmt_double(pe.pstar) + ',' + (pe.reached ? "1" : "0") + ',' +
           (pe.censored ? "1" : "0") + ',' + fmt_double(ps_val) + ',' +
           fmt_double(pd_val) + ',' +
           fmt_double(predictor_core(cell.grammar, "local")) + ',' +
           fmt_double(predictor_core(cell.grammar, "shared")) + ',' +
           fmt_double(predict_pstar_lcn(cell.grammar)) + ',' +
           fmt_double(predict_pstar_cnn(cell.grammar)) + '\n';
  }
  write_file_atomic((fs::path(out_dir) / "pstar.csv").string(), csv);
}

void write_manifest(const ExperimentConfig& cfg, const MergedData& md,
                    const std::string& out_dir, double wall, int workers) {
  json j;
  j["version"] = kVersion;
  j["name"] = cfg.name;
  j["config"] = cfg.resolved;
  j["grid"] = cfg.grid.points();
  j["seeds"] = cfg.seeds;
  j["test_size"] = cfg.test_size;
  j["workers"] = workers;
  j["wall_seconds"] = wall;
  j["failed"] = md.failed;
  json cells = json::array();
  for (size_t ci = 0; ci < cfg.cells.size(); ++ci) {
    const auto& cell = cfg.cells[ci];
    json jc;
    jc["key"] = cell.key();
    // natural log of the birthday bound on a repeated training input at the
    // largest grid size
    jc["collision_bound_log"] =
        collision_bound_log(cell.grammar, cfg.grid.points().back());
    json frags = json::array();
    for (int64_t P : cfg.grid.points())
      for (int sd = 0; sd < cfg.seeds; ++sd)
        frags.push_back("cells/" + frag_name(cell, P, uint64_t(sd)));
    jc["fragments"] = std::move(frags);
    cells.push_back(std::move(jc));
  }
  j["cells"] = std::move(cells);
  write_file_atomic((fs::path(out_dir) / "manifest.json").string(),
                    j.dump(2) + "\n");
}

}  // namespace

void merge_outputs(const ExperimentConfig& cfg, const std::string& out_dir) {
  auto md = read_fragments(cfg, out_dir);
  write_results_csv(cfg, md, out_dir);
  write_curves_csv(cfg, md, out_dir);
  write_pstar_csv(cfg, md, out_dir);
  write_manifest(cfg, md, out_dir, 0.0, 0);
}

// ---- sweep -----------------------------------------------------------------------

int default_workers() {
  if (const char* env = std::getenv("SRHM_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? int(hc) : 1;
}

SweepSummary run_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
                       int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir(out_dir);
  fs::create_directories(dir / "cells");

  struct Task {
    size_t cell = 0;
    int64_t P = 0;
    uint64_t seed = 0;
    std::string path;
  };
  SweepSummary sum;
  std::vector<Task> tasks;
  const auto grid = cfg.grid.points();
  for (size_t ci = 0; ci < cfg.cells.size(); ++ci)
    for (int64_t P : grid)
      for (int sd = 0; sd < cfg.seeds; ++sd) {
        ++sum.total;
        const auto path = dir / "cells" / frag_name(cfg.cells[ci], P, uint64_t(sd));
        if (fs::exists(path)) {
          ++sum.resumed;
          continue;
        }
        tasks.push_back({ci, P, uint64_t(sd), path.string()});
      }

  if (!tasks.empty()) {
    // workers compute; one collector owns every file write
    std::atomic<size_t> next{0};
    std::mutex mu;
    std::condition_variable cv;
    std::queue<std::pair<std::string, std::string>> done;
    std::atomic<int> live{0};

    auto worker = [&] {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= tasks.size()) break;
        const Task& t = tasks[i];
        FragmentRow f;
        f.row.P = t.P;
        f.row.seed = t.seed;
        try {
          f.row = run_cell_point(cfg, cfg.cells[t.cell], t.P, t.seed);
          f.status = f.row.run.diverged ? "diverged" : "ok";
        } catch (const std::exception& e) {
          f.status = "error";
          f.message = e.what();
        }
        auto frag = fragment_to_json(cfg.cells[t.cell], f);
        std::lock_guard<std::mutex> lk(mu);
        done.push({t.path, frag.dump(2) + "\n"});
        cv.notify_one();
      }
      --live;
      cv.notify_one();
    };

    const int n = int(std::min<size_t>(size_t(std::max(workers, 1)), tasks.size()));
    live = n;
    std::vector<std::thread> pool;
    pool.reserve(size_t(n));
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);

    size_t written = 0;
    while (written < tasks.size()) {
      std::unique_lock<std::mutex> lk(mu);
      cv.wait(lk, [&] { return !done.empty() || live == 0; });
      while (!done.empty()) {
        auto [path, content] = std::move(done.front());
        done.pop();
        lk.unlock();
        write_file_atomic(path, content);
        ++written;
        ++sum.executed;
        lk.lock();
      }
      if (live == 0 && done.empty()) break;
    }
    for (auto& th : pool) th.join();
  }

  auto md = read_fragments(cfg, out_dir);
  sum.failed = md.failed;
  write_results_csv(cfg, md, out_dir);
  write_curves_csv(cfg, md, out_dir);
  write_pstar_csv(cfg, md, out_dir);
  sum.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_manifest(cfg, md, out_dir, sum.wall_seconds, workers);
  return sum;
}

// ---- fits ------------------------------------------------------------------------

double predictor_core(const GrammarParams& g, const std::string& model) {
  const double base = double(g.n_c) * std::pow(double(g.m), double(g.L));
  if (model == "local")
    return base * std::pow(double(g.s0) + 1.0, double(g.L));
  if (model == "shared") return base * std::pow(double(g.s0) + 1.0, 2.0);
  throw HarnessError("unknown model: " + model);
}

FitResult fit_log_model(const std::vector<double>& cores,
                        const std::vector<double>& pstars,
                        const std::string& model, const std::string& kind) {
  if (cores.size() != pstars.size())
    throw HarnessError("fit inputs out of sync");
  if (cores.empty()) throw InsufficientPoints("no points to fit");
  FitResult r;
  r.model = model;
  r.kind = kind;
  r.n = int(cores.size());
  const size_t n = cores.size();
  std::vector<double> x(n), y(n);
  for (size_t i = 0; i < n; ++i) {
    if (!(cores[i] > 0) || !(pstars[i] > 0))
      throw HarnessError("fit needs positive cores and pstars");
    x[i] = std::log(cores[i]);
    y[i] = std::log(pstars[i]);
  }
  // pinned slope 1: intercept is the mean log ratio
  double logc = 0;
  for (size_t i = 0; i < n; ++i) logc += y[i] - x[i];
  logc /= double(n);
  r.c = std::exp(logc);
  r.rss = 0;
  for (size_t i = 0; i < n; ++i) {
    const double e = y[i] - x[i] - logc;
    r.rss += e * e;
  }
  // free fit needs spread in x
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= double(n);
  my /= double(n);
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (n >= 2 && sxx > 0) {
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    r.rss_free = 0;
    for (size_t i = 0; i < n; ++i) {
      const double e = y[i] - r.intercept - r.slope * x[i];
      r.rss_free += e * e;
    }
  }
  return r;
}

std::vector<FitResult> fit_pstar_rows(
    const std::vector<std::pair<CellSpec, double>>& rows) {
  if (rows.empty()) throw InsufficientPoints("no measured pstar rows");
  std::vector<std::string> kinds;
  for (const auto& [cell, p] : rows) {
    const std::string k = to_string(cell.kind);
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end())
      kinds.push_back(k);
  }
  std::vector<FitResult> out;
  for (const auto& k : kinds) {
    size_t best = 0;
    const size_t base = out.size();
    for (const std::string model : {"local", "shared"}) {
      std::vector<double> cores, ps;
      for (const auto& [cell, p] : rows)
        if (to_string(cell.kind) == k) {
          cores.push_back(predictor_core(cell.grammar, model));
          ps.push_back(p);
        }
      out.push_back(fit_log_model(cores, ps, model, k));
      if (out.back().rss < out[base + best].rss) best = out.size() - 1 - base;
    }
    out[base + best].selected = true;
  }
  return out;
}

double spearman(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size()) throw HarnessError("spearman inputs out of sync");
  if (a.size() < 2) throw InsufficientPoints("spearman needs >= 2 points");
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (double(i) + double(j)) / 2.0 + 1.0;
      for (size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const size_t n = a.size();
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) ma += ra[i], mb += rb[i];
  ma /= double(n);
  mb /= double(n);
  double saa = 0, sbb = 0, sab = 0;
  for (size_t i = 0; i < n; ++i) {
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
    sab += (ra[i] - ma) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0)
    throw DegenerateDenominator("constant ranks in spearman");
  return sab / std::sqrt(saa * sbb);
}

// ---- csv reader --------------------------------------------------------------------

int CsvTable::col(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return int(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  const std::string text = read_file(path);
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      const size_t pos = line.find(',', start);
      fields.push_back(line.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size())
        throw HarnessError("ragged csv row in " + path);
      t.rows.push_back(std::move(fields));
    }
  }
  if (first) throw HarnessError("empty csv " + path);
  return t;
}

// ---- commands ----------------------------------------------------------------------

namespace {

double cell_field(const CsvTable& t, const std::vector<std::string>& row,
                  const std::string& name) {
  const int c = t.col(name);
  if (c < 0) throw HarnessError("missing csv column " + name);
  const std::string& s = row[size_t(c)];
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw HarnessError("bad number '" + s + "' in " + name);
  return v;
}

std::string str_field(const CsvTable& t, const std::vector<std::string>& row,
                      const std::string& name) {
  const int c = t.col(name);
  if (c < 0) throw HarnessError("missing csv column " + name);
  return row[size_t(c)];
}

CellSpec cell_from_row(const CsvTable& t, const std::vector<std::string>& row) {
  CellSpec cell;
  cell.grammar.n_c = int(cell_field(t, row, "n_c"));
  cell.grammar.v = int(cell_field(t, row, "v"));
  cell.grammar.m = int(cell_field(t, row, "m"));
  cell.grammar.s = int(cell_field(t, row, "s"));
  cell.grammar.L = int(cell_field(t, row, "L"));
  cell.grammar.s0 = int(cell_field(t, row, "s0"));
  cell.grammar.sparsity = sparsity_from_string(str_field(t, row, "sparsity"));
  cell.grammar.seed = uint64_t(cell_field(t, row, "grammar_seed"));
  cell.kind = arch_from_string(str_field(t, row, "kind"));
  cell.width = int(cell_field(t, row, "width"));
  return cell;
}

// fixed architecture palette plus a cycling palette for per-cell lines
const char* kind_color(ArchKind k) {
  switch (k) {
    case ArchKind::LCN: return "#1f77b4";
    case ArchKind::CNN: return "#d62728";
    default: return "#2ca02c";
  }
}
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#17becf",
                                    "#8c564b", "#e377c2"};

// log-log plot box; data maps through log10 on both axes
struct LogPlot {
  double x0, x1, y0, y1;      // pixel box, y0 is the top
  double lx0, lx1, ly0, ly1;  // log10 data ranges
  double px(double v) const {
    return x0 + (std::log10(v) - lx0) / (lx1 - lx0) * (x1 - x0);
  }
  double py(double v) const {
    return y1 - (std::log10(v) - ly0) / (ly1 - ly0) * (y1 - y0);
  }
};

void draw_frame(SvgCanvas& svg, double x0, double y0, double x1, double y1) {
  svg.line(x0, y0, x1, y0, "#999999");
  svg.line(x0, y1, x1, y1, "#999999");
  svg.line(x0, y0, x0, y1, "#999999");
  svg.line(x1, y0, x1, y1, "#999999");
}

void log_ticks(SvgCanvas& svg, const LogPlot& pl) {
  for (int k = int(std::ceil(pl.lx0)); k <= int(std::floor(pl.lx1)); ++k) {
    const double v = std::pow(10.0, k);
    const double x = pl.px(v);
    svg.line(x, pl.y0, x, pl.y1, "#e0e0e0");
    svg.text(x, pl.y1 + 16, fmt_double(v), 10, "middle", "#555555");
  }
  for (int k = int(std::ceil(pl.ly0)); k <= int(std::floor(pl.ly1)); ++k) {
    const double v = std::pow(10.0, k);
    const double y = pl.py(v);
    svg.line(pl.x0, y, pl.x1, y, "#e0e0e0");
    svg.text(pl.x0 - 6, y + 3, fmt_double(v), 10, "end", "#555555");
  }
}

double parse_or_nan(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  return end == s.c_str() ? kNaN : v;
}

}  // namespace

int cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir) {
  const fs::path dir = fs::path(out_dir) / "data";
  fs::create_directories(dir);
  const auto grid = cfg.grid.points();
  const int64_t p_max = grid.back();
  json files = json::array();
  std::vector<std::string> seen;
  for (const auto& cell : cfg.cells) {
    const std::string gk = grammar_key(cell.grammar);
    if (std::find(seen.begin(), seen.end(), gk) != seen.end()) continue;
    seen.push_back(gk);
    auto rules = build_ruleset(cell.grammar);
    const std::string gpath = (dir / (gk + ".grammar.json")).string();
    save_grammar(rules, gpath);
    files.push_back("data/" + gk + ".grammar.json");
    for (int sd = 0; sd < cfg.seeds; ++sd) {
      // the exact streams a training run would draw from; the train file at
      // p_max is a prefix superset of every smaller grid size
      Rng root{uint64_t(sd)};
      Dataset trainset = generate_dataset(rules, p_max, root.split("data"));
      Dataset testset =
          generate_dataset(rules, cfg.test_size, root.split("test"));
      const std::string tr = gk + "_s" + std::to_string(sd) + ".train.bin";
      const std::string te = gk + "_s" + std::to_string(sd) + ".test.bin";
      save_dataset(trainset, (dir / tr).string());
      save_dataset(testset, (dir / te).string());
      files.push_back("data/" + tr);
      files.push_back("data/" + te);
    }
  }
  json j;
  j["version"] = kVersion;
  j["name"] = cfg.name;
  j["config"] = cfg.resolved;
  j["p_max"] = p_max;
  j["test_size"] = cfg.test_size;
  j["files"] = std::move(files);
  write_file_atomic((fs::path(out_dir) / "generate.json").string(),
                    j.dump(2) + "\n");
  std::printf("wrote %zu grammars under %s\n", seen.size(), dir.c_str());
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
              int workers) {
  const auto sum = run_sweep(cfg, out_dir, workers);
  std::printf("sweep %s: %lld points (%lld run, %lld resumed, %lld failed) in %ss\n",
              cfg.name.c_str(), (long long)sum.total, (long long)sum.executed,
              (long long)sum.resumed, (long long)sum.failed,
              fmt_double(sum.wall_seconds).c_str());
  int64_t censored = 0;
  const auto t = read_csv((fs::path(out_dir) / "pstar.csv").string());
  for (const auto& row : t.rows)
    if (str_field(t, row, "censored") == "1") ++censored;
  if (censored > 0)
    std::printf("warning: %lld cells censored at the smallest grid size\n",
                (long long)censored);
  return sum.failed > 0 || censored > 0 ? 3 : 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& cell_key,
              int64_t P, uint64_t seed, const std::string& out_dir) {
  const CellSpec* cell = nullptr;
  if (cell_key.empty()) {
    if (cfg.cells.size() != 1)
      throw HarnessError("config resolves to " +
                         std::to_string(cfg.cells.size()) +
                         " cells; pick one with --cell");
    cell = &cfg.cells[0];
  } else {
    for (const auto& c : cfg.cells)
      if (c.key() == cell_key) cell = &c;
    if (!cell) throw HarnessError("no cell named " + cell_key);
  }
  if (P < 1) throw HarnessError("training set size must be positive");
  fs::create_directories(out_dir);

  auto rules = build_ruleset(cell->grammar);
  CellRow row;
  row.P = P;
  row.seed = seed;
  auto [res, net] = run_point_net<float>(rules, point_config(cfg, *cell),
                                         size_t(P), seed);
  row.run = res;
  if (cfg.probe.enabled && !res.diverged)
    probe_row(row, net, rules, cfg.probe, seed);

  const std::string stem =
      cell->key() + "_P" + std::to_string(P) + "_s" + std::to_string(seed);
  FragmentRow f;
  f.row = row;
  f.status = res.diverged ? "diverged" : "ok";
  write_file_atomic((fs::path(out_dir) / (stem + ".json")).string(),
                    fragment_to_json(*cell, f).dump(2) + "\n");
  if (!res.diverged)
    save_network(net, (fs::path(out_dir) / (stem + ".net")).string());
  std::printf("%s: status=%s test_err=%s steps=%lld\n", stem.c_str(),
              f.status.c_str(), fmt_double(res.test_err).c_str(),
              (long long)res.steps);
  return res.diverged ? 3 : 0;
}

int cmd_probe(const std::string& net_path, const std::string& grammar_path,
              const SensitivityOptions& opt, const std::string& out_path) {
  auto net = load_network<float>(net_path);
  auto rules = load_grammar(grammar_path);
  const auto rep = sensitivity_report(net, rules, opt);
  json j;
  j["version"] = kVersion;
  j["levels"] = rep.levels;
  j["s_hidden"] = rep.s_hidden;
  j["d_hidden"] = rep.d_hidden;
  j["s_output"] = rep.s_output;
  j["d_output"] = rep.d_output;
  j["op_forwards"] = rep.op_forwards;
  j["pair_forwards"] = rep.pair_forwards;
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty() || out_path == "-")
    std::fputs(text.c_str(), stdout);
  else
    write_file_atomic(out_path, text);
  return 0;
}

int cmd_fit(const std::string& run_dir) {
  const auto t = read_csv((fs::path(run_dir) / "pstar.csv").string());
  std::vector<std::pair<CellSpec, double>> rows;
  for (const auto& row : t.rows) {
    if (str_field(t, row, "reached") != "1") continue;
    if (str_field(t, row, "censored") != "0") continue;
    const double p = cell_field(t, row, "pstar");
    if (!std::isfinite(p)) continue;
    rows.push_back({cell_from_row(t, row), p});
  }
  const auto fits = fit_pstar_rows(rows);  // throws InsufficientPoints if empty
  std::string csv = "kind,model,n,c,rss,slope,intercept,rss_free,selected\n";
  for (const auto& f : fits) {
    csv += f.kind + ',' + f.model + ',' + std::to_string(f.n) + ',' +
           fmt_double(f.c) + ',' + fmt_double(f.rss) + ',' +
           fmt_double(f.slope) + ',' + fmt_double(f.intercept) + ',' +
           fmt_double(f.rss_free) + ',' + (f.selected ? "1" : "0") + '\n';
    std::printf("kind=%s model=%s n=%d c=%s rss=%s slope=%s%s\n",
                f.kind.c_str(), f.model.c_str(), f.n, fmt_double(f.c).c_str(),
                fmt_double(f.rss).c_str(), fmt_double(f.slope).c_str(),
                f.selected ? " selected" : "");
  }
  write_file_atomic((fs::path(run_dir) / "fits.csv").string(), csv);
  return 0;
}

int cmd_scatter(const std::string& run_dir) {
  const auto t = read_csv((fs::path(run_dir) / "results.csv").string());
  struct Pt {
    std::string cell, kind;
    int64_t P;
    uint64_t seed;
    double err, s_out, d_out;
  };
  std::vector<Pt> pts;
  for (const auto& row : t.rows) {
    if (str_field(t, row, "status") != "ok") continue;
    Pt p;
    p.err = cell_field(t, row, "test_err");
    p.d_out = cell_field(t, row, "d_out");
    if (!std::isfinite(p.err) || !std::isfinite(p.d_out)) continue;
    p.cell = str_field(t, row, "cell");
    p.kind = str_field(t, row, "kind");
    p.P = int64_t(cell_field(t, row, "P"));
    p.seed = uint64_t(cell_field(t, row, "seed"));
    p.s_out = cell_field(t, row, "s_out");
    pts.push_back(std::move(p));
  }
  if (pts.size() < 2)
    throw InsufficientPoints("need >= 2 probed rows for a scatter");

  std::string csv = "cell,kind,P,seed,test_err,s_out,d_out\n";
  std::vector<double> errs, douts;
  for (const auto& p : pts) {
    csv += p.cell + ',' + p.kind + ',' + std::to_string(p.P) + ',' +
           std::to_string(p.seed) + ',' + fmt_double(p.err) + ',' +
           fmt_double(p.s_out) + ',' + fmt_double(p.d_out) + '\n';
    errs.push_back(p.err);
    douts.push_back(p.d_out);
  }
  write_file_atomic((fs::path(run_dir) / "scatter.csv").string(), csv);
  const double rho = spearman(errs, douts);

  // linear axes; opacity encodes log P
  double xmax = 0, ymax = 0;
  int64_t pmin = pts[0].P, pmax = pts[0].P;
  for (const auto& p : pts) {
    xmax = std::max(xmax, p.d_out);
    ymax = std::max(ymax, p.err);
    pmin = std::min(pmin, p.P);
    pmax = std::max(pmax, p.P);
  }
  xmax = xmax > 0 ? xmax * 1.08 : 1.0;
  ymax = ymax > 0 ? ymax * 1.08 : 1.0;
  const double x0 = 70, x1 = 560, y0 = 30, y1 = 400;
  SvgCanvas svg(640, 460);
  draw_frame(svg, x0, y0, x1, y1);
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y1 - (y1 - y0) * i / 4.0;
    svg.text(fx, y1 + 16, svg_coord(xmax * i / 4.0), 10, "middle", "#555555");
    svg.text(x0 - 6, fy + 3, svg_coord(ymax * i / 4.0), 10, "end", "#555555");
  }
  for (const auto& p : pts) {
    const double op =
        pmax == pmin
            ? 1.0
            : 0.3 + 0.7 * (std::log(double(p.P)) - std::log(double(pmin))) /
                        (std::log(double(pmax)) - std::log(double(pmin)));
    svg.circle(x0 + (x1 - x0) * p.d_out / xmax, y1 - (y1 - y0) * p.err / ymax,
               3, kind_color(arch_from_string(p.kind)), op);
  }
  svg.text(x0, y1 + 34, "output diffeomorphism sensitivity", 11);
  svg.text(x0, 18, "test error vs output stability, opacity grows with P", 11);
  svg.text(x1, 18,
           "spearman = " + fmt_double(rho) + " (n=" +
               std::to_string(pts.size()) + ")",
           11, "end");
  write_file_atomic((fs::path(run_dir) / "scatter.svg").string(),
                    svg.render());

  json j;
  j["rows"] = pts.size();
  j["spearman_err_d"] = rho;
  write_file_atomic((fs::path(run_dir) / "scatter_summary.json").string(),
                    j.dump(2) + "\n");
  std::printf("spearman(test_err, d_out) = %s over %zu rows\n",
              fmt_double(rho).c_str(), pts.size());
  return 0;
}

int cmd_plot(const std::string& run_dir) {
  const auto t = read_csv((fs::path(run_dir) / "curves.csv").string());
  struct Curve {
    std::string cell;
    std::vector<std::pair<double, double>> pts;  // (P, mean_err)
  };
  std::vector<Curve> curves;
  double perr_min = kNaN, err_max = 0;
  bool zeros = false;
  double p_lo = kNaN, p_hi = kNaN;
  for (const auto& row : t.rows) {
    const std::string cell = str_field(t, row, "cell");
    const double P = cell_field(t, row, "P");
    const double err = parse_or_nan(str_field(t, row, "mean_err"));
    if (!std::isfinite(err)) continue;
    if (curves.empty() || curves.back().cell != cell)
      curves.push_back({cell, {}});
    curves.back().pts.push_back({P, err});
    if (err > 0) {
      perr_min = std::isfinite(perr_min) ? std::min(perr_min, err) : err;
      err_max = std::max(err_max, err);
    } else {
      zeros = true;
    }
    p_lo = std::isfinite(p_lo) ? std::min(p_lo, P) : P;
    p_hi = std::isfinite(p_hi) ? std::max(p_hi, P) : P;
  }
  if (curves.empty()) throw InsufficientPoints("curves.csv has no finite rows");
  if (!std::isfinite(perr_min)) perr_min = 1e-3, err_max = 1.0;

  LogPlot pl;
  pl.x0 = 70, pl.x1 = 520, pl.y0 = 30, pl.y1 = 400;
  pl.lx0 = std::log10(p_lo) - 0.05;
  pl.lx1 = std::log10(p_hi) + 0.05;
  pl.ly0 = std::floor(std::log10(perr_min)) - (zeros ? 1 : 0);
  pl.ly1 = std::max(std::ceil(std::log10(std::max(err_max, 1e-12))), pl.ly0 + 1);
  const double floor_err = std::pow(10.0, pl.ly0);

  SvgCanvas svg(780, 460);
  log_ticks(svg, pl);
  draw_frame(svg, pl.x0, pl.y0, pl.x1, pl.y1);

  // threshold comes from the sibling pstar table when present
  const fs::path pstar_path = fs::path(run_dir) / "pstar.csv";
  if (fs::exists(pstar_path)) {
    const auto pt = read_csv(pstar_path.string());
    if (!pt.rows.empty()) {
      const double eps = cell_field(pt, pt.rows[0], "threshold");
      if (eps > floor_err) {
        svg.line(pl.x0, pl.py(eps), pl.x1, pl.py(eps), "#888888", 1.0, "4,3");
        svg.text(pl.x1 - 4, pl.py(eps) - 5, "error = " + fmt_double(eps), 10,
                 "end", "#666666");
      }
    }
  }

  for (size_t i = 0; i < curves.size(); ++i) {
    const std::string color = kPalette[i % (sizeof(kPalette) / sizeof(*kPalette))];
    std::vector<std::pair<double, double>> line;
    for (auto [P, err] : curves[i].pts)
      line.push_back({pl.px(P), pl.py(std::max(err, floor_err))});
    svg.polyline(line, color, 1.5);
    for (auto [x, y] : line) svg.circle(x, y, 2.5, color);
    const double ly = 40 + 14 * double(i);
    svg.line(pl.x1 + 12, ly - 3, pl.x1 + 30, ly - 3, color, 2);
    svg.text(pl.x1 + 34, ly, curves[i].cell, 9);
  }
  svg.text(pl.x0, pl.y1 + 34, "training set size", 11);
  svg.text(pl.x0, 18, "mean test error vs training set size", 11);
  write_file_atomic((fs::path(run_dir) / "curves.svg").string(), svg.render());

  // measured P* against the predictor core, unit slope in log-log
  if (fs::exists(pstar_path)) {
    const auto pt = read_csv(pstar_path.string());
    struct Mark {
      double core, pstar;
      ArchKind kind;
    };
    std::vector<Mark> marks;
    for (const auto& row : pt.rows) {
      if (str_field(pt, row, "reached") != "1") continue;
      if (str_field(pt, row, "censored") != "0") continue;
      const double p = cell_field(pt, row, "pstar");
      if (!std::isfinite(p)) continue;
      Mark mk;
      mk.kind = arch_from_string(str_field(pt, row, "kind"));
      mk.core = cell_field(pt, row, mk.kind == ArchKind::CNN ? "core_shared"
                                                             : "core_local");
      mk.pstar = p;
      marks.push_back(mk);
    }
    if (!marks.empty()) {
      double cx0 = marks[0].core, cx1 = marks[0].core;
      double cy0 = marks[0].pstar, cy1 = marks[0].pstar;
      double off = 0;
      for (const auto& mk : marks) {
        cx0 = std::min(cx0, mk.core), cx1 = std::max(cx1, mk.core);
        cy0 = std::min(cy0, mk.pstar), cy1 = std::max(cy1, mk.pstar);
        off += std::log10(mk.pstar) - std::log10(mk.core);
      }
      off /= double(marks.size());
      LogPlot pp;
      pp.x0 = 70, pp.x1 = 520, pp.y0 = 30, pp.y1 = 400;
      pp.lx0 = std::log10(cx0) - 0.15, pp.lx1 = std::log10(cx1) + 0.15;
      if (pp.lx1 - pp.lx0 < 1.0) {
        const double mid = (pp.lx0 + pp.lx1) / 2;
        pp.lx0 = mid - 0.5, pp.lx1 = mid + 0.5;
      }
      pp.ly0 = std::min(std::log10(cy0) - 0.15, pp.lx0 + off);
      pp.ly1 = std::max(std::log10(cy1) + 0.15, pp.lx1 + off);
      SvgCanvas psvg(640, 460);
      log_ticks(psvg, pp);
      draw_frame(psvg, pp.x0, pp.y0, pp.x1, pp.y1);
      psvg.line(pp.px(std::pow(10.0, pp.lx0)),
                pp.py(std::pow(10.0, pp.lx0 + off)),
                pp.px(std::pow(10.0, pp.lx1)),
                pp.py(std::pow(10.0, pp.lx1 + off)), "#888888", 1.0, "4,3");
      for (const auto& mk : marks)
        psvg.circle(pp.px(mk.core), pp.py(mk.pstar), 4, kind_color(mk.kind),
                    0.85);
      psvg.text(pp.x0, pp.y1 + 34, "predicted scaling core", 11);
      psvg.text(pp.x0, 18, "measured P* vs predicted core (dashed: slope 1)",
                11);
      write_file_atomic((fs::path(run_dir) / "pstar.svg").string(),
                        psvg.render());
    }
  }
  return 0;
}

}  // namespace srhm
