#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>

#include <srhm/grammar.hpp>
#include <srhm/harness.hpp>
#include <srhm/io.hpp>
#include <srhm/nn.hpp>
#include <srhm/probes.hpp>
#include <srhm/theory.hpp>
#include <srhm/train.hpp>

namespace py = pybind11;
using namespace srhm;

namespace {

py::array_t<uint8_t> input_to_numpy(const InputMatrix& x) {
  py::array_t<uint8_t> a({py::ssize_t(x.rows), py::ssize_t(x.cols)});
  std::memcpy(a.mutable_data(), x.data.data(), x.data.size());
  return a;
}

InputMatrix input_from_numpy(
    const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d 0/1 array");
  InputMatrix x(int32_t(a.shape(0)), int32_t(a.shape(1)));
  std::memcpy(x.data.data(), a.data(), x.data.size());
  return x;
}

RunPointConfig make_run_config(const std::string& kind, int width,
                               const std::string& scaling,
                               const std::string& init, double lr, int batch,
                               double momentum, double stop_loss,
                               int64_t max_steps, int64_t test_size) {
  RunPointConfig cfg;
  cfg.kind = arch_from_string(kind);
  cfg.width = width;
  cfg.scaling = scaling == "meanfield" ? Scaling::MeanField : Scaling::Standard;
  cfg.init =
      init == "constant" ? InitMode::ConstantFilter : InitMode::Standard;
  cfg.train.lr = lr;
  cfg.train.batch = batch;
  cfg.train.momentum = momentum;
  cfg.train.stop_loss = stop_loss;
  cfg.train.max_steps = max_steps;
  cfg.train.validate();
  cfg.test_size = size_t(test_size);
  return cfg;
}

py::dict result_to_dict(const RunPointResult& r) {
  py::dict d;
  d["test_err"] = r.test_err;
  d["final_loss"] = r.final_loss;
  d["steps"] = r.steps;
  d["epochs"] = r.epochs;
  d["converged"] = r.converged;
  d["diverged"] = r.diverged;
  d["wall_seconds"] = r.wall_seconds;
  return d;
}

py::dict report_to_dict(const SensitivityReport& rep) {
  py::dict d;
  d["levels"] = rep.levels;
  d["s_hidden"] = rep.s_hidden;
  d["d_hidden"] = rep.d_hidden;
  d["s_output"] = rep.s_output;
  d["d_output"] = rep.d_output;
  d["op_forwards"] = rep.op_forwards;
  d["pair_forwards"] = rep.pair_forwards;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "sparse hierarchy model laboratory";
  m.attr("__version__") = kVersion;

  py::register_exception<GrammarError>(m, "GrammarError", PyExc_ValueError);
  py::register_exception<NetError>(m, "NetError", PyExc_ValueError);
  py::register_exception<TrainError>(m, "TrainError", PyExc_RuntimeError);
  py::register_exception<ProbeError>(m, "ProbeError", PyExc_RuntimeError);
  py::register_exception<TheoryError>(m, "TheoryError", PyExc_RuntimeError);
  py::register_exception<HarnessError>(m, "HarnessError", PyExc_ValueError);

  py::class_<GrammarParams>(m, "GrammarParams")
      .def(py::init([](int n_c, int v, int m_, int s, int L, int s0,
                       const std::string& sparsity, uint64_t seed) {
             GrammarParams g;
             g.n_c = n_c;
             g.v = v;
             g.m = m_;
             g.s = s;
             g.L = L;
             g.s0 = s0;
             g.sparsity = sparsity_from_string(sparsity);
             g.seed = seed;
             g.validate();
             return g;
           }),
           py::arg("n_c") = 2, py::arg("v") = 2, py::arg("m") = 2,
           py::arg("s") = 2, py::arg("L") = 2, py::arg("s0") = 0,
           py::arg("sparsity") = "none", py::arg("seed") = 0)
      .def_readwrite("n_c", &GrammarParams::n_c)
      .def_readwrite("v", &GrammarParams::v)
      .def_readwrite("m", &GrammarParams::m)
      .def_readwrite("s", &GrammarParams::s)
      .def_readwrite("L", &GrammarParams::L)
      .def_readwrite("s0", &GrammarParams::s0)
      .def_readwrite("seed", &GrammarParams::seed)
      .def_property(
          "sparsity",
          [](const GrammarParams& g) { return std::string(to_string(g.sparsity)); },
          [](GrammarParams& g, const std::string& s) {
            g.sparsity = sparsity_from_string(s);
          })
      .def("validate", &GrammarParams::validate)
      .def("patch_width", &GrammarParams::patch_width)
      .def("input_dim", &GrammarParams::input_dim)
      .def("leaf_count", &GrammarParams::leaf_count)
      .def("data_per_class_log", &GrammarParams::data_per_class_log)
      .def("__repr__",
           [](const GrammarParams& g) { return "GrammarParams(" + grammar_key(g) + ")"; });

  py::class_<RuleSet>(m, "RuleSet")
      .def_readonly("params", &RuleSet::params)
      .def("__repr__", [](const RuleSet& r) {
        return "RuleSet(" + grammar_key(r.params) + ")";
      });
  m.def("build_ruleset", &build_ruleset, py::arg("params"),
        "draw the production tables of a grammar from its seed");

  py::class_<SampleTree>(m, "SampleTree")
      .def_readonly("label", &SampleTree::label)
      .def_property_readonly(
          "input", [](const SampleTree& t) { return input_to_numpy(t.input); });

  m.def(
      "sample_tree",
      [](const RuleSet& rules, std::optional<int32_t> label, uint64_t seed) {
        return sample_datum(rules, label, Rng(seed));
      },
      py::arg("rules"), py::arg("label") = std::nullopt, py::arg("seed") = 0);
  m.def(
      "apply_synonym",
      [](const RuleSet& rules, const SampleTree& t, int level, uint64_t seed) {
        return apply_synonym(rules, t, level, Rng(seed));
      },
      py::arg("rules"), py::arg("tree"), py::arg("level"), py::arg("seed") = 0,
      "label-preserving synonym exchange at one level");
  m.def(
      "apply_diffeo",
      [](const RuleSet& rules, const SampleTree& t, int level, uint64_t seed) {
        return apply_diffeo(rules, t, level, Rng(seed));
      },
      py::arg("rules"), py::arg("tree"), py::arg("level"), py::arg("seed") = 0,
      "label-preserving placement resampling at one level");

  m.def(
      "generate",
      [](const RuleSet& rules, int64_t n, uint64_t seed) {
        Dataset d = generate_dataset(rules, n, Rng(seed));
        const auto dim = py::ssize_t(rules.params.input_dim());
        const auto v = py::ssize_t(rules.params.v);
        py::array_t<uint8_t> xs({py::ssize_t(n), dim, v});
        auto* p = xs.mutable_data();
        for (const auto& x : d.xs) {
          std::memcpy(p, x.data.data(), x.data.size());
          p += x.data.size();
        }
        py::array_t<int32_t> ys({py::ssize_t(n)});
        std::memcpy(ys.mutable_data(), d.ys.data(),
                    d.ys.size() * sizeof(int32_t));
        return py::make_tuple(xs, ys);
      },
      py::arg("rules"), py::arg("n"), py::arg("seed") = 0,
      "sample n inputs; returns (inputs [n, d, v] uint8, labels [n] int32)");

  m.def(
      "classify",
      [](const RuleSet& rules,
         const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>&
             x) { return classify_oracle(rules, input_from_numpy(x)); },
      py::arg("rules"), py::arg("x"),
      "exact bottom-up parse; raises GrammarError if x is ungrammatical");

  py::class_<Network<float>>(m, "Network")
      .def_property_readonly(
          "widths", [](const Network<float>& n) { return n.spec.widths; })
      .def("forward",
           [](const Network<float>& net,
              const py::array_t<uint8_t,
                                py::array::c_style | py::array::forcecast>& x) {
             auto t = forward(net, input_from_numpy(x));
             py::array_t<float> out({py::ssize_t(t.output.size())});
             std::memcpy(out.mutable_data(), t.output.data(),
                         t.output.size() * sizeof(float));
             return out;
           })
      .def("save", [](const Network<float>& net, const std::string& path) {
        save_network(net, path);
      });
  m.def("load_network",
        [](const std::string& path) { return load_network<float>(path); });

  m.def(
      "run_point",
      [](const RuleSet& rules, int64_t P, uint64_t seed,
         const std::string& kind, int width, const std::string& scaling,
         const std::string& init, double lr, int batch, double momentum,
         double stop_loss, int64_t max_steps, int64_t test_size) {
        auto cfg = make_run_config(kind, width, scaling, init, lr, batch,
                                   momentum, stop_loss, max_steps, test_size);
        auto [res, net] = run_point_net<float>(rules, cfg, size_t(P), seed);
        return py::make_tuple(result_to_dict(res), std::move(net));
      },
      py::arg("rules"), py::arg("P"), py::arg("seed") = 0,
      py::arg("kind") = "lcn", py::arg("width") = 256,
      py::arg("scaling") = "meanfield", py::arg("init") = "standard",
      py::arg("lr") = 0.3, py::arg("batch") = 4, py::arg("momentum") = 0.9,
      py::arg("stop_loss") = 1e-3, py::arg("max_steps") = 1000000,
      py::arg("test_size") = 2048,
      "train one point; returns (result dict, trained network)");

  m.def(
      "sensitivities",
      [](const Network<float>& net, const RuleSet& rules, int trees, int draws,
         int pairs, bool exhaustive, uint64_t seed) {
        SensitivityOptions opt;
        opt.trees = trees;
        opt.draws = draws;
        opt.pairs = pairs;
        opt.exhaustive = exhaustive;
        opt.seed = seed;
        return report_to_dict(sensitivity_report(net, rules, opt));
      },
      py::arg("net"), py::arg("rules"), py::arg("trees") = 512,
      py::arg("draws") = 8, py::arg("pairs") = 2048,
      py::arg("exhaustive") = false, py::arg("seed") = 0,
      "synonym and diffeomorphism sensitivities per layer and level");

  m.def(
      "onestep",
      [](const RuleSet& rules, int width, int64_t P, uint64_t seed) {
        Rng root(seed);
        Dataset data = generate_dataset(rules, P, root.split("data"));
        auto rep = onestep_update(rules, data, width, root.split("net").next_u64());
        py::dict d;
        d["positions"] = rep.positions;
        d["vocab"] = rep.vocab;
        py::array_t<double> grad(
            {py::ssize_t(rep.positions), py::ssize_t(rep.vocab)});
        std::memcpy(grad.mutable_data(), rep.grad.data(),
                    rep.grad.size() * sizeof(double));
        d["grad"] = grad;
        py::array_t<double> ideal(
            {py::ssize_t(rep.positions), py::ssize_t(rep.vocab)});
        std::memcpy(ideal.mutable_data(), rep.grad_ideal.data(),
                    rep.grad_ideal.size() * sizeof(double));
        d["grad_ideal"] = ideal;
        d["informative_freq"] = rep.informative_freq;
        d["ideal_gap"] = rep.ideal_gap;
        d["coeff"] = rep.coeff;
        return d;
      },
      py::arg("rules"), py::arg("width"), py::arg("P"), py::arg("seed") = 0,
      "closed-form first gradient step of a constant-filter network");

  m.def(
      "grouping_check",
      [](const RuleSet& rules, std::optional<int64_t> samples, uint64_t seed) {
        GroupingReport rep = samples
                                 ? synonym_grouping_check(rules, *samples, Rng(seed))
                                 : synonym_grouping_check(rules);
        py::dict d;
        d["parents"] = rep.parents;
        d["tuples"] = rep.tuples;
        d["samples"] = rep.samples;
        d["exhaustive"] = rep.exhaustive;
        d["within_dispersion"] = rep.within_dispersion;
        d["across_separation"] = rep.across_separation;
        return d;
      },
      py::arg("rules"), py::arg("samples") = std::nullopt, py::arg("seed") = 0,
      "level-1 tuple/class covariance grouping statistics");

  m.def("informative_fraction", &informative_fraction, py::arg("params"));
  m.def("predict_pstar_lcn",
        py::overload_cast<const GrammarParams&>(&predict_pstar_lcn),
        py::arg("params"));
  m.def("predict_pstar_cnn", &predict_pstar_cnn, py::arg("params"),
        py::arg("c1") = 1.0);
  m.def("predict_pstar_df",
        py::overload_cast<const GrammarParams&>(&predict_pstar_df),
        py::arg("params"));
  m.def("synonym_exponent", &synonym_exponent, py::arg("params"));
  m.def("predictor_core", &predictor_core, py::arg("params"), py::arg("model"));
  m.def("spearman", &spearman, py::arg("a"), py::arg("b"));
  m.def(
      "extract_pstar",
      [](const std::vector<std::pair<double, double>>& curve, double thr) {
        auto r = extract_pstar(curve, thr);
        py::dict d;
        d["pstar"] = r.pstar;
        d["reached"] = r.reached;
        d["censored"] = r.censored;
        return d;
      },
      py::arg("curve"), py::arg("threshold"));

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_readonly("name", &ExperimentConfig::name)
      .def_readonly("out", &ExperimentConfig::out)
      .def_property_readonly("cells", [](const ExperimentConfig& c) {
        std::vector<std::string> keys;
        for (const auto& cell : c.cells) keys.push_back(cell.key());
        return keys;
      });
  m.def("load_config", &load_config, py::arg("path"));
  m.def(
      "run_sweep",
      [](const ExperimentConfig& cfg, const std::string& out_dir, int workers) {
        auto s = run_sweep(cfg, out_dir, workers);
        py::dict d;
        d["total"] = s.total;
        d["executed"] = s.executed;
        d["resumed"] = s.resumed;
        d["failed"] = s.failed;
        d["wall_seconds"] = s.wall_seconds;
        return d;
      },
      py::arg("config"), py::arg("out_dir"), py::arg("workers") = 1);
}
