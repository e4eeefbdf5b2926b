#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <sstream>

#include "gnnvault/attack.hpp"
#include "gnnvault/cli.hpp"
#include "gnnvault/container.hpp"
#include "gnnvault/experiment.hpp"
#include "gnnvault/vault.hpp"

namespace py = pybind11;
using namespace gnnvault;

namespace {

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::array_t<float> matrix_to_numpy(const DenseMatrix& m) {
  py::array_t<float> out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

py::array_t<bool> mask_to_numpy(const std::vector<bool>& mask) {
  py::array_t<bool> out(mask.size());
  auto* p = out.mutable_data();
  for (std::size_t i = 0; i < mask.size(); ++i) p[i] = mask[i];
  return out;
}

std::vector<bool> mask_from_numpy(const std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>& a,
                                  std::size_t n) {
  if (!a) return std::vector<bool>(n, false);
  if (static_cast<std::size_t>(a->size()) != n) fail(ErrorCode::kDimensionMismatch, "mask length must equal n_nodes");
  std::vector<bool> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a->data()[i];
  return out;
}

Graph graph_from_numpy(py::array_t<float, py::array::c_style | py::array::forcecast> features,
                       py::array_t<std::int64_t, py::array::c_style | py::array::forcecast> edges,
                       py::array_t<std::int64_t, py::array::c_style | py::array::forcecast> labels,
                       std::size_t n_classes,
                       std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>> train,
                       std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>> val,
                       std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>> test) {
  if (features.ndim() != 2) fail(ErrorCode::kDimensionMismatch, "features must be 2-D");
  const auto n = static_cast<std::size_t>(features.shape(0));
  const auto d = static_cast<std::size_t>(features.shape(1));
  DenseMatrix x(n, d, std::vector<float>(features.data(), features.data() + n * d));
  if (edges.size() > 0 && (edges.ndim() != 2 || edges.shape(1) != 2)) {
    fail(ErrorCode::kDimensionMismatch, "edges must have shape (m, 2)");
  }
  std::vector<Edge> pairs;
  const auto m = edges.size() / 2;
  for (py::ssize_t i = 0; i < m; ++i) {
    const auto u = edges.data()[2 * i], v = edges.data()[2 * i + 1];
    if (u < 0 || v < 0) fail(ErrorCode::kMalformedGraph, "negative node index in edges");
    pairs.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)});
  }
  std::vector<std::uint16_t> y(labels.size());
  for (py::ssize_t i = 0; i < labels.size(); ++i) {
    const auto v = labels.data()[i];
    if (v < 0 || v > 0xFFFF) fail(ErrorCode::kMalformedGraph, "label out of range");
    y[i] = static_cast<std::uint16_t>(v);
  }
  Masks masks{mask_from_numpy(train, n), mask_from_numpy(val, n), mask_from_numpy(test, n)};
  return Graph(std::move(x), canonical_undirected(std::move(pairs), n), std::move(y), n_classes, std::move(masks));
}

// Loaded config, its dataset and (after training or loading) the models.
class Experiment {
 public:
  Experiment(const std::filesystem::path& config, std::optional<std::filesystem::path> dataset)
      : cfg_(load_config(config)) {
    if (dataset) {
      cfg_.dataset.path = *dataset;
      cfg_.dataset.synthetic.reset();
    }
    graph_ = load_dataset(cfg_);
  }

  void train() { trained_ = train_experiment(graph_, cfg_); }

  void save(const std::filesystem::path& dir) const { save_artifacts(require(), cfg_, dir); }
  void load(const std::filesystem::path& dir) { trained_ = load_artifacts(dir, graph_); }

  std::vector<EvalReport> evaluate() const { return evaluate_experiment(require(), graph_, cfg_); }

  PartitionedRun infer(std::optional<std::vector<std::uint32_t>> nodes, std::optional<std::string> topology,
                       std::optional<double> epc_budget_mb) const {
    const GnnVaultSystem sys = system(topology);
    VaultOptions vo = cfg_.vault;
    if (epc_budget_mb) vo.epc_budget_bytes = static_cast<std::size_t>(*epc_budget_mb * kMiB);
    return nodes ? run_partitioned(sys.partitioned, graph_.features(), *nodes, vo)
                 : run_partitioned_all(sys.partitioned, graph_.features(), vo);
  }

  std::vector<AttackReport> attack(const std::string& metrics, std::optional<std::string> topology,
                                   bool with_labels) const {
    const GnnVaultSystem sys = system(topology);
    AttackOptions ao = cfg_.attack;
    ao.metrics = parse_metric_list(metrics);
    ao.with_labels = with_labels;
    const PairSample pairs = sample_pairs(graph_, ao.seed);
    std::vector<AttackReport> out;
    for (Exposure x : {Exposure::kOriginal, Exposure::kGnnVault, Exposure::kBaseline}) {
      out.push_back(attack_layers(observable_layers(sys, graph_, x, ao.with_labels), pairs, ao, x));
    }
    return out;
  }

  const Graph& graph() const { return graph_; }
  nlohmann::json config() const { return config_to_json(cfg_); }
  bool trained() const { return trained_.has_value(); }

 private:
  const TrainedExperiment& require() const {
    if (!trained_) fail(ErrorCode::kInvalidArgument, "experiment has not been trained or loaded");
    return *trained_;
  }
  GnnVaultSystem system(const std::optional<std::string>& topology) const {
    return topology ? require().system(parse_topology(*topology)) : require().system(std::size_t{0});
  }

  ExperimentConfig cfg_;
  Graph graph_;
  std::optional<TrainedExperiment> trained_;
};

py::list reports_to_python(const std::vector<EvalReport>& rs) {
  py::list out;
  for (const auto& r : rs) out.append(to_python(to_json(r)));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "GNNVault core: partitioned GNN inference with a private rectifier";

  static py::exception<Error> error_type(m, "GnnVaultError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type.ptr())(e.what());
      exc.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::class_<Graph>(m, "Graph")
      .def(py::init(&graph_from_numpy), py::arg("features"), py::arg("edges"), py::arg("labels"),
           py::arg("n_classes"), py::arg("train_mask") = py::none(), py::arg("val_mask") = py::none(),
           py::arg("test_mask") = py::none(),
           "Build a graph from a feature matrix, an (m, 2) pair list and labels. Pairs are symmetrized.")
      .def_property_readonly("n_nodes", &Graph::n_nodes)
      .def_property_readonly("n_features", &Graph::n_features)
      .def_property_readonly("n_classes", &Graph::n_classes)
      .def_property_readonly("n_edges", &Graph::n_undirected_edges, "Undirected edge count")
      .def_property_readonly("features", [](const Graph& g) { return matrix_to_numpy(g.features()); })
      .def_property_readonly("labels",
                             [](const Graph& g) {
                               py::array_t<std::uint16_t> out(g.labels().size());
                               std::copy(g.labels().begin(), g.labels().end(), out.mutable_data());
                               return out;
                             })
      .def_property_readonly("edges",
                             [](const Graph& g) {
                               auto e = g.edges();
                               py::array_t<std::uint32_t> out({e.size(), std::size_t{2}});
                               auto* p = out.mutable_data();
                               for (std::size_t i = 0; i < e.size(); ++i) {
                                 p[2 * i] = e[i].src;
                                 p[2 * i + 1] = e[i].dst;
                               }
                               return out;
                             },
                             "Directed (both orientations) sorted edge list")
      .def_property_readonly("train_mask", [](const Graph& g) { return mask_to_numpy(g.masks().train); })
      .def_property_readonly("val_mask", [](const Graph& g) { return mask_to_numpy(g.masks().val); })
      .def_property_readonly("test_mask", [](const Graph& g) { return mask_to_numpy(g.masks().test); })
      .def("with_row_normalized_features", &Graph::with_row_normalized_features)
      .def("__eq__", [](const Graph& a, const Graph& b) { return a == b; })
      .def("__repr__", [](const Graph& g) {
        std::ostringstream os;
        os << "Graph(n_nodes=" << g.n_nodes() << ", n_edges=" << g.n_undirected_edges()
           << ", n_features=" << g.n_features() << ", n_classes=" << g.n_classes() << ")";
        return os.str();
      });

  m.def("read_graph", &read_container, py::arg("path"), "Read and validate a GVG container");
  m.def("write_graph", &write_container, py::arg("graph"), py::arg("path"));
  m.def(
      "sbm",
      [](std::size_t n_per_class, std::size_t n_classes, double p_in, double p_out, std::size_t feat_dim,
         double feat_noise, std::size_t train_per_class, std::uint64_t seed) {
        return sbm_generate({n_per_class, n_classes, p_in, p_out, feat_dim, feat_noise, train_per_class, seed});
      },
      py::arg("n_per_class") = 50, py::arg("n_classes") = 4, py::arg("p_in") = 0.2, py::arg("p_out") = 0.01,
      py::arg("feat_dim") = 16, py::arg("feat_noise") = 1.0, py::arg("train_per_class") = 20,
      py::arg("seed") = 0, "Stochastic block model graph");

  m.def(
      "backbone_parameter_count",
      [](const std::string& family, std::size_t d, std::size_t c) {
        return backbone_parameter_count(make_model_spec(parse_model_family(family), d, c));
      },
      py::arg("model"), py::arg("n_features"), py::arg("n_classes"));
  m.def(
      "rectifier_parameter_count",
      [](const std::string& family, std::size_t d, std::size_t c, const std::string& topology) {
        return rectifier_parameter_count(make_model_spec(parse_model_family(family), d, c),
                                         parse_topology(topology));
      },
      py::arg("model"), py::arg("n_features"), py::arg("n_classes"), py::arg("topology"));
  m.def(
      "plan_vault_peak_bytes",
      [](const std::string& family, const std::string& topology, std::size_t n_nodes, std::size_t directed_edges,
         std::size_t d, std::size_t c) {
        auto spec = make_model_spec(parse_model_family(family), d, c);
        return plan_vault_memory(spec, parse_topology(topology), n_nodes, directed_edges + n_nodes).peak();
      },
      py::arg("model"), py::arg("topology"), py::arg("n_nodes"), py::arg("directed_edges"), py::arg("n_features"),
      py::arg("n_classes"), "Vault peak bytes from a dry run of the memory ledger");
  m.def(
      "infeasibility_report",
      [](std::size_t n_nodes, const std::string& family, std::size_t d, std::size_t c) {
        return to_python(to_json(infeasibility_report(n_nodes, make_model_spec(parse_model_family(family), d, c))));
      },
      py::arg("n_nodes"), py::arg("model"), py::arg("n_features"), py::arg("n_classes"));

  m.def(
      "roc_auc",
      [](const std::vector<double>& pos, const std::vector<double>& neg) { return roc_auc(pos, neg); },
      py::arg("positive"), py::arg("negative"));
  m.def(
      "silhouette",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> x, const std::vector<std::uint16_t>& labels,
         std::size_t samples, std::uint64_t seed) {
        if (x.ndim() != 2) fail(ErrorCode::kDimensionMismatch, "x must be 2-D");
        const auto n = static_cast<std::size_t>(x.shape(0)), d = static_cast<std::size_t>(x.shape(1));
        DenseMatrix m(n, d, std::vector<float>(x.data(), x.data() + n * d));
        return silhouette(m, labels, samples, seed);
      },
      py::arg("x"), py::arg("labels"), py::arg("samples") = 0, py::arg("seed") = 0);

  py::class_<Experiment>(m, "Experiment")
      .def(py::init<const std::filesystem::path&, std::optional<std::filesystem::path>>(), py::arg("config"),
           py::arg("dataset") = py::none(), "Load a JSON config and its dataset; `dataset` overrides the path")
      .def("train", &Experiment::train, py::call_guard<py::gil_scoped_release>())
      .def("save", &Experiment::save, py::arg("dir"))
      .def("load", &Experiment::load, py::arg("dir"))
      .def("evaluate", [](const Experiment& e) {
        std::vector<EvalReport> rs;
        {
          py::gil_scoped_release release;
          rs = e.evaluate();
        }
        return reports_to_python(rs);
      })
      .def(
          "infer",
          [](const Experiment& e, std::optional<std::vector<std::uint32_t>> nodes, std::optional<std::string> topology,
             std::optional<double> budget) { return to_python(to_json(e.infer(nodes, topology, budget))); },
          py::arg("nodes") = py::none(), py::arg("topology") = py::none(), py::arg("epc_budget_mb") = py::none())
      .def(
          "attack",
          [](const Experiment& e, const std::string& metrics, std::optional<std::string> topology, bool with_labels) {
            py::list out;
            for (const auto& r : e.attack(metrics, topology, with_labels)) out.append(to_python(to_json(r)));
            return out;
          },
          py::arg("metrics") = "all", py::arg("topology") = py::none(), py::arg("with_labels") = false)
      .def_property_readonly("graph", &Experiment::graph)
      .def_property_readonly("config", [](const Experiment& e) { return to_python(e.config()); })
      .def_property_readonly("trained", &Experiment::trained);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in-process; returns (exit_code, stdout, stderr)");
}
