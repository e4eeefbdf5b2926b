#include "gnnvault/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "gnnvault/container.hpp"
#include "gnnvault/model_file.hpp"

namespace gnnvault {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Value positions by JSON pointer, for diagnostics. The text is already known
// to be valid JSON when this runs.

class PositionIndex {
 public:
  explicit PositionIndex(std::string_view text) : t_(text) {
    skip_ws();
    value("");
  }

  std::size_t find(const std::string& pointer) const {
    std::string p = pointer;
    while (true) {
      auto it = pos_.find(p);
      if (it != pos_.end()) return it->second;
      auto slash = p.rfind('/');
      if (slash == std::string::npos) return 0;
      p.resize(slash);
    }
  }

 private:
  std::string_view t_;
  std::size_t i_ = 0;
  std::map<std::string, std::size_t> pos_;

  void skip_ws() {
    while (i_ < t_.size() && (t_[i_] == ' ' || t_[i_] == '\n' || t_[i_] == '\r' || t_[i_] == '\t')) ++i_;
  }
  std::string string_token() {
    std::string out;
    ++i_;  // opening quote
    while (i_ < t_.size() && t_[i_] != '"') {
      if (t_[i_] == '\\' && i_ + 1 < t_.size()) ++i_;
      out += t_[i_++];
    }
    ++i_;
    return out;
  }
  void value(const std::string& ptr) {
    pos_[ptr] = i_;
    if (i_ >= t_.size()) return;
    char c = t_[i_];
    if (c == '{') {
      ++i_;
      skip_ws();
      while (i_ < t_.size() && t_[i_] != '}') {
        std::size_t key_pos = i_;
        std::string key = string_token();
        skip_ws();
        ++i_;  // ':'
        skip_ws();
        value(ptr + "/" + key);
        pos_[ptr + "/" + key] = key_pos;
        skip_ws();
        if (i_ < t_.size() && t_[i_] == ',') ++i_;
        skip_ws();
      }
      ++i_;
    } else if (c == '[') {
      ++i_;
      skip_ws();
      std::size_t idx = 0;
      while (i_ < t_.size() && t_[i_] != ']') {
        value(ptr + "/" + std::to_string(idx++));
        skip_ws();
        if (i_ < t_.size() && t_[i_] == ',') ++i_;
        skip_ws();
      }
      ++i_;
    } else if (c == '"') {
      string_token();
    } else {
      while (i_ < t_.size() && t_[i_] != ',' && t_[i_] != '}' && t_[i_] != ']' && t_[i_] != ' ' &&
             t_[i_] != '\n' && t_[i_] != '\r' && t_[i_] != '\t') {
        ++i_;
      }
    }
  }
};

std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

class Reader {
 public:
  Reader(std::string_view text, std::string_view source) : text_(text), source_(source), index_(text) {}

  [[noreturn]] void error(const std::string& ptr, const std::string& msg) const {
    auto [line, col] = line_col(text_, index_.find(ptr));
    fail(ErrorCode::kConfig, source_ + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                                 (ptr.empty() ? "" : ptr + ": ") + msg);
  }

  void expect_object(const json& j, const std::string& ptr) const {
    if (!j.is_object()) error(ptr, "expected an object");
  }

  void allow_keys(const json& j, const std::string& ptr, std::initializer_list<std::string_view> keys) const {
    expect_object(j, ptr);
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
        error(ptr + "/" + it.key(), "unknown key '" + it.key() + "'");
      }
    }
  }

  double number(const json& j, const std::string& ptr, std::string_view key, double dflt) const {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(std::string(key));
    if (!v.is_number()) error(ptr + "/" + std::string(key), "expected a number");
    return v.get<double>();
  }

  std::uint64_t count(const json& j, const std::string& ptr, std::string_view key, std::uint64_t dflt) const {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(std::string(key));
    if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))) {
      error(ptr + "/" + std::string(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const json& j, const std::string& ptr, std::string_view key, bool dflt) const {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(std::string(key));
    if (!v.is_boolean()) error(ptr + "/" + std::string(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const json& j, const std::string& ptr, std::string_view key,
                     const std::string& dflt) const {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(std::string(key));
    if (!v.is_string()) error(ptr + "/" + std::string(key), "expected a string");
    return v.get<std::string>();
  }

  /// Runs `parse` and rethrows library errors with the location of `ptr`.
  template <typename F>
  auto located(const std::string& ptr, F&& parse) const {
    try {
      return parse();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfig) throw;
      error(ptr, e.what());
    }
  }

 private:
  std::string_view text_;
  std::string source_;
  PositionIndex index_;
};

TrainConfig parse_train(const Reader& r, const json& j, const std::string& ptr, TrainConfig c,
                        std::uint64_t seed) {
  c.seed = seed;
  if (j.is_null()) return c;
  r.allow_keys(j, ptr, {"epochs", "learning_rate", "weight_decay", "decoupled_weight_decay", "dropout",
                        "patience", "seed"});
  c.epochs = r.count(j, ptr, "epochs", c.epochs);
  c.learning_rate = r.number(j, ptr, "learning_rate", c.learning_rate);
  if (!(c.learning_rate > 0.0)) r.error(ptr + "/learning_rate", "must be > 0");
  c.weight_decay = r.number(j, ptr, "weight_decay", c.weight_decay);
  if (c.weight_decay < 0.0) r.error(ptr + "/weight_decay", "must be >= 0");
  c.decoupled_weight_decay = r.boolean(j, ptr, "decoupled_weight_decay", c.decoupled_weight_decay);
  c.dropout = r.number(j, ptr, "dropout", c.dropout);
  if (c.dropout < 0.0 || c.dropout >= 1.0) r.error(ptr + "/dropout", "must be in [0, 1)");
  c.patience = r.count(j, ptr, "patience", c.patience);
  c.seed = r.count(j, ptr, "seed", c.seed);
  return c;
}

json train_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"decoupled_weight_decay", c.decoupled_weight_decay},
          {"dropout", c.dropout},
          {"patience", c.patience},
          {"seed", c.seed}};
}

json substitute_to_json(const SubstituteSpec& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"k", s.k},
          {"tau", s.tau},
          {"edge_fraction", s.edge_fraction},
          {"density_match", s.density_match},
          {"seed", s.seed}};
}

SubstituteSpec parse_substitute(const Reader& r, const json& j, const std::string& ptr, std::uint64_t seed) {
  SubstituteSpec s;
  s.seed = seed;
  if (j.is_null()) return s;
  r.allow_keys(j, ptr, {"kind", "k", "tau", "edge_fraction", "density_match", "seed"});
  const std::string kind = r.string(j, ptr, "kind", "knn");
  if (kind == "dnn") {
    s.kind = SubstituteKind::kRandom;
    s.edge_fraction = 0.0;
  } else {
    s.kind = r.located(ptr + "/kind", [&] { return parse_substitute_kind(kind); });
    s.edge_fraction = r.number(j, ptr, "edge_fraction", s.edge_fraction);
  }
  s.k = r.count(j, ptr, "k", s.k);
  s.tau = r.number(j, ptr, "tau", s.tau);
  if (s.tau < -1.0 || s.tau > 1.0) r.error(ptr + "/tau", "must be in [-1, 1]");
  if (s.edge_fraction < 0.0) r.error(ptr + "/edge_fraction", "must be >= 0");
  s.density_match = r.boolean(j, ptr, "density_match", s.density_match);
  s.seed = r.count(j, ptr, "seed", s.seed);
  return s;
}

SubstituteSpec parse_substitute_json(const json& j) {
  std::string text = j.dump();
  Reader r(text, "<substitute>");
  return parse_substitute(r, j, "", 0);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view component) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : component) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = master + h + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ExperimentConfig parse_config(std::string_view text, std::string_view source,
                              const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string what = e.what();
    auto colon = what.find("]: ");
    fail(ErrorCode::kConfig, std::string(source) + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                 ": invalid JSON: " + (colon == std::string::npos ? what : what.substr(colon + 3)));
  }
  Reader r(text, source);
  r.allow_keys(root, "", {"schema_version", "name", "seed", "dataset", "model", "topologies", "substitute",
                          "training", "attack", "vault", "eval", "output_dir"});
  ExperimentConfig c;
  if (!root.contains("schema_version")) r.error("", "missing 'schema_version'");
  c.schema_version = static_cast<int>(r.count(root, "", "schema_version", 0));
  if (c.schema_version != kConfigSchemaVersion) {
    r.error("/schema_version", "unsupported schema version " + std::to_string(c.schema_version) +
                                   " (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  c.name = r.string(root, "", "name", c.name);
  c.seed = r.count(root, "", "seed", c.seed);

  if (!root.contains("dataset")) r.error("", "missing 'dataset'");
  const json& ds = root.at("dataset");
  r.allow_keys(ds, "/dataset", {"path", "synthetic", "row_normalize", "val_nodes"});
  const bool has_path = ds.contains("path"), has_syn = ds.contains("synthetic");
  if (has_path == has_syn) r.error("/dataset", "exactly one of 'path' or 'synthetic' is required");
  if (has_path) {
    std::filesystem::path p = r.string(ds, "/dataset", "path", "");
    c.dataset.path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  } else {
    const json& s = ds.at("synthetic");
    const std::string ptr = "/dataset/synthetic";
    r.allow_keys(s, ptr, {"n_per_class", "n_classes", "p_in", "p_out", "feat_dim", "feat_noise",
                          "train_per_class", "seed"});
    SbmParams p;
    p.n_per_class = r.count(s, ptr, "n_per_class", p.n_per_class);
    p.n_classes = r.count(s, ptr, "n_classes", p.n_classes);
    p.p_in = r.number(s, ptr, "p_in", p.p_in);
    p.p_out = r.number(s, ptr, "p_out", p.p_out);
    p.feat_dim = r.count(s, ptr, "feat_dim", p.feat_dim);
    p.feat_noise = r.number(s, ptr, "feat_noise", p.feat_noise);
    p.train_per_class = r.count(s, ptr, "train_per_class", p.train_per_class);
    p.seed = r.count(s, ptr, "seed", derive_seed(c.seed, "synthetic"));
    if (!(0.0 <= p.p_out && p.p_out <= p.p_in && p.p_in <= 1.0)) {
      r.error(ptr, "probabilities must satisfy 0 <= p_out <= p_in <= 1");
    }
    c.dataset.synthetic = p;
  }
  c.dataset.row_normalize = r.boolean(ds, "/dataset", "row_normalize", c.dataset.row_normalize);
  c.dataset.val_nodes = r.count(ds, "/dataset", "val_nodes", 0);

  const std::string model = r.string(root, "", "model", "M1");
  c.model = r.located("/model", [&] { return parse_model_family(model); });

  if (root.contains("topologies")) {
    const json& t = root.at("topologies");
    if (!t.is_array() || t.empty()) r.error("/topologies", "expected a non-empty array of topology names");
    c.topologies.clear();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::string ptr = "/topologies/" + std::to_string(i);
      if (!t[i].is_string()) r.error(ptr, "expected a string");
      const std::string name = t[i].get<std::string>();
      c.topologies.push_back(r.located(ptr, [&] { return parse_topology(name); }));
    }
  }

  c.substitute = parse_substitute(r, root.value("substitute", json()), "/substitute",
                                  derive_seed(c.seed, "substitute"));

  json training = root.value("training", json::object());
  r.allow_keys(training, "/training", {"backbone", "rectifier", "original"});
  c.backbone = parse_train(r, training.value("backbone", json()), "/training/backbone",
                           default_backbone_config(), derive_seed(c.seed, "backbone"));
  c.rectifier = parse_train(r, training.value("rectifier", json()), "/training/rectifier",
                            default_rectifier_config(), derive_seed(c.seed, "rectifier"));
  // The unprotected reference model defaults to the backbone recipe.
  TrainConfig orig_base = c.backbone;
  c.original = parse_train(r, training.value("original", json()), "/training/original", orig_base,
                           derive_seed(c.seed, "original"));

  json attack = root.value("attack", json::object());
  r.allow_keys(attack, "/attack", {"metrics", "seed", "per_layer_best", "with_labels"});
  const std::string metrics = r.string(attack, "/attack", "metrics", "all");
  c.attack.metrics = r.located("/attack/metrics", [&] { return parse_metric_list(metrics); });
  c.attack.seed = r.count(attack, "/attack", "seed", derive_seed(c.seed, "attack"));
  c.attack.per_layer_best = r.boolean(attack, "/attack", "per_layer_best", false);
  c.attack.with_labels = r.boolean(attack, "/attack", "with_labels", false);

  json vault = root.value("vault", json::object());
  r.allow_keys(vault, "/vault", {"epc_budget_mb", "per_call_us", "per_byte_ns"});
  const double budget_mb = r.number(vault, "/vault", "epc_budget_mb", 96.0);
  if (budget_mb < 0.0) r.error("/vault/epc_budget_mb", "must be >= 0");
  c.vault.epc_budget_bytes = static_cast<std::size_t>(budget_mb * double(kMiB));
  c.vault.per_call_seconds = r.number(vault, "/vault", "per_call_us", 10.0) * 1e-6;
  c.vault.per_byte_seconds = r.number(vault, "/vault", "per_byte_ns", 1.0) * 1e-9;

  json eval = root.value("eval", json::object());
  r.allow_keys(eval, "/eval", {"silhouette_samples", "silhouettes", "seed"});
  c.eval.silhouette_samples = r.count(eval, "/eval", "silhouette_samples", c.eval.silhouette_samples);
  c.eval.silhouettes = r.boolean(eval, "/eval", "silhouettes", c.eval.silhouettes);
  c.eval.seed = r.count(eval, "/eval", "seed", derive_seed(c.seed, "silhouette"));

  std::filesystem::path out = r.string(root, "", "output_dir", c.output_dir.string());
  c.output_dir = out.is_absolute() || base_dir.empty() ? out : base_dir / out;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  std::string text(bytes.begin(), bytes.end());
  return parse_config(text, path.string(), path.parent_path());
}

json config_to_json(const ExperimentConfig& c) {
  json ds;
  if (c.dataset.synthetic) {
    const auto& p = *c.dataset.synthetic;
    ds["synthetic"] = {{"n_per_class", p.n_per_class}, {"n_classes", p.n_classes}, {"p_in", p.p_in},
                       {"p_out", p.p_out},             {"feat_dim", p.feat_dim},   {"feat_noise", p.feat_noise},
                       {"train_per_class", p.train_per_class}, {"seed", p.seed}};
  } else {
    ds["path"] = c.dataset.path.string();
  }
  ds["row_normalize"] = c.dataset.row_normalize;
  ds["val_nodes"] = c.dataset.val_nodes;
  json topologies = json::array();
  for (Topology t : c.topologies) topologies.push_back(std::string(to_string(t)));
  std::string metrics;
  for (Metric m : c.attack.metrics) metrics += (metrics.empty() ? "" : ",") + std::string(to_string(m));
  return {{"schema_version", c.schema_version},
          {"name", c.name},
          {"seed", c.seed},
          {"dataset", ds},
          {"model", std::string(to_string(c.model))},
          {"topologies", topologies},
          {"substitute", substitute_to_json(c.substitute)},
          {"training",
           {{"backbone", train_to_json(c.backbone)},
            {"rectifier", train_to_json(c.rectifier)},
            {"original", train_to_json(c.original)}}},
          {"attack",
           {{"metrics", metrics},
            {"seed", c.attack.seed},
            {"per_layer_best", c.attack.per_layer_best},
            {"with_labels", c.attack.with_labels}}},
          {"vault",
           {{"epc_budget_mb", double(c.vault.epc_budget_bytes) / double(kMiB)},
            {"per_call_us", c.vault.per_call_seconds * 1e6},
            {"per_byte_ns", c.vault.per_byte_seconds * 1e9}}},
          {"eval",
           {{"silhouette_samples", c.eval.silhouette_samples},
            {"silhouettes", c.eval.silhouettes},
            {"seed", c.eval.seed}}},
          {"output_dir", c.output_dir.string()}};
}

Graph carve_validation(const Graph& graph, std::size_t count, std::uint64_t seed) {
  if (count == 0) return graph;
  Masks m = graph.masks();
  std::vector<std::uint32_t> pool;
  for (std::uint32_t i = 0; i < graph.n_nodes(); ++i) {
    if (m.test[i]) pool.push_back(i);
  }
  if (count >= pool.size()) {
    fail(ErrorCode::kInsufficientLabels, "cannot move " + std::to_string(count) +
                                             " nodes to validation: only " + std::to_string(pool.size()) +
                                             " test nodes");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t i = 0; i < count; ++i) {
    m.test[pool[i]] = false;
    m.val[pool[i]] = true;
  }
  return graph.with_masks(std::move(m));
}

Graph load_dataset(const ExperimentConfig& cfg) {
  Graph g = cfg.dataset.synthetic ? sbm_generate(*cfg.dataset.synthetic) : read_container(cfg.dataset.path);
  if (cfg.dataset.row_normalize) g = g.with_row_normalized_features();
  return carve_validation(g, cfg.dataset.val_nodes, derive_seed(cfg.seed, "val"));
}

GnnVaultSystem TrainedExperiment::system(std::size_t i) const {
  if (i >= rectifiers.size()) fail(ErrorCode::kInvalidArgument, "no rectifier at index " + std::to_string(i));
  GnnVaultSystem s;
  s.partitioned = PartitionedModel{spec, backbone, rectifiers[i], real_adjacency};
  s.original = original;
  s.mlp = mlp;
  return s;
}

GnnVaultSystem TrainedExperiment::system(Topology topology) const {
  for (std::size_t i = 0; i < rectifiers.size(); ++i) {
    if (rectifiers[i].topology == topology) return system(i);
  }
  fail(ErrorCode::kInvalidArgument, "no rectifier trained for topology " + std::string(to_string(topology)));
}

TrainedExperiment train_experiment(const Graph& graph, const ExperimentConfig& cfg, const TrainOptions& opts) {
  TrainedExperiment e;
  e.spec = make_model_spec(cfg.model, graph.n_features(), graph.n_classes());
  {
    EdgeAccessAudit audit(graph);
    e.backbone = train_backbone(graph, cfg.substitute, e.spec, cfg.backbone);
    if (audit.reads() != 0) fail(ErrorCode::kInvalidArgument, "backbone training read the real edge list");
  }
  e.real_adjacency = normalize(graph);
  if (opts.original) e.original = train_original(graph, e.spec, cfg.original);
  if (opts.mlp) {
    TrainConfig mc = cfg.original;
    mc.seed = derive_seed(cfg.original.seed, "mlp");
    e.mlp = train_mlp(graph, e.spec, mc);
  }
  for (Topology t : cfg.topologies) {
    TrainConfig rc = cfg.rectifier;
    rc.seed = derive_seed(cfg.rectifier.seed, to_string(t));
    e.rectifiers.push_back(train_rectifier(e.backbone, graph, e.real_adjacency, t, e.spec, rc));
  }
  return e;
}

std::vector<EvalReport> evaluate_experiment(const TrainedExperiment& exp, const Graph& graph,
                                            const ExperimentConfig& cfg) {
  std::vector<EvalReport> out;
  for (std::size_t i = 0; i < exp.rectifiers.size(); ++i) {
    EvalReport r = evaluate(exp.system(i), graph, cfg.eval);
    r.dataset = cfg.name;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

json spec_to_json(const ModelSpec& s) {
  return {{"family", std::string(to_string(s.family))},
          {"backbone_widths", s.backbone_widths},
          {"rectifier_widths", s.rectifier_widths},
          {"n_classes", s.n_classes},
          {"feature_dim", s.feature_dim}};
}

json read_json(const std::filesystem::path& p) {
  auto bytes = read_file(p);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, p.string() + ": " + e.what());
  }
}

}  // namespace

void save_artifacts(const TrainedExperiment& exp, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  ensure_directory(dir);
  json files = json::object();
  write_model(exp.backbone.gcn, dir / "backbone.gvmd");
  files["backbone"] = "backbone.gvmd";
  if (!exp.original.layers.empty()) {
    write_model(exp.original, dir / "original.gvmd");
    files["original"] = "original.gvmd";
  }
  if (!exp.mlp.layers.empty()) {
    write_model(exp.mlp, dir / "mlp.gvmd");
    files["mlp"] = "mlp.gvmd";
  }
  json rects = json::array();
  for (const auto& r : exp.rectifiers) {
    const std::string name = "rectifier_" + std::string(to_string(r.topology)) + ".gvmd";
    write_model(r.gcn, dir / name);
    rects.push_back({{"topology", std::string(to_string(r.topology))}, {"file", name}});
  }
  files["rectifiers"] = rects;
  json manifest = {{"schema_version", kConfigSchemaVersion},
                   {"spec", spec_to_json(exp.spec)},
                   {"substitute", substitute_to_json(exp.backbone.substitute)},
                   {"files", files},
                   {"config", config_to_json(cfg)}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorCode::kIo, "cannot write " + (dir / "manifest.json").string());
}

TrainedExperiment load_artifacts(const std::filesystem::path& dir, const Graph& graph) {
  const json m = read_json(dir / "manifest.json");
  try {
    if (m.at("schema_version").get<int>() != kConfigSchemaVersion) {
      fail(ErrorCode::kUnsupportedVersion, "unsupported artifact manifest version");
    }
    TrainedExperiment e;
    const json& s = m.at("spec");
    e.spec.family = parse_model_family(s.at("family").get<std::string>());
    e.spec.backbone_widths = s.at("backbone_widths").get<std::vector<std::size_t>>();
    e.spec.rectifier_widths = s.at("rectifier_widths").get<std::vector<std::size_t>>();
    e.spec.n_classes = s.at("n_classes").get<std::size_t>();
    e.spec.feature_dim = s.at("feature_dim").get<std::size_t>();
    if (e.spec.feature_dim != graph.n_features() || e.spec.n_classes != graph.n_classes()) {
      fail(ErrorCode::kDimensionMismatch, "artifacts were trained for a different dataset shape");
    }
    const json& files = m.at("files");
    e.backbone.substitute = parse_substitute_json(m.at("substitute"));
    e.backbone.gcn = read_model(dir / files.at("backbone").get<std::string>());
    e.backbone.adjacency = normalize(build_substitute(graph, e.backbone.substitute));
    if (files.contains("original")) e.original = read_model(dir / files.at("original").get<std::string>());
    if (files.contains("mlp")) e.mlp = read_model(dir / files.at("mlp").get<std::string>());
    for (const auto& r : files.at("rectifiers")) {
      Rectifier rec;
      rec.topology = parse_topology(r.at("topology").get<std::string>());
      rec.gcn = read_model(dir / r.at("file").get<std::string>());
      if (rec.gcn.widths() != e.spec.rectifier_widths ||
          count_parameters(rec.gcn) != rectifier_parameter_count(e.spec, rec.topology)) {
        fail(ErrorCode::kDimensionMismatch, "rectifier file does not match the manifest spec");
      }
      e.rectifiers.push_back(std::move(rec));
    }
    if (e.backbone.gcn.widths() != e.spec.backbone_widths) {
      fail(ErrorCode::kDimensionMismatch, "backbone file does not match the manifest spec");
    }
    e.real_adjacency = normalize(graph);
    return e;
  } catch (const json::exception& ex) {
    fail(ErrorCode::kConfig, (dir / "manifest.json").string() + ": " + ex.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

json to_json(const EvalReport& r) {
  return {{"dataset", r.dataset},
          {"model", r.model},
          {"topology", r.topology},
          {"p_org", r.p_org},
          {"p_bb", r.p_bb},
          {"p_rec", r.p_rec},
          {"p_mlp", r.p_mlp},
          {"delta_p", r.delta_p},
          {"degradation", r.degradation},
          {"theta_bb", r.theta_bb},
          {"theta_rec", r.theta_rec},
          {"silhouette",
           {{"original", r.silhouette_original},
            {"backbone", r.silhouette_backbone},
            {"rectifier", r.silhouette_rectifier}}}};
}

json to_json(const AttackReport& r) {
  json auc = json::object();
  for (const auto& [m, v] : r.auc) auc[std::string(to_string(m))] = v;
  return {{"exposure", std::string(to_string(r.exposure))},
          {"auc", auc},
          {"n_positive", r.n_positive},
          {"n_negative", r.n_negative}};
}

json to_json(const PartitionedRun& run) {
  json channel = json::array();
  for (const auto& t : run.tape.channel.transfers) {
    channel.push_back({{"tag", t.tag},
                       {"layer", t.layer},
                       {"rows", t.rows},
                       {"cols", t.cols},
                       {"bytes", t.bytes},
                       {"direction", std::string(to_string(t.direction))},
                       {"kind", std::string(to_string(t.kind))}});
  }
  json categories = json::object();
  for (std::size_t c = 0; c < kMemoryCategoryCount; ++c) {
    auto cat = static_cast<MemoryCategory>(c);
    categories[std::string(to_string(cat))] = run.memory.at_peak(cat);
  }
  return {{"labels", run.labels},
          {"channel", channel},
          {"audit_no_leak", audit_no_leak(run.tape)},
          {"memory",
           {{"peak_bytes", run.memory.peak()},
            {"budget_bytes", run.memory.budget()},
            {"categories", categories}}},
          {"timing",
           {{"backbone_seconds", run.timing.backbone_seconds},
            {"transfer_seconds", run.timing.transfer_seconds},
            {"vault_seconds", run.timing.vault_seconds},
            {"transfer_bytes", run.timing.transfer_bytes},
            {"transfer_calls", run.timing.transfer_calls}}}};
}

json to_json(const InfeasibilityReport& r) {
  return {{"feature_bytes", r.feature_bytes},
          {"dense_adjacency_bytes", r.dense_adjacency_bytes},
          {"activation_bytes", r.activation_bytes},
          {"parameter_bytes", r.parameter_bytes},
          {"total_bytes", r.total_bytes},
          {"budget_bytes", r.budget_bytes},
          {"exceeds_budget", r.exceeds_budget}};
}

namespace {

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string millions(std::size_t n) { return fixed(double(n) / 1e6, 4); }

std::string render(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream os;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      if (i) os << "  ";
      if (i == 0) {
        os << std::left << std::setw(int(width[i])) << rows[r][i];
      } else {
        os << std::right << std::setw(int(width[i])) << rows[r][i];
      }
    }
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
  return os.str();
}

}  // namespace

std::string format_eval_table(const std::vector<EvalReport>& reports) {
  const std::vector<std::string> topo = {"parallel", "series", "cascaded"};
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"dataset", "p_org", "theta_bb(M)", "p_bb"};
  for (const auto& t : topo) {
    header.push_back(t + ":p_rec");
    header.push_back("dp");
    header.push_back("theta_rec(M)");
  }
  rows.push_back(header);
  std::vector<std::string> order;
  for (const auto& r : reports) {
    if (std::find(order.begin(), order.end(), r.dataset) == order.end()) order.push_back(r.dataset);
  }
  for (const auto& ds : order) {
    const EvalReport* first = nullptr;
    for (const auto& r : reports) {
      if (r.dataset == ds) {
        first = &r;
        break;
      }
    }
    std::vector<std::string> row = {ds, fixed(first->p_org, 1), millions(first->theta_bb), fixed(first->p_bb, 1)};
    for (const auto& t : topo) {
      const EvalReport* hit = nullptr;
      for (const auto& r : reports) {
        if (r.dataset == ds && r.topology == t) hit = &r;
      }
      if (hit) {
        row.push_back(fixed(hit->p_rec, 1));
        row.push_back(fixed(hit->delta_p, 1));
        row.push_back(millions(hit->theta_rec));
      } else {
        row.insert(row.end(), {"-", "-", "-"});
      }
    }
    rows.push_back(row);
  }
  return render(rows);
}

std::string format_attack_table(const std::string& dataset, const std::vector<AttackReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {dataset};
  for (const auto& r : reports) header.push_back(std::string(to_string(r.exposure)));
  rows.push_back(header);
  if (!reports.empty()) {
    for (const auto& [metric, ignored] : reports.front().auc) {
      std::vector<std::string> row = {std::string(to_string(metric))};
      for (const auto& r : reports) row.push_back(fixed(r.at(metric), 3));
      rows.push_back(row);
    }
  }
  return render(rows);
}

// ---------------------------------------------------------------------------
// Ablation

SweepSpec parse_sweep(const json& j) {
  SweepSpec s;
  if (j.is_null()) return s;
  const std::string text = j.dump();
  Reader r(text, "<sweep>");
  r.allow_keys(j, "", {"knn_k", "cosine_tau", "random_fraction", "dnn"});
  auto numbers = [&](const char* key) {
    std::vector<double> out;
    if (!j.contains(key)) return out;
    const json& a = j.at(key);
    if (!a.is_array()) r.error(std::string("/") + key, "expected an array");
    for (const auto& v : a) {
      if (!v.is_number()) r.error(std::string("/") + key, "expected numbers");
      out.push_back(v.get<double>());
    }
    return out;
  };
  for (double k : numbers("knn_k")) {
    if (k < 0 || k != std::floor(k)) r.error("/knn_k", "k must be a non-negative integer");
    s.knn_k.push_back(static_cast<std::size_t>(k));
  }
  s.cosine_tau = numbers("cosine_tau");
  s.random_fraction = numbers("random_fraction");
  s.dnn = r.boolean(j, "", "dnn", false);
  return s;
}

std::vector<AblationPoint> ablation_points(const SweepSpec& sweep, const SubstituteSpec& base) {
  std::vector<AblationPoint> points;
  for (std::size_t k : sweep.knn_k) {
    SubstituteSpec s = base;
    s.kind = SubstituteKind::kKnn;
    s.k = k;
    points.push_back({"knn_k", double(k), s});
  }
  for (double tau : sweep.cosine_tau) {
    SubstituteSpec s = base;
    s.kind = SubstituteKind::kCosineThreshold;
    s.tau = tau;
    points.push_back({"cosine_tau", tau, s});
  }
  for (double f : sweep.random_fraction) {
    SubstituteSpec s = base;
    s.kind = SubstituteKind::kRandom;
    s.edge_fraction = f;
    points.push_back({"random_fraction", f, s});
  }
  if (sweep.dnn) {
    SubstituteSpec s = base;
    s.kind = SubstituteKind::kRandom;
    s.edge_fraction = 0.0;
    points.push_back({"dnn", 0.0, s});
  }
  return points;
}

std::vector<AblationRow> run_ablation(const Graph& graph, const ExperimentConfig& cfg,
                                      const std::vector<AblationPoint>& points, std::size_t jobs) {
  if (cfg.topologies.empty()) fail(ErrorCode::kConfig, "ablation needs at least one topology");
  std::vector<AblationRow> rows(points.size());
  const ModelSpec spec = make_model_spec(cfg.model, graph.n_features(), graph.n_classes());
  const NormalizedAdjacency real = normalize(graph);
  const Topology topology = cfg.topologies.front();
  auto run_point = [&](std::size_t i) {
    Backbone bb = train_backbone(graph, points[i].substitute, spec, cfg.backbone);
    TrainConfig rc = cfg.rectifier;
    rc.seed = derive_seed(cfg.rectifier.seed, to_string(topology));
    Rectifier rec = train_rectifier(bb, graph, real, topology, spec, rc);
    auto emb = backbone_forward(bb, graph.features());
    PartitionedModel pm{spec, std::move(bb), std::move(rec), NormalizedAdjacency{}};
    auto logits = rectifier_layers(spec, pm.rectifier, real, emb).back();
    rows[i].point = points[i];
    rows[i].p_bb = accuracy(emb.back(), graph.labels(), graph.masks().test);
    rows[i].p_rec = accuracy(logits, graph.labels(), graph.masks().test);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, points.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < points.size(); ++i) run_point(i);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < points.size(); i = next++) run_point(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "sweep,value,kind,p_bb,p_rec,delta_p\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%g,%s,%.2f,%.2f,%.2f\n", r.point.sweep.c_str(), r.point.value,
                  std::string(to_string(r.point.substitute.kind)).c_str(), r.p_bb, r.p_rec, r.p_rec - r.p_bb);
    os << buf;
  }
  return os.str();
}

}  // namespace gnnvault
