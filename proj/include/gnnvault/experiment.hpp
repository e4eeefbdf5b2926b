#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gnnvault/attack.hpp"
#include "gnnvault/graph.hpp"
#include "gnnvault/models.hpp"
#include "gnnvault/training.hpp"
#include "gnnvault/vault.hpp"

namespace gnnvault {

constexpr int kConfigSchemaVersion = 1;

struct DatasetConfig {
  std::filesystem::path path;        // GVG container; resolved against the config's directory
  std::optional<SbmParams> synthetic;
  bool row_normalize = true;
  /// Nodes moved from the test mask to a validation mask (for early stopping).
  std::size_t val_nodes = 0;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string name = "experiment";
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  ModelFamily model = ModelFamily::kM1;
  std::vector<Topology> topologies = {Topology::kParallel};
  SubstituteSpec substitute;
  TrainConfig backbone = default_backbone_config();
  TrainConfig rectifier = default_rectifier_config();
  TrainConfig original = default_backbone_config();
  AttackOptions attack;
  VaultOptions vault;
  EvalOptions eval;
  std::filesystem::path output_dir = "gnnvault-out";
};

/// Parses a JSON config. Syntax and schema problems throw kConfig with a
/// "<source>:<line>:<col>: message" diagnostic. Unknown keys are errors.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>",
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Deterministic per-component seed derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

/// Loads or generates the graph, applies feature normalization and carves the
/// validation mask.
Graph load_dataset(const ExperimentConfig& cfg);
/// Moves `count` seeded test nodes into the validation mask.
Graph carve_validation(const Graph& graph, std::size_t count, std::uint64_t seed);

/// One backbone, the reference models and one rectifier per configured topology.
struct TrainedExperiment {
  ModelSpec spec;
  Backbone backbone;
  LayerStack original;
  LayerStack mlp;
  NormalizedAdjacency real_adjacency;
  std::vector<Rectifier> rectifiers;

  GnnVaultSystem system(std::size_t rectifier_index) const;
  GnnVaultSystem system(Topology topology) const;
};

struct TrainOptions {
  bool original = true;
  bool mlp = true;
};

TrainedExperiment train_experiment(const Graph& graph, const ExperimentConfig& cfg,
                                   const TrainOptions& opts = {});

std::vector<EvalReport> evaluate_experiment(const TrainedExperiment& exp, const Graph& graph,
                                            const ExperimentConfig& cfg);

// Artifacts: manifest.json plus GVMD files for every trained stack.
void save_artifacts(const TrainedExperiment& exp, const ExperimentConfig& cfg,
                    const std::filesystem::path& dir);
/// Reloads saved stacks and rebuilds both adjacencies from `graph` and the
/// recorded substitute spec.
TrainedExperiment load_artifacts(const std::filesystem::path& dir, const Graph& graph);

// Reports.
nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const AttackReport& r);
nlohmann::json to_json(const PartitionedRun& run);
nlohmann::json to_json(const InfeasibilityReport& r);
/// Aligned text table with one row per dataset: p_org, θ_bb, p_bb, then
/// p_rec / Δp / θ_rec per topology.
std::string format_eval_table(const std::vector<EvalReport>& reports);
/// Metric rows with one AUC column per exposure.
std::string format_attack_table(const std::string& dataset, const std::vector<AttackReport>& reports);

// Substitute-graph sweeps.
struct AblationPoint {
  std::string sweep;  // "knn_k", "cosine_tau", "random_fraction", "dnn"
  double value = 0.0;
  SubstituteSpec substitute;
};

struct AblationRow {
  AblationPoint point;
  double p_bb = 0.0;
  double p_rec = 0.0;
};

struct SweepSpec {
  std::vector<std::size_t> knn_k;
  std::vector<double> cosine_tau;
  std::vector<double> random_fraction;
  bool dnn = false;
};

SweepSpec parse_sweep(const nlohmann::json& j);
std::vector<AblationPoint> ablation_points(const SweepSpec& sweep, const SubstituteSpec& base);
/// Trains backbone + first-topology rectifier per point. `jobs` > 1 runs
/// points on worker threads; rows keep the point order.
std::vector<AblationRow> run_ablation(const Graph& graph, const ExperimentConfig& cfg,
                                      const std::vector<AblationPoint>& points, std::size_t jobs = 1);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace gnnvault
