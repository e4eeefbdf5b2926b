#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnnvault/graph.hpp"
#include "gnnvault/models.hpp"
#include "gnnvault/nn.hpp"

namespace gnnvault {

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  double dropout = 0.0;
  bool decoupled_weight_decay = true;
  std::uint64_t seed = 0;
  /// Early stopping on val accuracy; 0 disables. Needs a non-empty val mask.
  std::size_t patience = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline TrainConfig default_backbone_config() { return TrainConfig{}; }
inline TrainConfig default_rectifier_config() {
  TrainConfig c;
  c.epochs = 300;
  return c;
}

struct TrainLog {
  std::vector<double> loss;  // train loss per epoch, before that epoch's update
  std::size_t best_epoch = 0;
};

/// Fits a layer stack with masked cross-entropy on `graph.masks().train`. With
/// adj == nullptr the stack is an MLP.
LayerStack train_stack(LayerStack stack, const NormalizedAdjacency* adj, const DenseMatrix& x,
                       const Graph& graph, const TrainConfig& cfg, TrainLog* log = nullptr);

/// Backbone on the substitute graph. Only public data (features, labels, train
/// mask, real edge count) is used; the real edge list is never read.
Backbone train_backbone(const Graph& graph, const SubstituteSpec& substitute, const ModelSpec& spec,
                        const TrainConfig& cfg, TrainLog* log = nullptr);

/// Rectifier over frozen backbone embeddings, propagating on `adjacency`
/// (the real normalized adjacency in normal use).
Rectifier train_rectifier(const Backbone& backbone, const Graph& graph,
                          const NormalizedAdjacency& adjacency, Topology topology,
                          const ModelSpec& spec, const TrainConfig& cfg, TrainLog* log = nullptr);
Rectifier train_rectifier(const Backbone& backbone, const Graph& graph, Topology topology,
                          const ModelSpec& spec, const TrainConfig& cfg, TrainLog* log = nullptr);

/// Unprotected GNN with the backbone widths on the real adjacency.
LayerStack train_original(const Graph& graph, const ModelSpec& spec, const TrainConfig& cfg,
                          TrainLog* log = nullptr);
/// Feature-only MLP with the backbone widths.
LayerStack train_mlp(const Graph& graph, const ModelSpec& spec, const TrainConfig& cfg,
                     TrainLog* log = nullptr);

/// Everything an experiment trains: the deployed pair plus the two reference models.
struct GnnVaultSystem {
  PartitionedModel partitioned;
  LayerStack original;
  LayerStack mlp;
};

/// Percentage of masked rows whose argmax equals the label.
double accuracy(const DenseMatrix& logits, std::span<const std::uint16_t> labels,
                const std::vector<bool>& mask);

/// Mean silhouette coefficient with Euclidean distance. When there are more
/// than `max_samples` rows a seeded subset of that size is scored.
/// Throws kSingleClass when fewer than two labels are present.
double silhouette(const DenseMatrix& embeddings, std::span<const std::uint16_t> labels,
                  std::size_t max_samples = 2000, std::uint64_t seed = 0);

struct EvalReport {
  std::string dataset;
  std::string model;
  std::string topology;
  double p_org = 0.0;
  double p_bb = 0.0;
  double p_rec = 0.0;
  double p_mlp = 0.0;
  double delta_p = 0.0;       // p_rec - p_bb
  double degradation = 0.0;   // p_org - p_rec
  std::size_t theta_bb = 0;
  std::size_t theta_rec = 0;
  std::vector<double> silhouette_original;
  std::vector<double> silhouette_backbone;
  std::vector<double> silhouette_rectifier;
};

struct EvalOptions {
  std::size_t silhouette_samples = 2000;
  std::uint64_t seed = 0;
  bool silhouettes = true;
};

/// Accuracies on the test mask, parameter counts and per-layer silhouettes.
EvalReport evaluate(const GnnVaultSystem& system, const Graph& graph, const EvalOptions& opts = {});

/// Top-two principal component scores, deterministic in sign.
DenseMatrix pca_2d(const DenseMatrix& x);

/// Writes one CSV per layer of the original, backbone and rectifier models
/// (columns: embedding dims, pc1, pc2, label). Returns the written paths.
std::vector<std::filesystem::path> export_embeddings(const GnnVaultSystem& system, const Graph& graph,
                                                     const std::filesystem::path& dir);

}  // namespace gnnvault
