#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gnnvault/graph.hpp"
#include "gnnvault/nn.hpp"

namespace gnnvault {

enum class ModelFamily { kM1, kM2, kM3, kMlp };

enum class Topology { kParallel, kCascaded, kSeries };

std::string_view to_string(ModelFamily f);
std::string_view to_string(Topology t);
ModelFamily parse_model_family(std::string_view s);
Topology parse_topology(std::string_view s);

/// Layer widths of the backbone (also used by the unprotected original GNN and
/// the MLP baseline) and of the rectifier. The last width of each is n_classes.
struct ModelSpec {
  ModelFamily family = ModelFamily::kM1;
  std::vector<std::size_t> backbone_widths;
  std::vector<std::size_t> rectifier_widths;
  std::size_t n_classes = 0;
  std::size_t feature_dim = 0;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// M1: backbone (128, 32, C), rectifier (128, 32, C).
/// M2: backbone (256, 128, C), rectifier (128, 32, C).
/// M3: backbone (256, 64, 32, 16, C), rectifier (64, 32, C).
/// mlp uses the M1 widths.
ModelSpec make_model_spec(ModelFamily family, std::size_t feature_dim, std::size_t n_classes);

/// Input dims of every backbone layer: (d, w1, ..., w_{L-1}).
std::vector<std::size_t> backbone_input_dims(const ModelSpec& spec);

/// Input dims of every rectifier layer under the topology's wiring:
///   parallel  layer 1 ← H¹; layer k>1 ← [R^{k-1} | H^k]
///   cascaded  layer 1 ← [H¹ | … | H^L]; later layers chain
///   series    layer 1 ← H^{L-1}; later layers chain
std::vector<std::size_t> rectifier_input_dims(const ModelSpec& spec, Topology topology);

/// Zero-based indices of the backbone embeddings the rectifier consumes, in the
/// order it consumes them.
std::vector<std::size_t> required_embeddings(const ModelSpec& spec, Topology topology);

std::size_t backbone_parameter_count(const ModelSpec& spec);
std::size_t rectifier_parameter_count(const ModelSpec& spec, Topology topology);

struct Backbone {
  LayerStack gcn;
  NormalizedAdjacency adjacency;  // substitute graph Â'
  SubstituteSpec substitute;
};

struct Rectifier {
  LayerStack gcn;
  Topology topology = Topology::kParallel;
};

/// Public backbone (untrusted world) plus private rectifier and real graph (vault).
struct PartitionedModel {
  ModelSpec spec;
  Backbone backbone;
  Rectifier rectifier;
  NormalizedAdjacency real_adjacency;
};

/// Every backbone layer output H¹ … H^L (the last are the backbone logits).
std::vector<DenseMatrix> backbone_forward(const Backbone& backbone, const DenseMatrix& x);

/// Blocks that feed rectifier layer `layer` (zero-based): the previous
/// rectifier output (when wired in) followed by the backbone embeddings.
std::vector<const DenseMatrix*> rectifier_layer_inputs(const ModelSpec& spec, Topology topology,
                                                       std::size_t layer,
                                                       const std::vector<DenseMatrix>& embeddings,
                                                       const DenseMatrix* previous);

/// Every rectifier layer output; the last is the logits.
std::vector<DenseMatrix> rectifier_layers(const ModelSpec& spec, const Rectifier& rectifier,
                                          const NormalizedAdjacency& real_adjacency,
                                          const std::vector<DenseMatrix>& embeddings);

DenseMatrix rectifier_forward(const PartitionedModel& model,
                              const std::vector<DenseMatrix>& embeddings);

/// Unprotected GNN: backbone widths, trained and run on the real adjacency.
std::vector<DenseMatrix> gcn_layers(const LayerStack& gcn, const NormalizedAdjacency& adj,
                                    const DenseMatrix& x);
DenseMatrix original_forward(const LayerStack& gcn, const DenseMatrix& x,
                             const NormalizedAdjacency& real_adjacency);

/// Feature-only baseline with the backbone widths.
std::vector<DenseMatrix> mlp_layers(const LayerStack& mlp, const DenseMatrix& x);
DenseMatrix mlp_forward(const LayerStack& mlp, const DenseMatrix& x);

}  // namespace gnnvault
