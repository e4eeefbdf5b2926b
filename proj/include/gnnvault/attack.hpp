#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gnnvault/graph.hpp"
#include "gnnvault/training.hpp"

namespace gnnvault {

enum class Metric { kEuclidean, kCorrelation, kCosine, kChebyshev, kBraycurtis, kCanberra };

/// Which model's embeddings the attacker observes.
enum class Exposure {
  kOriginal,  // M_org: every layer of the unprotected GNN
  kGnnVault,  // M_gv: backbone layers only
  kBaseline,  // M_base: every layer of the MLP
};

std::string_view to_string(Metric m);
std::string_view to_string(Exposure e);
Metric parse_metric(std::string_view s);
Exposure parse_exposure(std::string_view s);
const std::vector<Metric>& all_metrics();
/// "all" or a comma-separated list of metric names.
std::vector<Metric> parse_metric_list(std::string_view s);

/// Distance between two vectors; smaller means "more likely linked".
/// Degenerate cases: correlation with a zero-variance side and cosine with a
/// zero-norm side are 1; 0/0 terms of braycurtis and canberra count as 0.
double pair_distance(Metric metric, std::span<const float> u, std::span<const float> v);

/// Rank (Mann-Whitney) AUC with average ranks for ties. Higher score ranks as
/// more positive. Throws kEmptyClass if either side is empty.
double roc_auc(std::span<const double> positive_scores, std::span<const double> negative_scores);

using NodePair = std::pair<std::uint32_t, std::uint32_t>;

struct PairSample {
  std::vector<NodePair> positive;  // every undirected edge, u < v
  std::vector<NodePair> negative;  // uniform non-edges, same count
  std::uint64_t seed = 0;
};

/// Throws kEmptyClass on a graph without edges and kInvalidArgument when there
/// are not enough non-edges for a 1:1 sample.
PairSample sample_pairs(const Graph& graph, std::uint64_t seed);

/// Per-layer embeddings visible under the exposure. With `with_labels` the
/// released labels of a GNNVault deployment are appended as a one-hot block.
std::vector<DenseMatrix> observable_layers(const GnnVaultSystem& system, const Graph& graph,
                                           Exposure exposure, bool with_labels = false);
/// The same layers concatenated feature-wise per node.
DenseMatrix observable_embeddings(const GnnVaultSystem& system, const Graph& graph,
                                  Exposure exposure, bool with_labels = false);

struct AttackOptions {
  std::vector<Metric> metrics = all_metrics();
  std::uint64_t seed = 0;
  /// Score each observable layer separately and report the best AUC.
  bool per_layer_best = false;
  bool with_labels = false;
};

struct AttackReport {
  Exposure exposure = Exposure::kOriginal;
  std::vector<std::pair<Metric, double>> auc;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;

  double at(Metric m) const;
};

AttackReport attack_layers(const std::vector<DenseMatrix>& layers, const PairSample& pairs,
                           const AttackOptions& opts, Exposure exposure);

AttackReport run_attack(const GnnVaultSystem& system, const Graph& graph, Exposure exposure,
                        const AttackOptions& opts = {});

}  // namespace gnnvault
