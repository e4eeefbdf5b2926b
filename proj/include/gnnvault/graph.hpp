#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gnnvault/matrix.hpp"

namespace gnnvault {

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Masks {
  std::vector<bool> train;
  std::vector<bool> val;
  std::vector<bool> test;

  friend bool operator==(const Masks&, const Masks&) = default;
};

std::size_t count(const std::vector<bool>& mask);

/// Symmetrizes, drops self-loops, sorts by (src, dst) and deduplicates.
/// Throws kMalformedGraph for an endpoint >= n_nodes.
std::vector<Edge> canonical_undirected(std::vector<Edge> pairs, std::size_t n_nodes);

/// Immutable undirected attributed graph.
///
/// Feature and edge buffers are shared between copies, so copying a Graph is
/// cheap and `with_edges` substitutes the topology without duplicating the
/// feature matrix. Reads of the edge list go through `edges()`, which is
/// observable by an EdgeAccessAudit.
class Graph {
 public:
  Graph() = default;

  /// Validates every invariant; edges must already be canonical.
  Graph(DenseMatrix features, std::vector<Edge> edges, std::vector<std::uint16_t> labels,
        std::size_t n_classes, Masks masks);

  std::size_t n_nodes() const noexcept { return features_ ? features_->rows() : 0; }
  std::size_t n_features() const noexcept { return features_ ? features_->cols() : 0; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  /// Directed stored count (twice the undirected count). Not an audited read.
  std::size_t n_edges() const noexcept { return edges_ ? edges_->size() : 0; }
  std::size_t n_undirected_edges() const noexcept { return n_edges() / 2; }

  const DenseMatrix& features() const noexcept;
  std::span<const Edge> edges() const;
  const std::vector<std::uint16_t>& labels() const noexcept { return labels_; }
  const Masks& masks() const noexcept { return masks_; }

  /// Same features, labels and masks over a new canonical edge list.
  Graph with_edges(std::vector<Edge> edges) const;
  Graph with_masks(Masks masks) const;
  /// Rows scaled to unit L1 norm; all-zero rows are left untouched.
  Graph with_row_normalized_features() const;

  bool has_edge(std::uint32_t u, std::uint32_t v) const;

  friend bool operator==(const Graph& a, const Graph& b);

 private:
  friend class EdgeAccessAudit;
  void validate() const;

  std::shared_ptr<const DenseMatrix> features_;
  std::shared_ptr<const std::vector<Edge>> edges_;
  std::vector<std::uint16_t> labels_;
  std::size_t n_classes_ = 0;
  Masks masks_;
};

/// Counts calls to `Graph::edges()` on the watched graph (or any copy sharing
/// its edge buffer) made on the constructing thread while alive.
class EdgeAccessAudit {
 public:
  explicit EdgeAccessAudit(const Graph& watched);
  ~EdgeAccessAudit();
  EdgeAccessAudit(const EdgeAccessAudit&) = delete;
  EdgeAccessAudit& operator=(const EdgeAccessAudit&) = delete;

  std::size_t reads() const noexcept { return reads_; }

 private:
  friend class Graph;
  const void* buffer_;
  std::size_t reads_ = 0;
};

/// Symmetric-normalized adjacency with self-loops, D^-1/2 (A+I) D^-1/2, in
/// COO sorted by (row, col).
struct NormalizedAdjacency {
  std::size_t n = 0;
  std::vector<std::uint32_t> rows;
  std::vector<std::uint32_t> cols;
  std::vector<float> values;
  /// Degree plus self-loop.
  std::vector<std::uint32_t> degrees;

  std::size_t nnz() const noexcept { return values.size(); }
  std::optional<float> lookup(std::uint32_t row, std::uint32_t col) const;
  /// Identity matrix of order n.
  static NormalizedAdjacency identity(std::size_t n);

  friend bool operator==(const NormalizedAdjacency&, const NormalizedAdjacency&) = default;
};

NormalizedAdjacency normalize(const Graph& graph);

enum class SubstituteKind { kKnn, kCosineThreshold, kRandom };

std::string_view to_string(SubstituteKind k);
/// "knn", "cosine_threshold" (or "cosine"), "random".
SubstituteKind parse_substitute_kind(std::string_view s);

struct SubstituteSpec {
  SubstituteKind kind = SubstituteKind::kKnn;
  std::size_t k = 2;
  double tau = 0.5;
  double edge_fraction = 1.0;
  bool density_match = false;
  std::uint64_t seed = 0;

  friend bool operator==(const SubstituteSpec&, const SubstituteSpec&) = default;
};

/// Cosine similarity between rows i and j. Zero-norm rows have similarity 0
/// against everything.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Feature-derived stand-in topology. Only the real edge *count* is consulted
/// (for density matching and random fractions); the real edge list is never read.
Graph build_substitute(const Graph& graph, const SubstituteSpec& spec);

struct SbmParams {
  std::size_t n_per_class = 50;
  std::size_t n_classes = 4;
  double p_in = 0.2;
  double p_out = 0.01;
  std::size_t feat_dim = 16;
  double feat_noise = 1.0;
  /// Labeled nodes drawn per class for the train mask; 0 leaves masks empty.
  std::size_t train_per_class = 20;
  std::uint64_t seed = 0;
};

/// Stochastic block model with class-centroid features plus Gaussian noise.
Graph sbm_generate(const SbmParams& params);

/// Balanced semi-supervised split: exactly `per_class` train nodes per class,
/// every other eligible node in test, empty val. Eligible nodes are the union of
/// the graph's existing masks, or all nodes when every mask is empty.
Masks make_split(const Graph& graph, std::size_t per_class, std::uint64_t seed);

}  // namespace gnnvault
