#include "gnnvault/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>

namespace gnnvault {

namespace {

thread_local std::vector<EdgeAccessAudit*> g_active_audits;

std::string idx(std::size_t v) { return std::to_string(v); }

}  // namespace

std::size_t count(const std::vector<bool>& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::vector<Edge> canonical_undirected(std::vector<Edge> pairs, std::size_t n_nodes) {
  std::vector<Edge> out;
  out.reserve(pairs.size() * 2);
  for (const Edge& e : pairs) {
    if (e.src >= n_nodes || e.dst >= n_nodes) {
      fail(ErrorCode::kMalformedGraph, "edge (" + idx(e.src) + "," + idx(e.dst) +
                                           ") has endpoint >= n_nodes=" + idx(n_nodes));
    }
    if (e.src == e.dst) continue;
    out.push_back(e);
    out.push_back({e.dst, e.src});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Graph::Graph(DenseMatrix features, std::vector<Edge> edges, std::vector<std::uint16_t> labels,
             std::size_t n_classes, Masks masks)
    : features_(std::make_shared<const DenseMatrix>(std::move(features))),
      edges_(std::make_shared<const std::vector<Edge>>(std::move(edges))),
      labels_(std::move(labels)),
      n_classes_(n_classes),
      masks_(std::move(masks)) {
  const std::size_t n = features_->rows();
  for (auto* m : {&masks_.train, &masks_.val, &masks_.test}) {
    if (m->empty()) m->assign(n, false);
  }
  validate();
}

void Graph::validate() const {
  const std::size_t n = n_nodes();
  if (labels_.size() != n) {
    fail(ErrorCode::kMalformedGraph, "labels length " + idx(labels_.size()) + " != n_nodes " + idx(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels_[i] >= n_classes_) {
      fail(ErrorCode::kMalformedGraph, "label " + idx(labels_[i]) + " of node " + idx(i) +
                                           " >= n_classes " + idx(n_classes_));
    }
  }
  const auto& e = *edges_;
  for (std::size_t t = 0; t < e.size(); ++t) {
    if (e[t].src >= n || e[t].dst >= n) {
      fail(ErrorCode::kMalformedGraph, "edge endpoint >= n_nodes at position " + idx(t));
    }
    if (e[t].src == e[t].dst) fail(ErrorCode::kMalformedGraph, "self-loop at node " + idx(e[t].src));
    if (t > 0 && !(e[t - 1] < e[t])) {
      fail(ErrorCode::kMalformedGraph, "edge list not sorted/deduplicated at position " + idx(t));
    }
  }
  for (const Edge& x : e) {
    if (!std::binary_search(e.begin(), e.end(), Edge{x.dst, x.src})) {
      fail(ErrorCode::kMalformedGraph,
           "edge (" + idx(x.src) + "," + idx(x.dst) + ") has no reverse");
    }
  }
  for (const auto* m : {&masks_.train, &masks_.val, &masks_.test}) {
    if (m->size() != n) fail(ErrorCode::kMalformedGraph, "mask length != n_nodes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    int owners = int(masks_.train[i]) + int(masks_.val[i]) + int(masks_.test[i]);
    if (owners > 1) fail(ErrorCode::kMalformedGraph, "masks overlap at node " + idx(i));
  }
}

const DenseMatrix& Graph::features() const noexcept {
  static const DenseMatrix empty;
  return features_ ? *features_ : empty;
}

std::span<const Edge> Graph::edges() const {
  if (!edges_) return {};
  for (EdgeAccessAudit* audit : g_active_audits) {
    if (audit->buffer_ == edges_.get()) ++audit->reads_;
  }
  return *edges_;
}

Graph Graph::with_edges(std::vector<Edge> edges) const {
  Graph g = *this;
  g.edges_ = std::make_shared<const std::vector<Edge>>(std::move(edges));
  g.validate();
  return g;
}

Graph Graph::with_masks(Masks masks) const {
  Graph g = *this;
  g.masks_ = std::move(masks);
  g.validate();
  return g;
}

Graph Graph::with_row_normalized_features() const {
  DenseMatrix x = features();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double sum = 0.0;
    for (float v : row) sum += std::abs(v);
    if (sum == 0.0) continue;
    for (float& v : row) v = static_cast<float>(v / sum);
  }
  Graph g = *this;
  g.features_ = std::make_shared<const DenseMatrix>(std::move(x));
  return g;
}

bool Graph::has_edge(std::uint32_t u, std::uint32_t v) const {
  auto e = edges();
  return std::binary_search(e.begin(), e.end(), Edge{u, v});
}

bool operator==(const Graph& a, const Graph& b) {
  static const std::vector<Edge> none;
  const auto& ea = a.edges_ ? *a.edges_ : none;
  const auto& eb = b.edges_ ? *b.edges_ : none;
  return a.features() == b.features() && ea == eb && a.labels_ == b.labels_ &&
         a.n_classes_ == b.n_classes_ && a.masks_ == b.masks_;
}

EdgeAccessAudit::EdgeAccessAudit(const Graph& watched) : buffer_(watched.edges_.get()) {
  g_active_audits.push_back(this);
}

EdgeAccessAudit::~EdgeAccessAudit() {
  std::erase(g_active_audits, this);
}

std::optional<float> NormalizedAdjacency::lookup(std::uint32_t row, std::uint32_t col) const {
  auto lo = std::lower_bound(rows.begin(), rows.end(), row);
  auto hi = std::upper_bound(lo, rows.end(), row);
  auto first = cols.begin() + (lo - rows.begin());
  auto last = cols.begin() + (hi - rows.begin());
  auto it = std::lower_bound(first, last, col);
  if (it == last || *it != col) return std::nullopt;
  return values[static_cast<std::size_t>(it - cols.begin())];
}

NormalizedAdjacency NormalizedAdjacency::identity(std::size_t n) {
  NormalizedAdjacency a;
  a.n = n;
  a.rows.resize(n);
  a.cols.resize(n);
  std::iota(a.rows.begin(), a.rows.end(), 0u);
  std::iota(a.cols.begin(), a.cols.end(), 0u);
  a.values.assign(n, 1.0f);
  a.degrees.assign(n, 1u);
  return a;
}

NormalizedAdjacency normalize(const Graph& graph) {
  const std::size_t n = graph.n_nodes();
  auto edges = graph.edges();
  NormalizedAdjacency adj;
  adj.n = n;
  adj.degrees.assign(n, 1u);
  for (const Edge& e : edges) {
    if (e.src >= n || e.dst >= n) {
      fail(ErrorCode::kMalformedGraph, "edge endpoint >= n_nodes in normalize");
    }
    ++adj.degrees[e.src];
  }
  const std::size_t nnz = edges.size() + n;
  adj.rows.reserve(nnz);
  adj.cols.reserve(nnz);
  adj.values.reserve(nnz);
  auto push = [&](std::uint32_t r, std::uint32_t c) {
    adj.rows.push_back(r);
    adj.cols.push_back(c);
    double d = static_cast<double>(adj.degrees[r]) * static_cast<double>(adj.degrees[c]);
    adj.values.push_back(static_cast<float>(1.0 / std::sqrt(d)));
  };
  std::size_t t = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    bool diag_done = false;
    for (; t < edges.size() && edges[t].src == i; ++t) {
      if (!diag_done && edges[t].dst > i) {
        push(i, i);
        diag_done = true;
      }
      push(i, edges[t].dst);
    }
    if (!diag_done) push(i, i);
  }
  return adj;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * double(b[i]);
    na += double(a[i]) * double(a[i]);
    nb += double(b[i]) * double(b[i]);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

/// Row-at-a-time cosine similarities through an inverted (column) index, so
/// sparse bag-of-words features cost only their overlapping nonzeros.
class CosineIndex {
 public:
  explicit CosineIndex(const DenseMatrix& x) : n_(x.rows()), norms_(x.rows(), 0.0) {
    const std::size_t d = x.cols();
    row_ptr_.assign(n_ + 1, 0);
    std::vector<std::size_t> col_count(d, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      auto row = x.row(i);
      double s = 0.0;
      for (std::size_t f = 0; f < d; ++f) {
        if (row[f] == 0.0f) continue;
        row_col_.push_back(static_cast<std::uint32_t>(f));
        row_val_.push_back(row[f]);
        ++col_count[f];
        s += double(row[f]) * double(row[f]);
      }
      row_ptr_[i + 1] = row_col_.size();
      norms_[i] = std::sqrt(s);
    }
    col_ptr_.assign(d + 1, 0);
    for (std::size_t f = 0; f < d; ++f) col_ptr_[f + 1] = col_ptr_[f] + col_count[f];
    col_row_.resize(row_col_.size());
    col_val_.resize(row_col_.size());
    std::vector<std::size_t> fill(col_ptr_.begin(), col_ptr_.end() - 1);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t t = row_ptr_[i]; t < row_ptr_[i + 1]; ++t) {
        std::size_t slot = fill[row_col_[t]]++;
        col_row_[slot] = static_cast<std::uint32_t>(i);
        col_val_[slot] = row_val_[t];
      }
    }
    dot_.assign(n_, 0.0);
    seen_.assign(n_, 0);
  }

  /// Fills `sims` (length n) with cosine similarity of every node to node i.
  void similarities(std::size_t i, std::vector<double>& sims) {
    sims.assign(n_, 0.0);
    if (norms_[i] == 0.0) return;
    touched_.clear();
    for (std::size_t t = row_ptr_[i]; t < row_ptr_[i + 1]; ++t) {
      const std::uint32_t f = row_col_[t];
      const double xi = row_val_[t];
      for (std::size_t s = col_ptr_[f]; s < col_ptr_[f + 1]; ++s) {
        const std::uint32_t j = col_row_[s];
        if (!seen_[j]) {
          seen_[j] = 1;
          touched_.push_back(j);
        }
        dot_[j] += xi * double(col_val_[s]);
      }
    }
    for (std::uint32_t j : touched_) {
      if (norms_[j] != 0.0) sims[j] = dot_[j] / (norms_[i] * norms_[j]);
      dot_[j] = 0.0;
      seen_[j] = 0;
    }
  }

 private:
  std::size_t n_;
  std::vector<double> norms_;
  std::vector<std::size_t> row_ptr_, col_ptr_;
  std::vector<std::uint32_t> row_col_, col_row_;
  std::vector<float> row_val_, col_val_;
  std::vector<double> dot_;
  std::vector<char> seen_;
  std::vector<std::uint32_t> touched_;
};

/// Uniformly keeps `target` undirected pairs (u < v) when there are more.
void subsample_pairs(std::vector<Edge>& pairs, std::size_t target, std::uint64_t seed) {
  if (pairs.size() <= target) return;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < target; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pairs.size() - 1);
    std::swap(pairs[i], pairs[pick(rng)]);
  }
  pairs.resize(target);
}

std::vector<Edge> knn_pairs(const DenseMatrix& x, std::size_t k) {
  const std::size_t n = x.rows();
  CosineIndex index(x);
  std::vector<double> sims;
  std::vector<std::uint32_t> order;
  std::vector<Edge> directed;
  directed.reserve(n * k);
  for (std::size_t i = 0; i < n && k > 0; ++i) {
    index.similarities(i, sims);
    order.clear();
    for (std::uint32_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    auto better = [&](std::uint32_t a, std::uint32_t b) {
      if (sims[a] != sims[b]) return sims[a] > sims[b];
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      better);
    for (std::size_t t = 0; t < k; ++t) {
      auto u = static_cast<std::uint32_t>(i);
      directed.push_back({std::min(u, order[t]), std::max(u, order[t])});
    }
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  return directed;
}

std::vector<Edge> threshold_pairs(const DenseMatrix& x, double tau) {
  const std::size_t n = x.rows();
  CosineIndex index(x);
  std::vector<double> sims;
  std::vector<Edge> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    index.similarities(i, sims);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sims[j] >= tau) {
        pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
      }
    }
  }
  return pairs;
}

std::vector<Edge> random_pairs(std::size_t n, std::size_t target, std::uint64_t seed) {
  const std::size_t max_pairs = n < 2 ? 0 : n * (n - 1) / 2;
  target = std::min(target, max_pairs);
  std::vector<Edge> pairs;
  if (target == 0) return pairs;
  std::mt19937_64 rng(seed);
  if (target * 2 > max_pairs) {
    for (std::uint32_t u = 0; u < n; ++u) {
      for (std::uint32_t v = u + 1; v < n; ++v) pairs.push_back({u, v});
    }
    subsample_pairs(pairs, target, seed);
    return pairs;
  }
  std::uniform_int_distribution<std::uint32_t> node(0, static_cast<std::uint32_t>(n - 1));
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(target * 2);
  while (pairs.size() < target) {
    std::uint32_t u = node(rng), v = node(rng);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (seen.insert((std::uint64_t(u) << 32) | v).second) pairs.push_back({u, v});
  }
  return pairs;
}

}  // namespace

Graph build_substitute(const Graph& graph, const SubstituteSpec& spec) {
  const std::size_t n = graph.n_nodes();
  const std::size_t real_pairs = graph.n_undirected_edges();
  std::vector<Edge> pairs;
  switch (spec.kind) {
    case SubstituteKind::kKnn:
      if (spec.k >= n && spec.k > 0) {
        fail(ErrorCode::kInvalidArgument,
             "knn k=" + idx(spec.k) + " must be < n_nodes=" + idx(n));
      }
      pairs = knn_pairs(graph.features(), spec.k);
      break;
    case SubstituteKind::kCosineThreshold:
      if (!(spec.tau >= -1.0 && spec.tau <= 1.0)) {
        fail(ErrorCode::kInvalidArgument, "cosine threshold must lie in [-1, 1]");
      }
      pairs = threshold_pairs(graph.features(), spec.tau);
      break;
    case SubstituteKind::kRandom: {
      if (!(spec.edge_fraction >= 0.0)) {
        fail(ErrorCode::kInvalidArgument, "random edge_fraction must be >= 0");
      }
      auto target = static_cast<std::size_t>(
          std::floor(spec.edge_fraction * static_cast<double>(real_pairs)));
      pairs = random_pairs(n, target, spec.seed);
      break;
    }
  }
  if (spec.density_match && spec.kind != SubstituteKind::kRandom) {
    subsample_pairs(pairs, real_pairs, spec.seed);
  }
  return graph.with_edges(canonical_undirected(std::move(pairs), n));
}

Masks make_split(const Graph& graph, std::size_t per_class, std::uint64_t seed) {
  const std::size_t n = graph.n_nodes();
  const Masks& old = graph.masks();
  bool any = count(old.train) + count(old.val) + count(old.test) > 0;
  std::vector<std::vector<std::uint32_t>> by_class(graph.n_classes());
  for (std::uint32_t i = 0; i < n; ++i) {
    bool eligible = !any || old.train[i] || old.val[i] || old.test[i];
    if (eligible) by_class[graph.labels()[i]].push_back(i);
  }
  Masks m;
  m.train.assign(n, false);
  m.val.assign(n, false);
  m.test.assign(n, false);
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& nodes = by_class[c];
    if (nodes.size() < per_class) {
      fail(ErrorCode::kInsufficientLabels, "class " + idx(c) + " has " + idx(nodes.size()) +
                                               " nodes, fewer than per_class=" + idx(per_class));
    }
    std::shuffle(nodes.begin(), nodes.end(), rng);
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      (t < per_class ? m.train : m.test)[nodes[t]] = true;
    }
  }
  return m;
}

Graph sbm_generate(const SbmParams& p) {
  if (!(p.p_out >= 0.0 && p.p_out <= p.p_in && p.p_in <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "sbm requires 0 <= p_out <= p_in <= 1");
  }
  if (p.n_classes == 0 || p.n_classes > 0xFFFF || p.n_per_class == 0) {
    fail(ErrorCode::kInvalidArgument, "sbm requires n_classes in [1, 65535] and n_per_class > 0");
  }
  if (p.n_per_class < p.train_per_class) {
    fail(ErrorCode::kInsufficientLabels,
         "sbm n_per_class=" + idx(p.n_per_class) + " < train_per_class=" + idx(p.train_per_class));
  }
  const std::size_t n = p.n_per_class * p.n_classes;
  std::vector<std::uint16_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint16_t>(i / p.n_per_class);

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Edge> pairs;
  for (std::uint32_t u = 0; u < n; ++u) {
    for (std::uint32_t v = u + 1; v < n; ++v) {
      double prob = labels[u] == labels[v] ? p.p_in : p.p_out;
      if (unit(rng) < prob) pairs.push_back({u, v});
    }
  }
  DenseMatrix x(n, p.feat_dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < p.feat_dim; ++f) {
      double centroid = (f % p.n_classes == labels[i]) ? 1.0 : 0.0;
      x(i, f) = static_cast<float>(centroid + p.feat_noise * noise(rng));
    }
  }
  Graph g(std::move(x), canonical_undirected(std::move(pairs), n), std::move(labels), p.n_classes,
          Masks{});
  if (p.train_per_class == 0) return g;
  return g.with_masks(make_split(g, p.train_per_class, p.seed ^ 0x5851F42D4C957F2DULL));
}

std::string_view to_string(SubstituteKind k) {
  switch (k) {
    case SubstituteKind::kKnn: return "knn";
    case SubstituteKind::kCosineThreshold: return "cosine_threshold";
    case SubstituteKind::kRandom: return "random";
  }
  return "?";
}

SubstituteKind parse_substitute_kind(std::string_view s) {
  if (s == "knn") return SubstituteKind::kKnn;
  if (s == "cosine_threshold" || s == "cosine") return SubstituteKind::kCosineThreshold;
  if (s == "random") return SubstituteKind::kRandom;
  fail(ErrorCode::kInvalidArgument, "unknown substitute kind '" + std::string(s) + "'");
}

}  // namespace gnnvault
