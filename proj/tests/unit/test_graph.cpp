#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "helpers.hpp"

using namespace gnnvault;
using testing::make_graph;

namespace {

DenseMatrix column(std::vector<float> v) {
  std::size_t n = v.size();
  return DenseMatrix(n, 1, std::move(v));
}

double modularity(const Graph& g) {
  auto edges = g.edges();
  double m = static_cast<double>(edges.size()) / 2.0;
  std::map<std::uint16_t, double> inside, degree;
  for (const Edge& e : edges) {
    degree[g.labels()[e.src]] += 1.0;
    if (g.labels()[e.src] == g.labels()[e.dst]) inside[g.labels()[e.src]] += 0.5;
  }
  double q = 0.0;
  for (auto& [c, d] : degree) q += inside[c] / m - (d / (2 * m)) * (d / (2 * m));
  return q;
}

/// Brute-force top-k under cosine with lower-index ties, symmetrized by union.
std::set<std::pair<std::uint32_t, std::uint32_t>> knn_oracle(const DenseMatrix& x, std::size_t k) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> out;
  for (std::uint32_t i = 0; i < x.rows(); ++i) {
    std::vector<std::pair<double, std::uint32_t>> cand;
    for (std::uint32_t j = 0; j < x.rows(); ++j) {
      if (j != i) cand.push_back({-cosine_similarity(x.row(i), x.row(j)), j});
    }
    std::sort(cand.begin(), cand.end());
    for (std::size_t t = 0; t < k; ++t) {
      out.insert({std::min(i, cand[t].second), std::max(i, cand[t].second)});
      out.insert({std::max(i, cand[t].second), std::min(i, cand[t].second)});
    }
  }
  return out;
}

std::set<std::pair<std::uint32_t, std::uint32_t>> edge_set(const Graph& g) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> s;
  for (const Edge& e : g.edges()) s.insert({e.src, e.dst});
  return s;
}

}  // namespace

TEST_CASE("canonical_undirected symmetrizes, drops loops and duplicates") {
  auto e = canonical_undirected({{0, 1}, {1, 0}, {2, 2}, {1, 2}, {1, 2}}, 3);
  std::vector<Edge> want = {{0, 1}, {1, 0}, {1, 2}, {2, 1}};
  CHECK(e == want);
  CHECK_ERROR_CODE(canonical_undirected({{0, 5}}, 3), ErrorCode::kMalformedGraph);
}

TEST_CASE("graph invariants are enforced") {
  DenseMatrix x(3, 1, 1.0f);
  SUBCASE("label out of range") {
    CHECK_ERROR_CODE(Graph(x, {}, {0, 1, 2}, 2, {}), ErrorCode::kMalformedGraph);
  }
  SUBCASE("missing reverse edge") {
    CHECK_ERROR_CODE(Graph(x, {{0, 1}}, {0, 0, 0}, 1, {}), ErrorCode::kMalformedGraph);
  }
  SUBCASE("self loop") {
    CHECK_ERROR_CODE(Graph(x, {{1, 1}}, {0, 0, 0}, 1, {}), ErrorCode::kMalformedGraph);
  }
  SUBCASE("overlapping masks") {
    Masks m{{true, false, false}, {}, {true, false, false}};
    CHECK_ERROR_CODE(Graph(x, {}, {0, 0, 0}, 1, m), ErrorCode::kMalformedGraph);
  }
  SUBCASE("wrong label length") {
    CHECK_ERROR_CODE(Graph(x, {}, {0, 0}, 1, {}), ErrorCode::kMalformedGraph);
  }
}

TEST_CASE("normalize hand examples") {
  SUBCASE("single isolated node") {
    auto adj = normalize(make_graph(DenseMatrix(1, 1, 1.0f), {}, {0}, 1));
    REQUIRE(adj.nnz() == 1);
    CHECK(adj.rows[0] == 0);
    CHECK(adj.cols[0] == 0);
    CHECK(adj.values[0] == 1.0f);
  }
  SUBCASE("two connected nodes give 0.5 everywhere") {
    auto adj = normalize(make_graph(DenseMatrix(2, 1, 1.0f), {{0, 1}}, {0, 0}, 1));
    REQUIRE(adj.nnz() == 4);
    for (float v : adj.values) CHECK(v == doctest::Approx(0.5f).epsilon(1e-7));
    CHECK(adj.degrees == std::vector<std::uint32_t>{2, 2});
  }
}

TEST_CASE("normalize row sums are 1 on cliques and entries are symmetric") {
  for (std::uint32_t n : {3u, 5u, 8u}) {
    std::vector<Edge> pairs;
    for (std::uint32_t u = 0; u < n; ++u)
      for (std::uint32_t v = u + 1; v < n; ++v) pairs.push_back({u, v});
    auto adj = normalize(make_graph(DenseMatrix(n, 1, 1.0f), pairs, std::vector<std::uint16_t>(n, 0), 1));
    std::vector<double> sums(n, 0.0);
    for (std::size_t t = 0; t < adj.nnz(); ++t) sums[adj.rows[t]] += adj.values[t];
    for (double s : sums) CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  Graph g = sbm_generate(testing::small_sbm());
  auto adj = normalize(g);
  CHECK(adj.nnz() == g.n_edges() + g.n_nodes());
  CHECK(std::is_sorted(adj.rows.begin(), adj.rows.end()));
  for (std::size_t t = 0; t < adj.nnz(); ++t) {
    auto back = adj.lookup(adj.cols[t], adj.rows[t]);
    REQUIRE(back.has_value());
    CHECK(*back == adj.values[t]);
  }
}

TEST_CASE("normalize on the Cora fixture has nnz = |E| + n") {
  Graph cora = read_container(testing::fixture("cora.gvg"));
  CHECK(normalize(cora).nnz() == 10556 + 2708);
}

TEST_CASE("knn substitute matches the brute-force oracle") {
  SUBCASE("k = 0 gives no edges") {
    Graph g = make_graph(column({1, 2, 3}), {{0, 1}}, {0, 0, 0}, 1);
    CHECK(build_substitute(g, {SubstituteKind::kKnn, 0}).n_edges() == 0);
  }
  SUBCASE("three scalars {0, 1, 10}, k = 1") {
    Graph g = make_graph(column({0, 1, 10}), {}, {0, 0, 0}, 1);
    Graph s = build_substitute(g, {SubstituteKind::kKnn, 1});
    CHECK(edge_set(s) == knn_oracle(g.features(), 1));
    std::set<std::pair<std::uint32_t, std::uint32_t>> want = {{0, 1}, {1, 0}, {1, 2}, {2, 1}};
    CHECK(edge_set(s) == want);
  }
  SUBCASE("random features, several k") {
    DenseMatrix x = testing::random_matrix(25, 6, 11);
    Graph g = make_graph(x, {}, std::vector<std::uint16_t>(25, 0), 1);
    for (std::size_t k : {1u, 2u, 5u}) {
      CHECK(edge_set(build_substitute(g, {SubstituteKind::kKnn, k})) == knn_oracle(x, k));
    }
  }
  SUBCASE("k >= n is rejected") {
    Graph g = make_graph(column({1, 2}), {}, {0, 0}, 1);
    CHECK_ERROR_CODE(build_substitute(g, {SubstituteKind::kKnn, 2}), ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("cosine threshold substitute") {
  DenseMatrix x(3, 2, std::vector<float>{1, 1, 1, 1, 0, 0});
  Graph g = make_graph(x, {}, {0, 0, 0}, 1);
  SubstituteSpec spec{SubstituteKind::kCosineThreshold};
  spec.tau = 0.9;
  Graph s = build_substitute(g, spec);
  CHECK(s.has_edge(0, 1));
  CHECK_FALSE(s.has_edge(0, 2));  // zero-norm row has similarity 0
  CHECK(s.n_undirected_edges() == 1);
  spec.tau = 1.5;
  CHECK_ERROR_CODE(build_substitute(g, spec), ErrorCode::kInvalidArgument);
}

TEST_CASE("density match keeps min(candidates, real) undirected edges") {
  Graph g = sbm_generate(testing::small_sbm());
  const std::size_t real = g.n_undirected_edges();
  for (std::size_t k : {1u, 2u, 8u, 20u}) {
    SubstituteSpec plain{SubstituteKind::kKnn, k};
    SubstituteSpec matched = plain;
    matched.density_match = true;
    std::size_t cand = build_substitute(g, plain).n_undirected_edges();
    CHECK(build_substitute(g, matched).n_undirected_edges() == std::min(cand, real));
  }
}

TEST_CASE("random substitute size and determinism") {
  Graph g = sbm_generate(testing::small_sbm());
  const std::size_t real = g.n_undirected_edges();
  for (double f : {0.0, 0.1, 1.0, 2.0}) {
    SubstituteSpec spec{SubstituteKind::kRandom};
    spec.edge_fraction = f;
    spec.seed = 4;
    Graph a = build_substitute(g, spec);
    CHECK(a.n_undirected_edges() == static_cast<std::size_t>(std::floor(f * real)));
    CHECK(a == build_substitute(g, spec));
  }
  SubstituteSpec bad{SubstituteKind::kRandom};
  bad.edge_fraction = -1;
  CHECK_ERROR_CODE(build_substitute(g, bad), ErrorCode::kInvalidArgument);
}

TEST_CASE("substitute construction does not read the real edge list") {
  Graph g = sbm_generate(testing::small_sbm());
  EdgeAccessAudit audit(g);
  for (auto kind : {SubstituteKind::kKnn, SubstituteKind::kCosineThreshold, SubstituteKind::kRandom}) {
    SubstituteSpec spec{kind};
    spec.density_match = true;
    (void)build_substitute(g, spec);
  }
  CHECK(audit.reads() == 0);
  (void)g.edges();
  CHECK(audit.reads() == 1);
}

TEST_CASE("sbm generator") {
  SUBCASE("degenerate probabilities give disjoint cliques") {
    SbmParams p = testing::small_sbm();
    p.p_in = 1.0;
    p.p_out = 0.0;
    Graph g = sbm_generate(p);
    for (const Edge& e : g.edges()) CHECK(g.labels()[e.src] == g.labels()[e.dst]);
    CHECK(g.n_undirected_edges() == p.n_classes * p.n_per_class * (p.n_per_class - 1) / 2);
  }
  SUBCASE("same seed is bit-identical, different seed differs") {
    Graph a = sbm_generate(testing::small_sbm(9));
    CHECK(a == sbm_generate(testing::small_sbm(9)));
    CHECK_FALSE(a == sbm_generate(testing::small_sbm(10)));
  }
  SUBCASE("true partition has modularity > 0.5") {
    SbmParams p;
    p.n_per_class = 50;
    p.n_classes = 4;
    p.p_in = 0.2;
    p.p_out = 0.01;
    CHECK(modularity(sbm_generate(p)) > 0.5);
  }
  SUBCASE("invalid parameters") {
    SbmParams p = testing::small_sbm();
    p.p_out = 0.5;
    p.p_in = 0.1;
    CHECK_ERROR_CODE(sbm_generate(p), ErrorCode::kInvalidArgument);
    p = testing::small_sbm();
    p.train_per_class = p.n_per_class + 1;
    CHECK_ERROR_CODE(sbm_generate(p), ErrorCode::kInsufficientLabels);
  }
}

TEST_CASE("make_split") {
  Graph cora = read_container(testing::fixture("cora.gvg"));
  SUBCASE("20 per class on Cora gives 140 train nodes") {
    Masks m = make_split(cora, 20, 1);
    CHECK(count(m.train) == 140);
    CHECK(count(m.val) == 0);
    std::vector<std::size_t> per(7, 0);
    for (std::size_t i = 0; i < cora.n_nodes(); ++i)
      if (m.train[i]) ++per[cora.labels()[i]];
    for (auto c : per) CHECK(c == 20);
  }
  SUBCASE("two seeds differ but keep per-class counts") {
    Masks a = make_split(cora, 20, 1), b = make_split(cora, 20, 2);
    CHECK_FALSE(a == b);
    CHECK(count(a.train) == count(b.train));
    CHECK(count(a.test) == count(b.test));
    CHECK(a == make_split(cora, 20, 1));
  }
  SUBCASE("too few nodes in a class") {
    CHECK_ERROR_CODE(make_split(cora, 100000, 1), ErrorCode::kInsufficientLabels);
  }
}

TEST_CASE("substitute kind names round-trip") {
  for (auto k : {SubstituteKind::kKnn, SubstituteKind::kCosineThreshold, SubstituteKind::kRandom}) {
    CHECK(parse_substitute_kind(to_string(k)) == k);
  }
  CHECK(parse_substitute_kind("cosine") == SubstituteKind::kCosineThreshold);
  CHECK_ERROR_CODE(parse_substitute_kind("euclid"), ErrorCode::kInvalidArgument);
}
