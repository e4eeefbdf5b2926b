#include "gnnvault/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "gnnvault/models.hpp"

namespace gnnvault {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kEuclidean: return "euclidean";
    case Metric::kCorrelation: return "correlation";
    case Metric::kCosine: return "cosine";
    case Metric::kChebyshev: return "chebyshev";
    case Metric::kBraycurtis: return "braycurtis";
    case Metric::kCanberra: return "canberra";
  }
  return "?";
}

std::string_view to_string(Exposure e) {
  switch (e) {
    case Exposure::kOriginal: return "M_org";
    case Exposure::kGnnVault: return "M_gv";
    case Exposure::kBaseline: return "M_base";
  }
  return "?";
}

const std::vector<Metric>& all_metrics() {
  static const std::vector<Metric> metrics = {Metric::kEuclidean, Metric::kCorrelation,
                                              Metric::kCosine,    Metric::kChebyshev,
                                              Metric::kBraycurtis, Metric::kCanberra};
  return metrics;
}

Metric parse_metric(std::string_view s) {
  for (Metric m : all_metrics()) {
    if (to_string(m) == s) return m;
  }
  fail(ErrorCode::kInvalidArgument, "unknown metric '" + std::string(s) + "'");
}

Exposure parse_exposure(std::string_view s) {
  for (Exposure e : {Exposure::kOriginal, Exposure::kGnnVault, Exposure::kBaseline}) {
    if (to_string(e) == s) return e;
  }
  fail(ErrorCode::kInvalidArgument, "unknown exposure '" + std::string(s) + "'");
}

std::vector<Metric> parse_metric_list(std::string_view s) {
  if (s == "all") return all_metrics();
  std::vector<Metric> out;
  while (!s.empty()) {
    auto comma = s.find(',');
    auto item = s.substr(0, comma);
    if (!item.empty()) {
      Metric m = parse_metric(item);
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  if (out.empty()) fail(ErrorCode::kInvalidArgument, "empty metric list");
  return out;
}

double pair_distance(Metric metric, std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) fail(ErrorCode::kDimensionMismatch, "pair_distance: length mismatch");
  const std::size_t d = u.size();
  switch (metric) {
    case Metric::kEuclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double diff = double(u[i]) - double(v[i]);
        s += diff * diff;
      }
      return std::sqrt(s);
    }
    case Metric::kCorrelation: {
      if (d == 0) return 1.0;
      double mu = 0.0, mv = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        mu += u[i];
        mv += v[i];
      }
      mu /= double(d);
      mv /= double(d);
      double dot = 0.0, nu = 0.0, nv = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double a = double(u[i]) - mu, b = double(v[i]) - mv;
        dot += a * b;
        nu += a * a;
        nv += b * b;
      }
      if (nu == 0.0 || nv == 0.0) return 1.0;
      return 1.0 - dot / std::sqrt(nu * nv);
    }
    case Metric::kCosine: {
      double dot = 0.0, nu = 0.0, nv = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        dot += double(u[i]) * double(v[i]);
        nu += double(u[i]) * double(u[i]);
        nv += double(v[i]) * double(v[i]);
      }
      if (nu == 0.0 || nv == 0.0) return 1.0;
      return 1.0 - dot / std::sqrt(nu * nv);
    }
    case Metric::kChebyshev: {
      double m = 0.0;
      for (std::size_t i = 0; i < d; ++i) m = std::max(m, std::abs(double(u[i]) - double(v[i])));
      return m;
    }
    case Metric::kBraycurtis: {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        num += std::abs(double(u[i]) - double(v[i]));
        den += std::abs(double(u[i]) + double(v[i]));
      }
      return den == 0.0 ? 0.0 : num / den;
    }
    case Metric::kCanberra: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double den = std::abs(double(u[i])) + std::abs(double(v[i]));
        if (den > 0.0) s += std::abs(double(u[i]) - double(v[i])) / den;
      }
      return s;
    }
  }
  return 0.0;
}

double roc_auc(std::span<const double> positive_scores, std::span<const double> negative_scores) {
  const std::size_t np = positive_scores.size(), nn = negative_scores.size();
  if (np == 0 || nn == 0) fail(ErrorCode::kEmptyClass, "roc_auc needs positive and negative scores");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(np + nn);
  for (double s : positive_scores) items.push_back({s, true});
  for (double s : negative_scores) items.push_back({s, false});
  for (const auto& it : items) {
    if (std::isnan(it.score)) fail(ErrorCode::kNonFinite, "roc_auc: NaN score");
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double midrank = (double(i + 1) + double(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (items[k].positive) rank_sum += midrank;
    }
    i = j;
  }
  const double u = rank_sum - double(np) * double(np + 1) / 2.0;
  return u / (double(np) * double(nn));
}

PairSample sample_pairs(const Graph& graph, std::uint64_t seed) {
  PairSample s;
  s.seed = seed;
  const std::size_t n = graph.n_nodes();
  std::unordered_set<std::uint64_t> taken;
  for (const Edge& e : graph.edges()) {
    if (e.src < e.dst) {
      s.positive.emplace_back(e.src, e.dst);
      taken.insert(std::uint64_t(e.src) * n + e.dst);
    }
  }
  if (s.positive.empty()) fail(ErrorCode::kEmptyClass, "graph has no edges to attack");
  const std::size_t total_pairs = n * (n - 1) / 2;
  if (total_pairs - s.positive.size() < s.positive.size()) {
    fail(ErrorCode::kInvalidArgument, "not enough non-edges for a balanced pair sample");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
  while (s.negative.size() < s.positive.size()) {
    std::uint32_t a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!taken.insert(std::uint64_t(a) * n + b).second) continue;
    s.negative.emplace_back(a, b);
  }
  return s;
}

namespace {

DenseMatrix one_hot(const std::vector<std::uint16_t>& labels, std::size_t n_classes) {
  DenseMatrix m(labels.size(), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) m(i, labels[i]) = 1.0f;
  return m;
}

}  // namespace

std::vector<DenseMatrix> observable_layers(const GnnVaultSystem& system, const Graph& graph,
                                           Exposure exposure, bool with_labels) {
  const auto& pm = system.partitioned;
  const auto& x = graph.features();
  std::vector<DenseMatrix> layers;
  switch (exposure) {
    case Exposure::kOriginal:
      layers = gcn_layers(system.original, pm.real_adjacency, x);
      break;
    case Exposure::kGnnVault:
      layers = backbone_forward(pm.backbone, x);
      if (with_labels) {
        auto logits = rectifier_forward(pm, layers);
        layers.push_back(one_hot(argmax_rows(logits), pm.spec.n_classes));
      }
      break;
    case Exposure::kBaseline:
      layers = mlp_layers(system.mlp, x);
      break;
  }
  return layers;
}

DenseMatrix observable_embeddings(const GnnVaultSystem& system, const Graph& graph,
                                  Exposure exposure, bool with_labels) {
  auto layers = observable_layers(system, graph, exposure, with_labels);
  std::vector<const DenseMatrix*> ptrs;
  for (const auto& l : layers) ptrs.push_back(&l);
  return concat_columns<float>(ptrs);
}

double AttackReport::at(Metric m) const {
  for (const auto& [metric, value] : auc) {
    if (metric == m) return value;
  }
  fail(ErrorCode::kInvalidArgument, "metric '" + std::string(to_string(m)) + "' not in report");
}

namespace {

double score_auc(const DenseMatrix& emb, const PairSample& pairs, Metric metric) {
  auto scores = [&](const std::vector<NodePair>& ps) {
    std::vector<double> out;
    out.reserve(ps.size());
    for (const auto& [a, b] : ps) out.push_back(-pair_distance(metric, emb.row(a), emb.row(b)));
    return out;
  };
  auto pos = scores(pairs.positive);
  auto neg = scores(pairs.negative);
  return roc_auc(pos, neg);
}

}  // namespace

AttackReport attack_layers(const std::vector<DenseMatrix>& layers, const PairSample& pairs,
                           const AttackOptions& opts, Exposure exposure) {
  if (layers.empty()) fail(ErrorCode::kInvalidArgument, "attack needs at least one embedding layer");
  AttackReport r;
  r.exposure = exposure;
  r.n_positive = pairs.positive.size();
  r.n_negative = pairs.negative.size();
  DenseMatrix joint;
  if (!opts.per_layer_best) {
    std::vector<const DenseMatrix*> ptrs;
    for (const auto& l : layers) ptrs.push_back(&l);
    joint = concat_columns<float>(ptrs);
  }
  for (Metric m : opts.metrics) {
    double auc;
    if (opts.per_layer_best) {
      auc = 0.0;
      for (const auto& l : layers) auc = std::max(auc, score_auc(l, pairs, m));
    } else {
      auc = score_auc(joint, pairs, m);
    }
    r.auc.emplace_back(m, auc);
  }
  return r;
}

AttackReport run_attack(const GnnVaultSystem& system, const Graph& graph, Exposure exposure,
                        const AttackOptions& opts) {
  const PairSample pairs = sample_pairs(graph, opts.seed);
  return attack_layers(observable_layers(system, graph, exposure, opts.with_labels), pairs, opts,
                       exposure);
}

}  // namespace gnnvault
