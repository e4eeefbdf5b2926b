#pragma once
// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "gnnvault/graph.hpp"
#include "gnnvault/nn.hpp"

namespace oracle {

using namespace gnnvault;

inline Graph random_graph(std::size_t n, std::size_t n_pairs, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> node(0, static_cast<std::uint32_t>(n - 1));
  std::vector<Edge> pairs;
  for (std::size_t t = 0; t < n_pairs; ++t) pairs.push_back({node(rng), node(rng)});
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  DenseMatrix x(n, d);
  for (float& v : x.values()) v = u(rng);
  std::vector<std::uint16_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint16_t>(i % 3);
  return Graph(std::move(x), canonical_undirected(std::move(pairs), n), std::move(labels), 3, {});
}

/// Dense (A+I) normalized directly from the definition.
inline std::vector<double> dense_normalized(const Graph& g) {
  const std::size_t n = g.n_nodes();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
  for (const Edge& e : g.edges()) a[e.src * n + e.dst] = 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i * n + j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= std::sqrt(deg[i] * deg[j]);
  return a;
}

/// Max |spmm(Â, h) − dense(Â)·h| on a random graph.
inline double spmm_error(std::size_t n, std::uint64_t seed) {
  Graph g = random_graph(n, 2 * n, 4, seed);
  auto adj = normalize(g);
  auto dense = dense_normalized(g);
  const DenseMatrix& h = g.features();
  DenseMatrix got = spmm(adj, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < h.cols(); ++c) {
      double want = 0.0;
      for (std::size_t j = 0; j < n; ++j) want += dense[i * n + j] * h(j, c);
      worst = std::max(worst, std::abs(want - double(got(i, c))));
    }
  }
  return worst;
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Largest elementwise |a − b| / max(|a|, |b|, floor).
inline double max_elementwise_error(const std::vector<double>& a, const std::vector<double>& b,
                                    double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

struct GradCheckResult {
  double weight = 0.0;
  double bias = 0.0;
  double input = 0.0;  // over all input blocks
  double worst() const { return std::max({weight, bias, input}); }
};

template <typename T>
struct GradCheckSetup {
  NormalizedAdjacency adj;
  std::vector<BasicMatrix<T>> blocks;
  BasicLayerParams<T> params;
  std::vector<std::uint16_t> labels;
  std::vector<bool> mask;
};

template <typename T>
GradCheckSetup<T> make_grad_setup(bool with_graph, Activation act, std::uint64_t seed) {
  const std::size_t n = 8, d_out = 4;
  Graph g = random_graph(n, 10, 5, seed);
  GradCheckSetup<T> s;
  if (with_graph) s.adj = normalize(g);
  std::mt19937_64 rng(seed * 7 + 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto fill = [&](std::size_t r, std::size_t c) {
    BasicMatrix<T> m(r, c);
    for (T& v : m.values()) v = static_cast<T>(u(rng));
    return m;
  };
  s.blocks.push_back(fill(n, 3));
  s.blocks.push_back(fill(n, 2));
  s.params.weight = fill(5, d_out);
  s.params.bias.resize(d_out);
  for (T& b : s.params.bias) b = static_cast<T>(0.3 * u(rng));
  s.params.activation = act;
  s.labels.resize(n);
  s.mask.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    s.labels[i] = static_cast<std::uint16_t>(i % d_out);
    s.mask[i] = i % 4 != 3;
  }
  return s;
}

template <typename T>
double grad_setup_loss(const GradCheckSetup<T>& s, bool with_graph) {
  std::vector<const BasicMatrix<T>*> ptrs;
  for (const auto& b : s.blocks) ptrs.push_back(&b);
  auto fwd = layer_forward<T>(with_graph ? &s.adj : nullptr, ptrs, s.params);
  return masked_softmax_cross_entropy(fwd.output, s.labels, s.mask).loss;
}

template <typename To, typename From>
GradCheckSetup<To> cast_setup(const GradCheckSetup<From>& s) {
  GradCheckSetup<To> out;
  out.adj = s.adj;
  for (const auto& b : s.blocks) out.blocks.push_back(matrix_cast<To>(b));
  out.params.weight = matrix_cast<To>(s.params.weight);
  out.params.bias.assign(s.params.bias.begin(), s.params.bias.end());
  out.params.activation = s.params.activation;
  out.labels = s.labels;
  out.mask = s.mask;
  return out;
}

/// Gradient of CE(layer(x)) with respect to weights, bias and both input
/// blocks. Analytic gradients run in T; the central differences always run on
/// a 64-bit copy with step h. Errors are elementwise |a - n| / max(|a|, |n|, floor).
template <typename T>
GradCheckResult layer_grad_check(bool with_graph, Activation act, std::uint64_t seed,
                                 double h = 1e-6, double floor = 1e-3) {
  auto ref = make_grad_setup<double>(with_graph, act, seed);
  auto s = cast_setup<T>(ref);
  std::vector<const BasicMatrix<T>*> ptrs;
  for (const auto& b : s.blocks) ptrs.push_back(&b);
  const NormalizedAdjacency* adj = with_graph ? &s.adj : nullptr;
  auto fwd = layer_forward<T>(adj, ptrs, s.params);
  auto loss = masked_softmax_cross_entropy(fwd.output, s.labels, s.mask);
  bool need[] = {true, true};
  auto grads = layer_backward<T>(adj, fwd.cache, s.params, loss.grad, need);

  auto numeric = [&](double& slot) {
    double saved = slot;
    slot = saved + h;
    double up = grad_setup_loss(ref, with_graph);
    slot = saved - h;
    double down = grad_setup_loss(ref, with_graph);
    slot = saved;
    return (up - down) / (2.0 * h);
  };

  GradCheckResult r;
  {
    std::vector<double> a, n;
    for (std::size_t i = 0; i < s.params.weight.size(); ++i) {
      a.push_back(grads.weight.values()[i]);
      n.push_back(numeric(ref.params.weight.values()[i]));
    }
    r.weight = max_elementwise_error(a, n, floor);
  }
  {
    std::vector<double> a, n;
    for (std::size_t i = 0; i < s.params.bias.size(); ++i) {
      a.push_back(grads.bias[i]);
      n.push_back(numeric(ref.params.bias[i]));
    }
    r.bias = max_elementwise_error(a, n, floor);
  }
  {
    std::vector<double> a, n;
    for (std::size_t b = 0; b < s.blocks.size(); ++b) {
      for (std::size_t i = 0; i < s.blocks[b].size(); ++i) {
        a.push_back(grads.inputs[b].values()[i]);
        n.push_back(numeric(ref.blocks[b].values()[i]));
      }
    }
    r.input = max_elementwise_error(a, n, floor);
  }
  return r;
}

/// Loss gradient with respect to the logits: analytic in T, central
/// differences on a 64-bit copy.
template <typename T>
double loss_grad_check(std::uint64_t seed, double h = 1e-6, double floor = 1e-3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.5);
  const std::size_t n = 9, c = 5;
  DenseMatrix64 ref(n, c);
  for (double& v : ref.values()) v = z(rng);
  BasicMatrix<T> logits = matrix_cast<T>(ref);
  std::vector<std::uint16_t> labels(n);
  std::vector<bool> mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<std::uint16_t>((i * 3) % c);
    mask[i] = i % 3 != 0;
  }
  auto r = masked_softmax_cross_entropy(logits, labels, mask);
  std::vector<double> a, num;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    a.push_back(r.grad.values()[i]);
    double saved = ref.values()[i];
    ref.values()[i] = saved + h;
    double up = masked_softmax_cross_entropy(ref, labels, mask).loss;
    ref.values()[i] = saved - h;
    double down = masked_softmax_cross_entropy(ref, labels, mask).loss;
    ref.values()[i] = saved;
    num.push_back((up - down) / (2.0 * h));
  }
  return max_elementwise_error(a, num, floor);
}

/// AUC by enumerating every (positive, negative) pairing.
inline double brute_force_auc(std::span<const double> pos, std::span<const double> neg) {
  double wins = 0.0;
  for (double p : pos) {
    for (double q : neg) {
      if (p > q) wins += 1.0;
      else if (p == q) wins += 0.5;
    }
  }
  return wins / (double(pos.size()) * double(neg.size()));
}

/// Mean silhouette from the per-sample definition over a full distance matrix.
inline double brute_force_silhouette(const DenseMatrix& x, std::span<const std::uint16_t> labels) {
  const std::size_t n = x.rows();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        double d = double(x(i, k)) - double(x(j, k));
        s += d * d;
      }
      dist[i * n + j] = std::sqrt(s);
    }
  }
  std::uint16_t max_label = *std::max_element(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(max_label + 1, 0.0);
    std::vector<std::size_t> cnt(max_label + 1, 0);
    for (std::size_t j = 0; j < n; ++j) {
      ++cnt[labels[j]];
      if (j != i) sum[labels[j]] += dist[i * n + j];
    }
    std::size_t own = labels[i];
    if (cnt[own] <= 1) continue;
    double a = sum[own] / double(cnt[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c <= max_label; ++c) {
      if (c != own && cnt[c] > 0) b = std::min(b, sum[c] / double(cnt[c]));
    }
    double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / double(n);
}

}  // namespace oracle
