#include "gnnvault/training.hpp"

#include "gnnvault/container.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <set>

namespace gnnvault {

namespace {

using InputFn = std::function<std::vector<const DenseMatrix*>(std::size_t layer, const DenseMatrix* prev)>;

double masked_accuracy(const DenseMatrix& logits, std::span<const std::uint16_t> labels,
                       const std::vector<bool>& mask) {
  auto pred = argmax_rows(logits);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    ++total;
    if (pred[i] == labels[i]) ++hit;
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(hit) / static_cast<double>(total);
}

/// Full-batch training of a stack whose layer k input blocks come from
/// `inputs(k, previous_output)`. Block 0 of every layer k > 0 is the previous
/// layer's output and is the only block that receives a gradient.
LayerStack fit(LayerStack stack, const NormalizedAdjacency* adj, const InputFn& inputs,
               const Graph& graph, const TrainConfig& cfg, TrainLog* log) {
  if (cfg.learning_rate <= 0.0) fail(ErrorCode::kInvalidArgument, "learning rate must be > 0");
  if (count(graph.masks().train) == 0) fail(ErrorCode::kEmptyMask, "train mask selects no nodes");
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.weight_decay = cfg.weight_decay;
  adam.decoupled = cfg.decoupled_weight_decay;
  OptimizerState opt = make_optimizer(stack, adam);
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  const auto& labels = graph.labels();
  const auto& masks = graph.masks();
  const bool early_stop = cfg.patience > 0 && count(masks.val) > 0;
  LayerStack best = stack;
  double best_val = -1.0;
  std::size_t since_best = 0;
  const std::size_t n_layers = stack.layers.size();

  auto infer = [&](const LayerStack& s) {
    std::vector<DenseMatrix> outs;
    outs.reserve(n_layers);
    for (std::size_t k = 0; k < n_layers; ++k) {
      auto blocks = inputs(k, k > 0 ? &outs.back() : nullptr);
      outs.push_back(layer_forward<float>(adj, blocks, s.layers[k]).output);
    }
    return std::move(outs.back());
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<LayerForward<float>> fw;
    fw.reserve(n_layers);
    DropoutOptions drop{cfg.dropout, &rng};
    try {
      for (std::size_t k = 0; k < n_layers; ++k) {
        auto blocks = inputs(k, k > 0 ? &fw.back().output : nullptr);
        fw.push_back(layer_forward<float>(adj, blocks, stack.layers[k], drop));
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFinite) {
        fail(ErrorCode::kDivergence, "training diverged at epoch " + std::to_string(epoch));
      }
      throw;
    }
    LossResult<float> loss;
    try {
      loss = masked_softmax_cross_entropy(fw.back().output, labels, masks.train);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFinite) {
        fail(ErrorCode::kDivergence, "loss diverged at epoch " + std::to_string(epoch));
      }
      throw;
    }
    if (log) log->loss.push_back(loss.loss);

    std::vector<LayerGrads<float>> grads(n_layers);
    DenseMatrix upstream = std::move(loss.grad);
    for (std::size_t k = n_layers; k-- > 0;) {
      const std::size_t n_blocks = fw[k].cache.inputs.size();
      std::unique_ptr<bool[]> need(new bool[n_blocks]());
      need[0] = k > 0;
      grads[k] = layer_backward<float>(adj, fw[k].cache, stack.layers[k], upstream,
                                       std::span<const bool>(need.get(), n_blocks));
      if (k > 0) upstream = std::move(grads[k].inputs[0]);
    }
    std::vector<std::span<const float>> gviews;
    for (const auto& g : grads) {
      gviews.push_back(g.weight.values());
      gviews.push_back(g.bias);
    }
    auto pviews = parameter_views(stack);
    adam_step(pviews, gviews, opt);

    if (early_stop) {
      double val = masked_accuracy(infer(stack), labels, masks.val);
      if (val > best_val) {
        best_val = val;
        best = stack;
        since_best = 0;
        if (log) log->best_epoch = epoch;
      } else if (++since_best >= cfg.patience) {
        return best;
      }
    }
  }
  if (early_stop) return best;
  if (log) log->best_epoch = cfg.epochs == 0 ? 0 : cfg.epochs - 1;
  return stack;
}

}  // namespace

LayerStack train_stack(LayerStack stack, const NormalizedAdjacency* adj, const DenseMatrix& x,
                       const Graph& graph, const TrainConfig& cfg, TrainLog* log) {
  InputFn inputs = [&x](std::size_t k, const DenseMatrix* prev) {
    return std::vector<const DenseMatrix*>{k == 0 ? &x : prev};
  };
  return fit(std::move(stack), adj, inputs, graph, cfg, log);
}

Backbone train_backbone(const Graph& graph, const SubstituteSpec& substitute, const ModelSpec& spec,
                        const TrainConfig& cfg, TrainLog* log) {
  Backbone bb;
  bb.substitute = substitute;
  bb.adjacency = normalize(build_substitute(graph, substitute));
  LayerStack init = init_stack(backbone_input_dims(spec), spec.backbone_widths, cfg.seed);
  bb.gcn = train_stack(std::move(init), &bb.adjacency, graph.features(), graph, cfg, log);
  return bb;
}

Rectifier train_rectifier(const Backbone& backbone, const Graph& graph,
                          const NormalizedAdjacency& adjacency, Topology topology,
                          const ModelSpec& spec, const TrainConfig& cfg, TrainLog* log) {
  const std::vector<DenseMatrix> embeddings = backbone_forward(backbone, graph.features());
  Rectifier rec;
  rec.topology = topology;
  LayerStack init = init_stack(rectifier_input_dims(spec, topology), spec.rectifier_widths,
                               cfg.seed ^ 0xA5A5A5A5ULL);
  InputFn inputs = [&](std::size_t k, const DenseMatrix* prev) {
    return rectifier_layer_inputs(spec, topology, k, embeddings, prev);
  };
  rec.gcn = fit(std::move(init), &adjacency, inputs, graph, cfg, log);
  return rec;
}

Rectifier train_rectifier(const Backbone& backbone, const Graph& graph, Topology topology,
                          const ModelSpec& spec, const TrainConfig& cfg, TrainLog* log) {
  return train_rectifier(backbone, graph, normalize(graph), topology, spec, cfg, log);
}

LayerStack train_original(const Graph& graph, const ModelSpec& spec, const TrainConfig& cfg,
                          TrainLog* log) {
  const NormalizedAdjacency adj = normalize(graph);
  LayerStack init = init_stack(backbone_input_dims(spec), spec.backbone_widths, cfg.seed);
  return train_stack(std::move(init), &adj, graph.features(), graph, cfg, log);
}

LayerStack train_mlp(const Graph& graph, const ModelSpec& spec, const TrainConfig& cfg,
                     TrainLog* log) {
  LayerStack init = init_stack(backbone_input_dims(spec), spec.backbone_widths, cfg.seed);
  return train_stack(std::move(init), nullptr, graph.features(), graph, cfg, log);
}

double accuracy(const DenseMatrix& logits, std::span<const std::uint16_t> labels,
                const std::vector<bool>& mask) {
  if (logits.rows() != labels.size() || mask.size() != labels.size()) {
    fail(ErrorCode::kDimensionMismatch, "accuracy: logits/labels/mask length mismatch");
  }
  return masked_accuracy(logits, labels, mask);
}

double silhouette(const DenseMatrix& embeddings, std::span<const std::uint16_t> labels,
                  std::size_t max_samples, std::uint64_t seed) {
  if (embeddings.rows() != labels.size()) {
    fail(ErrorCode::kDimensionMismatch, "silhouette: embeddings/labels length mismatch");
  }
  std::vector<std::uint32_t> rows(embeddings.rows());
  std::iota(rows.begin(), rows.end(), 0u);
  if (max_samples > 0 && rows.size() > max_samples) {
    std::mt19937_64 rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(max_samples);
    std::sort(rows.begin(), rows.end());
  }
  std::set<std::uint16_t> classes;
  for (auto r : rows) classes.insert(labels[r]);
  if (classes.size() < 2) fail(ErrorCode::kSingleClass, "silhouette needs at least two labels");
  const std::uint16_t max_label = *classes.rbegin();
  std::vector<std::size_t> size(max_label + 1, 0);
  for (auto r : rows) ++size[labels[r]];

  const std::size_t m = rows.size();
  const std::size_t d = embeddings.cols();
  std::vector<double> sums(max_label + 1);
  double total = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    std::fill(sums.begin(), sums.end(), 0.0);
    auto xa = embeddings.row(rows[a]);
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b) continue;
      auto xb = embeddings.row(rows[b]);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double diff = double(xa[j]) - double(xb[j]);
        s += diff * diff;
      }
      sums[labels[rows[b]]] += std::sqrt(s);
    }
    const std::uint16_t own = labels[rows[a]];
    if (size[own] <= 1) continue;  // singleton clusters score 0
    double intra = sums[own] / static_cast<double>(size[own] - 1);
    double inter = std::numeric_limits<double>::infinity();
    for (std::uint16_t c : classes) {
      if (c == own) continue;
      inter = std::min(inter, sums[c] / static_cast<double>(size[c]));
    }
    double denom = std::max(intra, inter);
    total += denom > 0.0 ? (inter - intra) / denom : 0.0;
  }
  return total / static_cast<double>(m);
}

namespace {

double test_accuracy(const DenseMatrix& logits, const Graph& g) {
  return masked_accuracy(logits, g.labels(), g.masks().test);
}

std::vector<double> layer_silhouettes(const std::vector<DenseMatrix>& layers, const Graph& g,
                                      const EvalOptions& opts) {
  std::vector<double> out;
  for (const auto& h : layers) out.push_back(silhouette(h, g.labels(), opts.silhouette_samples, opts.seed));
  return out;
}

}  // namespace

EvalReport evaluate(const GnnVaultSystem& system, const Graph& graph, const EvalOptions& opts) {
  const auto& pm = system.partitioned;
  EvalReport r;
  r.model = std::string(to_string(pm.spec.family));
  r.topology = std::string(to_string(pm.rectifier.topology));
  const auto& x = graph.features();
  auto original = gcn_layers(system.original, pm.real_adjacency, x);
  auto backbone = backbone_forward(pm.backbone, x);
  auto rectified = rectifier_layers(pm.spec, pm.rectifier, pm.real_adjacency, backbone);
  r.p_org = test_accuracy(original.back(), graph);
  r.p_bb = test_accuracy(backbone.back(), graph);
  r.p_rec = test_accuracy(rectified.back(), graph);
  if (!system.mlp.layers.empty()) r.p_mlp = test_accuracy(mlp_forward(system.mlp, x), graph);
  r.delta_p = r.p_rec - r.p_bb;
  r.degradation = r.p_org - r.p_rec;
  r.theta_bb = count_parameters(pm.backbone.gcn);
  r.theta_rec = count_parameters(pm.rectifier.gcn);
  if (opts.silhouettes) {
    r.silhouette_original = layer_silhouettes(original, graph, opts);
    r.silhouette_backbone = layer_silhouettes(backbone, graph, opts);
    r.silhouette_rectifier = layer_silhouettes(rectified, graph, opts);
  }
  return r;
}

DenseMatrix pca_2d(const DenseMatrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  DenseMatrix out(n, 2);
  if (n == 0 || d == 0) return out;
  Eigen::MatrixXd m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(i, j) = x(i, j);
  }
  Eigen::RowVectorXd mean = m.colwise().mean();
  m.rowwise() -= mean;
  Eigen::MatrixXd cov = (m.transpose() * m) / std::max<double>(1.0, double(n) - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index k = std::min<Eigen::Index>(2, static_cast<Eigen::Index>(d));
  for (Eigen::Index c = 0; c < k; ++c) {
    // Eigenvalues ascend; take the largest first.
    Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - c);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    Eigen::VectorXd scores = m * v;
    for (std::size_t i = 0; i < n; ++i) out(i, c) = static_cast<float>(scores(static_cast<Eigen::Index>(i)));
  }
  return out;
}

std::vector<std::filesystem::path> export_embeddings(const GnnVaultSystem& system, const Graph& graph,
                                                     const std::filesystem::path& dir) {
  ensure_directory(dir);
  const auto& pm = system.partitioned;
  const auto& x = graph.features();
  auto backbone = backbone_forward(pm.backbone, x);
  auto groups = {
      std::pair{std::string("original"), gcn_layers(system.original, pm.real_adjacency, x)},
      std::pair{std::string("backbone"), backbone},
      std::pair{std::string("rectifier"),
                rectifier_layers(pm.spec, pm.rectifier, pm.real_adjacency, backbone)},
  };
  std::vector<std::filesystem::path> written;
  char buf[32];
  for (const auto& [name, layers] : groups) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const DenseMatrix& h = layers[l];
      DenseMatrix pc = pca_2d(h);
      auto path = dir / (name + "_layer" + std::to_string(l + 1) + ".csv");
      std::ofstream out(path);
      if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
      for (std::size_t j = 0; j < h.cols(); ++j) out << 'e' << j << ',';
      out << "pc1,pc2,label\n";
      for (std::size_t i = 0; i < h.rows(); ++i) {
        for (float v : h.row(i)) {
          std::snprintf(buf, sizeof buf, "%.9g", double(v));
          out << buf << ',';
        }
        for (std::size_t c = 0; c < 2; ++c) {
          std::snprintf(buf, sizeof buf, "%.9g", double(pc(i, c)));
          out << buf << ',';
        }
        out << graph.labels()[i] << '\n';
      }
      if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace gnnvault
