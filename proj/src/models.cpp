#include "gnnvault/models.hpp"

#include <numeric>
#include <string>

namespace gnnvault {

std::string_view to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::kM1: return "M1";
    case ModelFamily::kM2: return "M2";
    case ModelFamily::kM3: return "M3";
    case ModelFamily::kMlp: return "mlp";
  }
  return "?";
}

std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::kParallel: return "parallel";
    case Topology::kCascaded: return "cascaded";
    case Topology::kSeries: return "series";
  }
  return "?";
}

ModelFamily parse_model_family(std::string_view s) {
  if (s == "M1" || s == "m1") return ModelFamily::kM1;
  if (s == "M2" || s == "m2") return ModelFamily::kM2;
  if (s == "M3" || s == "m3") return ModelFamily::kM3;
  if (s == "mlp" || s == "MLP") return ModelFamily::kMlp;
  fail(ErrorCode::kInvalidArgument, "unknown model family '" + std::string(s) + "'");
}

Topology parse_topology(std::string_view s) {
  if (s == "parallel") return Topology::kParallel;
  if (s == "cascaded") return Topology::kCascaded;
  if (s == "series") return Topology::kSeries;
  fail(ErrorCode::kInvalidArgument, "unknown topology '" + std::string(s) + "'");
}

ModelSpec make_model_spec(ModelFamily family, std::size_t feature_dim, std::size_t n_classes) {
  if (n_classes == 0 || feature_dim == 0) {
    fail(ErrorCode::kInvalidArgument, "model spec needs feature_dim > 0 and n_classes > 0");
  }
  ModelSpec s;
  s.family = family;
  s.feature_dim = feature_dim;
  s.n_classes = n_classes;
  const std::size_t c = n_classes;
  switch (family) {
    case ModelFamily::kM1:
    case ModelFamily::kMlp:
      s.backbone_widths = {128, 32, c};
      s.rectifier_widths = {128, 32, c};
      break;
    case ModelFamily::kM2:
      s.backbone_widths = {256, 128, c};
      s.rectifier_widths = {128, 32, c};
      break;
    case ModelFamily::kM3:
      s.backbone_widths = {256, 64, 32, 16, c};
      s.rectifier_widths = {64, 32, c};
      break;
  }
  return s;
}

std::vector<std::size_t> backbone_input_dims(const ModelSpec& spec) {
  std::vector<std::size_t> dims{spec.feature_dim};
  for (std::size_t l = 0; l + 1 < spec.backbone_widths.size(); ++l) {
    dims.push_back(spec.backbone_widths[l]);
  }
  return dims;
}

std::vector<std::size_t> rectifier_input_dims(const ModelSpec& spec, Topology topology) {
  const auto& b = spec.backbone_widths;
  const auto& r = spec.rectifier_widths;
  if (r.empty() || b.empty()) fail(ErrorCode::kDimensionMismatch, "empty width list");
  std::vector<std::size_t> dims;
  switch (topology) {
    case Topology::kParallel:
      if (b.size() < r.size()) {
        fail(ErrorCode::kDimensionMismatch,
             "parallel rectifier needs at least as many backbone layers as rectifier layers");
      }
      dims.push_back(b[0]);
      for (std::size_t k = 1; k < r.size(); ++k) dims.push_back(r[k - 1] + b[k]);
      break;
    case Topology::kCascaded:
      dims.push_back(std::accumulate(b.begin(), b.end(), std::size_t{0}));
      for (std::size_t k = 1; k < r.size(); ++k) dims.push_back(r[k - 1]);
      break;
    case Topology::kSeries:
      if (b.size() < 2) fail(ErrorCode::kDimensionMismatch, "series rectifier needs >= 2 backbone layers");
      dims.push_back(b[b.size() - 2]);
      for (std::size_t k = 1; k < r.size(); ++k) dims.push_back(r[k - 1]);
      break;
  }
  return dims;
}

std::vector<std::size_t> required_embeddings(const ModelSpec& spec, Topology topology) {
  const std::size_t n_b = spec.backbone_widths.size();
  std::vector<std::size_t> out;
  switch (topology) {
    case Topology::kParallel:
      for (std::size_t k = 0; k < spec.rectifier_widths.size(); ++k) out.push_back(k);
      break;
    case Topology::kCascaded:
      for (std::size_t k = 0; k < n_b; ++k) out.push_back(k);
      break;
    case Topology::kSeries:
      out.push_back(n_b - 2);
      break;
  }
  return out;
}

std::size_t backbone_parameter_count(const ModelSpec& spec) {
  return count_parameters(backbone_input_dims(spec), spec.backbone_widths);
}

std::size_t rectifier_parameter_count(const ModelSpec& spec, Topology topology) {
  return count_parameters(rectifier_input_dims(spec, topology), spec.rectifier_widths);
}

std::vector<DenseMatrix> gcn_layers(const LayerStack& gcn, const NormalizedAdjacency& adj,
                                    const DenseMatrix& x) {
  std::vector<DenseMatrix> out;
  out.reserve(gcn.layers.size());
  const DenseMatrix* h = &x;
  for (const auto& layer : gcn.layers) {
    out.push_back(gcn_forward(adj, *h, layer).output);
    h = &out.back();
  }
  return out;
}

std::vector<DenseMatrix> backbone_forward(const Backbone& backbone, const DenseMatrix& x) {
  if (x.cols() != backbone.gcn.input_dim()) {
    fail(ErrorCode::kDimensionMismatch, "backbone expects " + std::to_string(backbone.gcn.input_dim()) +
                                            " features, got " + std::to_string(x.cols()));
  }
  return gcn_layers(backbone.gcn, backbone.adjacency, x);
}

std::vector<const DenseMatrix*> rectifier_layer_inputs(const ModelSpec& spec, Topology topology,
                                                       std::size_t layer,
                                                       const std::vector<DenseMatrix>& embeddings,
                                                       const DenseMatrix* previous) {
  if (embeddings.size() != spec.backbone_widths.size()) {
    fail(ErrorCode::kDimensionMismatch, "expected " + std::to_string(spec.backbone_widths.size()) +
                                            " backbone embeddings, got " +
                                            std::to_string(embeddings.size()));
  }
  if (layer > 0 && previous == nullptr) {
    fail(ErrorCode::kInvalidArgument, "rectifier layer > 0 needs the previous output");
  }
  std::vector<const DenseMatrix*> blocks;
  if (layer > 0) {
    blocks.push_back(previous);
    if (topology == Topology::kParallel) blocks.push_back(&embeddings[layer]);
    return blocks;
  }
  for (std::size_t idx : required_embeddings(spec, topology)) {
    if (topology == Topology::kParallel && idx > 0) break;
    blocks.push_back(&embeddings[idx]);
  }
  return blocks;
}

std::vector<DenseMatrix> rectifier_layers(const ModelSpec& spec, const Rectifier& rectifier,
                                          const NormalizedAdjacency& real_adjacency,
                                          const std::vector<DenseMatrix>& embeddings) {
  std::vector<DenseMatrix> out;
  out.reserve(rectifier.gcn.layers.size());
  for (std::size_t k = 0; k < rectifier.gcn.layers.size(); ++k) {
    auto blocks = rectifier_layer_inputs(spec, rectifier.topology, k, embeddings,
                                         k > 0 ? &out.back() : nullptr);
    out.push_back(layer_forward<float>(&real_adjacency, blocks, rectifier.gcn.layers[k]).output);
  }
  return out;
}

DenseMatrix rectifier_forward(const PartitionedModel& model,
                              const std::vector<DenseMatrix>& embeddings) {
  return rectifier_layers(model.spec, model.rectifier, model.real_adjacency, embeddings).back();
}

DenseMatrix original_forward(const LayerStack& gcn, const DenseMatrix& x,
                             const NormalizedAdjacency& real_adjacency) {
  return gcn_layers(gcn, real_adjacency, x).back();
}

std::vector<DenseMatrix> mlp_layers(const LayerStack& mlp, const DenseMatrix& x) {
  std::vector<DenseMatrix> out;
  out.reserve(mlp.layers.size());
  const DenseMatrix* h = &x;
  for (const auto& layer : mlp.layers) {
    out.push_back(dense_forward(*h, layer).output);
    h = &out.back();
  }
  return out;
}

DenseMatrix mlp_forward(const LayerStack& mlp, const DenseMatrix& x) {
  return mlp_layers(mlp, x).back();
}

}  // namespace gnnvault
