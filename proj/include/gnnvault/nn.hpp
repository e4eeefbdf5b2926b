#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gnnvault/graph.hpp"
#include "gnnvault/matrix.hpp"

namespace gnnvault {

enum class Activation : std::uint8_t { kNone = 0, kRelu = 1 };

// Kernels. Instantiated for float (training/inference) and double
// (verification).

/// Â·h over the COO triplets.
template <typename T>
BasicMatrix<T> spmm(const NormalizedAdjacency& adj, const BasicMatrix<T>& h);
/// Âᵀ·h.
template <typename T>
BasicMatrix<T> spmm_transposed(const NormalizedAdjacency& adj, const BasicMatrix<T>& h);

/// out += a · w[row_offset : row_offset + a.cols(), :]. Zero entries of `a` are
/// skipped, which is what makes sparse bag-of-words inputs cheap. Accumulation
/// order per output element is ascending in the shared dimension, so splitting
/// an input into column blocks and accumulating block by block is bit-identical
/// to one call over the concatenation.
template <typename T>
void accumulate_product(const BasicMatrix<T>& a, const BasicMatrix<T>& w, std::size_t row_offset,
                        BasicMatrix<T>& out);

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
/// aᵀ·b.
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
/// a·bᵀ.
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
struct BasicLayerParams {
  BasicMatrix<T> weight;  // d_in x d_out
  std::vector<T> bias;    // d_out
  Activation activation = Activation::kNone;

  std::size_t d_in() const noexcept { return weight.rows(); }
  std::size_t d_out() const noexcept { return weight.cols(); }

  friend bool operator==(const BasicLayerParams&, const BasicLayerParams&) = default;
};

using LayerParams = BasicLayerParams<float>;

template <typename T>
struct LayerCache {
  /// Input blocks as seen by the layer (after dropout when training).
  std::vector<const BasicMatrix<T>*> inputs;
  std::vector<BasicMatrix<T>> dropped;  // owns dropout copies referenced by `inputs`
  std::vector<std::vector<std::uint8_t>> keep;  // per-block dropout keep masks
  T dropout_scale = T{1};
  BasicMatrix<T> output;                // post-activation
};

template <typename T>
struct LayerForward {
  BasicMatrix<T> output;
  LayerCache<T> cache;
};

template <typename T>
struct LayerGrads {
  BasicMatrix<T> weight;
  std::vector<T> bias;
  /// One entry per input block; empty matrices where not requested.
  std::vector<BasicMatrix<T>> inputs;
};

struct DropoutOptions {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;  // required when rate > 0
};

// Layer steps, exposed so the vault can run one layer incrementally with the
// exact arithmetic of the monolithic forward.

/// z = Σ_blocks block · W[block rows]. Block widths must sum to d_in.
template <typename T>
BasicMatrix<T> project_blocks(std::span<const BasicMatrix<T>* const> blocks,
                              const BasicLayerParams<T>& params);
/// In place: p += bias (broadcast over rows), then activation.
template <typename T>
void finish_layer(BasicMatrix<T>& p, const BasicLayerParams<T>& params);

/// One graph convolution σ(Â·(h·W) + b) over column blocks of h. With
/// adj == nullptr the propagation is skipped (a dense/MLP layer).
template <typename T>
LayerForward<T> layer_forward(const NormalizedAdjacency* adj,
                              std::span<const BasicMatrix<T>* const> blocks,
                              const BasicLayerParams<T>& params, DropoutOptions dropout = {});

/// Backward of layer_forward. `input_grad[i]` selects whether the gradient of
/// block i is produced.
template <typename T>
LayerGrads<T> layer_backward(const NormalizedAdjacency* adj, const LayerCache<T>& cache,
                             const BasicLayerParams<T>& params, const BasicMatrix<T>& grad_out,
                             std::span<const bool> input_grad);

template <typename T>
LayerForward<T> gcn_forward(const NormalizedAdjacency& adj, const BasicMatrix<T>& h,
                            const BasicLayerParams<T>& params) {
  const BasicMatrix<T>* blocks[] = {&h};
  return layer_forward<T>(&adj, blocks, params);
}

template <typename T>
LayerForward<T> dense_forward(const BasicMatrix<T>& h, const BasicLayerParams<T>& params) {
  const BasicMatrix<T>* blocks[] = {&h};
  return layer_forward<T>(nullptr, blocks, params);
}

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicMatrix<T> grad;  // d loss / d logits, zero on unmasked rows
};

/// Mean negative log-likelihood of softmax(logits) over masked rows.
template <typename T>
LossResult<T> masked_softmax_cross_entropy(const BasicMatrix<T>& logits,
                                           std::span<const std::uint16_t> labels,
                                           const std::vector<bool>& mask);

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& logits);

/// Row-wise argmax; ties resolve to the lower class index.
std::vector<std::uint16_t> argmax_rows(const DenseMatrix& logits);

/// Ordered stack of layers (a GCN or an MLP, depending on whether an adjacency
/// is supplied when running it).
struct LayerStack {
  std::vector<LayerParams> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().d_in(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().d_out(); }
  std::vector<std::size_t> widths() const;

  friend bool operator==(const LayerStack&, const LayerStack&) = default;
};

/// Σ (d_in·d_out + d_out).
std::size_t count_parameters(const LayerStack& stack);
std::size_t count_parameters(std::span<const std::size_t> input_dims,
                             std::span<const std::size_t> output_dims);

/// Glorot-uniform weights, zero biases, ReLU on all but the last layer.
LayerStack init_stack(std::span<const std::size_t> input_dims,
                      std::span<const std::size_t> output_dims, std::uint64_t seed);

/// Flat views of every parameter tensor (weight then bias, per layer).
std::vector<std::span<float>> parameter_views(LayerStack& stack);
std::vector<std::span<const float>> parameter_views(const LayerStack& stack);

/// 64-bit FNV-1a over the raw parameter bytes.
std::uint64_t parameter_hash(const LayerStack& stack);

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;
  /// false: weight decay enters the gradient as an L2 term before the moments.
  bool decoupled = true;
};

struct OptimizerState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
};

OptimizerState make_optimizer(const LayerStack& stack, const AdamConfig& config);

/// Adaptive-moment update. Decoupled weight decay:
///   θ ← θ − lr·(m̂/(√v̂ + ε) + λ·θ)
/// Coupled: g ← g + λ·θ before the moment updates, no separate decay term.
void adam_step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
               OptimizerState& state);

}  // namespace gnnvault
