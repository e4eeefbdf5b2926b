#include "gnnvault/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace gnnvault {

namespace {

std::string shape(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kDimensionMismatch, what);
}

}  // namespace

template <typename T>
BasicMatrix<T> spmm(const NormalizedAdjacency& adj, const BasicMatrix<T>& h) {
  require(adj.n == h.rows(), "spmm: adjacency order " + std::to_string(adj.n) + " vs h " +
                                 shape(h.rows(), h.cols()));
  BasicMatrix<T> out(h.rows(), h.cols());
  const std::size_t d = h.cols();
  for (std::size_t t = 0; t < adj.nnz(); ++t) {
    const T v = static_cast<T>(adj.values[t]);
    const T* src = h.row(adj.cols[t]).data();
    T* dst = out.row(adj.rows[t]).data();
    for (std::size_t j = 0; j < d; ++j) dst[j] += v * src[j];
  }
  return out;
}

template <typename T>
BasicMatrix<T> spmm_transposed(const NormalizedAdjacency& adj, const BasicMatrix<T>& h) {
  require(adj.n == h.rows(), "spmm_transposed: adjacency order mismatch");
  BasicMatrix<T> out(h.rows(), h.cols());
  const std::size_t d = h.cols();
  for (std::size_t t = 0; t < adj.nnz(); ++t) {
    const T v = static_cast<T>(adj.values[t]);
    const T* src = h.row(adj.rows[t]).data();
    T* dst = out.row(adj.cols[t]).data();
    for (std::size_t j = 0; j < d; ++j) dst[j] += v * src[j];
  }
  return out;
}

template <typename T>
void accumulate_product(const BasicMatrix<T>& a, const BasicMatrix<T>& w, std::size_t row_offset,
                        BasicMatrix<T>& out) {
  require(a.rows() == out.rows() && row_offset + a.cols() <= w.rows() && w.cols() == out.cols(),
          "accumulate_product: " + shape(a.rows(), a.cols()) + " * " + shape(w.rows(), w.cols()) +
              " -> " + shape(out.rows(), out.cols()));
  const std::size_t d = w.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ai = a.row(i).data();
    T* oi = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T x = ai[k];
      if (x == T{0}) continue;
      const T* wk = w.row(row_offset + k).data();
      for (std::size_t j = 0; j < d; ++j) oi[j] += x * wk[j];
    }
  }
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.cols() == b.rows(), "matmul: " + shape(a.rows(), a.cols()) + " * " + shape(b.rows(), b.cols()));
  BasicMatrix<T> out(a.rows(), b.cols());
  accumulate_product(a, b, 0, out);
  return out;
}

namespace {

/// out[row_offset + k, :] += Σ_i a(i,k) · b(i,:)
template <typename T>
void accumulate_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b, std::size_t row_offset,
                   BasicMatrix<T>& out) {
  const std::size_t d = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ai = a.row(i).data();
    const T* bi = b.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T x = ai[k];
      if (x == T{0}) continue;
      T* ok = out.row(row_offset + k).data();
      for (std::size_t j = 0; j < d; ++j) ok[j] += x * bi[j];
    }
  }
}

/// out(i, k) = Σ_j a(i,j) · w(row_offset + k, j) for k < out.cols()
template <typename T>
void product_nt_rows(const BasicMatrix<T>& a, const BasicMatrix<T>& w, std::size_t row_offset,
                     BasicMatrix<T>& out) {
  const std::size_t d = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ai = a.row(i).data();
    T* oi = out.row(i).data();
    for (std::size_t k = 0; k < out.cols(); ++k) {
      const T* wk = w.row(row_offset + k).data();
      T s{0};
      for (std::size_t j = 0; j < d; ++j) s += ai[j] * wk[j];
      oi[k] = s;
    }
  }
}

}  // namespace

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.rows() == b.rows(), "matmul_tn: row mismatch");
  BasicMatrix<T> out(a.cols(), b.cols());
  accumulate_tn(a, b, 0, out);
  return out;
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.cols() == b.cols(), "matmul_nt: column mismatch");
  BasicMatrix<T> out(a.rows(), b.rows());
  product_nt_rows(a, b, 0, out);
  return out;
}

template <typename T>
BasicMatrix<T> project_blocks(std::span<const BasicMatrix<T>* const> blocks,
                              const BasicLayerParams<T>& params) {
  require(!blocks.empty(), "layer has no input blocks");
  const std::size_t rows = blocks.front()->rows();
  std::size_t width = 0;
  for (const auto* b : blocks) {
    require(b->rows() == rows, "input blocks differ in row count");
    width += b->cols();
  }
  require(width == params.d_in(), "layer input width " + std::to_string(width) +
                                      " != d_in " + std::to_string(params.d_in()));
  BasicMatrix<T> z(rows, params.d_out());
  std::size_t offset = 0;
  for (const auto* b : blocks) {
    accumulate_product(*b, params.weight, offset, z);
    offset += b->cols();
  }
  return z;
}

template <typename T>
void finish_layer(BasicMatrix<T>& p, const BasicLayerParams<T>& params) {
  require(p.cols() == params.bias.size(), "bias width mismatch");
  for (std::size_t i = 0; i < p.rows(); ++i) {
    T* pi = p.row(i).data();
    for (std::size_t j = 0; j < p.cols(); ++j) {
      T v = pi[j] + params.bias[j];
      if (params.activation == Activation::kRelu && !(v > T{0})) v = T{0};
      pi[j] = v;
    }
  }
}

template <typename T>
LayerForward<T> layer_forward(const NormalizedAdjacency* adj,
                              std::span<const BasicMatrix<T>* const> blocks,
                              const BasicLayerParams<T>& params, DropoutOptions dropout) {
  LayerForward<T> f;
  auto& cache = f.cache;
  if (dropout.rate > 0.0) {
    if (dropout.rate >= 1.0 || dropout.rng == nullptr) {
      fail(ErrorCode::kInvalidArgument, "dropout rate must be < 1 and needs an rng");
    }
    cache.dropout_scale = static_cast<T>(1.0 / (1.0 - dropout.rate));
    std::bernoulli_distribution keep(1.0 - dropout.rate);
    cache.dropped.reserve(blocks.size());
    for (const auto* b : blocks) {
      BasicMatrix<T> d = *b;
      std::vector<std::uint8_t> k(d.size());
      auto vals = d.values();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        k[i] = keep(*dropout.rng) ? 1 : 0;
        vals[i] = k[i] ? vals[i] * cache.dropout_scale : T{0};
      }
      cache.dropped.push_back(std::move(d));
      cache.keep.push_back(std::move(k));
    }
    for (const auto& d : cache.dropped) cache.inputs.push_back(&d);
  } else {
    cache.inputs.assign(blocks.begin(), blocks.end());
  }
  BasicMatrix<T> z = project_blocks<T>(cache.inputs, params);
  BasicMatrix<T> p = adj ? spmm(*adj, z) : std::move(z);
  finish_layer(p, params);
  check_finite(p, "layer output");
  cache.output = p;
  f.output = std::move(p);
  return f;
}

template <typename T>
LayerGrads<T> layer_backward(const NormalizedAdjacency* adj, const LayerCache<T>& cache,
                             const BasicLayerParams<T>& params, const BasicMatrix<T>& grad_out,
                             std::span<const bool> input_grad) {
  require(grad_out.rows() == cache.output.rows() && grad_out.cols() == cache.output.cols(),
          "layer_backward: grad_out " + shape(grad_out.rows(), grad_out.cols()) + " vs output " +
              shape(cache.output.rows(), cache.output.cols()));
  BasicMatrix<T> g = grad_out;
  if (params.activation == Activation::kRelu) {
    auto gv = g.values();
    auto ov = cache.output.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      if (!(ov[i] > T{0})) gv[i] = T{0};
    }
  }
  LayerGrads<T> grads;
  grads.bias.assign(params.d_out(), T{0});
  for (std::size_t i = 0; i < g.rows(); ++i) {
    auto gi = g.row(i);
    for (std::size_t j = 0; j < gi.size(); ++j) grads.bias[j] += gi[j];
  }
  BasicMatrix<T> gz = adj ? spmm_transposed(*adj, g) : std::move(g);
  grads.weight = BasicMatrix<T>(params.d_in(), params.d_out());
  grads.inputs.resize(cache.inputs.size());
  std::size_t offset = 0;
  for (std::size_t b = 0; b < cache.inputs.size(); ++b) {
    const auto& in = *cache.inputs[b];
    accumulate_tn(in, gz, offset, grads.weight);
    if (b < input_grad.size() && input_grad[b]) {
      BasicMatrix<T> gi(in.rows(), in.cols());
      product_nt_rows(gz, params.weight, offset, gi);
      if (!cache.keep.empty()) {
        auto v = gi.values();
        const auto& k = cache.keep[b];
        for (std::size_t t = 0; t < v.size(); ++t) v[t] = k[t] ? v[t] * cache.dropout_scale : T{0};
      }
      grads.inputs[b] = std::move(gi);
    }
    offset += in.cols();
  }
  return grads;
}

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& logits) {
  BasicMatrix<T> out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (T v : row) sum += std::exp(double(v) - mx);
    for (std::size_t j = 0; j < row.size(); ++j) {
      out(i, j) = static_cast<T>(std::exp(double(row[j]) - mx) / sum);
    }
  }
  return out;
}

template <typename T>
LossResult<T> masked_softmax_cross_entropy(const BasicMatrix<T>& logits,
                                           std::span<const std::uint16_t> labels,
                                           const std::vector<bool>& mask) {
  require(labels.size() == logits.rows() && mask.size() == logits.rows(),
          "loss: labels/mask length != logits rows");
  const std::size_t selected = count(mask);
  if (selected == 0) fail(ErrorCode::kEmptyMask, "cross-entropy mask selects no nodes");
  LossResult<T> r;
  r.grad = BasicMatrix<T>(logits.rows(), logits.cols());
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(selected);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    auto row = logits.row(i);
    if (labels[i] >= row.size()) fail(ErrorCode::kIndexOutOfRange, "label >= n_classes in loss");
    double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (T v : row) sum += std::exp(double(v) - mx);
    const double lse = mx + std::log(sum);
    total += lse - double(row[labels[i]]);
    for (std::size_t j = 0; j < row.size(); ++j) {
      double p = std::exp(double(row[j]) - lse);
      r.grad(i, j) = static_cast<T>((p - (j == labels[i] ? 1.0 : 0.0)) * inv);
    }
  }
  r.loss = total * inv;
  if (!std::isfinite(r.loss)) fail(ErrorCode::kNonFinite, "non-finite loss");
  return r;
}

std::vector<std::uint16_t> argmax_rows(const DenseMatrix& logits) {
  std::vector<std::uint16_t> out(logits.rows(), 0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = static_cast<std::uint16_t>(best);
  }
  return out;
}

std::vector<std::size_t> LayerStack::widths() const {
  std::vector<std::size_t> w;
  for (const auto& l : layers) w.push_back(l.d_out());
  return w;
}

std::size_t count_parameters(const LayerStack& stack) {
  std::size_t total = 0;
  for (const auto& l : stack.layers) total += l.d_in() * l.d_out() + l.d_out();
  return total;
}

std::size_t count_parameters(std::span<const std::size_t> input_dims,
                             std::span<const std::size_t> output_dims) {
  require(input_dims.size() == output_dims.size(), "count_parameters: dims length mismatch");
  std::size_t total = 0;
  for (std::size_t i = 0; i < input_dims.size(); ++i) {
    total += input_dims[i] * output_dims[i] + output_dims[i];
  }
  return total;
}

LayerStack init_stack(std::span<const std::size_t> input_dims,
                      std::span<const std::size_t> output_dims, std::uint64_t seed) {
  require(input_dims.size() == output_dims.size(), "init_stack: dims length mismatch");
  std::mt19937_64 rng(seed);
  LayerStack stack;
  for (std::size_t l = 0; l < input_dims.size(); ++l) {
    LayerParams p;
    p.weight = DenseMatrix(input_dims[l], output_dims[l]);
    p.bias.assign(output_dims[l], 0.0f);
    p.activation = l + 1 < input_dims.size() ? Activation::kRelu : Activation::kNone;
    const double limit = std::sqrt(6.0 / static_cast<double>(input_dims[l] + output_dims[l]));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (float& w : p.weight.values()) w = static_cast<float>(u(rng));
    stack.layers.push_back(std::move(p));
  }
  return stack;
}

std::vector<std::span<float>> parameter_views(LayerStack& stack) {
  std::vector<std::span<float>> v;
  for (auto& l : stack.layers) {
    v.push_back(l.weight.values());
    v.push_back(l.bias);
  }
  return v;
}

std::vector<std::span<const float>> parameter_views(const LayerStack& stack) {
  std::vector<std::span<const float>> v;
  for (const auto& l : stack.layers) {
    v.push_back(l.weight.values());
    v.push_back(l.bias);
  }
  return v;
}

std::uint64_t parameter_hash(const LayerStack& stack) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto view : parameter_views(stack)) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(view.data());
    for (std::size_t i = 0; i < view.size_bytes(); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

OptimizerState make_optimizer(const LayerStack& stack, const AdamConfig& config) {
  OptimizerState s;
  s.config = config;
  for (auto view : parameter_views(stack)) {
    s.first_moment.emplace_back(view.size(), 0.0f);
    s.second_moment.emplace_back(view.size(), 0.0f);
  }
  return s;
}

void adam_step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
               OptimizerState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size(),
          "adam_step: tensor count mismatch");
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    require(params[p].size() == grads[p].size() && params[p].size() == state.first_moment[p].size(),
            "adam_step: tensor shape mismatch");
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double theta = params[p][i];
      const double g = c.decoupled ? double(grads[p][i]) : double(grads[p][i]) + c.weight_decay * theta;
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / correct1;
      const double vhat = vi / correct2;
      const double decay = c.decoupled ? c.weight_decay * theta : 0.0;
      params[p][i] = static_cast<float>(theta - c.learning_rate * (mhat / (std::sqrt(vhat) + c.epsilon) + decay));
    }
  }
}

#define GNNVAULT_INSTANTIATE(T)                                                                  \
  template BasicMatrix<T> spmm(const NormalizedAdjacency&, const BasicMatrix<T>&);              \
  template BasicMatrix<T> spmm_transposed(const NormalizedAdjacency&, const BasicMatrix<T>&);   \
  template void accumulate_product(const BasicMatrix<T>&, const BasicMatrix<T>&, std::size_t,    \
                                   BasicMatrix<T>&);                                             \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);                 \
  template BasicMatrix<T> matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&);              \
  template BasicMatrix<T> matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&);              \
  template BasicMatrix<T> project_blocks(std::span<const BasicMatrix<T>* const>,                \
                                         const BasicLayerParams<T>&);                            \
  template void finish_layer(BasicMatrix<T>&, const BasicLayerParams<T>&);                      \
  template LayerForward<T> layer_forward(const NormalizedAdjacency*,                            \
                                         std::span<const BasicMatrix<T>* const>,                \
                                         const BasicLayerParams<T>&, DropoutOptions);            \
  template LayerGrads<T> layer_backward(const NormalizedAdjacency*, const LayerCache<T>&,       \
                                        const BasicLayerParams<T>&, const BasicMatrix<T>&,      \
                                        std::span<const bool>);                                  \
  template BasicMatrix<T> softmax_rows(const BasicMatrix<T>&);                                  \
  template LossResult<T> masked_softmax_cross_entropy(const BasicMatrix<T>&,                    \
                                                      std::span<const std::uint16_t>,           \
                                                      const std::vector<bool>&);

GNNVAULT_INSTANTIATE(float)
GNNVAULT_INSTANTIATE(double)

#undef GNNVAULT_INSTANTIATE

}  // namespace gnnvault
