#include "gnnvault/vault.hpp"

#include <chrono>
#include <cstring>
#include <string>

namespace gnnvault {

std::string_view to_string(Direction d) {
  return d == Direction::kUntrustedToVault ? "untrusted_to_vault" : "vault_to_untrusted";
}

std::string_view to_string(TransferKind k) {
  switch (k) {
    case TransferKind::kBackboneEmbedding: return "backbone_embedding";
    case TransferKind::kRectifierActivation: return "rectifier_activation";
    case TransferKind::kRealEdges: return "real_edges";
  }
  return "?";
}

std::string_view to_string(MemoryCategory c) {
  switch (c) {
    case MemoryCategory::kInputFeatures: return "input_features";
    case MemoryCategory::kAdjacencyCoo: return "adjacency_coo";
    case MemoryCategory::kParameters: return "parameters";
    case MemoryCategory::kActivations: return "activations";
  }
  return "?";
}

std::size_t ChannelRecord::total_bytes() const {
  std::size_t total = 0;
  for (const auto& t : transfers) total += t.bytes;
  return total;
}

void MemoryLedger::allocate(MemoryCategory c, std::size_t bytes) {
  if (budget_ > 0 && current_ + bytes > budget_) {
    fail(ErrorCode::kBudgetExceeded,
         "vault allocation of " + std::to_string(bytes) + " bytes (" + std::string(to_string(c)) +
             ") would raise usage to " + std::to_string(current_ + bytes) + " bytes, budget " +
             std::to_string(budget_));
  }
  current_ += bytes;
  by_category_[static_cast<std::size_t>(c)] += bytes;
  if (current_ > peak_) {
    peak_ = current_;
    at_peak_ = by_category_;
  }
}

void MemoryLedger::release(MemoryCategory c, std::size_t bytes) {
  auto& slot = by_category_[static_cast<std::size_t>(c)];
  if (bytes > slot) fail(ErrorCode::kInvalidArgument, "ledger release exceeds allocation");
  slot -= bytes;
  current_ -= bytes;
}

std::uint64_t tensor_hash(const DenseMatrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t shape[2] = {m.rows(), m.cols()};
  mix(shape, sizeof shape);
  mix(m.data(), m.bytes());
  return h;
}

namespace {

std::size_t matrix_bytes(std::size_t rows, std::size_t cols) { return rows * cols * sizeof(float); }

/// Untrusted side of the channel: holds backbone outputs and hands out copies
/// on request, recording every transfer.
class Channel {
 public:
  Channel(const std::vector<DenseMatrix>& embeddings, UntrustedTape& tape)
      : embeddings_(embeddings), tape_(tape) {}

  DenseMatrix send(std::size_t index, std::size_t layer) {
    const DenseMatrix& h = embeddings_.at(index);
    Transfer t;
    t.tag = "H" + std::to_string(index + 1);
    t.layer = layer;
    t.rows = h.rows();
    t.cols = h.cols();
    t.bytes = matrix_bytes(h.rows(), h.cols());
    t.direction = Direction::kUntrustedToVault;
    t.kind = TransferKind::kBackboneEmbedding;
    t.content_hash = tensor_hash(h);
    tape_.channel.transfers.push_back(std::move(t));
    return h;
  }

 private:
  const std::vector<DenseMatrix>& embeddings_;
  UntrustedTape& tape_;
};

/// Embedding indices consumed by rectifier layer k, in accumulation order
/// after the previous rectifier output.
std::vector<std::size_t> embeddings_for_layer(const ModelSpec& spec, Topology topology, std::size_t k) {
  if (k == 0) {
    auto all = required_embeddings(spec, topology);
    if (topology == Topology::kParallel) return {all.front()};
    return all;
  }
  if (topology == Topology::kParallel) return {k};
  return {};
}

/// Vault schedule. With `compute == false` only the ledger is driven, using
/// shapes from the ModelSpec; otherwise the rectifier runs for real. The
/// control flow and the allocation sequence are the same in both modes.
struct VaultSession {
  const ModelSpec& spec;
  Topology topology;
  std::size_t n;
  std::size_t nnz;
  MemoryLedger& ledger;
  const Rectifier* rectifier = nullptr;        // compute mode only
  const NormalizedAdjacency* adjacency = nullptr;
  Channel* channel = nullptr;

  DenseMatrix run() {
    const bool compute = rectifier != nullptr;
    const std::size_t adj_bytes = nnz * (2 * sizeof(std::uint32_t) + sizeof(float)) + n * sizeof(float);
    ledger.allocate(MemoryCategory::kAdjacencyCoo, adj_bytes);
    const auto in_dims = rectifier_input_dims(spec, topology);
    const auto& out_dims = spec.rectifier_widths;
    std::size_t param_bytes = 0;
    for (std::size_t k = 0; k < out_dims.size(); ++k) {
      param_bytes += (in_dims[k] * out_dims[k] + out_dims[k]) * sizeof(float);
    }
    ledger.allocate(MemoryCategory::kParameters, param_bytes);

    DenseMatrix prev;
    std::size_t prev_cols = 0;
    for (std::size_t k = 0; k < out_dims.size(); ++k) {
      const std::size_t d_out = out_dims[k];
      const LayerParams* params = compute ? &rectifier->gcn.layers[k] : nullptr;
      ledger.allocate(MemoryCategory::kActivations, matrix_bytes(n, d_out));
      DenseMatrix z = compute ? DenseMatrix(n, d_out) : DenseMatrix();
      std::size_t offset = 0;
      if (k > 0) {
        if (compute) accumulate_product(prev, params->weight, offset, z);
        offset += prev_cols;
      }
      for (std::size_t idx : embeddings_for_layer(spec, topology, k)) {
        const std::size_t w = spec.backbone_widths[idx];
        ledger.allocate(MemoryCategory::kInputFeatures, matrix_bytes(n, w));
        if (compute) {
          DenseMatrix h = channel->send(idx, k);
          accumulate_product(h, params->weight, offset, z);
        }
        ledger.release(MemoryCategory::kInputFeatures, matrix_bytes(n, w));
        offset += w;
      }
      if (offset != in_dims[k]) fail(ErrorCode::kDimensionMismatch, "vault schedule width mismatch");
      if (k > 0) {
        ledger.release(MemoryCategory::kActivations, matrix_bytes(n, prev_cols));
        prev = DenseMatrix();
      }
      ledger.allocate(MemoryCategory::kActivations, matrix_bytes(n, d_out));
      DenseMatrix p;
      if (compute) {
        p = spmm(*adjacency, z);
        z = DenseMatrix();
        finish_layer(p, *params);
        check_finite(p, "vault layer output");
      }
      ledger.release(MemoryCategory::kActivations, matrix_bytes(n, d_out));  // z
      prev = std::move(p);
      prev_cols = d_out;
    }
    return prev;
  }
};

}  // namespace

PartitionedRun run_partitioned(const PartitionedModel& model, const DenseMatrix& features,
                               std::span<const std::uint32_t> query_nodes, const VaultOptions& opts) {
  using clock = std::chrono::steady_clock;
  PartitionedRun run{{}, {}, MemoryLedger(opts.epc_budget_bytes), {}};
  const std::size_t n = features.rows();
  if (model.real_adjacency.n != n) {
    fail(ErrorCode::kDimensionMismatch, "feature rows do not match the vault adjacency");
  }
  for (auto q : query_nodes) {
    if (q >= n) fail(ErrorCode::kIndexOutOfRange, "query node " + std::to_string(q) + " out of range");
  }

  // Untrusted world: features and substitute graph only.
  auto t0 = clock::now();
  const std::vector<DenseMatrix> embeddings = backbone_forward(model.backbone, features);
  auto t1 = clock::now();
  for (std::size_t l = 0; l < embeddings.size(); ++l) {
    Transfer t;
    t.tag = "H" + std::to_string(l + 1);
    t.layer = l;
    t.rows = embeddings[l].rows();
    t.cols = embeddings[l].cols();
    t.bytes = matrix_bytes(t.rows, t.cols);
    t.content_hash = tensor_hash(embeddings[l]);
    run.tape.backbone_outputs.push_back(std::move(t));
  }

  // Vault world.
  Channel channel(embeddings, run.tape);
  VaultSession session{model.spec, model.rectifier.topology, n, model.real_adjacency.nnz(), run.memory,
                       &model.rectifier, &model.real_adjacency, &channel};
  DenseMatrix logits = session.run();
  run.memory.allocate(MemoryCategory::kActivations, n * sizeof(std::uint16_t));
  const std::vector<std::uint16_t> all_labels = argmax_rows(logits);
  if (opts.test_leak_logits) {
    Transfer t;
    t.tag = "R_out";
    t.layer = model.rectifier.gcn.layers.size() - 1;
    t.rows = logits.rows();
    t.cols = logits.cols();
    t.bytes = matrix_bytes(t.rows, t.cols);
    t.direction = Direction::kVaultToUntrusted;
    t.kind = TransferKind::kRectifierActivation;
    t.content_hash = tensor_hash(logits);
    run.tape.channel.transfers.push_back(std::move(t));
    run.tape.vault_payloads.push_back(logits);
  }
  run.memory.release(MemoryCategory::kActivations, matrix_bytes(n, logits.cols()));
  run.labels.reserve(query_nodes.size());
  for (auto q : query_nodes) run.labels.push_back(all_labels[q]);
  run.memory.release(MemoryCategory::kActivations, n * sizeof(std::uint16_t));
  run.memory.release(MemoryCategory::kParameters, run.memory.current(MemoryCategory::kParameters));
  run.memory.release(MemoryCategory::kAdjacencyCoo, run.memory.current(MemoryCategory::kAdjacencyCoo));
  auto t2 = clock::now();
  run.tape.released_labels = run.labels;

  run.timing.backbone_seconds = std::chrono::duration<double>(t1 - t0).count();
  run.timing.vault_seconds = std::chrono::duration<double>(t2 - t1).count();
  for (const auto& t : run.tape.channel.transfers) {
    if (t.direction != Direction::kUntrustedToVault) continue;
    run.timing.transfer_bytes += t.bytes;
    ++run.timing.transfer_calls;
  }
  run.timing.transfer_seconds = static_cast<double>(run.timing.transfer_calls) * opts.per_call_seconds +
                                static_cast<double>(run.timing.transfer_bytes) * opts.per_byte_seconds;
  return run;
}

PartitionedRun run_partitioned_all(const PartitionedModel& model, const DenseMatrix& features,
                                   const VaultOptions& opts) {
  std::vector<std::uint32_t> all(features.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
  return run_partitioned(model, features, all, opts);
}

MemoryLedger plan_vault_memory(const ModelSpec& spec, Topology topology, std::size_t n_nodes,
                               std::size_t adjacency_nnz, std::size_t budget_bytes) {
  MemoryLedger ledger(budget_bytes);
  VaultSession session{spec, topology, n_nodes, adjacency_nnz, ledger};
  session.run();
  const std::size_t c = spec.rectifier_widths.back();
  ledger.allocate(MemoryCategory::kActivations, n_nodes * sizeof(std::uint16_t));
  ledger.release(MemoryCategory::kActivations, matrix_bytes(n_nodes, c));
  ledger.release(MemoryCategory::kActivations, n_nodes * sizeof(std::uint16_t));
  ledger.release(MemoryCategory::kParameters, ledger.current(MemoryCategory::kParameters));
  ledger.release(MemoryCategory::kAdjacencyCoo, ledger.current(MemoryCategory::kAdjacencyCoo));
  return ledger;
}

bool audit_no_leak(const UntrustedTape& tape) {
  if (!tape.vault_payloads.empty()) return false;
  for (const auto& t : tape.channel.transfers) {
    if (t.direction != Direction::kUntrustedToVault) return false;
    if (t.kind != TransferKind::kBackboneEmbedding) return false;
    if (t.bytes != matrix_bytes(t.rows, t.cols)) return false;
    bool known = false;
    for (const auto& b : tape.backbone_outputs) {
      if (b.tag == t.tag && b.content_hash == t.content_hash && b.rows == t.rows && b.cols == t.cols) {
        known = true;
        break;
      }
    }
    if (!known) return false;
  }
  return true;
}

InfeasibilityReport infeasibility_report(std::size_t n_nodes, const ModelSpec& spec,
                                         std::size_t budget_bytes) {
  MemoryLedger ledger(0);
  ledger.allocate(MemoryCategory::kInputFeatures, matrix_bytes(n_nodes, spec.feature_dim));
  ledger.allocate(MemoryCategory::kAdjacencyCoo, n_nodes * n_nodes * kDenseEntryBytes);
  ledger.allocate(MemoryCategory::kParameters, backbone_parameter_count(spec) * sizeof(float));
  for (std::size_t w : spec.backbone_widths) {
    ledger.allocate(MemoryCategory::kActivations, matrix_bytes(n_nodes, w));
  }
  InfeasibilityReport r;
  r.feature_bytes = ledger.current(MemoryCategory::kInputFeatures);
  r.dense_adjacency_bytes = ledger.current(MemoryCategory::kAdjacencyCoo);
  r.parameter_bytes = ledger.current(MemoryCategory::kParameters);
  r.activation_bytes = ledger.current(MemoryCategory::kActivations);
  r.total_bytes = ledger.current();
  r.budget_bytes = budget_bytes;
  r.exceeds_budget = r.total_bytes > budget_bytes;
  return r;
}

InfeasibilityReport infeasibility_report(const Graph& graph, const ModelSpec& spec,
                                         std::size_t budget_bytes) {
  if (spec.feature_dim != graph.n_features()) {
    fail(ErrorCode::kDimensionMismatch, "model feature dim does not match the graph");
  }
  return infeasibility_report(graph.n_nodes(), spec, budget_bytes);
}

}  // namespace gnnvault
