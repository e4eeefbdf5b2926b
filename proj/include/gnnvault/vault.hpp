#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnnvault/graph.hpp"
#include "gnnvault/models.hpp"

namespace gnnvault {

constexpr std::size_t kMiB = 1024 * 1024;
constexpr std::size_t kDefaultEpcBudgetBytes = 96 * kMiB;
/// Bytes per dense adjacency entry used by the infeasibility report.
constexpr std::size_t kDenseEntryBytes = 24;

enum class Direction { kUntrustedToVault, kVaultToUntrusted };

enum class TransferKind {
  kBackboneEmbedding,
  kRectifierActivation,  // only ever produced by the test leak hook
  kRealEdges,
};

std::string_view to_string(Direction d);
std::string_view to_string(TransferKind k);

struct Transfer {
  std::string tag;  // e.g. "H2"
  std::size_t layer = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t bytes = 0;
  Direction direction = Direction::kUntrustedToVault;
  TransferKind kind = TransferKind::kBackboneEmbedding;
  std::uint64_t content_hash = 0;
};

/// Everything that crossed the world boundary, in order.
struct ChannelRecord {
  std::vector<Transfer> transfers;

  std::size_t total_bytes() const;
};

/// What the untrusted world can observe after a run: its own backbone
/// activations, the channel, and the released labels.
struct UntrustedTape {
  std::vector<Transfer> backbone_outputs;  // every backbone layer computed outside
  ChannelRecord channel;
  std::vector<std::uint16_t> released_labels;
  /// Float payloads that reached the untrusted side from the vault. Empty
  /// unless the test hook leaks on purpose.
  std::vector<DenseMatrix> vault_payloads;
};

enum class MemoryCategory : std::size_t {
  kInputFeatures = 0,
  kAdjacencyCoo = 1,
  kParameters = 2,
  kActivations = 3,
};
constexpr std::size_t kMemoryCategoryCount = 4;
std::string_view to_string(MemoryCategory c);

/// Byte accounting for the vault. Allocations beyond the budget throw
/// kBudgetExceeded; a budget of 0 disables the check.
class MemoryLedger {
 public:
  explicit MemoryLedger(std::size_t budget_bytes = kDefaultEpcBudgetBytes) : budget_(budget_bytes) {}

  void allocate(MemoryCategory c, std::size_t bytes);
  void release(MemoryCategory c, std::size_t bytes);

  std::size_t current() const noexcept { return current_; }
  std::size_t peak() const noexcept { return peak_; }
  std::size_t budget() const noexcept { return budget_; }
  std::size_t current(MemoryCategory c) const { return by_category_[static_cast<std::size_t>(c)]; }
  /// Category breakdown at the moment of the overall peak.
  std::size_t at_peak(MemoryCategory c) const { return at_peak_[static_cast<std::size_t>(c)]; }

 private:
  std::size_t budget_;
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
  std::array<std::size_t, kMemoryCategoryCount> by_category_{};
  std::array<std::size_t, kMemoryCategoryCount> at_peak_{};
};

struct TimingBreakdown {
  double backbone_seconds = 0.0;
  double transfer_seconds = 0.0;  // modeled: calls * per_call + bytes * per_byte
  double vault_seconds = 0.0;
  std::size_t transfer_bytes = 0;
  std::size_t transfer_calls = 0;
};

struct VaultOptions {
  std::size_t epc_budget_bytes = kDefaultEpcBudgetBytes;
  double per_call_seconds = 1e-5;
  double per_byte_seconds = 1e-9;
  /// Test-only negative control: the vault sends its final activations back
  /// over the channel.
  bool test_leak_logits = false;
};

struct PartitionedRun {
  std::vector<std::uint16_t> labels;  // one per query node
  UntrustedTape tape;
  MemoryLedger memory;
  TimingBreakdown timing;
};

/// Whole-graph inference split into the two worlds. The untrusted side runs the
/// backbone on the substitute graph; the vault receives the embeddings its
/// topology needs, runs the rectifier on the real COO adjacency and releases
/// argmax labels for `query_nodes` (all nodes when empty and `all_nodes`).
PartitionedRun run_partitioned(const PartitionedModel& model, const DenseMatrix& features,
                               std::span<const std::uint32_t> query_nodes,
                               const VaultOptions& opts = {});
PartitionedRun run_partitioned_all(const PartitionedModel& model, const DenseMatrix& features,
                                   const VaultOptions& opts = {});

/// Shape-only replay of the vault schedule: the same allocation sequence as a
/// real run, without computing anything.
MemoryLedger plan_vault_memory(const ModelSpec& spec, Topology topology, std::size_t n_nodes,
                               std::size_t adjacency_nnz, std::size_t budget_bytes = 0);

/// True iff the channel only carries backbone embeddings into the vault, each
/// matching a tensor the untrusted world computed itself, and no vault payload
/// reached the untrusted side.
bool audit_no_leak(const UntrustedTape& tape);

struct InfeasibilityReport {
  std::size_t feature_bytes = 0;
  std::size_t dense_adjacency_bytes = 0;
  std::size_t activation_bytes = 0;
  std::size_t parameter_bytes = 0;
  std::size_t total_bytes = 0;
  std::size_t budget_bytes = kDefaultEpcBudgetBytes;
  bool exceeds_budget = false;
};

/// Bytes needed to host the whole unprotected model and graph in the vault:
/// features, dense adjacency, every layer activation and all parameters.
InfeasibilityReport infeasibility_report(std::size_t n_nodes, const ModelSpec& spec,
                                         std::size_t budget_bytes = kDefaultEpcBudgetBytes);
InfeasibilityReport infeasibility_report(const Graph& graph, const ModelSpec& spec,
                                         std::size_t budget_bytes = kDefaultEpcBudgetBytes);

/// FNV-1a over a matrix's shape and bytes.
std::uint64_t tensor_hash(const DenseMatrix& m);

}  // namespace gnnvault
