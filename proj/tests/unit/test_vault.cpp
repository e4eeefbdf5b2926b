#include <cmath>
#include <set>

#include "gnnvault/training.hpp"
#include "gnnvault/vault.hpp"
#include "helpers.hpp"

using namespace gnnvault;

namespace {

const Topology kTopologies[] = {Topology::kParallel, Topology::kCascaded, Topology::kSeries};

struct Deployed {
  Graph graph;
  PartitionedModel model;
};

Deployed deploy(Topology t, ModelFamily family = ModelFamily::kM1) {
  Deployed d;
  d.graph = sbm_generate(testing::small_sbm());
  auto spec = make_model_spec(family, d.graph.n_features(), d.graph.n_classes());
  TrainConfig c;
  c.epochs = 20;
  c.seed = 2;
  d.model.spec = spec;
  d.model.backbone = train_backbone(d.graph, {SubstituteKind::kKnn, 2}, spec, c);
  d.model.real_adjacency = normalize(d.graph);
  d.model.rectifier = train_rectifier(d.model.backbone, d.graph, t, spec, c);
  return d;
}

std::vector<std::uint16_t> monolithic_labels(const Deployed& d) {
  auto emb = backbone_forward(d.model.backbone, d.graph.features());
  return argmax_rows(rectifier_forward(d.model, emb));
}

}  // namespace

TEST_CASE("partitioned inference equals the monolithic forward bit for bit") {
  for (auto family : {ModelFamily::kM1, ModelFamily::kM2, ModelFamily::kM3}) {
    for (auto t : kTopologies) {
      CAPTURE(to_string(family));
      CAPTURE(to_string(t));
      Deployed d = deploy(t, family);
      auto run = run_partitioned_all(d.model, d.graph.features());
      CHECK(run.labels == monolithic_labels(d));

      VaultOptions leak;
      leak.test_leak_logits = true;
      auto leaked = run_partitioned_all(d.model, d.graph.features(), leak);
      REQUIRE(leaked.tape.vault_payloads.size() == 1);
      auto emb = backbone_forward(d.model.backbone, d.graph.features());
      CHECK(leaked.tape.vault_payloads[0] == rectifier_forward(d.model, emb));
    }
  }
}

TEST_CASE("channel is one-way, label-only and accounted exactly") {
  for (auto t : kTopologies) {
    CAPTURE(to_string(t));
    Deployed d = deploy(t);
    auto run = run_partitioned_all(d.model, d.graph.features());
    CHECK(audit_no_leak(run.tape));
    CHECK(run.tape.vault_payloads.empty());
    auto req = required_embeddings(d.model.spec, t);
    REQUIRE(run.tape.channel.transfers.size() == req.size());
    auto emb = backbone_forward(d.model.backbone, d.graph.features());
    std::size_t bytes = 0;
    for (std::size_t i = 0; i < req.size(); ++i) {
      const Transfer& tr = run.tape.channel.transfers[i];
      CHECK(tr.direction == Direction::kUntrustedToVault);
      CHECK(tr.kind == TransferKind::kBackboneEmbedding);
      CHECK(tr.tag == "H" + std::to_string(req[i] + 1));
      CHECK(tr.rows == d.graph.n_nodes());
      CHECK(tr.cols == emb[req[i]].cols());
      CHECK(tr.bytes == tr.rows * tr.cols * 4);
      CHECK(tr.content_hash == tensor_hash(emb[req[i]]));
      bytes += tr.rows * tr.cols * 4;
    }
    CHECK(run.tape.channel.total_bytes() == bytes);
    CHECK(run.timing.transfer_bytes == bytes);
    CHECK(run.timing.transfer_calls == req.size());

    // The untrusted tape holds only its own backbone outputs and labels.
    CHECK(run.tape.backbone_outputs.size() == d.model.spec.backbone_widths.size());
    CHECK(run.tape.released_labels == run.labels);
  }
}

TEST_CASE("series reads exactly the penultimate embedding") {
  Deployed d = deploy(Topology::kSeries);
  auto run = run_partitioned_all(d.model, d.graph.features());
  REQUIRE(run.tape.channel.transfers.size() == 1);
  CHECK(run.tape.channel.transfers[0].tag == "H2");
  CHECK(run.tape.channel.transfers[0].cols == 32);
}

TEST_CASE("the leak hook is caught by the audit") {
  Deployed d = deploy(Topology::kParallel);
  VaultOptions o;
  o.test_leak_logits = true;
  auto run = run_partitioned_all(d.model, d.graph.features(), o);
  CHECK_FALSE(audit_no_leak(run.tape));
  bool reverse = false;
  for (const auto& tr : run.tape.channel.transfers) reverse |= tr.direction == Direction::kVaultToUntrusted;
  CHECK(reverse);
}

TEST_CASE("audit rejects tampered tapes") {
  Deployed d = deploy(Topology::kParallel);
  auto base = run_partitioned_all(d.model, d.graph.features()).tape;
  REQUIRE(audit_no_leak(base));
  SUBCASE("edges over the channel") {
    auto t = base;
    t.channel.transfers[0].kind = TransferKind::kRealEdges;
    CHECK_FALSE(audit_no_leak(t));
  }
  SUBCASE("a tensor the untrusted side never computed") {
    auto t = base;
    t.channel.transfers[1].content_hash ^= 1;
    CHECK_FALSE(audit_no_leak(t));
  }
  SUBCASE("wrong byte count") {
    auto t = base;
    t.channel.transfers[0].bytes += 4;
    CHECK_FALSE(audit_no_leak(t));
  }
}

TEST_CASE("query subsets and errors") {
  Deployed d = deploy(Topology::kCascaded);
  auto all = monolithic_labels(d);
  std::vector<std::uint32_t> q = {5, 0, 17};
  auto run = run_partitioned(d.model, d.graph.features(), q);
  REQUIRE(run.labels.size() == 3);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(run.labels[i] == all[q[i]]);

  std::vector<std::uint32_t> bad = {static_cast<std::uint32_t>(d.graph.n_nodes())};
  CHECK_ERROR_CODE(run_partitioned(d.model, d.graph.features(), bad), ErrorCode::kIndexOutOfRange);
  CHECK_ERROR_CODE(run_partitioned_all(d.model, DenseMatrix(3, d.graph.n_features())),
                   ErrorCode::kDimensionMismatch);
}

TEST_CASE("memory ledger") {
  MemoryLedger m(100);
  m.allocate(MemoryCategory::kParameters, 60);
  m.allocate(MemoryCategory::kActivations, 30);
  m.release(MemoryCategory::kActivations, 30);
  m.allocate(MemoryCategory::kActivations, 10);
  CHECK(m.current() == 70);
  CHECK(m.peak() == 90);
  CHECK(m.at_peak(MemoryCategory::kActivations) == 30);
  CHECK_ERROR_CODE(m.allocate(MemoryCategory::kActivations, 31), ErrorCode::kBudgetExceeded);
  CHECK_ERROR_CODE(m.release(MemoryCategory::kInputFeatures, 1), ErrorCode::kInvalidArgument);
  MemoryLedger unlimited(0);
  unlimited.allocate(MemoryCategory::kActivations, std::size_t(1) << 40);
  CHECK(unlimited.peak() == std::size_t(1) << 40);
}

TEST_CASE("dry-run plan matches the real run's ledger") {
  for (auto t : kTopologies) {
    Deployed d = deploy(t);
    auto run = run_partitioned_all(d.model, d.graph.features());
    auto plan = plan_vault_memory(d.model.spec, t, d.graph.n_nodes(), d.model.real_adjacency.nnz());
    CHECK(plan.peak() == run.memory.peak());
    for (std::size_t c = 0; c < kMemoryCategoryCount; ++c) {
      CHECK(plan.at_peak(MemoryCategory(c)) == run.memory.at_peak(MemoryCategory(c)));
    }
    CHECK(run.memory.current() == 0);
    CHECK(run.memory.current(MemoryCategory::kAdjacencyCoo) == 0);
    CHECK(run.memory.at_peak(MemoryCategory::kAdjacencyCoo) == d.model.real_adjacency.nnz() * 12 + d.graph.n_nodes() * 4);
  }
}

TEST_CASE("budget is enforced") {
  Deployed d = deploy(Topology::kParallel);
  VaultOptions o;
  o.epc_budget_bytes = 1024;
  CHECK_ERROR_CODE(run_partitioned_all(d.model, d.graph.features(), o), ErrorCode::kBudgetExceeded);
}

TEST_CASE("vault peak memory at full dataset scale stays under the budget") {
  struct Case {
    ModelFamily family;
    std::size_t n, directed_edges, d, c;
  };
  for (Case k : {Case{ModelFamily::kM1, 2708, 10556, 1433, 7}, Case{ModelFamily::kM2, 19793, 126842, 8710, 70},
                 Case{ModelFamily::kM3, 13752, 491722, 767, 10}}) {
    auto spec = make_model_spec(k.family, k.d, k.c);
    for (auto t : kTopologies) {
      auto plan = plan_vault_memory(spec, t, k.n, k.directed_edges + k.n);
      CHECK(plan.peak() < kDefaultEpcBudgetBytes);
      CHECK(plan.peak() <= static_cast<std::size_t>(41.6 * 1.25 * kMiB));
      MESSAGE(to_string(k.family) << " " << to_string(t) << " peak MiB " << double(plan.peak()) / kMiB);
    }
  }
}

TEST_CASE("full-model-in-vault infeasibility") {
  auto pubmed = make_model_spec(ModelFamily::kM1, 500, 3);
  auto r = infeasibility_report(19717, pubmed);
  CHECK(std::round(double(r.dense_adjacency_bytes) / kMiB * 100.0) / 100.0 == 8898.01);
  CHECK(r.exceeds_budget);

  auto cora = make_model_spec(ModelFamily::kM1, 1433, 7);
  auto c = infeasibility_report(2708, cora);
  CHECK(std::round(double(c.dense_adjacency_bytes) / kMiB * 100.0) / 100.0 == 167.85);
  CHECK(c.feature_bytes == 2708u * 1433u * 4u);
  CHECK(c.total_bytes == c.feature_bytes + c.dense_adjacency_bytes + c.activation_bytes + c.parameter_bytes);
  CHECK(c.total_bytes > kDefaultEpcBudgetBytes);
  CHECK(c.exceeds_budget);

  auto empty = infeasibility_report(0, cora);
  CHECK(empty.total_bytes == empty.parameter_bytes);
  CHECK(empty.parameter_bytes == backbone_parameter_count(cora) * 4);
  CHECK_FALSE(empty.exceeds_budget);
}
