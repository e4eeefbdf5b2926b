#include "gnnvault/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include "gnnvault/container.hpp"
#include "gnnvault/experiment.hpp"

namespace gnnvault {

using nlohmann::json;

int exit_code_for(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (!err) return 1;
  switch (err->code()) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
      return 2;
    case ErrorCode::kIo:
    case ErrorCode::kBadMagic:
    case ErrorCode::kTruncated:
    case ErrorCode::kChecksumMismatch:
    case ErrorCode::kUnsupportedVersion:
    case ErrorCode::kMalformedGraph:
    case ErrorCode::kIndexOutOfRange:
      return 3;
    case ErrorCode::kBudgetExceeded:
      return 4;
    case ErrorCode::kDivergence:
    case ErrorCode::kNonFinite:
      return 5;
    default:
      return 1;
  }
}

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<double> epc_budget_mb;
  std::optional<std::string> dataset;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", f.seed, "Override the master seed");
  cmd->add_option("--output-dir", f.output_dir, "Override the output directory");
  cmd->add_option("--epc-budget-mb", f.epc_budget_mb, "Vault memory budget in MiB (default 96)");
  cmd->add_option("--dataset", f.dataset, "Override the dataset container path");
}

ExperimentConfig load_with_overrides(const CommonFlags& f) {
  const std::filesystem::path path = f.config;
  auto bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  ExperimentConfig cfg = parse_config(text, path.string(), path.parent_path());
  json patch = json::object();
  if (f.seed) patch["seed"] = *f.seed;
  if (f.output_dir) patch["output_dir"] = std::filesystem::absolute(*f.output_dir).string();
  if (f.epc_budget_mb) patch["vault"]["epc_budget_mb"] = *f.epc_budget_mb;
  if (f.dataset) {
    patch["dataset"]["path"] = std::filesystem::absolute(*f.dataset).string();
    patch["dataset"]["synthetic"] = nullptr;
  }
  if (patch.empty()) return cfg;
  json merged = json::parse(text);
  merged.merge_patch(patch);
  return parse_config(merged.dump(2), path.string() + " (with command-line overrides)", path.parent_path());
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  if (p.has_parent_path()) ensure_directory(p.parent_path());
  std::ofstream out(p);
  out << s;
  if (!out) fail(ErrorCode::kIo, "cannot write " + p.string());
}

std::vector<std::uint32_t> parse_nodes(const std::string& s, std::size_t n) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) fail(ErrorCode::kInvalidArgument, "bad node index '" + item + "'");
    if (v >= n) fail(ErrorCode::kIndexOutOfRange, "query node " + item + " out of range");
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

std::filesystem::path artifacts_dir(const std::optional<std::string>& flag, const ExperimentConfig& cfg) {
  return flag ? std::filesystem::path(*flag) : cfg.output_dir;
}

std::size_t pick_rectifier(const TrainedExperiment& e, const std::optional<std::string>& topology) {
  if (!topology) return 0;
  const Topology t = parse_topology(*topology);
  for (std::size_t i = 0; i < e.rectifiers.size(); ++i) {
    if (e.rectifiers[i].topology == t) return i;
  }
  fail(ErrorCode::kInvalidArgument, "no trained rectifier for topology " + *topology);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GNNVault: partitioned GNN inference with a private rectifier", "gnnvault"};
  app.require_subcommand(1);

  CommonFlags train_f;
  bool export_embeddings_flag = false;
  auto* train = app.add_subcommand("train", "Train backbone, rectifiers and reference models");
  add_common(train, train_f);
  train->add_flag("--export-embeddings", export_embeddings_flag, "Write per-layer embedding CSVs");

  CommonFlags infer_f;
  std::optional<std::string> infer_artifacts, infer_nodes, infer_topology, infer_out;
  bool infer_leak = false;
  auto* infer = app.add_subcommand("infer", "Run partitioned inference");
  add_common(infer, infer_f);
  infer->add_option("--artifacts", infer_artifacts, "Artifact directory (default: config output_dir)");
  infer->add_option("--nodes", infer_nodes, "Comma-separated query nodes (default: all)");
  infer->add_option("--topology", infer_topology, "Rectifier topology to deploy");
  infer->add_option("--out", infer_out, "Write the run report here instead of stdout");
  infer->add_flag("--test-leak-logits", infer_leak, "Negative control: leak vault logits")->group("");

  CommonFlags attack_f;
  std::optional<std::string> attack_artifacts, attack_metrics, attack_topology;
  std::string attack_format = "text";
  bool per_layer = false, with_labels = false;
  auto* attack = app.add_subcommand("attack", "Link-stealing audit over all three exposures");
  add_common(attack, attack_f);
  attack->add_option("--artifacts", attack_artifacts, "Artifact directory (default: config output_dir)");
  attack->add_option("--metrics", attack_metrics, "all or a comma-separated metric list");
  attack->add_option("--topology", attack_topology, "Rectifier used for released labels");
  attack->add_flag("--per-layer-best", per_layer, "Best single-layer AUC instead of concatenation");
  attack->add_flag("--with-labels", with_labels, "Give the GNNVault attacker the released labels");
  attack->add_option("--format", attack_format, "text or json")->check(CLI::IsMember({"text", "json"}));

  CommonFlags ablate_f;
  std::string sweep_arg;
  std::size_t jobs = 1;
  std::optional<std::string> ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Sweep substitute-graph settings");
  add_common(ablate, ablate_f);
  ablate->add_option("--sweep", sweep_arg, "Sweep JSON (file path or inline)")->required();
  ablate->add_option("--jobs", jobs, "Parallel sweep points")->check(CLI::PositiveNumber);
  ablate->add_option("--out", ablate_out, "CSV path (default: stdout)");

  SbmParams sbm;
  std::string sbm_out;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a stochastic-block-model graph container");
  gen->add_option("--out", sbm_out, "Output .gvg path")->required();
  gen->add_option("--n-per-class", sbm.n_per_class);
  gen->add_option("--n-classes", sbm.n_classes);
  gen->add_option("--p-in", sbm.p_in);
  gen->add_option("--p-out", sbm.p_out);
  gen->add_option("--feat-dim", sbm.feat_dim);
  gen->add_option("--feat-noise", sbm.feat_noise);
  gen->add_option("--train-per-class", sbm.train_per_class);
  gen->add_option("--seed", sbm.seed);

  CommonFlags report_f;
  std::optional<std::string> report_artifacts;
  std::string report_format = "text";
  bool infeasibility = false;
  auto* report = app.add_subcommand("report", "Evaluate saved artifacts and print reports");
  add_common(report, report_f);
  report->add_option("--artifacts", report_artifacts, "Artifact directory (default: config output_dir)");
  report->add_option("--format", report_format, "text or json")->check(CLI::IsMember({"text", "json"}));
  report->add_flag("--infeasibility", infeasibility, "Include full-model-in-vault and vault plan figures");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "usage"}, {"message", e.what()}, {"exit_code", 2}}.dump() << '\n';
    return 2;
  }

  try {
    if (*train) {
      ExperimentConfig cfg = load_with_overrides(train_f);
      Graph g = load_dataset(cfg);
      TrainedExperiment e = train_experiment(g, cfg);
      auto reports = evaluate_experiment(e, g, cfg);
      save_artifacts(e, cfg, cfg.output_dir);
      json rj = json::array();
      for (const auto& r : reports) rj.push_back(to_json(r));
      write_text(cfg.output_dir / "report.json", json{{"reports", rj}}.dump(2) + "\n");
      const std::string table = format_eval_table(reports);
      write_text(cfg.output_dir / "report.txt", table);
      if (export_embeddings_flag) export_embeddings(e.system(0), g, cfg.output_dir / "embeddings");
      out << table;
    } else if (*infer) {
      ExperimentConfig cfg = load_with_overrides(infer_f);
      Graph g = load_dataset(cfg);
      TrainedExperiment e = load_artifacts(artifacts_dir(infer_artifacts, cfg), g);
      const GnnVaultSystem sys = e.system(pick_rectifier(e, infer_topology));
      VaultOptions vo = cfg.vault;
      vo.test_leak_logits = infer_leak;
      PartitionedRun run = infer_nodes
                               ? run_partitioned(sys.partitioned, g.features(), parse_nodes(*infer_nodes, g.n_nodes()), vo)
                               : run_partitioned_all(sys.partitioned, g.features(), vo);
      const std::string doc = to_json(run).dump(2) + "\n";
      if (infer_out) {
        write_text(*infer_out, doc);
      } else {
        out << doc;
      }
    } else if (*attack) {
      ExperimentConfig cfg = load_with_overrides(attack_f);
      Graph g = load_dataset(cfg);
      TrainedExperiment e = load_artifacts(artifacts_dir(attack_artifacts, cfg), g);
      AttackOptions ao = cfg.attack;
      if (attack_metrics) ao.metrics = parse_metric_list(*attack_metrics);
      ao.per_layer_best = ao.per_layer_best || per_layer;
      ao.with_labels = ao.with_labels || with_labels;
      const GnnVaultSystem sys = e.system(pick_rectifier(e, attack_topology));
      const PairSample pairs = sample_pairs(g, ao.seed);
      std::vector<AttackReport> reports;
      for (Exposure x : {Exposure::kOriginal, Exposure::kGnnVault, Exposure::kBaseline}) {
        reports.push_back(attack_layers(observable_layers(sys, g, x, ao.with_labels), pairs, ao, x));
      }
      if (attack_format == "json") {
        json rj = json::array();
        for (const auto& r : reports) rj.push_back(to_json(r));
        out << json{{"dataset", cfg.name}, {"seed", ao.seed}, {"reports", rj}}.dump(2) << '\n';
      } else {
        out << format_attack_table(cfg.name, reports);
      }
    } else if (*ablate) {
      ExperimentConfig cfg = load_with_overrides(ablate_f);
      json sweep_json;
      std::string sweep_text = sweep_arg;
      if (std::filesystem::exists(sweep_arg)) {
        auto b = read_file(sweep_arg);
        sweep_text.assign(b.begin(), b.end());
      }
      try {
        sweep_json = json::parse(sweep_text);
      } catch (const json::parse_error& e) {
        fail(ErrorCode::kConfig, "sweep: invalid JSON: " + std::string(e.what()));
      }
      Graph g = load_dataset(cfg);
      auto points = ablation_points(parse_sweep(sweep_json), cfg.substitute);
      const std::string csv = ablation_csv(run_ablation(g, cfg, points, jobs));
      if (ablate_out) {
        write_text(*ablate_out, csv);
      } else {
        out << csv;
      }
    } else if (*gen) {
      write_container(sbm_generate(sbm), sbm_out);
      out << json{{"written", sbm_out}}.dump() << '\n';
    } else if (*report) {
      ExperimentConfig cfg = load_with_overrides(report_f);
      Graph g = load_dataset(cfg);
      TrainedExperiment e = load_artifacts(artifacts_dir(report_artifacts, cfg), g);
      auto reports = evaluate_experiment(e, g, cfg);
      json doc = json::object();
      json rj = json::array();
      for (const auto& r : reports) rj.push_back(to_json(r));
      doc["reports"] = rj;
      if (infeasibility) {
        doc["full_model_in_vault"] = to_json(infeasibility_report(g, e.spec, cfg.vault.epc_budget_bytes));
        json plans = json::object();
        for (const auto& r : e.rectifiers) {
          plans[std::string(to_string(r.topology))] =
              plan_vault_memory(e.spec, r.topology, g.n_nodes(), e.real_adjacency.nnz()).peak();
        }
        doc["vault_peak_bytes"] = plans;
      }
      if (report_format == "json") {
        out << doc.dump(2) << '\n';
      } else {
        out << format_eval_table(reports);
        if (infeasibility) {
          out << "full model in vault: " << doc["full_model_in_vault"].dump() << '\n';
          out << "vault peak bytes: " << doc["vault_peak_bytes"].dump() << '\n';
        }
      }
    }
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    const auto* ge = dynamic_cast<const Error*>(&e);
    json j = {{"error", ge ? std::string(error_code_name(ge->code())) : std::string("internal")},
              {"message", e.what()},
              {"exit_code", code}};
    err << j.dump() << '\n';
    return code;
  }
  return 0;
}

}  // namespace gnnvault
