#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gnnvault/cli.hpp"
#include "gnnvault/experiment.hpp"
#include "helpers.hpp"

using namespace gnnvault;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kConfig = R"({
  "schema_version": 1,
  "name": "cli",
  "seed": 3,
  "dataset": {
    "synthetic": {"n_per_class": 30, "n_classes": 3, "p_in": 0.25, "p_out": 0.01,
                  "feat_dim": 10, "feat_noise": 1.5, "train_per_class": 8}
  },
  "topologies": ["parallel", "series"],
  "substitute": {"kind": "knn", "k": 2},
  "training": {"backbone": {"epochs": 20}, "rectifier": {"epochs": 30}},
  "output_dir": "out"
})";

struct Workspace {
  testing::TempDir dir{"cli"};
  std::string config = (dir.path / "c.json").string();
  std::filesystem::path out = dir.path / "out";
  Workspace() { std::ofstream(config) << kConfig; }
};

}  // namespace

TEST_CASE("usage errors exit 2 with a JSON diagnostic") {
  Result r = cli({});
  CHECK(r.code == 2);
  CHECK(json::parse(r.err).at("error") == "usage");
  CHECK(cli({"train"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("configuration and dataset failures map to exit codes") {
  Workspace w;
  std::ofstream(w.dir.path / "bad.json") << R"({"schema_version": 1, "dataset": {"path": "x.gvg"}, "bogus": 1})";
  Result bad = cli({"train", "-c", (w.dir.path / "bad.json").string()});
  CHECK(bad.code == 2);
  CHECK(json::parse(bad.err).at("error") == "config_error");

  std::ofstream(w.dir.path / "missing.json") << R"({"schema_version": 1, "dataset": {"path": "nothere.gvg"}})";
  Result missing = cli({"train", "-c", (w.dir.path / "missing.json").string()});
  CHECK(missing.code == 3);
  CHECK(json::parse(missing.err).at("error") == "io_error");

  CHECK(cli({"train", "-c", (w.dir.path / "absent.json").string()}).code == 3);
}

TEST_CASE("train, infer, attack and report") {
  Workspace w;
  Result t = cli({"train", "-c", w.config});
  REQUIRE(t.code == 0);
  CHECK(t.out.find("parallel") != std::string::npos);
  CHECK(std::filesystem::exists(w.out / "manifest.json"));
  CHECK(std::filesystem::exists(w.out / "report.json"));

  ExperimentConfig cfg = load_config(w.config);
  Graph g = load_dataset(cfg);
  TrainedExperiment e = load_artifacts(w.out, g);

  SUBCASE("infer matches the monolithic forward") {
    Result r = cli({"infer", "-c", w.config, "--topology", "series"});
    REQUIRE(r.code == 0);
    json doc = json::parse(r.out);
    auto sys = e.system(Topology::kSeries);
    auto emb = backbone_forward(sys.partitioned.backbone, g.features());
    auto expected = argmax_rows(rectifier_forward(sys.partitioned, emb));
    CHECK(doc.at("labels").get<std::vector<std::uint16_t>>() == expected);
    CHECK(doc.at("audit_no_leak").get<bool>());
    CHECK(doc.at("channel").size() == 1);

    Result sub = cli({"infer", "-c", w.config, "--nodes", "4, 0,9"});
    REQUIRE(sub.code == 0);
    auto all = argmax_rows(rectifier_forward(e.system(0).partitioned,
                                             backbone_forward(e.system(0).partitioned.backbone, g.features())));
    CHECK(json::parse(sub.out).at("labels") == json::array({all[4], all[0], all[9]}));

    Result none = cli({"infer", "-c", w.config, "--nodes", ""});
    REQUIRE(none.code == 0);
    CHECK(json::parse(none.out).at("labels").empty());

    CHECK(cli({"infer", "-c", w.config, "--nodes", "100000"}).code == 3);
    CHECK(cli({"infer", "-c", w.config, "--nodes", "x"}).code == 2);
    CHECK(cli({"infer", "-c", w.config, "--topology", "cascaded"}).code == 2);

    Result leak = cli({"infer", "-c", w.config, "--test-leak-logits"});
    REQUIRE(leak.code == 0);
    CHECK_FALSE(json::parse(leak.out).at("audit_no_leak").get<bool>());
  }

  SUBCASE("a tiny vault budget exits 4") {
    Result r = cli({"infer", "-c", w.config, "--epc-budget-mb", "0.001"});
    CHECK(r.code == 4);
    CHECK(json::parse(r.err).at("error") == "budget_exceeded");
  }

  SUBCASE("attack is deterministic and honours metric selection") {
    Result a = cli({"attack", "-c", w.config, "--format", "json"});
    REQUIRE(a.code == 0);
    CHECK(cli({"attack", "-c", w.config, "--format", "json"}).out == a.out);
    json doc = json::parse(a.out);
    REQUIRE(doc.at("reports").size() == 3);
    CHECK(doc["reports"][0].at("exposure") == "M_org");

    Result one = cli({"attack", "-c", w.config, "--format", "json", "--metrics", "cosine"});
    REQUIRE(one.code == 0);
    json r0 = json::parse(one.out)["reports"][0];
    CHECK(r0.at("auc").size() == 1);
    CHECK(r0["auc"].contains("cosine"));
    CHECK(r0["auc"]["cosine"] == doc["reports"][0]["auc"]["cosine"]);
    CHECK(cli({"attack", "-c", w.config, "--metrics", "l7"}).code == 2);
  }

  SUBCASE("report reproduces the training report") {
    Result r = cli({"report", "-c", w.config, "--format", "json", "--infeasibility"});
    REQUIRE(r.code == 0);
    json doc = json::parse(r.out);
    CHECK(doc.at("reports") == json::parse(slurp(w.out / "report.json")).at("reports"));
    CHECK(doc.contains("full_model_in_vault"));
    CHECK(doc.at("vault_peak_bytes").contains("series"));
  }

  SUBCASE("retraining writes byte-identical artifacts") {
    auto out2 = w.dir.path / "again";
    REQUIRE(cli({"train", "-c", w.config, "--output-dir", out2.string()}).code == 0);
    for (const auto& entry : std::filesystem::directory_iterator(w.out)) {
      CAPTURE(entry.path().filename().string());
      if (entry.path().filename() == "manifest.json") {
        json a = json::parse(slurp(entry.path())), b = json::parse(slurp(out2 / "manifest.json"));
        a["config"].erase("output_dir");
        b["config"].erase("output_dir");
        CHECK(a == b);
      } else {
        CHECK(slurp(entry.path()) == slurp(out2 / entry.path().filename()));
      }
    }
  }
}

TEST_CASE("gen-synthetic writes a loadable container") {
  testing::TempDir dir("gen");
  auto path = (dir.path / "g.gvg").string();
  CHECK(cli({"gen-synthetic", "--out", (dir.path / "bad.gvg").string(), "--n-per-class", "2"}).code == 1);
  Result r = cli({"gen-synthetic", "--out", path, "--n-per-class", "10", "--n-classes", "2", "--train-per-class", "3", "--seed", "4"});
  REQUIRE(r.code == 0);
  Graph g = read_container(path);
  CHECK(g.n_nodes() == 20);
  CHECK(g.n_classes() == 2);
}

TEST_CASE("ablate prints a CSV") {
  Workspace w;
  Result r = cli({"ablate", "-c", w.config, "--sweep", R"({"knn_k": [1, 3]})", "--jobs", "2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("sweep,value,kind,p_bb,p_rec,delta_p\n", 0) == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 3);
  CHECK(cli({"ablate", "-c", w.config, "--sweep", "{not json"}).code == 2);
}
