import json
import os
from pathlib import Path

import numpy as np
import pytest

import gnnvault

FIXTURES = Path(os.environ.get("GNNVAULT_FIXTURE_DIR", "build/fixtures"))

SMALL_CONFIG = {
    "schema_version": 1,
    "name": "py",
    "seed": 5,
    "dataset": {
        "synthetic": {"n_per_class": 30, "n_classes": 3, "p_in": 0.25, "p_out": 0.01,
                      "feat_dim": 10, "feat_noise": 1.5, "train_per_class": 8}
    },
    "topologies": ["parallel", "series"],
    "training": {"backbone": {"epochs": 20}, "rectifier": {"epochs": 30}},
    "output_dir": "out",
}


def test_parameter_counts():
    assert gnnvault.backbone_parameter_count("M1", 1433, 7) == 187911
    assert gnnvault.rectifier_parameter_count("M1", 1433, 7, "parallel") == 21944


def test_memory_figures():
    report = gnnvault.infeasibility_report(19717, "M1", 500, 3)
    assert round(report["dense_adjacency_bytes"] / 2**20, 2) == 8898.01
    assert report["exceeds_budget"]
    peak = gnnvault.plan_vault_peak_bytes("M1", "parallel", 2708, 10556, 1433, 7)
    assert 0 < peak < 96 * 2**20


def test_graph_round_trip(tmp_path):
    g = gnnvault.sbm(n_per_class=10, n_classes=2, train_per_class=3, seed=1)
    assert g.n_nodes == 20
    assert g.features.shape == (20, 16)
    assert g.edges.shape == (2 * g.n_edges, 2)
    assert int(g.train_mask.sum()) == 6
    path = tmp_path / "g.gvg"
    gnnvault.write_graph(g, path)
    assert gnnvault.read_graph(path) == g


def test_graph_from_numpy():
    x = np.eye(4, dtype=np.float32)
    g = gnnvault.Graph(x, np.array([[0, 1], [2, 1], [1, 0]]), np.array([0, 1, 0, 1]), 2)
    assert g.n_edges == 2
    assert g.edges.tolist() == [[0, 1], [1, 0], [1, 2], [2, 1]]
    with pytest.raises(gnnvault.GnnVaultError) as info:
        gnnvault.Graph(x, np.array([[0, 9]]), np.array([0, 1, 0, 1]), 2)
    assert info.value.code == "malformed_graph"


def test_fixture_container():
    cora = FIXTURES / "cora.gvg"
    if not cora.exists():
        pytest.skip("fixtures not extracted")
    g = gnnvault.read_graph(cora)
    assert (g.n_nodes, g.n_edges, g.n_features, g.n_classes) == (2708, 5278, 1433, 7)


def test_metrics():
    assert gnnvault.roc_auc([0.9, 0.8], [0.85, 0.1]) == 0.75
    x = np.array([[0.0], [0.0], [100.0], [100.0]], dtype=np.float32)
    assert gnnvault.silhouette(x, [0, 0, 1, 1]) == 1.0


def test_experiment_end_to_end(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(SMALL_CONFIG))
    exp = gnnvault.Experiment(cfg)
    assert not exp.trained
    with pytest.raises(gnnvault.GnnVaultError):
        exp.evaluate()
    exp.train()
    reports = exp.evaluate()
    assert [r["topology"] for r in reports] == ["parallel", "series"]

    run = exp.infer(topology="series")
    assert run["audit_no_leak"]
    assert len(run["labels"]) == exp.graph.n_nodes
    assert [t["tag"] for t in run["channel"]] == ["H2"]
    full = exp.infer()["labels"]
    assert exp.infer(nodes=[3, 1])["labels"] == [full[3], full[1]]

    with pytest.raises(gnnvault.GnnVaultError) as info:
        exp.infer(epc_budget_mb=0.001)
    assert info.value.code == "budget_exceeded"

    attack = exp.attack(metrics="cosine")
    assert [a["exposure"] for a in attack] == ["M_org", "M_gv", "M_base"]
    assert set(attack[0]["auc"]) == {"cosine"}

    exp.save(tmp_path / "art")
    again = gnnvault.Experiment(cfg)
    again.load(tmp_path / "art")
    assert again.evaluate() == reports


def test_cli_in_process(tmp_path):
    code, out, err = gnnvault.run_cli([])
    assert code == 2
    assert json.loads(err)["error"] == "usage"
    code, out, _ = gnnvault.run_cli(["gen-synthetic", "--out", str(tmp_path / "s.gvg"),
                                     "--n-per-class", "12", "--train-per-class", "4"])
    assert code == 0
    assert gnnvault.read_graph(tmp_path / "s.gvg").n_nodes == 48
