"""Partitioned GNN inference with a private rectifier.

Thin Python layer over the C++ core. Reports come back as plain dicts with the
same fields as the command-line tool's JSON output.
"""

from ._core import (
    Experiment,
    Graph,
    GnnVaultError,
    backbone_parameter_count,
    infeasibility_report,
    plan_vault_peak_bytes,
    read_graph,
    rectifier_parameter_count,
    roc_auc,
    run_cli,
    sbm,
    silhouette,
    write_graph,
)

__all__ = [
    "Experiment",
    "Graph",
    "GnnVaultError",
    "backbone_parameter_count",
    "infeasibility_report",
    "plan_vault_peak_bytes",
    "read_graph",
    "rectifier_parameter_count",
    "roc_auc",
    "run_cli",
    "sbm",
    "silhouette",
    "write_graph",
]

__version__ = "0.1.0"
