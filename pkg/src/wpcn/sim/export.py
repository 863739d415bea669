"""CSV trace and JSON summary output.

CSV columns, in order: ``slot, tx_power, tau0, Q_1..Q_K, D_1..D_K, Z_AP,
Z_1..Z_K, G_1..G_K``.  ``tx_power`` is the transmitted energy in the slot
(tau0 * ||x||^2), ``Q_i`` the harvested power with eta and tau0 applied,
queue columns hold post-update backlogs.  Columns a policy does not use are
zero; for MDPP the power queue sits in ``Z_AP``.
"""

import csv
import json
from pathlib import Path

import numpy as np


def csv_header(K: int) -> list:
    return (["slot", "tx_power", "tau0"] + [f"Q_{i + 1}" for i in range(K)]
            + [f"D_{i + 1}" for i in range(K)] + ["Z_AP"]
            + [f"Z_{i + 1}" for i in range(K)] + [f"G_{i + 1}" for i in range(K)])


def export(metrics, path) -> tuple:
    """Write ``<path>.csv`` and ``<path>.json``; returns both paths.

    Without a recorded trace the CSV holds only the header.
    """
    base = Path(path)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = base.with_suffix(".csv"), base.with_suffix(".json")
    K = len(metrics.Q_avg)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(K))
        t = metrics.trace
        if t:
            block = np.column_stack([t["slot"], t["tx_power"], t["tau0"], t["Q"], t["D"],
                                     t["Z_AP"], t["Z"], t["G"]])
            for row, slot in zip(block, t["slot"]):
                w.writerow([int(slot)] + [repr(float(v)) for v in row[1:]])
    with open(json_path, "w") as fh:
        json.dump(metrics.summary(), fh, indent=2)
    return csv_path, json_path


def read_summary(path) -> dict:
    with open(Path(path).with_suffix(".json")) as fh:
        return json.load(fh)
