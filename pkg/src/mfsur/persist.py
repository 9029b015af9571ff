"""Delimited-text and JSON persistence with fixed schemas.

All tabular files are comma-separated with a header row and a fixed column
order; floats are written with ``repr`` (shortest round-trip form), so a rerun
with the same configuration produces byte-identical files.

Schemas (column order is the contract):

metrics.csv      cost, Phat, sqerr_P, ise_p, H, iter, rep, strategy
reference map    omega0, zeta, dt, estimate, stderr, reps, seed
design files     level, omega0, zeta
audit tables     iter, level, cand_index, omega0, zeta, J, gain, cost, score
curves.csv       strategy, cost, rmse_P, rmse_p
summary.csv      strategy, final_rmse_P, final_rmse_p, best_sl
model state      JSON document, schema_version 1 (field list in mfsur.harness)
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from mfsur.gp import NoiseFunction
from mfsur.oscillator import ReferenceMap

METRICS_COLUMNS = ("cost", "Phat", "sqerr_P", "ise_p", "H", "iter", "rep", "strategy")
REFERENCE_COLUMNS = ("omega0", "zeta", "dt", "estimate", "stderr", "reps", "seed")
DESIGN_COLUMNS = ("level", "omega0", "zeta")
AUDIT_COLUMNS = ("iter", "level", "cand_index", "omega0", "zeta", "J", "gain",
                 "cost", "score")
CURVE_COLUMNS = ("strategy", "cost", "rmse_P", "rmse_p")
SUMMARY_COLUMNS = ("strategy", "final_rmse_P", "final_rmse_p", "best_sl")

MODEL_STATE_SCHEMA_VERSION = 1


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_table(path, columns):
    """Rows as string lists, validating the header against the schema."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != tuple(columns):
            raise ValueError(f"{path}: expected columns {columns}, found {tuple(header)}")
        return [row for row in reader]


def write_metrics(path, rows) -> None:
    write_table(path, METRICS_COLUMNS, rows)


def read_metrics(path):
    """Metrics rows as a dict of numpy arrays keyed by column name."""
    raw = read_table(path, METRICS_COLUMNS)
    cols = list(zip(*raw)) if raw else [[] for _ in METRICS_COLUMNS]
    out = {}
    for name, col in zip(METRICS_COLUMNS, cols):
        if name == "strategy":
            out[name] = np.array(col, dtype=object)
        elif name in ("iter", "rep"):
            out[name] = np.array(col, dtype=int)
        else:
            out[name] = np.array(col, dtype=float)
    return out


def write_reference_map(path, ref: ReferenceMap) -> None:
    rows = [
        (ref.nodes[i, 0], ref.nodes[i, 1], ref.dt, ref.estimate[i], ref.stderr[i],
         ref.replications, ref.seed)
        for i in range(len(ref.nodes))
    ]
    write_table(path, REFERENCE_COLUMNS, rows)


def read_reference_map(path) -> ReferenceMap:
    raw = read_table(path, REFERENCE_COLUMNS)
    if not raw:
        raise ValueError(f"{path}: empty reference map")
    arr = np.array([[float(v) for v in row[:5]] for row in raw])
    nodes = arr[:, :2]
    omega0_axis = np.unique(nodes[:, 0])
    zeta_axis = np.unique(nodes[:, 1])
    if len(omega0_axis) * len(zeta_axis) != len(nodes):
        raise ValueError(f"{path}: nodes do not form a full grid")
    return ReferenceMap(
        omega0_axis=omega0_axis, zeta_axis=zeta_axis, nodes=nodes,
        estimate=arr[:, 3], stderr=arr[:, 4], dt=float(arr[0, 2]),
        z_crit=np.nan, replications=int(raw[0][5]), seed=int(raw[0][6]))


def write_design(path, levels, level_points) -> None:
    rows = []
    for lv, pts in zip(levels, level_points):
        for p in np.atleast_2d(pts):
            rows.append((lv, p[0], p[1]))
    write_table(path, DESIGN_COLUMNS, rows)


def write_audit(path, rows) -> None:
    write_table(path, AUDIT_COLUMNS, rows)


def write_curves(path, rows) -> None:
    write_table(path, CURVE_COLUMNS, rows)


def write_summary(path, rows) -> None:
    write_table(path, SUMMARY_COLUMNS, rows)


def write_model_state(path, *, kernel_params: dict, noise: NoiseFunction,
                      master_seed: int, fidelity_grid) -> None:
    """Persist frozen hyper-parameters and the noise table (schema v1)."""
    doc = {
        "schema_version": MODEL_STATE_SCHEMA_VERSION,
        "master_seed": int(master_seed),
        "fidelity_grid": [float(t) for t in fidelity_grid],
        "kernel": {k: (list(v) if isinstance(v, (tuple, list, np.ndarray)) else float(v))
                   for k, v in kernel_params.items()},
        "noise_table": {
            "levels": noise.levels.tolist(),
            "omega0_axis": noise.omega0_axis.tolist(),
            "zeta_axis": noise.zeta_axis.tolist(),
            "tables": noise.tables.tolist(),
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_model_state(path):
    """(kernel_params, NoiseFunction, master_seed, fidelity_grid)."""
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != MODEL_STATE_SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported model-state schema {version!r}")
    nt = doc["noise_table"]
    noise = NoiseFunction(nt["levels"], nt["omega0_axis"], nt["zeta_axis"], nt["tables"])
    return doc["kernel"], noise, int(doc["master_seed"]), list(doc["fidelity_grid"])
