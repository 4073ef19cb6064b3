"""Accuracy metrics, per-trial evaluation reports and trace export."""
import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import network
from .errors import ConstantInput, Empty, EmptyDataset, LengthMismatch

JOINTS = ("shoulder", "elbow")
STD_LABEL = "population std across test trials"
# correlations this close to +-1 are rounding noise on an exact affine relation
SNAP = 1e-13


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.size != yhat.size:
        raise LengthMismatch(f"lengths differ: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise Empty("empty sequences")
    return y, yhat


def rmse(y, yhat):
    y, yhat = _pair(y, yhat)
    return math.sqrt(float(np.mean((y - yhat) ** 2)))


def pearson_r(y, yhat):
    y, yhat = _pair(y, yhat)
    if y.size < 2:
        raise Empty("need at least two samples")
    dy, dh = y - y.mean(), yhat - yhat.mean()
    sy, sh = math.sqrt(float(dy @ dy)), math.sqrt(float(dh @ dh))
    if sy == 0 or sh == 0:
        raise ConstantInput("zero variance input")
    dy, dh = dy / sy, dh / sh
    r = float(dy @ dh)
    if abs(r) > 1.0 - SNAP:
        return math.copysign(1.0, r)
    return r


@dataclass
class TrialMetrics:
    tag: str
    joint: str
    load_kg: float
    run: str
    trial: int
    n: int
    rmse: float
    rmse_rad: float
    pearson_r: float  # nan when flagged constant
    constant: bool


@dataclass
class EvalReport:
    tag: str
    rows: list = field(default_factory=list)

    def cells(self):
        """Per (joint, load) aggregates: mean and std of R and RMSE across trials."""
        out = {}
        for j in JOINTS:
            for load in sorted({r.load_kg for r in self.rows}):
                rs = [r for r in self.rows if r.joint == j and r.load_kg == load]
                if not rs:
                    continue
                r_vals = np.array([r.pearson_r for r in rs if not r.constant])
                e_vals = np.array([r.rmse for r in rs])
                out[(j, load)] = {
                    "n_trials": len(rs),
                    "n_constant": sum(r.constant for r in rs),
                    "r_mean": float(r_vals.mean()) if r_vals.size else math.nan,
                    "r_std": float(r_vals.std()) if r_vals.size else math.nan,
                    "rmse_mean": float(e_vals.mean()),
                    "rmse_std": float(e_vals.std()),
                }
        return out

    def mean_r(self):
        vals = [c["r_mean"] for c in self.cells().values()]
        return float(np.mean(vals)) if vals else math.nan

    def to_dict(self):
        return {
            "tag": self.tag,
            "std": STD_LABEL,
            "trials": [asdict(r) for r in self.rows],
            "cells": [{"joint": j, "load_kg": load, **v} for (j, load), v in self.cells().items()],
        }

    def write_trials_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = list(TrialMetrics.__dataclass_fields__)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for r in self.rows:
                w.writerow([getattr(r, k) for k in names])
        return path


def predict_angles(params, trial, norm):
    """Normalized predictions for one trial, shape (N, 2)."""
    X = np.column_stack([trial.emg, trial.normalized_time()])
    return np.asarray(network.forward(params, norm.normalize_inputs(X)))


def evaluate(params, test, model, norm, tag):
    """Per-trial RMSE and Pearson R in normalized angle space.

    ``model`` is unused by the metrics themselves; it is accepted so callers
    evaluate with the same limb they trained against.
    """
    del model
    if len(test) == 0:
        raise EmptyDataset("empty test set")
    scale = np.asarray(norm.angle_scale)
    report = EvalReport(tag)
    for run in test.runs:
        for k, trial in enumerate(run.trials):
            y = norm.normalize(trial.q)
            yhat = predict_angles(params, trial, norm)
            for j, name in enumerate(JOINTS):
                e = rmse(y[:, j], yhat[:, j])
                try:
                    r, const = pearson_r(y[:, j], yhat[:, j]), False
                except ConstantInput:
                    r, const = math.nan, True
                report.rows.append(TrialMetrics(tag, name, float(run.load_kg), run.name, k,
                                                len(trial), e, e * float(scale[j]), r, const))
    return report


def export_traces(params, trial, norm, out):
    """CSV with time, true and predicted normalized angles for each joint."""
    y = norm.normalize(trial.q)
    yhat = predict_angles(params, trial, norm)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{p}_{j}" for j in JOINTS for p in ("q_true", "q_pred")])
        for i in range(len(trial)):
            row = [repr(float(trial.t[i]))]
            for j in range(len(JOINTS)):
                row += [repr(float(y[i, j])), repr(float(yhat[i, j]))]
            w.writerow(row)
    return out


def _fmt(mean, std):
    if math.isnan(mean):
        return "n/a"
    return f"{mean:.4f}±{std:.4f}"


def table(reports, dataset="synthetic"):
    """Rows per (dataset, joint, metric); one column per (load, model tag)."""
    cols = sorted({(load, rep.tag) for rep in reports for (_, load) in rep.cells()})
    header = ["dataset", "joint", "metric"] + [f"{load:g}kg_{tag}" for load, tag in cols]
    cells = {rep.tag: rep.cells() for rep in reports}
    rows = []
    for j in JOINTS:
        for metric, key in (("R", "r"), ("RMSE", "rmse")):
            row = [dataset, j, metric]
            for load, tag in cols:
                c = cells[tag].get((j, load))
                row.append(_fmt(c[f"{key}_mean"], c[f"{key}_std"]) if c else "")
            rows.append(row)
    return header, rows


def write_report(reports, out_dir, dataset="synthetic"):
    """Write the comparison table (CSV and JSON) plus per-trial metric files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header, rows = table(reports, dataset)
    with (out_dir / "report.csv").open("w", newline="") as fh:
        fh.write(f"# mean±{STD_LABEL}; angles normalized\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    doc = {"dataset": dataset, "std": STD_LABEL, "header": header, "rows": rows,
           "reports": [r.to_dict() for r in reports]}
    (out_dir / "report.json").write_text(json.dumps(doc, indent=1, allow_nan=True))
    for r in reports:
        r.write_trials_csv(out_dir / f"trials_{r.tag}.csv")
    return out_dir / "report.csv"
