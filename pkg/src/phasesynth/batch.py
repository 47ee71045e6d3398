"""Experiment runner: single closed-loop runs and batches with cluster means."""

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import load_ir, load_source
from .loop_sim import FeedbackPath, GainSchedule, LoopConfig, run_afc
from .signals import SAMPLE_RATE, write_wav

__all__ = [
    "ROW_FIELDS",
    "CLUSTER_FIELDS",
    "BatchReport",
    "run_experiment",
    "run_batch",
    "aggregate_rows",
    "write_trace",
    "write_rows",
    "read_rows",
]

ROW_FIELDS = [
    "run_id", "signal_id", "group", "ir_id", "gain_db", "set_id",
    "status", "verdict", "failure_time_s", "early_sd_db", "late_sd_db", "message",
]
CLUSTER_FIELDS = [
    "cluster_kind", "cluster", "gain_db", "set_id", "runs", "stable_runs",
    "mean_early_sd_db", "mean_late_sd_db",
]


def _db(v):
    return None if v is None or v <= 0 else 20.0 * math.log10(v)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def write_trace(path, result):
    """CSV ``time_s, sd_linear, sd_db`` plus a comment footer with the verdict."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "sd_linear", "sd_db"])
        for t, v, d in zip(result.trace.times, result.trace.values, result.trace.db):
            w.writerow([f"{t:.6f}", f"{v:.9g}", f"{d:.6g}"])
        fh.write(f"# status={'stable' if result.stable else 'unstable'}\n")
        if not result.stable:
            fh.write(f"# failure_time_s={result.verdict.failure_time:.4f}\n")


def _loop_config(spec, path):
    schedule = GainSchedule.ramp(spec.gain_db, spec.ramp_s, spec.start_below_db)
    return LoopConfig(
        path=path,
        coupling_db=spec.coupling_db,
        phase_synth=spec.phase_config(),
        adaptive=spec.filter_config(),
        schedule=schedule,
        duration=spec.duration,
    )


def run_experiment(spec, out_dir=None):
    """Run one :class:`~phasesynth.config.RunSpec`; returns ``(result, row)``.

    Any exception becomes an ``error`` row (``result`` is ``None``) so a batch
    never stops on a single bad run. With ``out_dir`` the sd trace CSV and,
    for stable runs, the converged output WAV are written there.
    """
    row = {
        "run_id": spec.run_id, "signal_id": spec.signal_id, "group": spec.group,
        "ir_id": spec.ir_id, "gain_db": spec.gain_db, "set_id": spec.set_id,
        "status": "ok", "verdict": "", "failure_time_s": None,
        "early_sd_db": None, "late_sd_db": None, "message": "",
    }
    try:
        s = load_source(spec.signal_source, spec.duration, spec.seed)
        h = load_ir(spec.ir_source, spec.highpass_hz, spec.seed)
        result = run_afc(_loop_config(spec, FeedbackPath(h, spec.ir_id)), s)
    except Exception as exc:  # recorded, not raised: the batch must complete
        row.update(status="error", message=f"{type(exc).__name__}: {exc}")
        return None, row

    early, late = result.early_late()
    row.update(
        verdict="stable" if result.stable else "unstable",
        failure_time_s=result.verdict.failure_time,
        early_sd_db=_db(early),
        late_sd_db=_db(late),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace(out / f"{spec.run_id}_sd.csv", result)
        seg = result.converged_segment()
        if result.stable and seg.size:
            peak = np.max(np.abs(seg))
            # level-normalized to -3 dBFS; quality scorers align levels anyway
            write_wav(out / f"{spec.run_id}_converged.wav", seg / peak * 10 ** (-3 / 20) if peak > 0 else seg,
                      SAMPLE_RATE)
    return result, row


def _run_row(args):
    spec, out_dir = args
    return run_experiment(spec, out_dir)[1]


@dataclass
class BatchReport:
    rows: list
    clusters: list = field(default_factory=list)

    @property
    def failures(self):
        return sum(r["status"] != "ok" for r in self.rows)


def _mean(values):
    values = [v for v in values if v is not None and v != ""]
    return float(np.mean([float(v) for v in values])) if values else None


def aggregate_rows(rows):
    """Cluster means per speaker group and per IR, each split by gain and set."""
    clusters = []
    for kind, key in (("speaker", "group"), ("ir", "ir_id")):
        groups = {}
        for r in rows:
            groups.setdefault((str(r[key]), float(r["gain_db"]), str(r["set_id"])), []).append(r)
        for (name, gain, sid), members in sorted(groups.items()):
            ok = [m for m in members if m["status"] == "ok"]
            clusters.append({
                "cluster_kind": kind, "cluster": name, "gain_db": gain, "set_id": sid,
                "runs": len(members),
                "stable_runs": sum(m["verdict"] == "stable" for m in ok),
                "mean_early_sd_db": _mean(m["early_sd_db"] for m in ok),
                "mean_late_sd_db": _mean(m["late_sd_db"] for m in ok),
            })
    return clusters


def run_batch(specs, out_dir=None, workers=1):
    """Run every spec (in parallel when ``workers > 1``); one row per spec."""
    specs = list(specs)
    if not specs:
        raise ValueError("run_batch needs at least one run")
    jobs = [(s, out_dir) for s in specs]
    workers = max(1, min(int(workers), len(specs), os.cpu_count() or 1))
    if workers == 1:
        rows = [_run_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_row, jobs))
    return BatchReport(rows, aggregate_rows(rows))


def write_rows(path, rows, fields=ROW_FIELDS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})


def read_rows(paths):
    """Rows from one or more run-table CSVs (as written by :func:`write_rows`)."""
    rows = []
    for p in paths:
        with open(p, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(ROW_FIELDS) - set(reader.fieldnames or [])
            if missing:
                raise ValueError(f"{p}: not a run table (missing {sorted(missing)})")
            rows.extend(dict(r) for r in reader)
    return rows
