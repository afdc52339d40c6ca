"""File formats for measurement fields, run tables, and summaries.

All floats are written with ``repr``, which round-trips exactly, so a
rerun with the same configuration produces byte-identical files.  Every
writer has a matching reader in this module.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .identification import IdentificationReport, PreparedData, RunResult
from .transport import Field, ScenarioConfig, SorptionModel

__all__ = [
    "write_field_csv",
    "read_field_csv",
    "write_metadata",
    "read_metadata",
    "scenario_to_dict",
    "scenario_from_dict",
    "write_runs_csv",
    "read_runs_csv",
    "write_trace_csv",
    "summary_dict",
    "write_summary_json",
    "read_summary_json",
    "report_table",
]

_FIELD_HEADER = ("x_cm", "t_s", "C_mg_per_l", "valid")


def _fmt(value: float) -> str:
    return repr(float(value))


def write_field_csv(field: Field, path) -> None:
    """Dump a field row-major by time then space, full precision.

    The ``valid`` column carries the measurement mask; entries below the
    detection floor or outside the smoothing support are kept in the
    file (flag 0) so the grid stays rectangular.
    """
    path = Path(path)
    x = field.x
    t = field.t
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_FIELD_HEADER)
        for k in range(field.n_t):
            for i in range(field.n_x):
                writer.writerow((_fmt(x[i]), _fmt(t[k]),
                                 _fmt(field.values[i, k]),
                                 "1" if field.mask[i, k] else "0"))


def read_field_csv(path) -> Field:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:3]) != _FIELD_HEADER[:3]:
            raise ValidationError(f"{path}: not a field CSV (bad header)")
        has_valid = len(header) > 3 and header[3] == "valid"
        xs, ts, cs, ms = [], [], [], []
        for row in reader:
            xs.append(float(row[0]))
            ts.append(float(row[1]))
            cs.append(float(row[2]))
            ms.append(row[3] == "1" if has_valid else True)
    x_axis = np.unique(np.array(xs))
    t_axis = np.unique(np.array(ts))
    if len(xs) != x_axis.size * t_axis.size:
        raise ValidationError(f"{path}: grid is not rectangular")
    for axis, label in ((x_axis, "x"), (t_axis, "t")):
        if axis.size > 1:
            steps = np.diff(axis)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise ValidationError(f"{path}: non-uniform {label} axis")
    values = np.full((x_axis.size, t_axis.size), np.nan)
    mask = np.zeros(values.shape, dtype=bool)
    xi = {v: i for i, v in enumerate(x_axis)}
    ti = {v: k for k, v in enumerate(t_axis)}
    for xv, tv, cv, mv in zip(xs, ts, cs, ms):
        values[xi[xv], ti[tv]] = cv
        mask[xi[xv], ti[tv]] = mv
    dx = float(x_axis[1] - x_axis[0]) if x_axis.size > 1 else 1.0
    dt = float(t_axis[1] - t_axis[0]) if t_axis.size > 1 else 1.0
    return Field(values=values, x0=float(x_axis[0]), dx=dx,
                 t0=float(t_axis[0]), dt=dt, mask=mask)


def scenario_to_dict(config: ScenarioConfig) -> dict:
    return dataclasses.asdict(config)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    sorption = data.pop("sorption", None)
    if not isinstance(sorption, dict):
        raise ValidationError("scenario record lacks a sorption block")
    try:
        return ScenarioConfig(sorption=SorptionModel(**sorption), **data)
    except TypeError as exc:
        raise ValidationError(f"bad scenario record: {exc}") from None


def write_metadata(path, config: ScenarioConfig, **extra) -> None:
    record = {"scenario_config": scenario_to_dict(config)}
    record.update(extra)
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def read_metadata(path) -> dict:
    path = Path(path)
    try:
        record = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if "scenario_config" not in record:
        raise ValidationError(f"{path}: missing scenario_config")
    return record


def write_runs_csv(results: list, path) -> None:
    """One row per restart with its termination info and coefficients."""
    if not results:
        raise ValidationError("no runs to write")
    first: RunResult = results[0]
    param_names = first.trace.m_final.names
    term_ids = first.fit.alpha_norm.term_ids
    header = (["run_id", "seed", "n_iterations", "termination", "eps_final"]
              + [f"m_{n}" for n in param_names]
              + [f"alpha_norm_{t}" for t in term_ids]
              + [f"alpha_phys_{t}" for t in term_ids])
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for res in results:
            row = [str(res.run_id), str(res.seed),
                   str(res.trace.n_accepted), res.trace.status,
                   _fmt(res.trace.eps_final)]
            row += [_fmt(v) for v in res.trace.m_final.values]
            row += [_fmt(v) for v in res.fit.alpha_norm.values]
            row += [_fmt(v) for v in res.fit.alpha_phys.values]
            writer.writerow(row)


def read_runs_csv(path) -> list:
    """Rows back as dicts with numeric fields converted."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "run_id" not in reader.fieldnames:
            raise ValidationError(f"{path}: not a runs CSV")
        out = []
        for raw in reader:
            rec = {}
            for key, val in raw.items():
                if key in ("run_id", "seed", "n_iterations"):
                    rec[key] = int(val)
                elif key == "termination":
                    rec[key] = val
                else:
                    rec[key] = float(val)
            out.append(rec)
    return out


def write_trace_csv(result: RunResult, path) -> None:
    param_names = result.trace.m_final.names
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "accepted", "lambda", "eps"]
                        + [f"m_{n}" for n in param_names])
        for rec in result.trace.records:
            writer.writerow([str(rec.index), "1" if rec.accepted else "0",
                             _fmt(rec.lam), _fmt(rec.eps)]
                            + [_fmt(v) for v in rec.m.values])


def summary_dict(report: IdentificationReport,
                 data: PreparedData | None = None) -> dict:
    """JSON-ready digest of one identification experiment."""
    s = report.final_summary
    record = {
        "scenario": report.scenario_name,
        "library": report.library_name,
        "noise_delta": 0.0 if report.noise is None else report.noise.delta,
        "noise_seed": None if report.noise is None else report.noise.seed,
        "winner": report.winner_name,
        "selected_terms": list(report.selected_term_ids),
        "stable": report.stable,
        "n_rounds": len(report.rounds),
        "equation": report.equation,
        "terms": [
            {
                "id": tid,
                "alpha_phys_mean": float(s.alpha_phys_mean[j]),
                "alpha_phys_std": float(s.alpha_phys_std[j]),
                "alpha_norm_mean": float(s.alpha_norm_mean[j]),
                "alpha_norm_std": float(s.alpha_norm_std[j]),
                "alpha_abs_norm_mean": float(s.alpha_abs_norm_mean[j]),
            }
            for j, tid in enumerate(s.term_ids)
        ],
        "params": [
            {"name": name, "mean": float(s.param_mean[k]),
             "std": float(s.param_std[k])}
            for k, name in enumerate(s.param_names)
        ],
        "runs": {
            "total": s.n_runs,
            "retained": list(s.retained_run_ids),
            "screened": list(s.screened_run_ids),
            "failed": list(s.failed_run_ids),
        },
        "candidates": [
            {"name": c.name, "mean_eps": c.mean_eps,
             "term_ids": list(c.summary.term_ids)}
            for c in report.candidates
        ],
    }
    if data is not None:
        record["smoothing_passes"] = data.smoothing_passes
        record["n_points"] = data.n_points
    return record


def write_summary_json(report: IdentificationReport, path,
                       data: PreparedData | None = None) -> None:
    record = summary_dict(report, data)
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


_SUMMARY_KEYS = ("scenario", "noise_delta", "selected_terms", "terms",
                 "params", "equation")


def read_summary_json(path) -> dict:
    path = Path(path)
    try:
        record = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: {exc}") from None
    missing = [k for k in _SUMMARY_KEYS if k not in record]
    if missing:
        raise ValidationError(f"{path}: summary missing keys {missing}")
    return record


def report_table(summaries: list) -> list:
    """Rows of scenario x noise x coefficients x parameters.

    Input records come from ``read_summary_json``; the output is a list
    of row dicts sharing one header, with absent terms left empty.
    """
    if not summaries:
        raise ValidationError("no summaries to tabulate")
    term_order: list = []
    param_order: list = []
    for rec in summaries:
        for term in rec["terms"]:
            if term["id"] not in term_order:
                term_order.append(term["id"])
        for par in rec["params"]:
            if par["name"] not in param_order:
                param_order.append(par["name"])
    rows = []
    for rec in summaries:
        by_id = {t["id"]: t for t in rec["terms"]}
        by_name = {p["name"]: p for p in rec["params"]}
        row = {"scenario": rec["scenario"], "noise_delta": rec["noise_delta"]}
        for tid in term_order:
            term = by_id.get(tid)
            row[tid] = "" if term is None else term["alpha_phys_mean"]
        for name in param_order:
            par = by_name.get(name)
            row[name] = "" if par is None else par["mean"]
        row["equation"] = rec["equation"]
        rows.append(row)
    return rows
