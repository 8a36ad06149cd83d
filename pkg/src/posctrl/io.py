"""Deterministic artifact serialization: trajectory CSV and report JSON.

Numbers are written in shortest-round-trip decimal form (Python ``repr``), so
reading a file back reproduces the exact doubles; identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .equilibrium import EquilibriumResult, StabilityRecord
from .sim import Trajectory
from .verify import VerificationReport

SCHEMA_VERSION = 1

__all__ = [
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_report_json",
    "report_to_dict",
]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trajectory_csv(tr: Trajectory, path) -> None:
    """Write ``t,x1,...,xn,u`` rows, one per output time, LF-terminated.

    The ``u`` column is the realized input: the constant input in open loop,
    ``gamma*psi(x(t))`` in closed loop, and their concatenation for switched
    runs (``beta`` for the constant-input comparison field).
    """
    n = tr.n
    header = "t," + ",".join(f"x{i + 1}" for i in range(n)) + ",u"
    lines = [header]
    for t, row, u in zip(tr.times, tr.states, tr.inputs):
        lines.append(_fmt(t) + "," + ",".join(_fmt(v) for v in row) + "," + _fmt(u))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory_csv(path):
    """Read a trajectory CSV back as ``(times, states, inputs)`` arrays."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t" or header[-1] != "u":
            raise ValueError(f"not a trajectory CSV: header {header!r}")
        rows = [[float(cell) for cell in line.strip().split(",")]
                for line in fh if line.strip()]
    data = np.array(rows)
    return data[:, 0], data[:, 1:-1], data[:, -1]


def _check_to_dict(rec) -> dict:
    return {
        "id": rec.check_id,
        "label": rec.label,
        "verdict": rec.verdict,
        "samples": rec.samples,
        "counterexamples": rec.counterexamples,
        "detail": rec.detail,
    }


def report_to_dict(obj, **metadata) -> dict:
    """Normalize a report object into a JSON-ready dict with stable key order."""
    from . import __version__

    out = {"schema_version": SCHEMA_VERSION, "tool": f"posctrl {__version__}"}
    if isinstance(obj, VerificationReport):
        out["kind"] = "verification"
        out["model"] = obj.model
        out.update(metadata)
        out["domain"] = obj.domain
        out["beta_m"] = "infeasible" if obj.beta_m is None else obj.beta_m
        out["betas"] = list(obj.betas)
        out["passed"] = obj.passed
        out["checks"] = [_check_to_dict(rec) for rec in obj.checks]
    elif isinstance(obj, EquilibriumResult):
        out["kind"] = "equilibrium"
        out.update(metadata)
        out["x_star"] = [float(v) for v in obj.x_star]
        out["residual"] = obj.residual
        out["method"] = obj.method
        out["iterations"] = obj.iterations
    elif isinstance(obj, StabilityRecord):
        out["kind"] = "stability"
        out.update(metadata)
        out["max_real_part"] = obj.max_real_part
        out["verdict"] = obj.verdict
        out["eigenvalues"] = [[ev.real, ev.imag] for ev in obj.eigenvalues]
    elif isinstance(obj, dict):
        out.update(obj)
        out.update(metadata)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} as a report")
    return out


def _json_default(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_report_json(obj, path, **metadata) -> None:
    """Serialize a verification/equilibrium/stability report (or prepared dict)."""
    payload = report_to_dict(obj, **metadata)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")
