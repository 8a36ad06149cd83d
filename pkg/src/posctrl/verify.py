"""Machine checks of the structural hypotheses behind output-feedback stabilization.

The checkable hypothesis set (ids ``H2-1`` .. ``H2-6``) is:

* H2-1: the measured output ``psi`` is positive on the open positive orthant,
  and ``c_i * psi`` is nonnegative on each boundary face ``x_i = 0``;
* H2-2: the drift points inward at the origin, ``f(0) >= 0``;
* H2-3: the drift is cooperative (Metzler Jacobian everywhere);
* H2-4: the Jacobian is nonincreasing along the componentwise order
  (concavity), ``x <= y  =>  Df(x) >= Df(y)``;
* H2-5: there is an input scale ``beta_m`` with ``beta*f(0) + c >> 0`` for
  every ``beta > beta_m``;
* H2-6: for every ``beta > beta_m`` the comparison system
  ``xdot = beta*f(x) + c`` has a strongly positive equilibrium.

Together these make the comparison system's equilibrium unique and globally
attractive, which is what the feedback ``u = gamma*psi(x)`` (any
``gamma > beta_m``) inherits.  The quantified hypotheses range over the whole
orthant; this module checks them on a declared sampling box and reports the
box, which is an honest semidecision, not a proof.  Corroborating dynamic
evidence (order preservation, convergence of trajectory fans) is sampled by
direct simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import equilibrium as eq
from .errors import ConvergenceError, EvaluationError, IntegrationError
from .metzler import is_metzler
from .model import ConstantInput, SystemModel
from .sim import default_config, detect_convergence, integrate, resume_config

__all__ = [
    "SampleDomain",
    "CheckRecord",
    "VerificationReport",
    "check_positivity_boundary",
    "check_h2_2",
    "check_cooperativity",
    "check_concavity",
    "compute_beta_m",
    "check_h2",
    "check_order_preservation",
    "gas_evidence",
]

SIGN_TOL = 1e-12        # sign checks at exactly evaluated points
JAC_TOL = 1e-9          # Jacobian comparisons (differentiation noise)
ORDER_TOL = 1e-7        # trajectory ordering (integration noise)
_GRID_CAP = 100_000
_MAX_STORED_COUNTEREXAMPLES = 20


@dataclass(frozen=True)
class SampleDomain:
    """Deterministic sampling box: a per-axis grid plus seeded uniform points.

    The verification box is ``[lows_i, highs_i]`` per axis (lows default to
    0).  The sample sequence is the full grid in lexicographic order followed
    by ``random_count`` uniform draws; it is a pure function of the fields, so
    reports citing this domain are reproducible.
    """

    highs: tuple
    lows: tuple = ()
    grid_per_axis: int = 8
    random_count: int = 1000
    seed: int = 42

    def __post_init__(self):
        highs = tuple(float(b) for b in self.highs)
        lows = tuple(float(a) for a in self.lows) if self.lows else (0.0,) * len(highs)
        if len(lows) != len(highs):
            raise ValueError("lows and highs must have matching lengths")
        if any(a < 0 for a in lows) or any(b <= a for a, b in zip(lows, highs)):
            raise ValueError("need 0 <= low < high per axis")
        if self.grid_per_axis < 2:
            raise ValueError("grid_per_axis must be at least 2")
        if self.random_count < 0:
            raise ValueError("random_count must be nonnegative")
        object.__setattr__(self, "highs", highs)
        object.__setattr__(self, "lows", lows)

    @classmethod
    def cube(cls, n: int, high: float = 10.0, low: float = 0.0, **kw) -> "SampleDomain":
        return cls(highs=(high,) * n, lows=(low,) * n, **kw)

    @property
    def n(self) -> int:
        return len(self.highs)

    def _effective_grid(self) -> int:
        g = self.grid_per_axis
        while g > 2 and g ** self.n > _GRID_CAP:
            g -= 1
        return g

    def _axes(self):
        g = self._effective_grid()
        return [np.linspace(a, b, g) for a, b in zip(self.lows, self.highs)]

    def points(self, n: int) -> np.ndarray:
        """Grid points (lexicographic) followed by seeded random points."""
        if n != self.n:
            raise ValueError(f"domain is {self.n}-dimensional, model needs {n}")
        grid = np.stack(np.meshgrid(*self._axes(), indexing="ij"), axis=-1)
        grid = grid.reshape(-1, self.n)
        rng = np.random.default_rng(self.seed)
        lo = np.array(self.lows)
        hi = np.array(self.highs)
        rand = lo + (hi - lo) * rng.random((self.random_count, self.n))
        return np.vstack([grid, rand])

    def face_points(self, n: int, face: int) -> np.ndarray:
        """The same sampling restricted to the boundary face ``x_face = 0``."""
        if n != self.n:
            raise ValueError(f"domain is {self.n}-dimensional, model needs {n}")
        axes = self._axes()
        axes[face] = np.zeros(1)
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        rng = np.random.default_rng(self.seed + 1 + face)
        lo = np.array(self.lows)
        hi = np.array(self.highs)
        rand = lo + (hi - lo) * rng.random((self.random_count, self.n))
        rand[:, face] = 0.0
        return np.vstack([grid, rand])

    def describe(self) -> dict:
        return {
            "lows": list(self.lows),
            "highs": list(self.highs),
            "grid_per_axis": self._effective_grid(),
            "random_count": self.random_count,
            "seed": self.seed,
        }


@dataclass
class CheckRecord:
    """Outcome of one check: verdict plus replayable counterexamples."""

    check_id: str
    label: str
    verdict: str  # pass | fail | not-checked
    samples: int = 0
    counterexamples: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def add_counterexample(self, **ce):
        if len(self.counterexamples) < _MAX_STORED_COUNTEREXAMPLES:
            self.counterexamples.append(ce)
        self.detail["violations"] = self.detail.get("violations", 0) + 1
        self.verdict = "fail"


@dataclass
class VerificationReport:
    model: str
    domain: dict
    beta_m: Optional[float]
    betas: list
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.verdict == "pass" for c in self.checks)

    def check(self, check_id: str) -> CheckRecord:
        for c in self.checks:
            if c.check_id == check_id:
                return c
        raise KeyError(check_id)


def _record_eval_failure(rec: CheckRecord, x, err: EvaluationError):
    rec.add_counterexample(x=list(map(float, x)), quantity="evaluation",
                           value=None, message=str(err))


def check_positivity_boundary(m: SystemModel, d: SampleDomain) -> CheckRecord:
    """Boundary and interior sign conditions (hypothesis H2-1 plus the
    inward-drift face condition ``f_i(x | x_i = 0) >= 0``)."""
    rec = CheckRecord(check_id="H2-1", label="positivity", verdict="pass")
    for face in range(m.n):
        for x in d.face_points(m.n, face):
            rec.samples += 1
            try:
                fi = float(m.f(x)[face])
                psi = float(m.psi(x))
            except EvaluationError as err:
                _record_eval_failure(rec, x, err)
                continue
            if fi < -SIGN_TOL:
                rec.add_counterexample(x=list(map(float, x)), face=face,
                                       quantity="f_face", value=fi)
            cpsi = float(m.c[face]) * psi
            if cpsi < -SIGN_TOL:
                rec.add_counterexample(x=list(map(float, x)), face=face,
                                       quantity="c_psi_face", value=cpsi)
    interior = 0
    for x in d.points(m.n):
        if np.min(x) <= 0.0:
            continue
        interior += 1
        rec.samples += 1
        try:
            psi = float(m.psi(x))
        except EvaluationError as err:
            _record_eval_failure(rec, x, err)
            continue
        if psi <= 0.0:
            rec.add_counterexample(x=list(map(float, x)), quantity="psi_interior",
                                   value=psi)
    rec.detail["interior_samples"] = interior
    return rec


def check_h2_2(m: SystemModel) -> CheckRecord:
    """Inward drift at the origin: ``f(0) >= 0`` componentwise."""
    rec = CheckRecord(check_id="H2-2", label="origin-drift", verdict="pass", samples=1)
    zero = np.zeros(m.n)
    try:
        f0 = np.asarray(m.f(zero), dtype=float)
    except EvaluationError as err:
        _record_eval_failure(rec, zero, err)
        return rec
    rec.detail["f0"] = [float(v) for v in f0]
    for i, v in enumerate(f0):
        if v < -SIGN_TOL:
            rec.add_counterexample(x=[0.0] * m.n, component=i,
                                   quantity="f_at_origin", value=float(v))
    return rec


def check_cooperativity(m: SystemModel, d: SampleDomain) -> CheckRecord:
    """Metzler Jacobian of ``f`` at every sample of the box."""
    rec = CheckRecord(check_id="H2-3", label="cooperativity", verdict="pass")
    for x in d.points(m.n):
        rec.samples += 1
        try:
            J = m.jacobian(x)
        except EvaluationError as err:
            _record_eval_failure(rec, x, err)
            continue
        if not is_metzler(J, JAC_TOL):
            off = J.copy()
            np.fill_diagonal(off, 0.0)
            i, j = np.unravel_index(np.argmin(off), off.shape)
            rec.add_counterexample(x=list(map(float, x)), i=int(i), j=int(j),
                                   quantity="jacobian_offdiagonal",
                                   value=float(J[i, j]))
    return rec


def check_concavity(m: SystemModel, d: SampleDomain, pair_count: int = 500) -> CheckRecord:
    """Jacobian monotonicity ``x <= y => Df(x) >= Df(y)`` on random ordered pairs."""
    if pair_count < 1:
        raise ValueError("pair_count must be at least 1")
    rec = CheckRecord(check_id="H2-4", label="concavity", verdict="pass")
    rng = np.random.default_rng(d.seed + 1000)
    lo = np.array(d.lows)
    hi = np.array(d.highs)
    for _ in range(pair_count):
        x = lo + (hi - lo) * rng.random(m.n)
        y = x + (hi - x) * rng.random(m.n)  # x <= y, still inside the box
        rec.samples += 1
        try:
            gap = m.jacobian(x) - m.jacobian(y)
        except EvaluationError as err:
            _record_eval_failure(rec, x, err)
            continue
        if np.min(gap) < -JAC_TOL:
            i, j = np.unravel_index(np.argmin(gap), gap.shape)
            rec.add_counterexample(x=list(map(float, x)), y=list(map(float, y)),
                                   i=int(i), j=int(j),
                                   quantity="jacobian_order_gap",
                                   value=float(gap[i, j]))
    return rec


def compute_beta_m(m: SystemModel) -> Optional[float]:
    """Smallest input scale making ``beta*f(0) + c`` strongly positive.

    Componentwise: a positive ``f_i(0)`` contributes ``max(0, -c_i/f_i(0))``;
    a vanishing ``f_i(0)`` needs ``c_i > 0``; a negative ``f_i(0)`` (or a
    vanishing one with ``c_i <= 0``) makes the condition unachievable and the
    result is ``None`` (infeasible).  For every ``beta`` strictly above the
    returned value all components are strictly positive.
    """
    f0 = np.asarray(m.f(np.zeros(m.n)), dtype=float)
    zero_band = 1e-14
    thresholds = []
    for fi, ci in zip(f0, m.c):
        if fi > zero_band:
            thresholds.append(max(0.0, -float(ci) / float(fi)))
        elif fi >= -zero_band:
            if ci > 0:
                thresholds.append(0.0)
            else:
                return None
        else:
            return None
    return float(max(thresholds))


def check_h2(m: SystemModel, d: Optional[SampleDomain] = None,
             betas: Optional[Sequence[float]] = None,
             pair_count: int = 500) -> VerificationReport:
    """Run all six hypothesis checks and aggregate them into a report.

    ``betas`` (default: two values just above the computed ``beta_m``) are the
    input scales at which the comparison-system equilibrium is solved for the
    H2-6 check; each must exceed ``beta_m``.
    """
    if d is None:
        d = SampleDomain.cube(m.n)
    beta_m = compute_beta_m(m)
    if betas is None:
        betas = [] if beta_m is None else [1.1 * beta_m + 0.1, 2.0 * beta_m + 1.0]
    betas = [float(b) for b in betas]
    if beta_m is not None and any(b <= beta_m for b in betas):
        raise ValueError(f"all betas must exceed beta_m={beta_m}")

    checks = [
        check_positivity_boundary(m, d),
        check_h2_2(m),
        check_cooperativity(m, d),
        check_concavity(m, d, pair_count),
    ]

    rec5 = CheckRecord(check_id="H2-5", label="input-threshold", verdict="pass",
                       samples=1)
    if beta_m is None:
        rec5.add_counterexample(x=[0.0] * m.n, quantity="beta_m",
                                value=None, message="infeasible")
    else:
        rec5.detail["beta_m"] = beta_m
    checks.append(rec5)

    rec6 = CheckRecord(check_id="H2-6", label="interior-equilibrium",
                       verdict="pass" if beta_m is not None else "not-checked")
    for beta in betas if beta_m is not None else []:
        rec6.samples += 1
        try:
            res = eq.solve_constant_input(m, beta)
        except ConvergenceError as err:
            rec6.add_counterexample(x=[], beta=beta, quantity="newton_residual",
                                    value=err.best_residual, message=str(err))
            continue
        rec6.detail.setdefault("equilibria", []).append(
            {"beta": beta, "x_star": [float(v) for v in res.x_star],
             "residual": res.residual})
        if float(np.min(res.x_star)) <= 1e-9:
            rec6.add_counterexample(x=[float(v) for v in res.x_star], beta=beta,
                                    quantity="min_component",
                                    value=float(np.min(res.x_star)))
    checks.append(rec6)

    return VerificationReport(model=m.name, domain=d.describe(), beta_m=beta_m,
                              betas=betas, checks=checks)


def check_order_preservation(m: SystemModel, beta: float, x0, y0, T: float,
                             samples: int = 200) -> CheckRecord:
    """Order preservation of the cooperative comparison field ``beta*f + c``:
    from ordered initial states ``x0 <= y0`` the order persists,
    ``x(t) <= y(t)``, at ``samples`` equally spaced times in ``[0, T]``."""
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if np.any(x0 > y0):
        raise ValueError("need x0 <= y0 componentwise")
    if samples < 2:
        raise ValueError("samples must be at least 2")
    rec = CheckRecord(check_id="order", label="order-preservation", verdict="pass")
    cfg = resume_config(default_config(m), dt_out=T / (samples - 1))
    sc = ConstantInput(beta)
    try:
        tr_x = integrate(m, sc, x0, 0.0, T, cfg)
        tr_y = integrate(m, sc, y0, 0.0, T, cfg)
    except IntegrationError as err:
        rec.add_counterexample(x=list(map(float, x0)), quantity="integration",
                               value=None, message=str(err))
        return rec
    rec.samples = tr_x.times.size
    gap = tr_x.states - tr_y.states
    worst = float(np.max(gap))
    rec.detail["max_order_gap"] = worst
    if worst > ORDER_TOL:
        k, i = np.unravel_index(np.argmax(gap), gap.shape)
        rec.add_counterexample(x=list(map(float, tr_x.states[k])),
                               y=list(map(float, tr_y.states[k])),
                               t=float(tr_x.times[k]), component=int(i),
                               quantity="order_gap", value=worst)
    return rec


def gas_evidence(m: SystemModel, sc, ic_count: int, d: SampleDomain, T: float,
                 tol: float, conv_tol: float = 1e-6,
                 window: float = 10.0) -> CheckRecord:
    """Convergence evidence: a fan of strongly positive initial conditions all
    reach the same limit.

    Each trajectory must settle (``detect_convergence`` with ``conv_tol`` over
    the trailing ``window``) and all limits must agree within ``tol``.  The
    record's detail carries the deduplicated limits, so a failure distinguishes
    genuine multistability (several limits) from non-convergence.
    """
    if ic_count < 1:
        raise ValueError("ic_count must be at least 1")
    pts = [p for p in d.points(m.n) if np.min(p) > 0.0]
    if len(pts) < ic_count:
        raise ValueError(f"domain yields only {len(pts)} strongly positive points")
    rec = CheckRecord(check_id="gas", label="gas-evidence", verdict="pass")
    limits = []
    for x0 in pts[:ic_count]:
        rec.samples += 1
        try:
            tr = integrate(m, sc, x0, 0.0, T)
        except IntegrationError as err:
            rec.add_counterexample(x=list(map(float, x0)), quantity="integration",
                                   value=None, message=str(err))
            continue
        limit = detect_convergence(tr, conv_tol, window)
        if limit is None:
            rec.add_counterexample(x=list(map(float, x0)),
                                   quantity="no_convergence", value=None)
            continue
        limits.append((x0, limit))

    distinct = []  # (first initial condition, limit) per cluster
    for x0, limit in limits:
        if all(float(np.max(np.abs(limit - other))) > tol for _, other in distinct):
            distinct.append((x0, limit))
    rec.detail["converged"] = len(limits)
    rec.detail["distinct_limits"] = [[float(v) for v in lim] for _, lim in distinct]
    if len(distinct) > 1:
        for x0, limit in distinct:
            rec.add_counterexample(x=list(map(float, x0)), quantity="limit",
                                   value=[float(v) for v in limit])
    elif len(distinct) == 1 and rec.verdict == "pass":
        rec.detail["common_limit"] = [float(v) for v in distinct[0][1]]
    return rec
