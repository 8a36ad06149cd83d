"""Trajectory integration and signal analysis.

Integration runs open-loop, closed-loop, switched, and constant-input
schedules with either classical fixed-step RK4 or an adaptive 5(4)
Runge-Kutta pair, producing dense output on a fixed grid.  On top of
trajectories sit convergence detection, local-maximum (peak) extraction for
limit-cycle characterization, and a two-trajectory largest-Lyapunov-exponent
estimator for chaos detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _core, _kernels_py
from .errors import IntegrationError, NonFiniteStateError
from .model import (
    MODE_CLOSED,
    MODE_OPEN,
    ConstantInput,
    Scenario,
    SystemModel,
    field_mode,
    mode_rhs,
)

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "default_config",
    "integrate",
    "detect_convergence",
    "largest_lyapunov_exponent",
    "peak_amplitudes",
]


@dataclass(frozen=True)
class IntegratorConfig:
    """Step-control settings.

    ``method`` is ``"adaptive_rk45"`` (Dormand-Prince 5(4) pair) or
    ``"fixed_rk4"`` (classical RK4 with step ``h``).  Dense output is written
    every ``dt_out`` time units regardless of the internal steps.
    """

    method: str = "adaptive_rk45"
    h: float = 0.01
    rtol: float = 1e-8
    atol: float = 1e-10
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = math.inf
    dt_out: float = 0.05

    def __post_init__(self):
        if self.method not in ("adaptive_rk45", "fixed_rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0 or self.h <= 0 or self.dt_out <= 0:
            raise ValueError("tolerances and steps must be positive")
        if self.h_min > self.h_max:
            raise ValueError("h_min must not exceed h_max")


def default_config(m: Optional[SystemModel] = None) -> IntegratorConfig:
    """Default adaptive settings; S2's steep inhibition term (Hill exponent 80)
    gets a tighter tolerance and a step cap for reproducible oscillation phase."""
    if m is not None and m.name == "S2":
        return IntegratorConfig(rtol=1e-9, h_max=0.05)
    return IntegratorConfig()


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense-output trajectory with the realized input per output time.

    Trajectories produced by :func:`integrate` from a nonnegative initial
    state additionally satisfy ``states >= -1e-7`` (the integration kernels
    clamp round-off-level negatives and error out beyond that); hand-built
    instances, e.g. for signal analysis, carry no such restriction.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    scenario: object
    model: str
    steps: int = 0
    rejected: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or s.ndim != 2 or s.shape[0] != t.size:
            raise ValueError("times and states shapes disagree")
        if t.size >= 2 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(s)):
            raise ValueError("states must be finite")

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


def _output_grid(t0: float, t1: float, dt_out: float) -> np.ndarray:
    k_max = int(math.floor((t1 - t0) / dt_out + 1e-9))
    grid = t0 + dt_out * np.arange(k_max + 1)
    grid = grid[grid <= t1 + 1e-12 * max(1.0, abs(t1))]
    grid[-1] = min(grid[-1], t1)
    if t1 - grid[-1] > 1e-9 * dt_out:
        grid = np.append(grid, t1)
    return grid


def _run_span(m: SystemModel, mode: int, coef: float, x0, t0, t1, cfg, out_times):
    """Integrate one single-field span, dispatching to the active backend."""
    if _core.use_compiled(m):
        kern = _core._kernels
        if cfg.method == "fixed_rk4":
            return kern.rk4_span(m.kernel_id, m.kernel_params, mode, coef,
                                 np.asarray(x0, dtype=float), t0, t1, cfg.h,
                                 np.asarray(out_times, dtype=float))
        return kern.dopri5_span(m.kernel_id, m.kernel_params, mode, coef,
                                np.asarray(x0, dtype=float), t0, t1,
                                cfg.rtol, cfg.atol, cfg.h_init, cfg.h_min,
                                cfg.h_max, np.asarray(out_times, dtype=float))
    field = mode_rhs(m, mode, coef)
    if cfg.method == "fixed_rk4":
        return _kernels_py.rk4_span(field, x0, t0, t1, cfg.h, out_times)
    return _kernels_py.dopri5_span(field, x0, t0, t1, cfg.rtol, cfg.atol,
                                   cfg.h_init, cfg.h_min, cfg.h_max, out_times)


def _validate_x0(m: SystemModel, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (m.n,):
        raise ValueError(f"initial state must have length {m.n}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    if x0.min() < 0:
        raise ValueError("initial state must be nonnegative")
    return x0


def integrate(m: SystemModel, sc, x0, t0: float, t1: float,
              cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    """Integrate scenario ``sc`` from ``x0`` over ``[t0, t1]``.

    ``sc`` is a :class:`Scenario` or :class:`ConstantInput`.  Switched
    scenarios land exactly on the switching time: the open-loop phase is
    integrated to ``t_switch`` and the closed-loop phase continues from the
    identical state.  Output is written at ``t0 + k*dt_out`` (plus ``t1``).
    """
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    x0 = _validate_x0(m, x0)
    if cfg is None:
        cfg = default_config(m)
    grid = _output_grid(t0, t1, cfg.dt_out)

    if isinstance(sc, Scenario) and sc.mode == "switched" and t0 < sc.t_switch < t1:
        ts = sc.t_switch
        head = grid[grid < ts]
        tail = grid[grid >= ts]
        states1, x_mid, st1, rj1 = _run_span(m, MODE_OPEN, sc.u, x0, t0, ts, cfg, head)
        states2, x_end, st2, rj2 = _run_span(m, MODE_CLOSED, sc.gamma, x_mid, ts, t1,
                                             cfg, tail)
        states = np.vstack([states1, states2])
        steps, rejected = st1 + st2, rj1 + rj2
    else:
        if isinstance(sc, Scenario) and sc.mode == "switched":
            # switch outside (t0, t1): a single phase covers the whole span
            mode, coef = ((MODE_CLOSED, sc.gamma) if sc.t_switch <= t0
                          else (MODE_OPEN, sc.u))
        else:
            mode, coef = field_mode(sc)
        states, _, steps, rejected = _run_span(m, mode, coef, x0, t0, t1, cfg, grid)

    inputs = _realized_inputs(m, sc, grid, states)
    return Trajectory(times=grid, states=states, inputs=inputs, scenario=sc,
                      model=m.name, steps=steps, rejected=rejected)


def _realized_inputs(m: SystemModel, sc, times: np.ndarray, states: np.ndarray):
    if isinstance(sc, ConstantInput):
        return np.full(times.size, sc.beta)
    if sc.mode == "open_loop":
        return np.full(times.size, sc.u)
    psi_vals = np.array([m.psi(s) for s in states])
    if sc.mode == "closed_loop":
        return sc.gamma * psi_vals
    return np.where(times < sc.t_switch, sc.u, sc.gamma * psi_vals)


def detect_convergence(tr: Trajectory, tol: float, window: float):
    """Final state if the trajectory stayed within ``tol`` (infinity norm) of it
    over the trailing ``window`` time units, else ``None``."""
    if not window < tr.duration:
        raise ValueError("window must be shorter than the trajectory")
    t_end = tr.times[-1]
    x_end = tr.states[-1]
    mask = tr.times >= t_end - window
    dev = float(np.max(np.abs(tr.states[mask] - x_end)))
    if dev <= tol:
        return x_end.copy()
    return None


def largest_lyapunov_exponent(m: SystemModel, sc, x0, t_transient: float,
                              t_measure: float, renorm_dt: float,
                              delta0: float = 1e-8,
                              cfg: Optional[IntegratorConfig] = None) -> float:
    """Largest Lyapunov exponent by the two-trajectory (companion) method.

    After discarding ``t_transient``, a companion state offset by ``delta0``
    (infinity norm) is co-integrated; every ``renorm_dt`` the log separation
    growth is recorded and the offset is rescaled to ``delta0`` along the
    current separation direction.  Returns the mean log growth rate per unit
    time.  Positive values indicate sensitive dependence on initial
    conditions; for a trajectory contracting to a hyperbolic equilibrium the
    estimate approaches the leading eigenvalue real part.
    """
    if isinstance(sc, Scenario) and sc.mode == "switched":
        raise ValueError("Lyapunov estimation needs a single-field scenario")
    if t_measure <= 0 or renorm_dt <= 0:
        raise ValueError("t_measure and renorm_dt must be positive")
    x = _validate_x0(m, x0)
    if cfg is None:
        cfg = default_config(m)
    mode, coef = field_mode(sc)
    empty = np.empty(0)

    if t_transient > 0:
        _, x, _, _ = _run_span(m, mode, coef, x, 0.0, t_transient, cfg, empty)
    xc = x + delta0

    segments = max(1, int(round(t_measure / renorm_dt)))
    log_sum = 0.0
    for _ in range(segments):
        _, x, _, _ = _run_span(m, mode, coef, x, 0.0, renorm_dt, cfg, empty)
        _, xc, _, _ = _run_span(m, mode, coef, xc, 0.0, renorm_dt, cfg, empty)
        d = xc - x
        if not np.all(np.isfinite(d)):
            raise NonFiniteStateError("companion trajectory diverged")
        delta = float(np.max(np.abs(d)))
        if delta == 0.0:
            raise IntegrationError("companion trajectory collapsed onto the base")
        log_sum += math.log(delta / delta0)
        xc = x + d * (delta0 / delta)
    return log_sum / (segments * renorm_dt)


def peak_amplitudes(tr: Trajectory, component: int):
    """Local maxima ``(time, value)`` of one state component (0-based index).

    Maxima are found by three-point comparison and sharpened by fitting a
    parabola through the bracketing samples, so peak values are accurate well
    below the output-grid resolution.  Returns an empty list for monotone
    signals.
    """
    if tr.times.size < 3:
        raise ValueError("trajectory needs at least 3 samples")
    v = tr.states[:, component]
    t = tr.times
    peaks = []
    for i in range(1, t.size - 1):
        if v[i] > v[i - 1] and v[i] > v[i + 1]:
            a, b, c = np.polyfit(t[i - 1:i + 2] - t[i], v[i - 1:i + 2], 2)
            if a < 0:
                dt = -b / (2 * a)
                dt = min(max(dt, t[i - 1] - t[i]), t[i + 1] - t[i])
                peaks.append((float(t[i] + dt), float(c - b * b / (4 * a))))
            else:
                peaks.append((float(t[i]), float(v[i])))
    return peaks


def resume_config(cfg: IntegratorConfig, **changes) -> IntegratorConfig:
    """Convenience: a copy of ``cfg`` with fields replaced."""
    return replace(cfg, **changes)
