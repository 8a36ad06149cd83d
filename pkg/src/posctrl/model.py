"""System models of the form ``xdot = u*f(x) + c*psi(x)``.

A :class:`SystemModel` bundles the drift field ``f`` (with Jacobian), the
constant direction vector ``c``, and the scalar measured output ``psi``.
Three builtin models ship with the package:

``S1``
    Continuous stirred-tank bioreactor with substrate-inhibited (Haldane)
    growth: substrate ``x1`` is consumed by biomass ``x2``; the dilution rate
    is the input and the gas outflow ``mu(x1)*x2`` is the measured output.
    Bistable in open loop for intermediate constant dilution rates.
``S2``
    Three-stage metabolic chain with saturating (Monod) transfer rates and a
    steep inhibition of the inflow by the last product (Hill exponent 80).
    Possesses an attractive limit cycle in open loop at unit input.
``S3``
    Cubic autocatalator in concentration coordinates; chaotic in open loop at
    unit input for the bundled rate constants.

Builtins use hand-written native evaluators and Jacobians, so they double as
oracles for the expression parser/differentiator.  All models are immutable
and all evaluations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

__all__ = [
    "SystemModel",
    "Scenario",
    "ConstantInput",
    "builtin",
    "builtin_names",
    "rhs_open_loop",
    "rhs_constant_input",
    "rhs_closed_loop",
    "scenario_rhs",
    "scenario_jacobian",
]


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Immutable model ``xdot = u*f(x) + c*psi(x)`` on the positive orthant.

    ``f``/``psi`` evaluators take a length-``n`` array; ``jac_f`` returns the
    ``n x n`` Jacobian of ``f`` (pass ``None`` to fall back to central finite
    differences).  ``kernel_id`` marks models with a compiled fast path.
    """

    name: str
    n: int
    c: np.ndarray
    params: Mapping[str, float]
    f: Callable[[np.ndarray], np.ndarray]
    jac_f: Optional[Callable[[np.ndarray], np.ndarray]]
    psi: Callable[[np.ndarray], float]
    grad_psi: Optional[Callable[[np.ndarray], np.ndarray]]
    f_exprs: Optional[tuple] = None
    psi_expr: Optional[object] = None
    kernel_id: Optional[int] = None
    kernel_params: Optional[np.ndarray] = field(default=None, repr=False)

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jac_f is not None:
            return np.asarray(self.jac_f(x), dtype=float)
        from .expr import fd_jacobian

        return fd_jacobian(self.f, x)

    def psi_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad_psi is not None:
            return np.asarray(self.grad_psi(x), dtype=float)
        from .expr import fd_jacobian

        return fd_jacobian(lambda y: np.array([self.psi(y)]), x)[0]


@dataclass(frozen=True)
class Scenario:
    """Input schedule: constant input, output feedback, or a switch between them.

    ``open_loop(u)`` applies the constant input ``u >= 0``; ``closed_loop(gamma)``
    applies the feedback ``u = gamma * psi(x)``; ``switched(u, gamma, t_switch)``
    runs open loop until ``t_switch`` and closed loop afterwards.
    """

    mode: str
    u: Optional[float] = None
    gamma: Optional[float] = None
    t_switch: Optional[float] = None

    @classmethod
    def open_loop(cls, u: float) -> "Scenario":
        if u < 0:
            raise ValueError("open-loop input u must be nonnegative")
        return cls(mode="open_loop", u=float(u))

    @classmethod
    def closed_loop(cls, gamma: float) -> "Scenario":
        return cls(mode="closed_loop", gamma=float(gamma))

    @classmethod
    def switched(cls, u: float, gamma: float, t_switch: float) -> "Scenario":
        if u < 0:
            raise ValueError("open-loop input u must be nonnegative")
        if t_switch < 0:
            raise ValueError("t_switch must be nonnegative")
        return cls(mode="switched", u=float(u), gamma=float(gamma),
                   t_switch=float(t_switch))

    def describe(self) -> dict:
        if self.mode == "open_loop":
            return {"mode": "open_loop", "u": self.u}
        if self.mode == "closed_loop":
            return {"mode": "closed_loop", "gamma": self.gamma}
        return {"mode": "switched", "u": self.u, "gamma": self.gamma,
                "t_switch": self.t_switch}


@dataclass(frozen=True)
class ConstantInput:
    """Auxiliary schedule integrating ``xdot = beta*f(x) + c``.

    This is the comparison field used by the theory-side checks (order
    preservation, equilibrium existence); it is not reachable through the
    physical input ``u``.
    """

    beta: float

    def describe(self) -> dict:
        return {"mode": "constant_input", "beta": self.beta}


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------

def rhs_open_loop(m: SystemModel, u: float, x) -> np.ndarray:
    """``u*f(x) + c*psi(x)`` for a constant input ``u >= 0``."""
    if u < 0:
        raise ValueError("input u must be nonnegative")
    x = np.asarray(x, dtype=float)
    return u * m.f(x) + m.c * m.psi(x)


def rhs_constant_input(m: SystemModel, beta: float, x) -> np.ndarray:
    """``beta*f(x) + c`` (the comparison field, see :class:`ConstantInput`)."""
    x = np.asarray(x, dtype=float)
    return beta * m.f(x) + m.c


def rhs_closed_loop(m: SystemModel, gamma: float, x) -> np.ndarray:
    """``psi(x) * (gamma*f(x) + c)``: feedback ``u = gamma*psi(x)`` applied."""
    x = np.asarray(x, dtype=float)
    return m.psi(x) * (gamma * m.f(x) + m.c)


# field modes shared with the stepping kernels
MODE_OPEN = 0
MODE_CONST = 1
MODE_CLOSED = 2


def field_mode(sc) -> tuple:
    """Map a (non-switched) scenario to a ``(mode, coefficient)`` pair."""
    if isinstance(sc, ConstantInput):
        return MODE_CONST, sc.beta
    if sc.mode == "open_loop":
        return MODE_OPEN, sc.u
    if sc.mode == "closed_loop":
        return MODE_CLOSED, sc.gamma
    raise ValueError(f"scenario mode {sc.mode!r} does not define a single field")


def mode_rhs(m: SystemModel, mode: int, coef: float) -> Callable:
    if mode == MODE_OPEN:
        return lambda x: coef * m.f(x) + m.c * m.psi(x)
    if mode == MODE_CONST:
        return lambda x: coef * m.f(x) + m.c
    return lambda x: m.psi(x) * (coef * m.f(x) + m.c)


def scenario_rhs(m: SystemModel, sc) -> Callable:
    """Right-hand-side closure for a non-switched scenario."""
    mode, coef = field_mode(sc)
    return mode_rhs(m, mode, coef)


def scenario_jacobian(m: SystemModel, sc, x) -> np.ndarray:
    """Jacobian of the scenario field at ``x``.

    Switched scenarios use the post-switch (closed-loop) field, which is the
    one governing asymptotic behavior.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(sc, ConstantInput):
        return sc.beta * m.jacobian(x)
    mode = sc.mode
    if mode == "open_loop":
        return sc.u * m.jacobian(x) + np.outer(m.c, m.psi_gradient(x))
    gamma = sc.gamma
    h = gamma * m.f(x) + m.c
    return m.psi(x) * gamma * m.jacobian(x) + np.outer(h, m.psi_gradient(x))


# ---------------------------------------------------------------------------
# Builtin models
# ---------------------------------------------------------------------------

# parameter packing order for the compiled kernels, keyed by kernel id
KERNEL_PARAM_ORDER = {
    1: ("mu_m", "K_m", "K_i", "k", "x1_in"),
    2: ("l", "mu1", "mu2", "k1", "k2", "alpha1", "alpha2", "n_exp"),
    3: ("k1", "k2", "k3", "k4"),
}


def _ipow(base: float, n: int) -> float:
    # binary exponentiation; keeps native psi evaluation consistent with the
    # expression evaluator and the compiled kernels
    if n < 0:
        return 1.0 / _ipow(base, -n)
    result = 1.0
    while n:
        if n & 1:
            result *= base
        base *= base
        n >>= 1
    return result


def _make_s1(params: dict) -> SystemModel:
    mu_m, K_m, K_i = params["mu_m"], params["K_m"], params["K_i"]
    k, x1_in = params["k"], params["x1_in"]

    def mu(x1: float) -> float:
        return mu_m * x1 / (K_m + x1 + x1 * x1 / K_i)

    def f(x):
        return np.array([x1_in - x[0], -x[1]])

    def jac_f(x):
        return np.array([[-1.0, 0.0], [0.0, -1.0]])

    def psi(x):
        return mu(x[0]) * x[1]

    def grad_psi(x):
        d = K_m + x[0] + x[0] * x[0] / K_i
        mu_prime = mu_m * (K_m - x[0] * x[0] / K_i) / (d * d)
        return np.array([mu_prime * x[1], mu(x[0])])

    return SystemModel(
        name="S1", n=2, c=np.array([-k, 1.0]), params=params,
        f=f, jac_f=jac_f, psi=psi, grad_psi=grad_psi,
        kernel_id=1,
        kernel_params=np.array([params[p] for p in KERNEL_PARAM_ORDER[1]]),
    )


def _make_s2(params: dict) -> SystemModel:
    l, mu1, mu2 = params["l"], params["mu1"], params["mu2"]
    k1, k2 = params["k1"], params["k2"]
    alpha1, alpha2 = params["alpha1"], params["alpha2"]
    n_exp = params["n_exp"]
    if n_exp != int(n_exp):
        raise ValueError("S2 Hill exponent must be an integer")
    n_exp = int(n_exp)

    def f(x):
        return np.array([
            -l * x[0],
            mu1 * x[0] / (k1 + x[0]) - x[1] + alpha1,
            mu2 * x[1] / (k2 + x[1]) - x[2] + alpha2,
        ])

    def jac_f(x):
        d1 = k1 + x[0]
        d2 = k2 + x[1]
        return np.array([
            [-l, 0.0, 0.0],
            [mu1 * k1 / (d1 * d1), -1.0, 0.0],
            [0.0, mu2 * k2 / (d2 * d2), -1.0],
        ])

    def psi(x):
        return 1.0 / (1.0 + _ipow(x[2], n_exp))

    def grad_psi(x):
        w = 1.0 + _ipow(x[2], n_exp)
        return np.array([0.0, 0.0, -n_exp * _ipow(x[2], n_exp - 1) / (w * w)])

    return SystemModel(
        name="S2", n=3, c=np.array([1.0, 0.0, 0.0]), params=params,
        f=f, jac_f=jac_f, psi=psi, grad_psi=grad_psi,
        kernel_id=2,
        kernel_params=np.array([params[p] for p in KERNEL_PARAM_ORDER[2]]),
    )


def _make_s3(params: dict) -> SystemModel:
    k1, k2, k3, k4 = params["k1"], params["k2"], params["k3"], params["k4"]
    A = np.array([
        [-1.0, 0.0, k2],
        [1.0 / k1, -1.0 / k1, 0.0],
        [0.0, 1.0, -1.0],
    ])
    b = np.array([k2 * (k3 - k4), 0.0, k4])

    def f(x):
        return A @ x + b

    def jac_f(x):
        return A.copy()

    def psi(x):
        return x[0] * x[1] * x[1]

    def grad_psi(x):
        return np.array([x[1] * x[1], 2.0 * x[0] * x[1], 0.0])

    return SystemModel(
        name="S3", n=3, c=np.array([-1.0, 1.0 / k1, 0.0]), params=params,
        f=f, jac_f=jac_f, psi=psi, grad_psi=grad_psi,
        kernel_id=3,
        kernel_params=np.array([params[p] for p in KERNEL_PARAM_ORDER[3]]),
    )


# Parameter values are written as the exact arithmetic they come from
# (fractions evaluated once, in double precision, at import).
_S1_DEFAULTS = {"mu_m": 1.0, "K_m": 1.0, "K_i": 1.0, "k": 1.0, "x1_in": 5.0}
_S2_DEFAULTS = {
    "l": 2.1,
    "mu1": 2 / 2.1,
    "mu2": 4 * (0.01 + 1 / 2.1),
    "k1": 1 / 4.2,
    "k2": 0.01 + 1 / 2.1,
    "alpha1": 0.01,
    "alpha2": 1 - 2 * (0.01 + 1 / 2.1),
    "n_exp": 80.0,
}
_S3_DEFAULTS = {"k1": 0.015, "k2": 0.301, "k3": 2.5, "k4": 0.56}

_BUILDERS = {"S1": (_make_s1, _S1_DEFAULTS), "S2": (_make_s2, _S2_DEFAULTS),
             "S3": (_make_s3, _S3_DEFAULTS)}


def builtin_names() -> tuple:
    return tuple(_BUILDERS)


def builtin(name: str, **overrides) -> SystemModel:
    """Return a builtin model (``S1``, ``S2`` or ``S3``) with default parameters.

    Keyword overrides replace individual parameter values; overridden models
    keep their native evaluators (parameters are read at construction).
    """
    try:
        make, defaults = _BUILDERS[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; builtins are {', '.join(_BUILDERS)}"
        ) from None
    params = dict(defaults)
    unknown = set(overrides) - set(params)
    if unknown:
        raise ValueError(f"unknown parameter(s) {sorted(unknown)} for {name}")
    params.update({key: float(value) for key, value in overrides.items()})
    return make(params)
