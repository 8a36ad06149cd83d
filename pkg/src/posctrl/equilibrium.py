"""Equilibrium solving and local stability classification.

Covers the constant-input equation ``beta*f(x) + c = 0`` (whose solution is
also the closed-loop target for gain ``gamma = beta``), multi-start
enumeration of open-loop equilibria ``u*f(x) + c*psi(x) = 0``, closed-form
equilibria for the builtin models S1/S3, a scalar bisection route for S2, and
eigenvalue-based stability verdicts via closed-form spectra for ``n <= 3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import ConvergenceError, EvaluationError
from .metzler import dominant_eigenpair, is_metzler
from .model import (
    Scenario,
    SystemModel,
    rhs_constant_input,
    rhs_open_loop,
    scenario_jacobian,
    scenario_rhs,
)

__all__ = [
    "EquilibriumResult",
    "StabilityRecord",
    "solve_constant_input",
    "closed_loop_equilibrium",
    "s2_x3_fixed_point",
    "enumerate_open_loop_equilibria",
    "classify_stability",
    "s1_equilibrium_formula",
    "s3_equilibrium_formula",
    "s3_gain_matching_input",
]

# residual contract: |defining equation|_inf <= RESIDUAL_CONTRACT * (1 + |c|_inf)
RESIDUAL_CONTRACT = 1e-10
_NEWTON_TARGET = 1e-12
_STEP_TOL = 1e-14
_CLAMP_FLOOR = 1e-12
_DEDUP_RADIUS = 1e-6


@dataclass(frozen=True)
class EquilibriumResult:
    """A solved equilibrium with its defining-equation residual."""

    x_star: np.ndarray
    residual: float
    method: str  # newton | bisection-chain | closed-form
    iterations: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.x_star)):
            raise ValueError("equilibrium must be finite")


def _ninf(v) -> float:
    return float(np.max(np.abs(v)))


def _damped_newton(fun, jac, x0, target, max_iter=100, max_halvings=30,
                   floor=_CLAMP_FLOOR):
    """Damped Newton iteration with positivity clamping.

    Returns ``(x, residual, iterations)`` of the best point reached; the
    caller decides whether the residual meets its contract.  Iterates are
    clamped to ``x >= floor`` so rational/logarithmic fields stay in domain.
    """
    x = np.maximum(np.asarray(x0, dtype=float), floor)
    try:
        fx = fun(x)
    except EvaluationError:
        return x, math.inf, 0
    r = _ninf(fx)
    for it in range(1, max_iter + 1):
        if r <= target:
            return x, r, it - 1
        try:
            step = np.linalg.solve(jac(x), -fx)
        except (np.linalg.LinAlgError, EvaluationError):
            return x, r, it - 1
        lam = 1.0
        x_new = f_new = r_new = None
        for _ in range(max_halvings + 1):
            cand = np.maximum(x + lam * step, floor)
            try:
                f_cand = fun(cand)
                r_cand = _ninf(f_cand)
            except EvaluationError:
                r_cand = math.inf
            if r_cand < r:
                x_new, f_new, r_new = cand, f_cand, r_cand
                break
            lam *= 0.5
        if x_new is None:
            return x, r, it
        small_step = _ninf(x_new - x) < _STEP_TOL * max(1.0, _ninf(x))
        x, fx, r = x_new, f_new, r_new
        if small_step:
            return x, r, it
    return x, r, max_iter


def _snap_axis_zeros(fun, jac, x, r, target):
    """Snap components within 1e-9 of zero onto the boundary, re-polishing the
    remaining components with a few reduced Newton steps, when the overall
    residual does not worsen (boundary equilibria then come out exact)."""
    mask = (x > 0) & (x <= 1e-9)
    if not mask.any():
        return x, r
    cand = np.where(mask, 0.0, x)
    free = ~mask
    try:
        for _ in range(5):
            f_val = fun(cand)
            if _ninf(f_val) <= target:
                break
            J = jac(cand)[np.ix_(free, free)]
            step = np.linalg.solve(J, -f_val[free])
            cand[free] = np.maximum(cand[free] + step, _CLAMP_FLOOR)
        r_cand = _ninf(fun(cand))
    except (np.linalg.LinAlgError, EvaluationError):
        return x, r
    if r_cand <= max(r, target):
        return cand, r_cand
    return x, r


def solve_constant_input(m: SystemModel, beta: float,
                         guess: Optional[np.ndarray] = None) -> EquilibriumResult:
    """Solve ``beta*f(x) + c = 0`` by damped Newton with multi-start fallback.

    The default start is the all-ones vector; on failure, eight deterministic
    restarts scaled by powers of two are tried.  Raises
    :class:`ConvergenceError` with the best residual if no start converges.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")

    def fun(x):
        return rhs_constant_input(m, beta, x)

    def jac(x):
        return beta * m.jacobian(x)

    scale = 1.0 + _ninf(m.c)
    target = _NEWTON_TARGET * scale
    contract = RESIDUAL_CONTRACT * scale
    ones = np.ones(m.n)
    starts = [np.asarray(guess, dtype=float)] if guess is not None else [ones]
    starts += [ones * 2.0 ** j for j in (-3, -2, -1, 1, 2, 3, 4, 5)]

    best = (None, math.inf, 0)
    for x0 in starts:
        x, r, its = _damped_newton(fun, jac, x0, target)
        if r < best[1]:
            best = (x, r, its)
        if r <= contract:
            x, r = _snap_axis_zeros(fun, jac, x, r, target)
            return EquilibriumResult(x_star=x, residual=r, method="newton",
                                     iterations=its)
    raise ConvergenceError(
        f"no equilibrium found for beta={beta} (best residual {best[1]:.3e})",
        best_residual=best[1], best_point=best[0],
    )


def closed_loop_equilibrium(m: SystemModel, gamma: float,
                            guess: Optional[np.ndarray] = None) -> EquilibriumResult:
    """Equilibrium targeted by the feedback ``u = gamma*psi(x)``.

    It satisfies ``f(x*) = -c/gamma``, i.e. the same equation as the
    constant-input equilibrium at ``beta = gamma``; exposed separately so
    reports can name the controlled equilibrium.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return solve_constant_input(m, gamma, guess=guess)


# ---------------------------------------------------------------------------
# Closed forms for the builtin models
# ---------------------------------------------------------------------------

def s1_equilibrium_formula(params: Mapping[str, float], beta: float) -> np.ndarray:
    """Constant-input equilibrium of S1: ``(x1_in - k/beta, 1/beta)``."""
    return np.array([params["x1_in"] - params["k"] / beta, 1.0 / beta])


def s3_equilibrium_formula(params: Mapping[str, float], beta: float) -> np.ndarray:
    """Constant-input equilibrium of S3 (affine drift makes it explicit)."""
    k2, k3, k4 = params["k2"], params["k3"], params["k4"]
    q = 1.0 - k2
    return np.array([
        (beta * k2 * k3 + k2 - 1.0) / (beta * q),
        k2 * k3 / q,
        (k2 * (k3 - k4) + k4) / q,
    ])


def s3_gain_matching_input(params: Mapping[str, float], u_target: float = 1.0) -> float:
    """Feedback gain whose asymptotic input ``gamma*psi(x*)`` equals ``u_target``.

    For S3, ``x2*`` and ``x3*`` do not depend on the gain, so
    ``gamma*x1*(gamma)*x2*^2 = u_target`` is linear in ``gamma``.
    """
    k2, k3 = params["k2"], params["k3"]
    P = k2 * k3
    q = 1.0 - k2
    return q / P + u_target * q ** 3 / P ** 3


# ---------------------------------------------------------------------------
# S2 scalar route
# ---------------------------------------------------------------------------

def s2_x3_fixed_point(params, beta: float, tol: float = 1e-12,
                      max_iter: int = 200) -> EquilibriumResult:
    """Open-loop equilibrium of S2 at input ``u = beta`` via its scalar reduction.

    Eliminating ``x1`` and ``x2`` from ``beta*f(x) + c*psi(x) = 0`` leaves a
    single equation for the last component,

        ``x3 = alpha2 + mu2*(mu1 + alpha1*K) / (mu1 + (alpha1 + k2)*K)``,
        ``K = k1*beta*l*(1 + x3^n) + 1``,

    whose right-hand side decreases in ``x3``, so the root is unique and
    bracketed by ``[0, alpha2 + mu2 + 1]``; bisection runs until the residual
    of the scalar equation is at most ``tol``.  Back-substitution returns the
    full state.  The same point is the constant-input equilibrium at the
    rescaled input ``beta*(1 + x3*^n)`` (the feedback scales the drift by
    ``psi`` at the equilibrium).

    Accepts an S2 :class:`SystemModel` or its parameter mapping.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if isinstance(params, SystemModel):
        params = params.params
    l, mu1, mu2 = params["l"], params["mu1"], params["mu2"]
    k1, k2 = params["k1"], params["k2"]
    alpha1, alpha2 = params["alpha1"], params["alpha2"]
    n_exp = int(params["n_exp"])

    def K_of(x3: float) -> float:
        return k1 * beta * l * (1.0 + x3 ** n_exp) + 1.0

    def G(x3: float) -> float:
        K = K_of(x3)
        return alpha2 + mu2 * (mu1 + alpha1 * K) / (mu1 + (alpha1 + k2) * K) - x3

    lo, hi = 0.0, alpha2 + mu2 + 1.0
    g_lo, g_hi = G(lo), G(hi)
    if not (g_lo > 0.0 and g_hi < 0.0):
        raise ConvergenceError(
            f"bisection bracket endpoints have equal sign (G(0)={g_lo:.3g}, "
            f"G({hi:.3g})={g_hi:.3g}); parameters outside the supported regime"
        )
    mid = 0.5 * (lo + hi)
    g_mid = G(mid)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        g_mid = G(mid)
        if abs(g_mid) <= tol:
            break
        if g_mid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * max(1.0, mid):
            break
    if abs(g_mid) > tol:
        raise ConvergenceError(
            f"bisection stalled with |G|={abs(g_mid):.3e} > {tol}",
            best_residual=abs(g_mid),
        )

    x3 = mid
    K = K_of(x3)
    x1 = 1.0 / (beta * l * (1.0 + x3 ** n_exp))
    x2 = mu1 / K + alpha1
    x = np.array([x1, x2, x3])
    # residual of the full open-loop system at u = beta
    psi = 1.0 / (1.0 + x3 ** n_exp)
    res = np.array([
        -beta * l * x1 + psi,
        beta * (mu1 * x1 / (k1 + x1) - x2 + alpha1),
        beta * (mu2 * x2 / (k2 + x2) - x3 + alpha2),
    ])
    return EquilibriumResult(x_star=x, residual=_ninf(res),
                             method="bisection-chain", iterations=iterations)


# ---------------------------------------------------------------------------
# Open-loop enumeration
# ---------------------------------------------------------------------------

def enumerate_open_loop_equilibria(m: SystemModel, u: float, domain,
                                   starts: int = 100) -> list:
    """All equilibria of ``u*f(x) + c*psi(x)`` found from multi-start Newton.

    Starting points are the first ``starts`` entries of ``domain``'s
    deterministic sample sequence (grid then seeded random; see
    :class:`posctrl.verify.SampleDomain`).  Converged roots in the closed
    positive orthant are deduplicated (infinity distance below 1e-6) and
    returned sorted lexicographically.  The list may be empty.
    """
    if starts < 1:
        raise ValueError("starts must be at least 1")
    if u < 0:
        raise ValueError("u must be nonnegative")

    def fun(x):
        return rhs_open_loop(m, u, x)

    def jac(x):
        return u * m.jacobian(x) + np.outer(m.c, m.psi_gradient(x))

    scale = 1.0 + _ninf(m.c)
    target = _NEWTON_TARGET * scale
    contract = RESIDUAL_CONTRACT * scale

    points = domain.points(m.n)[:starts]
    found = []
    for x0 in points:
        x, r, its = _damped_newton(fun, jac, x0, target)
        if r <= contract:
            x, r = _snap_axis_zeros(fun, jac, x, r, target)
            found.append(EquilibriumResult(x_star=x, residual=r, method="newton",
                                           iterations=its))
    found.sort(key=lambda res: tuple(res.x_star))
    unique = []
    for res in found:
        if all(_ninf(res.x_star - kept.x_star) >= _DEDUP_RADIUS for kept in unique):
            unique.append(res)
    return unique


# ---------------------------------------------------------------------------
# Stability classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityRecord:
    max_real_part: float
    verdict: str  # stable | unstable | marginal | not-classifiable
    eigenvalues: tuple


def _cbrt(x: float) -> float:
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def _cubic_roots(a2: float, a1: float, a0: float):
    """Roots of ``x^3 + a2 x^2 + a1 x + a0`` without forming a companion matrix."""
    shift = a2 / 3.0
    p = a1 - a2 * a2 / 3.0
    q = 2.0 * a2 ** 3 / 27.0 - a2 * a1 / 3.0 + a0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0.0:
        s = math.sqrt(disc)
        uu = _cbrt(-q / 2.0 + s)
        vv = _cbrt(-q / 2.0 - s)
        t1 = uu + vv
        re = -t1 / 2.0
        im = math.sqrt(3.0) / 2.0 * abs(uu - vv)
        roots = (t1, complex(re, im), complex(re, -im))
    elif p == 0.0:
        r = _cbrt(-q)
        roots = (r, r, r)
    else:
        rho = math.sqrt(-p / 3.0)
        arg = min(1.0, max(-1.0, -q / (2.0 * rho ** 3)))
        theta = math.acos(arg)
        roots = tuple(2.0 * rho * math.cos((theta - 2.0 * math.pi * k) / 3.0)
                      for k in range(3))
    return tuple(r - shift for r in roots)


def _spectrum_closed_form(J: np.ndarray):
    n = J.shape[0]
    if n == 1:
        return (complex(J[0, 0]),)
    if n == 2:
        tr = J[0, 0] + J[1, 1]
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        disc = complex(tr * tr - 4.0 * det) ** 0.5
        return ((tr + disc) / 2.0, (tr - disc) / 2.0)
    # n == 3: characteristic polynomial lambda^3 + a2 l^2 + a1 l + a0
    tr = float(np.trace(J))
    minors = (
        J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1]
        + J[0, 0] * J[2, 2] - J[0, 2] * J[2, 0]
        + J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    )
    det = float(np.linalg.det(J))
    return tuple(complex(r) for r in _cubic_roots(-tr, float(minors), -det))


def classify_stability(m: SystemModel, sc, x_star, resid_tol: float = 1e-8,
                       margin: float = 1e-7) -> StabilityRecord:
    """Local stability of an equilibrium of the scenario field.

    The spectrum comes from closed-form characteristic-polynomial roots for
    ``n <= 3``; for larger systems a Metzler Jacobian falls back to the
    dominant-eigenpair bound and anything else is reported not-classifiable.
    Switched scenarios are classified against their post-switch (closed-loop)
    field.  Raises ``ValueError`` when ``x_star`` is not an equilibrium of
    that field to within ``resid_tol``.
    """
    x_star = np.asarray(x_star, dtype=float)
    field_sc = sc
    if isinstance(sc, Scenario) and sc.mode == "switched":
        field_sc = Scenario.closed_loop(sc.gamma)
    resid = _ninf(scenario_rhs(m, field_sc)(x_star))
    if resid > resid_tol:
        raise ValueError(
            f"x_star is not an equilibrium of the scenario field "
            f"(residual {resid:.3e} > {resid_tol})"
        )
    J = scenario_jacobian(m, field_sc, x_star)
    if m.n <= 3:
        eigs = _spectrum_closed_form(J)
        max_re = max(ev.real for ev in eigs)
    elif is_metzler(J, 1e-9):
        pair = dominant_eigenpair(J)
        eigs = (complex(pair.lam),)
        max_re = pair.lam
    else:
        return StabilityRecord(max_real_part=math.nan, verdict="not-classifiable",
                               eigenvalues=())
    if max_re < -margin:
        verdict = "stable"
    elif max_re > margin:
        verdict = "unstable"
    else:
        verdict = "marginal"
    return StabilityRecord(max_real_part=float(max_re), verdict=verdict,
                           eigenvalues=eigs)
