"""Pure-Python stepping kernels (fallback backend).

Same stepping logic as the compiled extension, written against a generic
right-hand-side callable so expression-backed models can use it too.  The
compiled backend in ``_kernels`` specializes the builtin models; numerical
behavior is interchangeable up to floating-point noise.

Both integrators stream dense output: each accepted step ``(t_a, x_a, f_a) ->
(t_b, x_b, f_b)`` emits the requested output times inside the step by cubic
Hermite interpolation (4th-order accurate, matching the integration order of
the classical RK4 scheme and close enough for the 5(4) pair at plot scale).
"""

from __future__ import annotations

import numpy as np

from .errors import (
    IntegrationError,
    NonFiniteStateError,
    PositivityError,
    StepUnderflowError,
)

POS_TOL = 1e-7  # components in [-POS_TOL, 0) are integrator noise: clamp to 0
_MAX_STEPS = 200_000_000

# Dormand-Prince 5(4) tableau; the 5th-order solution is propagated and the
# last stage is the first stage of the next step (FSAL).
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                -17253 / 339200, 22 / 525, -1 / 40)


def _clamp_positivity(x: np.ndarray, t: float) -> None:
    m = x.min()
    if m < 0.0:
        if m < -POS_TOL:
            raise PositivityError(
                f"state component {m:.3e} below -{POS_TOL} at t={t:.6g}"
            )
        np.clip(x, 0.0, None, out=x)


def _check_finite(x: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError(f"non-finite state at t={t:.6g}")


def _hermite(theta, h, xa, fa, xb, fb):
    t2 = theta * theta
    t3 = t2 * theta
    out = ((2 * t3 - 3 * t2 + 1) * xa
           + (t3 - 2 * t2 + theta) * h * fa
           + (-2 * t3 + 3 * t2) * xb
           + (t3 - t2) * h * fb)
    return out


class _OutputStream:
    """Emits interpolated states at fixed output times as steps complete."""

    def __init__(self, out_times, n):
        self.times = np.asarray(out_times, dtype=float)
        self.states = np.empty((self.times.size, n))
        self.j = 0

    def emit(self, ta, xa, fa, tb, xb, fb):
        h = tb - ta
        eps = 1e-12 * max(1.0, abs(tb))
        while self.j < self.times.size and self.times[self.j] <= tb + eps:
            t_out = self.times[self.j]
            if t_out <= ta:
                state = xa.copy()
            elif t_out >= tb - eps:
                state = xb.copy()
            else:
                state = _hermite((t_out - ta) / h, h, xa, fa, xb, fb)
                _clamp_positivity(state, t_out)
            self.states[self.j] = state
            self.j += 1

    def finish(self):
        if self.j != self.times.size:
            raise IntegrationError("internal error: unfilled output times")
        return self.states


def rk4_span(field, x0, t0, t1, h_fixed, out_times):
    """Classical fixed-step RK4 from ``t0`` to ``t1`` (last step truncated).

    Returns ``(out_states, x_final, steps, rejected)`` with ``rejected == 0``.
    """
    if h_fixed <= 0:
        raise ValueError("fixed step must be positive")
    x = np.array(x0, dtype=float)
    stream = _OutputStream(out_times, x.size)
    t = t0
    fa = np.asarray(field(x), dtype=float)
    steps = 0
    while t < t1:
        h = min(h_fixed, t1 - t)
        t_next = t1 if t + h >= t1 - 1e-14 * max(1.0, abs(t1)) else t + h
        h = t_next - t
        k1 = fa
        k2 = np.asarray(field(x + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(field(x + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(field(x + h * k3), dtype=float)
        x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(x_new, t_next)
        _clamp_positivity(x_new, t_next)
        fb = np.asarray(field(x_new), dtype=float)
        stream.emit(t, x, fa, t_next, x_new, fb)
        x, fa, t = x_new, fb, t_next
        steps += 1
        if steps > _MAX_STEPS:
            raise IntegrationError("step budget exhausted")
    return stream.finish(), x, steps, 0


def dopri5_span(field, x0, t0, t1, rtol, atol, h_init, h_min, h_max, out_times):
    """Adaptive Dormand-Prince 5(4) from ``t0`` to ``t1``.

    Error per step is controlled against ``atol + rtol*|x|_inf`` with safety
    factor 0.9 and step-change factor limited to [0.2, 5].  Returns
    ``(out_states, x_final, steps, rejected)``.
    """
    x = np.array(x0, dtype=float)
    stream = _OutputStream(out_times, x.size)
    t = t0
    k1 = np.asarray(field(x), dtype=float)
    h_ctrl = min(h_init, h_max)
    steps = 0
    rejected = 0
    attempts = 0
    while t < t1:
        h = min(h_ctrl, t1 - t)
        t_next = t1 if t + h >= t1 - 1e-14 * max(1.0, abs(t1)) else t + h
        h = t_next - t

        k2 = np.asarray(field(x + h * (_A21 * k1)), dtype=float)
        k3 = np.asarray(field(x + h * (_A31 * k1 + _A32 * k2)), dtype=float)
        k4 = np.asarray(field(x + h * (_A41 * k1 + _A42 * k2 + _A43 * k3)), dtype=float)
        k5 = np.asarray(field(x + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4)),
                        dtype=float)
        k6 = np.asarray(field(x + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4
                                       + _A65 * k5)), dtype=float)
        x_new = x + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        if not np.all(np.isfinite(x_new)):
            # treat like a failed step: shrink before giving up
            err_ratio = np.inf
            k7 = None
        else:
            k7 = np.asarray(field(x_new), dtype=float)
            err_vec = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6
                           + _E7 * k7)
            err = float(np.max(np.abs(err_vec)))
            scale = atol + rtol * max(float(np.max(np.abs(x))),
                                      float(np.max(np.abs(x_new))))
            err_ratio = err / scale if scale > 0 else np.inf

        if err_ratio <= 1.0:
            factor = 5.0 if err_ratio == 0.0 else min(5.0, max(0.2, 0.9 * err_ratio ** -0.2))
            _clamp_positivity(x_new, t_next)
            stream.emit(t, x, k1, t_next, x_new, k7)
            x, k1, t = x_new, k7, t_next
            h_ctrl = min(h_max, h * factor)
            steps += 1
        else:
            rejected += 1
            if np.isfinite(err_ratio):
                factor = max(0.2, 0.9 * err_ratio ** -0.2)  # < 0.9 since err_ratio > 1
            else:
                factor = 0.2
            h_ctrl = h * factor
            if h_ctrl < h_min:
                raise StepUnderflowError(
                    f"required step {h_ctrl:.3e} below h_min={h_min:.3e} at t={t:.6g}"
                )
        attempts += 1
        if attempts > _MAX_STEPS:
            raise IntegrationError("step budget exhausted")
    return stream.finish(), x, steps, rejected
