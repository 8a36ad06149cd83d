# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernels for the builtin models.

Mirror of ``_kernels_py`` with the right-hand sides of the builtin systems
inlined (ids 1/2/3: bioreactor, metabolic chain, autocatalator).  Selected at
import by ``posctrl._core`` when the extension is built.
"""

import numpy as np

from .errors import (
    IntegrationError,
    NonFiniteStateError,
    PositivityError,
    StepUnderflowError,
)

from libc.math cimport fabs, isfinite

cdef double POS_TOL = 1e-7
cdef long MAX_STEPS = 200000000

# Dormand-Prince 5(4) tableau (FSAL)
cdef double A21 = 1.0/5
cdef double A31 = 3.0/40, A32 = 9.0/40
cdef double A41 = 44.0/45, A42 = -56.0/15, A43 = 32.0/9
cdef double A51 = 19372.0/6561, A52 = -25360.0/2187, A53 = 64448.0/6561, A54 = -212.0/729
cdef double A61 = 9017.0/3168, A62 = -355.0/33, A63 = 46732.0/5247, A64 = 49.0/176, A65 = -5103.0/18656
cdef double B1 = 35.0/384, B3 = 500.0/1113, B4 = 125.0/192, B5 = -2187.0/6784, B6 = 11.0/84
cdef double E1 = 71.0/57600, E3 = -71.0/16695, E4 = 71.0/1920
cdef double E5 = -17253.0/339200, E6 = 22.0/525, E7 = -1.0/40


cdef inline double c_ipow(double base, long n) noexcept nogil:
    cdef double result = 1.0
    while n:
        if n & 1:
            result *= base
        base *= base
        n >>= 1
    return result


cdef inline int sys_dim(int sid) noexcept nogil:
    return 2 if sid == 1 else 3


cdef void eval_f(int sid, const double* p, const double* x, double* out) noexcept nogil:
    if sid == 1:
        # p: mu_m, K_m, K_i, k, x1_in
        out[0] = p[4] - x[0]
        out[1] = -x[1]
    elif sid == 2:
        # p: l, mu1, mu2, k1, k2, alpha1, alpha2, n_exp
        out[0] = -p[0] * x[0]
        out[1] = p[1] * x[0] / (p[3] + x[0]) - x[1] + p[5]
        out[2] = p[2] * x[1] / (p[4] + x[1]) - x[2] + p[6]
    else:
        # p: k1, k2, k3, k4
        out[0] = -x[0] + p[1] * x[2] + p[1] * (p[2] - p[3])
        out[1] = (x[0] - x[1]) / p[0]
        out[2] = x[1] - x[2] + p[3]


cdef double eval_psi(int sid, const double* p, const double* x) noexcept nogil:
    if sid == 1:
        return p[0] * x[0] / (p[1] + x[0] + x[0] * x[0] / p[2]) * x[1]
    elif sid == 2:
        return 1.0 / (1.0 + c_ipow(x[2], <long> p[7]))
    else:
        return x[0] * x[1] * x[1]


cdef void eval_c(int sid, const double* p, double* out) noexcept nogil:
    if sid == 1:
        out[0] = -p[3]
        out[1] = 1.0
    elif sid == 2:
        out[0] = 1.0
        out[1] = 0.0
        out[2] = 0.0
    else:
        out[0] = -1.0
        out[1] = 1.0 / p[0]
        out[2] = 0.0


cdef void eval_field(int sid, const double* p, int mode, double coef,
                     const double* x, double* out) noexcept nogil:
    # mode 0: coef*f + c*psi ; mode 1: coef*f + c ; mode 2: psi*(coef*f + c)
    cdef double fbuf[4]
    cdef double cbuf[4]
    cdef double psi
    cdef int n = sys_dim(sid)
    cdef int i
    eval_f(sid, p, x, fbuf)
    eval_c(sid, p, cbuf)
    if mode == 0:
        psi = eval_psi(sid, p, x)
        for i in range(n):
            out[i] = coef * fbuf[i] + cbuf[i] * psi
    elif mode == 1:
        for i in range(n):
            out[i] = coef * fbuf[i] + cbuf[i]
    else:
        psi = eval_psi(sid, p, x)
        for i in range(n):
            out[i] = psi * (coef * fbuf[i] + cbuf[i])


cdef inline double vmax_abs(const double* v, int n) noexcept nogil:
    cdef double m = 0.0
    cdef int i
    for i in range(n):
        if fabs(v[i]) > m:
            m = fabs(v[i])
    return m


cdef int clamp_positivity(double* x, int n) noexcept nogil:
    # returns 1 when a component is below the tolerance (caller raises)
    cdef int i
    for i in range(n):
        if x[i] < 0.0:
            if x[i] < -POS_TOL:
                return 1
            x[i] = 0.0
    return 0


cdef int all_finite(const double* x, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        if not isfinite(x[i]):
            return 0
    return 1


cdef class _Stream:
    """Dense-output emitter: fills states at fixed times via cubic Hermite."""

    cdef double[:, ::1] states
    cdef double[::1] times
    cdef Py_ssize_t j, count
    cdef int n
    cdef object states_arr

    def __init__(self, out_times, int n):
        self.times = np.ascontiguousarray(out_times, dtype=np.float64)
        self.count = self.times.shape[0]
        self.states_arr = np.empty((self.count, n))
        self.states = self.states_arr
        self.j = 0
        self.n = n

    cdef int emit(self, double ta, const double* xa, const double* fa,
                  double tb, const double* xb, const double* fb) except -1:
        cdef double h = tb - ta
        cdef double eps = 1e-12 * (1.0 if fabs(tb) < 1.0 else fabs(tb))
        cdef double t_out, theta, t2, t3, val
        cdef int i
        cdef int clamp_hit = 0
        while self.j < self.count and self.times[self.j] <= tb + eps:
            t_out = self.times[self.j]
            if t_out <= ta:
                for i in range(self.n):
                    self.states[self.j, i] = xa[i]
            elif t_out >= tb - eps:
                for i in range(self.n):
                    self.states[self.j, i] = xb[i]
            else:
                theta = (t_out - ta) / h
                t2 = theta * theta
                t3 = t2 * theta
                for i in range(self.n):
                    val = ((2*t3 - 3*t2 + 1) * xa[i]
                           + (t3 - 2*t2 + theta) * h * fa[i]
                           + (-2*t3 + 3*t2) * xb[i]
                           + (t3 - t2) * h * fb[i])
                    if val < 0.0:
                        if val < -POS_TOL:
                            clamp_hit = 1
                        val = 0.0
                    self.states[self.j, i] = val
                if clamp_hit:
                    raise PositivityError(
                        f"interpolated state below -{POS_TOL} at t={t_out!r}")
            self.j += 1
        return 0

    cdef object finish(self):
        if self.j != self.count:
            raise IntegrationError("internal error: unfilled output times")
        return self.states_arr


def rk4_span(int sid, double[::1] params, int mode, double coef,
             double[::1] x0, double t0, double t1, double h_fixed,
             out_times):
    """Classical fixed-step RK4 over one span (compiled fast path)."""
    cdef int n = sys_dim(sid)
    if h_fixed <= 0:
        raise ValueError("fixed step must be positive")
    cdef _Stream stream = _Stream(out_times, n)
    cdef double x[4]
    cdef double xs[4]
    cdef double xn[4]
    cdef double fa[4]
    cdef double fb[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef int i
    for i in range(n):
        x[i] = x0[i]
    cdef double t = t0, h, t_next
    cdef const double* p = &params[0]
    cdef long steps = 0
    eval_field(sid, p, mode, coef, x, fa)
    while t < t1:
        h = h_fixed if h_fixed < t1 - t else t1 - t
        t_next = t + h
        if t_next >= t1 - 1e-14 * (1.0 if fabs(t1) < 1.0 else fabs(t1)):
            t_next = t1
        h = t_next - t
        for i in range(n):
            xs[i] = x[i] + 0.5 * h * fa[i]
        eval_field(sid, p, mode, coef, xs, k2)
        for i in range(n):
            xs[i] = x[i] + 0.5 * h * k2[i]
        eval_field(sid, p, mode, coef, xs, k3)
        for i in range(n):
            xs[i] = x[i] + h * k3[i]
        eval_field(sid, p, mode, coef, xs, k4)
        for i in range(n):
            xn[i] = x[i] + (h / 6.0) * (fa[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if not all_finite(xn, n):
            raise NonFiniteStateError(f"non-finite state at t={t_next!r}")
        if clamp_positivity(xn, n):
            raise PositivityError(f"state below -{POS_TOL} at t={t_next!r}")
        eval_field(sid, p, mode, coef, xn, fb)
        stream.emit(t, x, fa, t_next, xn, fb)
        for i in range(n):
            x[i] = xn[i]
            fa[i] = fb[i]
        t = t_next
        steps += 1
        if steps > MAX_STEPS:
            raise IntegrationError("step budget exhausted")
    x_final = np.empty(n)
    for i in range(n):
        x_final[i] = x[i]
    return stream.finish(), x_final, int(steps), 0


def dopri5_span(int sid, double[::1] params, int mode, double coef,
                double[::1] x0, double t0, double t1,
                double rtol, double atol, double h_init, double h_min,
                double h_max, out_times):
    """Adaptive Dormand-Prince 5(4) over one span (compiled fast path)."""
    cdef int n = sys_dim(sid)
    cdef _Stream stream = _Stream(out_times, n)
    cdef double x[4]
    cdef double xs[4]
    cdef double xn[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double k5[4]
    cdef double k6[4]
    cdef double k7[4]
    cdef double errv[4]
    cdef int i
    for i in range(n):
        x[i] = x0[i]
    cdef const double* p = &params[0]
    cdef double t = t0, h, t_next, err, scale, err_ratio, factor
    cdef double h_ctrl = h_init if h_init < h_max else h_max
    cdef long steps = 0, rejected = 0, attempts = 0
    cdef bint finite_ok
    eval_field(sid, p, mode, coef, x, k1)
    while t < t1:
        h = h_ctrl if h_ctrl < t1 - t else t1 - t
        t_next = t + h
        if t_next >= t1 - 1e-14 * (1.0 if fabs(t1) < 1.0 else fabs(t1)):
            t_next = t1
        h = t_next - t

        for i in range(n):
            xs[i] = x[i] + h * (A21 * k1[i])
        eval_field(sid, p, mode, coef, xs, k2)
        for i in range(n):
            xs[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i])
        eval_field(sid, p, mode, coef, xs, k3)
        for i in range(n):
            xs[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        eval_field(sid, p, mode, coef, xs, k4)
        for i in range(n):
            xs[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        eval_field(sid, p, mode, coef, xs, k5)
        for i in range(n):
            xs[i] = x[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                + A64 * k4[i] + A65 * k5[i])
        eval_field(sid, p, mode, coef, xs, k6)
        for i in range(n):
            xn[i] = x[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i]
                                + B5 * k5[i] + B6 * k6[i])
        finite_ok = all_finite(xn, n)
        if finite_ok:
            eval_field(sid, p, mode, coef, xn, k7)
            for i in range(n):
                errv[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i]
                               + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            err = vmax_abs(errv, n)
            scale = vmax_abs(x, n)
            if vmax_abs(xn, n) > scale:
                scale = vmax_abs(xn, n)
            scale = atol + rtol * scale
            err_ratio = err / scale if scale > 0 else -1.0  # -1 flags invalid
        else:
            err_ratio = -1.0

        if finite_ok and 0.0 <= err_ratio <= 1.0:
            if err_ratio == 0.0:
                factor = 5.0
            else:
                factor = 0.9 * err_ratio ** -0.2
                if factor > 5.0:
                    factor = 5.0
                elif factor < 0.2:
                    factor = 0.2
            if clamp_positivity(xn, n):
                raise PositivityError(f"state below -{POS_TOL} at t={t_next!r}")
            stream.emit(t, x, k1, t_next, xn, k7)
            for i in range(n):
                x[i] = xn[i]
                k1[i] = k7[i]
            t = t_next
            h_ctrl = h * factor
            if h_ctrl > h_max:
                h_ctrl = h_max
            steps += 1
        else:
            rejected += 1
            if finite_ok and err_ratio > 1.0:
                factor = 0.9 * err_ratio ** -0.2
                if factor < 0.2:
                    factor = 0.2
            else:
                factor = 0.2
            h_ctrl = h * factor
            if h_ctrl < h_min:
                raise StepUnderflowError(
                    f"required step {h_ctrl!r} below h_min={h_min!r} at t={t!r}")
        attempts += 1
        if attempts > MAX_STEPS:
            raise IntegrationError("step budget exhausted")
    x_final = np.empty(n)
    for i in range(n):
        x_final[i] = x[i]
    return stream.finish(), x_final, int(steps), int(rejected)
