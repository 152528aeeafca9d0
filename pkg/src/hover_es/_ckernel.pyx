# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed-loop RK4 kernel; see _pykernel.py for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, atan, fabs, isfinite, M_PI

cnp.import_array()

cdef double TWO_OVER_PI = 2.0 / M_PI


cdef struct Params:
    double g, kd1, kL, kd2, kd3, i_f, amp, K, om, gain, n
    int obj, lift


cdef inline void deriv(const Params* p, double t, const double* x, double* out) nogil:
    cdef double z = x[0], w = x[2], pd = x[3], th = x[4]
    cdef double ap, mod, J, la, dev
    if p.n > 0.0:
        ap = pd * TWO_OVER_PI * atan(p.n * pd)
    else:
        ap = fabs(pd)
    mod = p.amp * cos(p.om * t)
    if p.obj == 0:
        J = z * z
    else:
        la = p.kL * pd * pd
        if p.lift == 1:
            la = p.kd1 * ap * w + la
        dev = la / p.g - 1.0
        J = dev * dev
    out[0] = w
    out[1] = pd
    out[2] = p.g - p.kd1 * ap * w - p.kL * pd * pd
    out[3] = -p.kd2 * ap * pd - p.kd3 * w * pd + (th + mod) / p.i_f
    out[4] = p.K * J * p.gain * mod


def integrate_closed_loop(x0, double t0, double dt, Py_ssize_t n_steps, params):
    """Same contract as ``_pykernel.integrate_closed_loop``."""
    cdef Params p
    p.g, p.kd1, p.kL, p.kd2, p.kd3, p.i_f = [float(v) for v in params[:6]]
    cdef double a = float(params[6])
    p.K = float(params[7])
    p.om = float(params[8])
    p.gain = float(params[9])
    p.obj = int(params[10])
    p.lift = int(params[11])
    p.n = float(params[12])
    p.amp = a * p.om

    out_arr = np.empty((n_steps + 1, 5))
    cdef double[:, ::1] out = out_arr
    cdef double x[5]
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef double y[5]
    cdef Py_ssize_t i, j
    cdef double t
    cdef double h2 = 0.5 * dt
    cdef double h6 = dt / 6.0
    cdef bint ok
    for j in range(5):
        x[j] = float(x0[j])
        out[0, j] = x[j]
    with nogil:
        for i in range(n_steps):
            t = t0 + i * dt
            deriv(&p, t, x, k1)
            for j in range(5):
                y[j] = x[j] + h2 * k1[j]
            deriv(&p, t + h2, y, k2)
            for j in range(5):
                y[j] = x[j] + h2 * k2[j]
            deriv(&p, t + h2, y, k3)
            for j in range(5):
                y[j] = x[j] + dt * k3[j]
            deriv(&p, t + dt, y, k4)
            ok = True
            for j in range(5):
                x[j] = x[j] + h6 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not isfinite(x[j]):
                    ok = False
            if not ok:
                with gil:
                    return out_arr, i
            for j in range(5):
                out[i + 1, j] = x[j]
    return out_arr, n_steps
