"""Pure-Python closed-loop RK4 kernel.

Mirrors ``_ckernel.pyx`` operation for operation so both backends produce
bit-identical trajectories when the compiled one is built without FMA
contraction.
"""

import math

import numpy as np

TWO_OVER_PI = 2.0 / math.pi


def integrate_closed_loop(x0, t0, dt, n_steps, params):
    """Integrate the closed loop for ``n_steps`` fixed RK4 steps.

    ``params`` is (g, kd1, kL, kd2, kd3, I_F, a, K, Omega, tau_gain,
    objective_code, lift_code, n_smooth); ``n_smooth == 0`` selects the exact
    absolute value. Returns ``(samples, n_done)`` where ``samples`` has
    ``n_steps + 1`` rows; rows past ``n_done`` are unset when a non-finite value
    stopped the run.
    """
    g, kd1, kL, kd2, kd3, i_f, a, K, om, gain, obj, lift, n = params
    g = float(g); kd1 = float(kd1); kL = float(kL); kd2 = float(kd2); kd3 = float(kd3)
    i_f = float(i_f); a = float(a); K = float(K); om = float(om); gain = float(gain)
    obj = int(obj); lift = int(lift); n = float(n)
    amp = a * om
    cos = math.cos
    atan = math.atan
    isfinite = math.isfinite

    def f(t, z, ph, w, pd, th):
        if n > 0.0:
            ap = pd * TWO_OVER_PI * atan(n * pd)
        else:
            ap = abs(pd)
        mod = amp * cos(om * t)
        if obj == 0:
            J = z * z
        else:
            la = kL * pd * pd
            if lift == 1:
                la = kd1 * ap * w + la
            dev = la / g - 1.0
            J = dev * dev
        dw = g - kd1 * ap * w - kL * pd * pd
        dpd = -kd2 * ap * pd - kd3 * w * pd + (th + mod) / i_f
        dth = K * J * gain * mod
        return w, pd, dw, dpd, dth

    out = np.empty((n_steps + 1, 5))
    z, ph, w, pd, th = (float(v) for v in x0)
    out[0] = (z, ph, w, pd, th)
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for i in range(n_steps):
        t = t0 + i * dt
        a1, b1, c1, d1, e1 = f(t, z, ph, w, pd, th)
        a2, b2, c2, d2, e2 = f(t + h2, z + h2 * a1, ph + h2 * b1, w + h2 * c1,
                               pd + h2 * d1, th + h2 * e1)
        a3, b3, c3, d3, e3 = f(t + h2, z + h2 * a2, ph + h2 * b2, w + h2 * c2,
                               pd + h2 * d2, th + h2 * e2)
        a4, b4, c4, d4, e4 = f(t + dt, z + dt * a3, ph + dt * b3, w + dt * c3,
                               pd + dt * d3, th + dt * e3)
        z = z + h6 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        ph = ph + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        w = w + h6 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        pd = pd + h6 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
        th = th + h6 * (e1 + 2.0 * e2 + 2.0 * e3 + e4)
        if not (isfinite(z) and isfinite(ph) and isfinite(w) and isfinite(pd) and isfinite(th)):
            return out, i
        out[i + 1] = (z, ph, w, pd, th)
    return out, n_steps
