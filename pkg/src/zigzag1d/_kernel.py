"""Compiled event loop for the built-in Student and Gaussian targets.

Consumes uniforms from the NumPy generator in exactly the order used by the
pure-Python engine in :mod:`zigzag1d.zigzag`, so both engines produce the same
skeleton for the same stream.
"""
import math

import numpy as np
from numba import njit

FAMILY_STUDENT = 0
FAMILY_GAUSSIAN = 1

REFRESH_ZERO = 0
REFRESH_CONSTANT = 1
REFRESH_GRAD = 2

STATUS_OK = 0
STATUS_BOUND_VIOLATION = 1
STATUS_TOO_MANY_EVENTS = 2


@njit(cache=True)
def _grad(x, family, param):
    if family == FAMILY_STUDENT:
        return (param + 1.0) * x / (param + x * x)
    return x


@njit(cache=True)
def _tail_inverse(y, theta, level, family, param):
    if family == FAMILY_STUDENT:
        g = 2.0 * level / (param + 1.0)
        return theta * math.sqrt(y * y * math.exp(g) + param * math.expm1(g))
    return theta * math.sqrt(y * y + 2.0 * level)


@njit(cache=True)
def run(x, theta, horizon, family, param, refresh_kind, refresh_value, refresh_bound,
        gen, max_events):
    size = 1024
    times = np.empty(size)
    kinds = np.empty(size, dtype=np.int8)
    positions = np.empty(size)
    n = 0
    t = 0.0
    status = STATUS_OK
    bad_x = 0.0
    while True:
        remaining = horizon - t
        level = -math.log1p(-gen.random())
        # the only stationary point is 0: skip a downhill stretch to it
        if theta * x < 0.0:
            travelled = abs(0.0 - x)
            y = 0.0
        else:
            travelled = 0.0
            y = x
        z = _tail_inverse(y, theta, level, family, param)
        s_bounce = travelled + theta * (z - y)

        s_refresh = math.inf
        if refresh_kind == REFRESH_CONSTANT:
            s_refresh = -math.log1p(-gen.random()) / refresh_value
        elif refresh_kind == REFRESH_GRAD:
            cap = min(s_bounce, remaining)
            s = 0.0
            while True:
                s += -math.log1p(-gen.random()) / refresh_bound
                if s > cap:
                    break
                rate = refresh_value * abs(_grad(x + theta * s, family, param))
                if rate > refresh_bound * (1.0 + 1e-12):
                    status = STATUS_BOUND_VIOLATION
                    bad_x = x + theta * s
                    break
                if gen.random() * refresh_bound < rate:
                    s_refresh = s
                    break
            if status != STATUS_OK:
                break

        if s_refresh < s_bounce:
            s = s_refresh
            kind = 1
        else:
            s = s_bounce
            kind = 0
        if s >= remaining:
            break
        t += s
        x += theta * s
        theta = -theta
        if n == size:
            size *= 2
            grown_t = np.empty(size)
            grown_k = np.empty(size, dtype=np.int8)
            grown_p = np.empty(size)
            grown_t[:n] = times[:n]
            grown_k[:n] = kinds[:n]
            grown_p[:n] = positions[:n]
            times, kinds, positions = grown_t, grown_k, grown_p
        times[n] = t
        kinds[n] = kind
        positions[n] = x
        n += 1
        if n > max_events:
            status = STATUS_TOO_MANY_EVENTS
            break
    return times[:n].copy(), kinds[:n].copy(), positions[:n].copy(), status, bad_x
