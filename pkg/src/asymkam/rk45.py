"""Dormand-Prince 5(4) integrator with step control on the embedded error.

Steps are clipped so every requested sample time is hit exactly, which keeps
trajectories reproducible and avoids dense-output interpolation error.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["Trajectory", "IntegrationFailure", "dopri5"]

C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
E = B5 - B4


class IntegrationFailure(RuntimeError):
    def __init__(self, msg, t, y):
        super().__init__(msg)
        self.t = t
        self.y = y


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    steps: int
    rejected: int
    tol: float


def dopri5(f, t0, y0, t1, tol=1e-10, samples=None, h0=None, max_steps=1_000_000):
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1`` (either direction).

    Local error per step is kept below ``tol * (1 + |y|)`` componentwise.
    ``samples`` lists the times (between ``t0`` and ``t1``) at which the state
    is recorded; ``t0`` and ``t1`` are always included.
    """
    y = np.array(y0, dtype=float)
    direction = 1.0 if t1 >= t0 else -1.0
    ts = [t0] if samples is None else sorted(set([t0, t1] + list(samples)), reverse=direction < 0)
    if samples is None:
        ts.append(t1)
    ts = np.asarray(ts, dtype=float)
    out = [y.copy()]
    t = float(t0)
    span = abs(t1 - t0)
    if span == 0:
        return Trajectory(np.array([t0]), np.array([y]), 0, 0, tol)
    h = h0 or min(0.01 * span, 0.1)
    steps = rejected = 0
    k1 = f(t, y)
    nxt = 1
    while nxt < ts.size:
        target = ts[nxt]
        remaining = abs(target - t)
        step = min(h, remaining)
        if step < 1e-14 * max(1.0, abs(t)):
            raise IntegrationFailure(f"step size underflow at t={t}", t, y)
        s = direction * step
        k = [k1]
        for i in range(1, 7):
            yi = y + s * sum(a * kj for a, kj in zip(A[i], k))
            k.append(f(t + C[i] * s, yi))
        y5 = y + s * sum(b * kj for b, kj in zip(B5, k) if b != 0)
        err = s * sum(e * kj for e, kj in zip(E, k))
        scale = tol * (1.0 + np.maximum(np.abs(y), np.abs(y5)))
        ratio = float(np.max(np.abs(err) / scale))
        if not np.isfinite(ratio):
            raise IntegrationFailure(f"non-finite state at t={t}", t, y)
        if ratio <= 1.0:
            steps += 1
            t = target if step == remaining else t + s
            y = y5
            k1 = k[6]
            if step == remaining:
                out.append(y.copy())
                nxt += 1
            fac = 5.0 if ratio == 0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
            # a step shortened to land on a sample says little about the next one
            h = max(h, fac * step) if (step < h and fac >= 1) else fac * step
        else:
            rejected += 1
            h = step * max(0.2, 0.9 * ratio ** -0.2)
        if steps + rejected > max_steps:
            raise IntegrationFailure("step budget exhausted", t, y)
    return Trajectory(ts, np.array(out), steps, rejected, tol)
