"""Independent checks of a computed torus by direct time integration.

Nothing here reuses the solver's equations: trajectories come from the
Hamiltonian vector field and are compared with the rigid rotation carried
by the computed embedding.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .decay import Constant, Harmonic
from .field import grid_points, to_grid
from .hamiltonian import grad_q, vector_field
from .rk45 import dopri5

__all__ = [
    "integrate", "conjugacy_defect", "conjugacy_curve", "flow_lipschitz", "gronwall_bound", "asymptotic_defect", "lagrangian_defect",
    "lagrangian_curve", "extend_backward", "backward_roundtrip", "counterexample_divergence",
    "CounterexampleReport", "torus_distance", "write_curve", "write_summary",
]


def _rhs(H, P, n):
    def f(t, y):
        z = y.reshape(P, 2 * n)
        dq, dp = vector_field(H, z[:, :n], z[:, n:], t)
        return np.concatenate([dq, dp], axis=1).ravel()
    return f


def integrate(H, q0, p0, t0, t1, tol=1e-10, samples=None):
    """Flow of ``H`` from ``(q0, p0)`` at ``t0`` to ``t1``; points are rows of ``(P, dim)``.

    Returns ``(times, q, p, trajectory)`` with ``q`` and ``p`` of shape
    ``(len(times), P, dim)``; ``q`` stays on the universal cover.
    """
    n = H.dim
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    P = q0.shape[0]
    y0 = np.concatenate([q0, p0], axis=1).ravel()
    traj = dopri5(_rhs(H, P, n), t0, y0, t1, tol, samples)
    z = traj.states.reshape(-1, P, 2 * n)
    return traj.times, z[..., :n], z[..., n:], traj


def torus_distance(q1, p1, q2, p2):
    """Distance in ``T^n x R^n`` with the flat metric on the torus factor."""
    dq = np.asarray(q1) - np.asarray(q2)
    dq = dq - np.round(dq)
    dp = np.asarray(p1) - np.asarray(p2)
    return np.sqrt(np.sum(dq ** 2, axis=-1) + np.sum(dp ** 2, axis=-1))


def conjugacy_curve(H, y, q, t0, t1, tol=1e-10, n_samples=101):
    """Per-phase distance between the flow of ``phi^{t0}(q)`` and ``phi^t(q + omega (t - t0))``.

    Returns ``(times, d, Q, P)`` with ``d`` of shape ``(len(times), len(q))``
    and the integrated states for later use.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    samples = np.linspace(t0, t1, n_samples)
    Q0, P0 = y.phi(q, t0)
    times, Qs, Ps, _ = integrate(H, Q0, P0, t0, t1, tol, samples)
    d = np.empty((times.size, q.shape[0]))
    for i, (t, Qt, Pt) in enumerate(zip(times, Qs, Ps)):
        Qe, Pe = y.phi(q + y.omega * (t - t0), t)
        d[i] = torus_distance(Qt, Pt, Qe, Pe)
    return times, d, Qs, Ps


def conjugacy_defect(H, y, q, t0, t1, tol=1e-10, n_samples=101):
    """``sup_t |psi^t_{t0}(phi^{t0}(q)) - phi^t(q + omega (t - t0))|`` over sample times."""
    return float(conjugacy_curve(H, y, q, t0, t1, tol, n_samples)[1].max())


def flow_lipschitz(H, times, Q, P, h=1e-6):
    """Largest spectral norm of the vector-field Jacobian along sampled states."""
    n = H.dim
    worst = 0.0
    for t, Qt, Pt in zip(times, Q, P):
        z = np.concatenate([Qt, Pt], axis=1)
        cols = []
        for j in range(2 * n):
            e = np.zeros(2 * n)
            e[j] = h
            fp = np.concatenate(vector_field(H, (z + e)[:, :n], (z + e)[:, n:], t), axis=1)
            fm = np.concatenate(vector_field(H, (z - e)[:, :n], (z - e)[:, n:], t), axis=1)
            cols.append((fp - fm) / (2 * h))
        J = np.stack(cols, axis=-1)
        worst = max(worst, float(np.linalg.norm(J, 2, axis=(1, 2)).max()))
    return worst


def gronwall_bound(residual, lipschitz, span, tol):
    """A-posteriori bound ``10 tol + r span e^{L span}`` for the conjugacy defect."""
    return 10.0 * tol + residual * span * np.exp(lipschitz * span)


def asymptotic_defect(H, y, q, t0, horizon, tol=1e-10, n_samples=64):
    """Distance of a torus trajectory to the unperturbed orbit ``(q + omega (t - t0), 0)``.

    Returns ``(times, d, ratio)`` with ``ratio = sup d / (bbar + abar)``.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    samples = t0 + np.geomspace(1.0, 1.0 + horizon, n_samples) - 1.0
    Q0, P0 = y.phi(q, t0)
    times, Qs, Ps, _ = integrate(H, Q0, P0, t0, t0 + horizon, tol, samples)
    rigid = q[None] + y.omega * (times - t0)[:, None, None]
    d = torus_distance(Qs, Ps, rigid, np.zeros_like(Ps)).max(axis=1)
    weight = y.b_env.tail(times) + y.a_env.tail(times)
    return times, d, float(np.max(d / weight))


def lagrangian_curve(y):
    """``max_{i<j, q} |dV_i . dU_j - dV_j . dU_i|`` at every node (zeros when dim = 1)."""
    n = y.dim
    T = y.nodes.size
    if n == 1:
        return np.zeros(T)
    N = 4 * y.u.band + 2
    du = to_grid(grad_q(y.u), n, N).reshape(T, n, n, -1)  # [t, k, i, p] = d_i u_k
    dv = to_grid(grad_q(y.v), n, N).reshape(T, n, n, -1)
    dU = du + np.eye(n)[None, :, :, None]
    worst = np.zeros(T)
    for i in range(n):
        for j in range(i + 1, n):
            alpha = (np.einsum("tkp,tkp->tp", dv[:, :, i], dU[:, :, j])
                     - np.einsum("tkp,tkp->tp", dv[:, :, j], dU[:, :, i]))
            worst = np.maximum(worst, np.abs(alpha).max(axis=1))
    return worst


def lagrangian_defect(y, t):
    """Lagrangian defect of the embedded torus at time ``t`` (a grid node or later)."""
    n = y.dim
    if n == 1:
        return 0.0
    i = int(np.argmin(np.abs(y.nodes - t)))
    if abs(y.nodes[i] - t) > 1e-12 * max(1.0, abs(t)):
        raise ValueError("lagrangian_defect is evaluated at grid nodes")
    return float(lagrangian_curve(y)[i])


def extend_backward(H, y, t, q, tol=1e-10):
    """Embedding for ``t < upsilon'``: ``psi^t_{upsilon'}(phi^{upsilon'}(q - omega (t - upsilon')))``."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    t_up = y.upsilon_prime
    Q0, P0 = y.phi(q - y.omega * (t - t_up), t_up)
    _, Qs, Ps, _ = integrate(H, Q0, P0, t_up, t, tol)
    return Qs[-1], Ps[-1]


def backward_roundtrip(H, y, t, q, tol=1e-10):
    """Integrate the backward extension forward again and measure the mismatch at ``upsilon'``."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    t_up = y.upsilon_prime
    Qb, Pb = extend_backward(H, y, t, q, tol)
    _, Qs, Ps, _ = integrate(H, Qb, Pb, t, t_up, tol)
    Qe, Pe = y.phi(q - y.omega * (t - t_up), t_up)
    return float(torus_distance(Qs[-1], Ps[-1], Qe, Pe).max())


@dataclass
class CounterexampleReport:
    times: np.ndarray
    offset: np.ndarray
    offset_flow: np.ndarray
    diverges: bool
    doubling_ratio: float


def counterexample_divergence(omega, profile, t0=0.0, horizon=None, samples=64, tol=1e-12):
    """Lift offset of ``dq/dt = omega + P(t)`` relative to the rigid rotation.

    The offset is ``int_{t0}^{t} P``; it is computed both in closed form and
    by integrating the flow on the universal cover.  Divergence is declared
    when the increments over successive doublings of ``1 + t - t0`` stop
    shrinking geometrically.
    """
    if profile.integrable:
        raise ValueError("profile is integrable; the rotation is asymptotically conjugate")
    horizon = horizon if horizon is not None else np.expm1(10.0)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    times = t0 + np.geomspace(1.0, 1.0 + horizon, samples) - 1.0
    if isinstance(profile, (Harmonic, Constant)):
        offset = profile.integral(t0, times)
    else:
        raise ValueError(f"no closed form for {profile.kind} profiles")

    def f(t, q):
        return omega + profile(t)

    q0 = np.zeros_like(omega)
    traj = dopri5(f, t0, q0, times[-1], tol, times)
    flow = traj.states[:, 0] - omega[0] * (traj.times - t0)
    k = np.arange(int(np.floor(np.log2(1.0 + horizon))) + 1)
    marks = t0 + 2.0 ** k - 1.0
    inc = np.diff(profile.integral(t0, marks))
    ratio = float(inc[-1] / inc[-2]) if inc.size >= 2 and inc[-2] > 0 else 0.0
    diverges = bool(np.all(np.diff(offset) >= 0) and ratio >= 0.9)
    return CounterexampleReport(times, offset, flow, diverges, ratio)


def write_curve(path, t, values, header=("t", "value")):
    """CSV with a ``t`` column and one column per entry of ``header[1:]``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = np.asarray(values, dtype=float)
    cols = cols.reshape(len(t), -1)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x, row in zip(t, cols):
            w.writerow([repr(float(x))] + [repr(float(v)) for v in row])


def write_summary(path, summary):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")
