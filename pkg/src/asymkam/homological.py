"""Decaying solutions of the transport equation ``omega . d_q kappa + d_t kappa = g``.

The unique solution that vanishes as ``t -> inf`` is

    kappa(q, t) = - int_t^inf g(q + omega (tau - t), tau) dtau,

which mode by mode reads ``kappa_k(t) = - int_t^inf exp(i theta_k (tau - t)) g_k(tau) dtau``
with ``theta_k = 2 pi k.omega``.  Between nodes ``g_k`` is replaced by a cubic
spline (after dividing out an exponential envelope when there is one) and the
product with the exponential is integrated exactly.  Past the last node the
slice is continued along the envelope and that piece is integrated in closed
form.
"""

from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .decay import Exponential, Polynomial, Tabulated, TailOf
from .field import GridField, NormSpec, _kgrid, derivative, slice_norms

__all__ = [
    "HESolution", "solve_he", "residual", "transport", "time_grid",
    "fd_weights", "time_derivative", "phases",
]


@dataclass
class HESolution:
    kappa: GridField
    residual_budget: float
    norm_ratio: float


def phases(omega, K, dim):
    """``theta_k = 2 pi k.omega`` on the mode axes."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.size != dim:
        raise ValueError(f"frequency has {omega.size} components, field has dim {dim}")
    return 2 * np.pi * sum(omega[ax] * _kgrid(K, dim, ax) for ax in range(dim))


def time_grid(env, t0, M=200, tail_ratio=1e-3, t_end=None):
    """Nodes on ``[t0, T_max]`` with ``tail(env)(T_max) <= tail_ratio * tail(env)(t0)``.

    Uniform for exponential envelopes; otherwise geometric in ``t - t0 + L``
    with ``L = max(t0, 1)``, which is uniform near ``t0`` and geometric far out.
    """
    if t_end is None:
        target = tail_ratio * env.tail(t0)
        h = 1.0
        while env.tail(t0 + h) > target:
            h *= 2.0
            if h > 1e12:
                raise ValueError("envelope tail too slow for the grid rule")
        lo, hi = 0.0, h
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if env.tail(t0 + mid) > target:
                lo = mid
            else:
                hi = mid
        t_end = t0 + hi
    if isinstance(env, Exponential):
        return np.linspace(t0, t_end, M + 1)
    L = max(t0, 1.0)
    s = np.linspace(0.0, 1.0, M + 1)
    t = t0 - L + L * ((t_end - t0 + L) / L) ** s
    t[0], t[-1] = t0, t_end
    return t


def _moments(x, order=3):
    """``M_m(x) = int_0^1 s^m exp(x s) ds`` for m = 0..order (elementwise in x)."""
    x = np.asarray(x, dtype=complex)
    out = np.empty((order + 1,) + x.shape, dtype=complex)
    small = np.abs(x) < 1.0
    if np.any(small):
        xs = x[small]
        for m in range(order + 1):
            term = np.ones_like(xs)
            acc = term / (m + 1)
            for j in range(1, 30):
                term = term * xs / j
                acc = acc + term / (m + j + 1)
            out[m][small] = acc
    big = ~small
    if np.any(big):
        xb = x[big]
        ex = np.exp(xb)
        prev = (ex - 1.0) / xb
        out[0][big] = prev
        for m in range(1, order + 1):
            prev = (ex - m * prev) / xb
            out[m][big] = prev
    return out


@lru_cache(maxsize=None)
def _poly_tail_factor(theta, T, power):
    """``int_T^inf exp(i theta (tau - T)) (T / tau)^power dtau``."""
    if theta == 0.0:
        return complex(T / (power - 1.0))
    z = mpmath.mpc(0, -theta * T)
    return complex(T * mpmath.exp(z) * mpmath.expint(power, z))


@lru_cache(maxsize=None)
def _tabulated_tail_factor(theta, T, env):
    """Same integral for a tabulated envelope shape ``env(tau) / env(T)``."""
    last = float(env.grid[-1])
    cont = env.continuation
    scale = 1.0 / float(env(T))
    head = 0.0 + 0.0j
    if T < last:
        f = lambda tau: float(env(tau)) * scale
        if theta == 0.0:
            head = quad(f, T, last, limit=200)[0]
        else:
            re = quad(lambda s: f(T + s), 0.0, last - T, weight="cos", wvar=theta, limit=200)[0]
            im = quad(lambda s: f(T + s), 0.0, last - T, weight="sin", wvar=theta, limit=200)[0]
            head = re + 1j * im
        start = last
    else:
        start = T
    ratio = float(cont(start)) * scale
    if isinstance(cont, Exponential):
        rest = 1.0 / (cont.rate - 1j * theta)
    else:
        rest = _poly_tail_factor(theta, start, cont.power)
    return complex(head + np.exp(1j * theta * (start - T)) * ratio * rest)


def _tail_factors(env, theta, T):
    if isinstance(env, Exponential):
        return 1.0 / (env.rate - 1j * theta)
    flat = theta.ravel()
    if isinstance(env, Polynomial):
        vals = [_poly_tail_factor(float(th), float(T), float(env.power)) for th in flat]
    elif isinstance(env, Tabulated):
        vals = [_tabulated_tail_factor(float(th), float(T), env) for th in flat]
    else:
        raise ValueError(f"no tail model for envelope kind {env.kind!r}")
    return np.asarray(vals).reshape(theta.shape)


def solve_he(g, omega, norm=None):
    """Decaying solution of the transport equation for a sampled right-hand side.

    ``g`` is a ``GridField`` whose envelope bounds its slices; the solution
    carries ``TailOf(envelope)``.  ``norm_ratio`` compares the weighted norms
    of solution and data (at most one in exact arithmetic), measured with
    ``norm`` (default: the coefficient sum, which is translation invariant).
    """
    env = g.envelope
    if env is None or not env.integrable:
        raise ValueError("the right-hand side needs an integrable envelope")
    t = g.nodes
    dim = g.dim
    theta = phases(omega, g.band, dim)
    G = g.coeffs
    lam = env.rate if isinstance(env, Exponential) else 0.0
    vdims = G.ndim - 1 - dim
    bshape = (1,) * vdims + theta.shape

    # spline of g / exp(-lam (t - t0)), integrated exactly against exp((i theta - lam) s)
    damp = np.exp(lam * (t - t[0])).reshape((-1,) + (1,) * (G.ndim - 1))
    spline = CubicSpline(t, G * damp, axis=0)
    h = np.diff(t).reshape((-1,) + (1,) * (G.ndim - 1))
    z = (1j * theta - lam).reshape(bshape)
    x = z * h
    Mom = _moments(x)
    hp = h ** np.arange(1, 5).reshape((4,) + (1,) * h.ndim)
    mu = Mom * hp
    c = spline.c
    seg = c[3] * mu[0] + c[2] * mu[1] + c[1] * mu[2] + c[0] * mu[3]
    seg = seg * np.exp(-lam * (t[:-1] - t[0])).reshape((-1,) + (1,) * (G.ndim - 1))

    T = t[-1]
    S_T = G[-1] * _tail_factors(env, theta, T).reshape(bshape)

    ph = np.exp(1j * theta.reshape((1,) + bshape) * t.reshape((-1,) + (1,) * (G.ndim - 1)))
    acc = np.cumsum((ph[:-1] * seg)[::-1], axis=0)[::-1]
    S = np.empty_like(G)
    S[:-1] = acc + ph[-1] * S_T
    S[-1] = ph[-1] * S_T
    S = S / ph
    kappa = GridField(t, -S, dim, TailOf(env))

    norm = norm or NormSpec.analytic(0.0)
    g_last = slice_norms(G[-1:], dim, NormSpec.analytic(0.0))[0]
    budget = float(g_last / env(T) * env.tail(T))
    g_norm = float(np.max(slice_norms(G, dim, norm) / env(t)))
    k_norm = float(np.max(slice_norms(kappa.coeffs, dim, norm) / env.tail(t)))
    ratio = k_norm / g_norm if g_norm > 0 else 0.0
    return HESolution(kappa, budget, ratio)


def fd_weights(x0, x, order=1):
    """Finite-difference weights at ``x0`` for nodes ``x`` (Fornberg's recursion)."""
    n = len(x)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def time_derivative(F):
    """``d_t`` of a ``GridField`` by five-point stencils (one-sided at the ends)."""
    t = F.nodes
    n = t.size
    if n < 5:
        raise ValueError("five-point stencil needs at least five nodes")
    out = np.empty_like(F.coeffs)
    for j in range(n):
        lo = min(max(j - 2, 0), n - 5)
        w = fd_weights(t[j], t[lo: lo + 5])
        out[j] = np.tensordot(w, F.coeffs[lo: lo + 5], axes=(0, 0))
    return out


def transport(F, omega):
    """Coefficients of ``omega . d_q F + d_t F`` with the five-point time stencil."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    dq = sum(omega[ax] * derivative(F.coeffs, F.dim, ax) for ax in range(F.dim))
    return dq + time_derivative(F)


def residual(kappa, g, omega, norm=None):
    """Weighted sup of ``omega . d_q kappa + d_t kappa - g`` over interior nodes.

    The weight is the envelope of ``g``; the norm defaults to the sup over
    the collocation grid.
    """
    norm = norm or NormSpec.holder(0.0)
    R = transport(kappa, omega) - g.resample(kappa.nodes).coeffs
    vals = slice_norms(R[2:-2], kappa.dim, norm)
    w = g.envelope(kappa.nodes[2:-2]) if g.envelope is not None else 1.0
    return float(np.max(vals / w))
