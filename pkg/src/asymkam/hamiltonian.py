"""Hamiltonians ``H = omega.p + a(q,t) + b(q,t).p + Q(q,p,t)`` near the torus ``p = 0``.

``Q`` is a polynomial in ``p`` with every term of degree at least two, kept
as a mapping from multi-indices ``alpha`` to scalar coefficient fields
``c_alpha(q, t)``.  The zeroth and first order parts ``a`` and ``b`` carry
decay envelopes: ``a_env`` bounds ``d_q a`` and ``b_env`` bounds ``b``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .decay import scaled
from .field import FourierField, GridField, NormSpec, derivative, eval_points, weighted_time_norm

__all__ = [
    "HamiltonianModel", "split", "build_model", "mbar_zero", "vector_field",
    "hamiltonian_value", "tilde_h", "certify_envelopes", "estimate_upsilon",
    "grad_q", "constant_field", "quadratic_remainder",
]


@dataclass
class HamiltonianModel:
    omega: np.ndarray
    a: GridField
    b: GridField
    Q: dict
    a_env: object
    b_env: object
    upsilon: float = 0.0
    Upsilon: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self):
        return self.omega.size

    @property
    def band(self):
        return self.a.band


def constant_field(f, nodes):
    """Time-independent ``GridField`` (frozen past the grid)."""
    base = f.coeffs
    return GridField(nodes, np.broadcast_to(base, (len(nodes),) + base.shape).copy(), f.dim,
                     None, generator=lambda t: np.broadcast_to(
                         base, (np.size(t),) + base.shape).copy())


def _check_Q(Q, dim):
    out = {}
    for alpha, c in Q.items():
        alpha = tuple(int(x) for x in np.atleast_1d(alpha))
        if len(alpha) != dim or min(alpha) < 0:
            raise ValueError(f"multi-index {alpha} does not match dimension {dim}")
        if sum(alpha) < 2:
            raise ValueError(f"remainder term {alpha} has degree below two")
        if c.shape != ():
            raise ValueError("remainder coefficients must be scalar fields")
        out[alpha] = c
    return out


def estimate_upsilon(Q, dim, sigma=1.5, radius=1.0):
    """Bound for ``d_p^2 Q`` on ``|p| <= radius`` in the slice norms (at least one)."""
    spec = NormSpec.holder(sigma)
    total = 0.0
    for alpha, c in Q.items():
        deg = sum(alpha)
        total += float(np.max(c.norms(spec))) * deg * (deg - 1) * radius ** (deg - 2)
    return max(1.0, total * dim)


def build_model(omega, a, b, Q, a_env, b_env, upsilon=0.0, sigma=1.5):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    dim = omega.size
    if a.dim != dim or b.dim != dim or b.shape != (dim,):
        raise ValueError("a must be scalar and b a vector field on the same torus")
    Q = _check_Q(Q, dim)
    return HamiltonianModel(omega, a, b, Q, a_env, b_env, float(upsilon),
                            estimate_upsilon(Q, dim, sigma))


def split(h0, dh0, Q, nodes, dim, band, a_env, b_env, upsilon=0.0, omega_tol=1e-10):
    """Recover ``omega``, ``a`` and ``b`` from ``H(q,0,t)`` and ``d_p H(q,0,t)``.

    ``h0(q, t)`` returns values of shape ``(P,)`` and ``dh0(q, t)`` shape
    ``(P, dim)``.  The q-average of ``H(q,0,t)`` only shifts the energy and
    is dropped; the q-average of ``d_p H(q,0,t)`` must not drift in time.
    """
    nodes = np.asarray(nodes, dtype=float)
    a = GridField.from_function(h0, nodes, dim, band, (), a_env)
    zero = (slice(None),) + (band,) * dim
    a.coeffs[zero] = 0.0
    gen_a = a.generator

    def gen_a0(t):
        c = gen_a(t)
        c[zero] = 0.0
        return c

    a.generator = gen_a0
    full_b = GridField.from_function(dh0, nodes, dim, band, (dim,), b_env)
    means = full_b.coeffs[(slice(None), slice(None)) + (band,) * dim].real
    omega = means[0]
    drift = float(np.max(np.abs(means - omega)))
    if drift > omega_tol:
        raise ValueError(f"average of d_p H(q,0,t) drifts by {drift:.3g}; no constant frequency")
    gen_b = full_b.generator
    idx = (slice(None), slice(None)) + (band,) * dim

    def gen_b0(t):
        c = gen_b(t)
        c[idx] -= omega
        return c

    b = GridField(nodes, gen_b0(nodes), dim, b_env, gen_b0)
    return build_model(omega, a, b, Q, a_env, b_env, upsilon)


def mbar_zero(H):
    """``mbar_0[i][j] = (1 + delta_ij) c_{e_i + e_j}``: the p-Hessian of Q at p = 0."""
    dim = H.dim
    nodes = H.a.nodes
    K = H.band
    out = np.zeros((nodes.size, dim, dim) + (2 * K + 1,) * dim, dtype=complex)
    for alpha, c in H.Q.items():
        if sum(alpha) != 2:
            continue
        idx = [i for i, m in enumerate(alpha) for _ in range(m)]
        i, j = idx
        cc = c.resample(nodes).rebanded(K).coeffs
        if i == j:
            out[:, i, i] += 2 * cc
        else:
            out[:, i, j] += cc
            out[:, j, i] += cc
    return GridField(nodes, out, dim, None)


def grad_q(F):
    """Stack of ``d_{q_i} F`` on a new last value axis."""
    return np.stack([derivative(F.coeffs, F.dim, ax) for ax in range(F.dim)],
                    axis=F.coeffs.ndim - F.dim)


def tilde_h(H):
    """Same model with ``a`` and ``b`` removed; ``p = 0`` is then invariant."""
    nodes = H.a.nodes
    a0 = GridField.zeros(nodes, H.dim, H.band, (), H.a.envelope)
    b0 = GridField.zeros(nodes, H.dim, H.band, (H.dim,), H.b.envelope)
    return replace(H, a=a0, b=b0, _cache={})


def certify_envelopes(H, sigma=1.5):
    """Rescale envelopes so ``|d_q a|_{sigma+1, a_env} <= 1`` and ``|b|_{sigma, b_env} <= 1``."""
    da = H.a.with_coeffs(grad_q(H.a))
    ca = weighted_time_norm(da, NormSpec.holder(sigma + 1, H.a_env))
    cb = weighted_time_norm(H.b, NormSpec.holder(sigma, H.b_env))
    a_env = scaled(H.a_env, ca) if ca > 1 else H.a_env
    b_env = scaled(H.b_env, cb) if cb > 1 else H.b_env
    return replace(H, a_env=a_env, b_env=b_env, _cache={}), (ca, cb)


def _stack_at(H, t):
    """All coefficient fields at time t, with their q-gradients, in one array."""
    dim = H.dim
    a = H.a.at(t)[0]
    b = H.b.at(t)[0]
    K = max(H.a.band, H.b.band, *(c.band for c in H.Q.values())) if H.Q else max(H.a.band, H.b.band)
    parts = [_reband(a[None], dim, K), _reband(b, dim, K)]
    for c in H.Q.values():
        parts.append(_reband(c.at(t)[0][None], dim, K))
    base = np.concatenate(parts, axis=0)
    grads = [derivative(base, dim, ax) for ax in range(dim)]
    return np.concatenate([base] + grads, axis=0)


def _reband(c, dim, K):
    K0 = (c.shape[-1] - 1) // 2
    if K0 == K:
        return c
    out = np.zeros(c.shape[:-dim] + (2 * K + 1,) * dim, dtype=complex)
    s = slice(K - K0, K + K0 + 1)
    out[(Ellipsis,) + (s,) * dim] = c
    return out


def _fields_at(H, q, t):
    """Values and q-gradients of a, b and the Q coefficients at points ``q``."""
    dim = H.dim
    q = np.atleast_2d(np.asarray(q, dtype=float))
    stack = _stack_at(H, t)
    vals = eval_points(stack[None], dim, q[None])[0]
    nb = 1 + dim + len(H.Q)
    v = vals[:nb]
    g = vals[nb:].reshape(dim, nb, -1)
    return v, np.moveaxis(g, 0, -1)


def _monomials(alpha, p):
    return np.prod(p ** np.asarray(alpha), axis=-1)


def vector_field(H, q, p, t):
    """``(dq/dt, dp/dt)`` at points ``q, p`` of shape ``(P, dim)`` (or ``(dim,)``)."""
    single = np.ndim(q) == 1
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    dim = H.dim
    v, g = _fields_at(H, q, t)
    # v: (1 + dim + nQ, P); g: (1 + dim + nQ, P, dim)
    b = v[1:1 + dim].T
    dq = H.omega + b
    dp = -g[0] - np.einsum("jpi,pj->pi", g[1:1 + dim], p)
    for m, alpha in enumerate(H.Q):
        cval = v[1 + dim + m]
        cgrad = g[1 + dim + m]
        dp = dp - cgrad * _monomials(alpha, p)[:, None]
        for i in range(dim):
            if alpha[i] == 0:
                continue
            lower = list(alpha)
            lower[i] -= 1
            dq[:, i] += cval * alpha[i] * _monomials(lower, p)
    if single:
        return dq[0], dp[0]
    return dq, dp


def hamiltonian_value(H, q, p, t):
    """``H(q, p, t)`` without the dropped energy constant."""
    single = np.ndim(q) == 1
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    v, _ = _fields_at(H, q, t)
    dim = H.dim
    out = p @ H.omega + v[0] + np.einsum("ip,pi->p", v[1:1 + dim], p)
    for m, alpha in enumerate(H.Q):
        out = out + v[1 + dim + m] * _monomials(alpha, p)
    return out[0] if single else out


def quadratic_remainder(matrix, dim, nodes):
    """Coefficients for ``Q = p^T M p / 2`` with a constant symmetric matrix."""
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    Q = {}
    for i in range(dim):
        for j in range(i, dim):
            alpha = [0] * dim
            alpha[i] += 1
            alpha[j] += 1
            coef = M[i, i] / 2 if i == j else M[i, j]
            if coef != 0:
                Q[tuple(alpha)] = constant_field(FourierField.from_modes(dim, 0, {(0,) * dim: coef}), nodes)
    return Q
