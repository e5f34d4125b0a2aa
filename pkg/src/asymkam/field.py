"""Trigonometric fields on the torus and time-sampled families of them.

Coefficient arrays have the value axes first and the ``dim`` mode axes last,
each mode axis running over ``k = -K..K``.  A field is
``f(q) = sum_k c_k exp(2 pi i k.q)`` with ``q`` in ``[0, 1)^dim``; real fields
keep ``c_{-k} = conj(c_k)``.

The low-level helpers work on arrays with arbitrary leading axes so that a
whole time grid of slices is transformed at once; ``FourierField`` and
``GridField`` are thin containers on top of them.
"""

from dataclasses import dataclass
from functools import cached_property
from itertools import product
from math import ceil, log2

import numpy as np
from scipy.interpolate import CubicSpline

from .decay import DecayFn, decay_from_dict

__all__ = [
    "FourierField", "GridField", "NormSpec", "wavenumbers", "to_grid",
    "from_grid", "grid_points", "eval_points", "derivative", "slice_norms",
    "multiply", "differentiate", "shift", "compose_near_identity",
    "holder_norm", "analytic_norm", "weighted_time_norm", "default_band",
]

TWO_PI = 2.0 * np.pi
MAX_GRID = 1 << 22


def default_band(dim):
    return 16 if dim == 1 else 8


def wavenumbers(K):
    return np.arange(-K, K + 1)


def _band(c, dim):
    return (c.shape[-1] - 1) // 2


def _kgrid(K, dim, axis):
    """Wavenumber along ``axis`` broadcast over the ``dim`` mode axes."""
    shape = [1] * dim
    shape[axis] = 2 * K + 1
    return wavenumbers(K).reshape(shape)


def _fft_index(K, dim, N):
    """Index of the centered modes ``-K..K`` inside an FFT-ordered array."""
    pos = np.arange(-K, K + 1) % N
    return (Ellipsis,) + np.ix_(*([pos] * dim))


def _pad(c, dim, N):
    """Centered coefficients -> FFT-ordered array with N points per axis."""
    K = _band(c, dim)
    if N < 2 * K + 1:
        raise ValueError(f"grid of {N} points cannot hold band {K}")
    out = np.zeros(c.shape[:-dim] + (N,) * dim, dtype=complex)
    out[_fft_index(K, dim, N)] = c
    return out


def to_grid(c, dim, N):
    """Values on the uniform grid ``j/N`` (real part; fields here are real)."""
    axes = tuple(range(-dim, 0))
    return np.fft.ifftn(_pad(c, dim, N), axes=axes).real * N ** dim


def from_grid(values, dim, K):
    """Project grid values onto band K (discrete Fourier coefficients)."""
    N = values.shape[-1]
    if N < 2 * K + 1:
        raise ValueError(f"grid of {N} points cannot resolve band {K}")
    axes = tuple(range(-dim, 0))
    c = np.fft.fftn(values, axes=axes)[_fft_index(K, dim, N)] / N ** dim
    return _symmetrize(c, dim)


def _symmetrize(c, dim):
    flip = c[(Ellipsis,) + (slice(None, None, -1),) * dim]
    return 0.5 * (c + np.conj(flip))


def grid_points(dim, N):
    """Uniform grid as an array of shape ``(N**dim, dim)`` in C order."""
    x = np.arange(N) / N
    mesh = np.meshgrid(*([x] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def derivative(c, dim, axis, order=1):
    return c * (2j * np.pi * _kgrid(_band(c, dim), dim, axis)) ** order


def eval_points(c, dim, x):
    """Evaluate band-limited fields at scattered points.

    ``c`` has shape ``(B, C) + modes`` and ``x`` shape ``(B, P, dim)``; the
    result has shape ``(B, C, P)``.  The exponentials factor per axis, so the
    cost is a chain of small contractions instead of a full sum over modes.
    """
    K = _band(c, dim)
    # real fields: keep k_1 >= 0 and double the strictly positive half
    half = c[(Ellipsis, slice(K, None)) + (slice(None),) * (dim - 1)]
    w = np.full(K + 1, 2.0)
    w[0] = 1.0
    half = half * w.reshape((K + 1,) + (1,) * (dim - 1))
    k = wavenumbers(K)
    E0 = np.exp(2j * np.pi * x[..., 0, None] * k[K:])
    if dim == 1:
        out = np.einsum("bca,bpa->bcp", half, E0, optimize=True)
    elif dim == 2:
        E1 = np.exp(2j * np.pi * x[..., 1, None] * k)
        tmp = np.einsum("bcxy,bpy->bcxp", half, E1, optimize=True)
        out = np.einsum("bcxp,bpx->bcp", tmp, E0, optimize=True)
    else:
        E = [E0] + [np.exp(2j * np.pi * x[..., d, None] * k) for d in range(1, dim)]
        out = half
        for d in range(dim - 1, -1, -1):
            # contract the last remaining mode axis
            out = np.einsum("bc...mp,bpm->bc...p" if d < dim - 1 else "bc...m,bpm->bc...p",
                            out, E[d], optimize=True)
    return out.real


def _split_sigma(sigma):
    """``sigma = k + mu``; integers >= 1 use a Lipschitz seminorm on order ``sigma-1``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return 0, 0.0
    k = int(np.floor(sigma))
    mu = sigma - k
    if mu == 0:
        return k - 1, 1.0
    return k, mu


def holder_grid_size(K, dim):
    # 8x oversampling on the circle; 4x per axis on higher tori keeps the grid affordable
    if dim == 1:
        return 2 ** ceil(log2(max(8 * K, 128)))
    return 2 ** ceil(log2(max(4 * K, 32)))


def _real_grid(c, dim, N):
    """Like ``to_grid`` but through a half-spectrum transform (fields are real)."""
    full = _pad(c, dim, N)
    half = full[..., : N // 2 + 1]
    axes = tuple(range(-dim, 0))
    return np.fft.irfftn(half, s=(N,) * dim, axes=axes) * N ** dim


def _max_shift_diff(vals, step, axis, lead, buf):
    """``max |f(x + step e_axis) - f(x)|`` over the periodic grid, per leading index."""
    n = vals.shape[axis]

    def cut(arr, lo, hi):
        idx = [slice(None)] * arr.ndim
        idx[axis] = slice(lo, hi)
        return arr[tuple(idx)]

    out = buf.reshape(vals.shape)
    np.subtract(cut(vals, step, n), cut(vals, 0, n - step), out=cut(out, 0, n - step))
    np.subtract(cut(vals, 0, step), cut(vals, n - step, n), out=cut(out, n - step, n))
    np.abs(out, out=out)
    return out.reshape(lead, -1).max(axis=1)


def _holder_lead(c, dim, sigma, N=None):
    """Hoelder norm estimate reduced over every axis except the leading one."""
    K = _band(c, dim)
    N = N or holder_grid_size(K, dim)
    k, mu = _split_sigma(sigma)
    lead = c.shape[0]
    norm = np.zeros(lead)
    for order in range(k + 1):
        for alpha in product(range(order + 1), repeat=dim):
            if sum(alpha) != order:
                continue
            d = c
            for ax, a in enumerate(alpha):
                if a:
                    d = derivative(d, dim, ax, a)
            vals = _real_grid(d, dim, N)
            norm_sup = np.abs(vals).reshape(lead, -1).max(axis=1)
            if order == k and mu > 0:
                semi = np.zeros(lead)
                buf = np.empty(vals.size)
                step = N // 2
                while step >= 1:
                    h = step / N
                    for ax in range(vals.ndim - dim, vals.ndim):
                        semi = np.maximum(semi, _max_shift_diff(vals, step, ax, lead, buf) / h ** mu)
                    step //= 2
                norm_sup = norm_sup + semi
            norm = np.maximum(norm, norm_sup)
    return norm


def _analytic_lead(c, dim, s):
    K = _band(c, dim)
    if TWO_PI * dim * K * s > 700:
        raise OverflowError(f"analytic weight exp(2 pi |k| s) overflows for K={K}, s={s}")
    kabs = sum(np.abs(_kgrid(K, dim, ax)) for ax in range(dim))
    w = np.exp(TWO_PI * kabs * s)
    lead = c.shape[0]
    per = np.abs(c) * w
    # sum over modes, max over value components
    per = per.reshape(per.shape[: per.ndim - dim] + (-1,)).sum(axis=-1)
    return per.reshape(lead, -1).max(axis=1)


@dataclass(frozen=True)
class NormSpec:
    """Which norm to measure slices in, and an optional time weight."""

    kind: str = "holder"
    sigma: float = 0.0
    s: float = 0.0
    weight: DecayFn = None

    def __post_init__(self):
        if self.kind not in ("holder", "analytic"):
            raise ValueError("norm kind must be 'holder' or 'analytic'")
        if self.kind == "analytic" and self.s < 0:
            raise ValueError("analytic width must be non-negative")

    @classmethod
    def holder(cls, sigma, weight=None):
        return cls("holder", sigma=float(sigma), weight=weight)

    @classmethod
    def analytic(cls, s, weight=None):
        return cls("analytic", s=float(s), weight=weight)

    def with_weight(self, weight):
        return NormSpec(self.kind, self.sigma, self.s, weight)

    def loosened(self, amount):
        """Same family with ``amount`` more regularity (or width)."""
        if self.kind == "holder":
            return NormSpec("holder", self.sigma + amount, self.s, self.weight)
        return NormSpec("analytic", self.sigma, self.s + amount / (2 * np.pi), self.weight)


def slice_norms(c, dim, spec):
    """Norm of each leading-axis slice of a coefficient array."""
    c = np.asarray(c)
    if spec.kind == "holder":
        return _holder_lead(c, dim, spec.sigma)
    return _analytic_lead(c, dim, spec.s)


class FourierField:
    """A band-limited field ``T^dim -> R^shape``."""

    def __init__(self, coeffs, dim):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim < dim or len(set(coeffs.shape[coeffs.ndim - dim:])) != 1:
            raise ValueError("mode axes must all have length 2K+1")
        if coeffs.shape[-1] % 2 != 1:
            raise ValueError("mode axes must have odd length")
        self.coeffs = coeffs
        self.dim = dim

    @property
    def band(self):
        return _band(self.coeffs, self.dim)

    @property
    def shape(self):
        return self.coeffs.shape[: self.coeffs.ndim - self.dim]

    @classmethod
    def zeros(cls, dim, band, shape=()):
        return cls(np.zeros(tuple(shape) + (2 * band + 1,) * dim, dtype=complex), dim)

    @classmethod
    def from_modes(cls, dim, band, modes, shape=()):
        """``modes`` maps wavenumber tuples to complex coefficients (conjugates filled in)."""
        f = cls.zeros(dim, band, shape)
        for k, val in modes.items():
            k = tuple(np.atleast_1d(k))
            if max(abs(x) for x in k) > band:
                raise ValueError(f"mode {k} outside band {band}")
            idx = tuple(x + band for x in k)
            jdx = tuple(-x + band for x in k)
            f.coeffs[(Ellipsis,) + idx] += val
            if idx != jdx:
                f.coeffs[(Ellipsis,) + jdx] += np.conj(val)
            else:
                f.coeffs[(Ellipsis,) + idx] = np.real(f.coeffs[(Ellipsis,) + idx])
        return f

    @classmethod
    def from_function(cls, func, dim, band, shape=(), N=None):
        """Project ``func(q)`` (``q`` of shape ``(P, dim)``, values ``(P,)+shape``) onto the band."""
        N = N or 4 * band + 2
        q = grid_points(dim, N)
        vals = np.asarray(func(q), dtype=float).reshape((N,) * dim + tuple(shape))
        vals = np.moveaxis(vals, tuple(range(dim)), tuple(range(-dim, 0)))
        return cls(from_grid(vals, dim, band), dim)

    def __call__(self, q):
        """Evaluate at points ``q`` of shape ``(P, dim)``; returns ``(P,)+shape``."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        c = self.coeffs.reshape((1, -1) + self.coeffs.shape[-self.dim:])
        out = eval_points(c, self.dim, q[None])[0]
        return np.moveaxis(out.reshape(self.shape + (q.shape[0],)), -1, 0)

    def grid_values(self, N):
        return to_grid(self.coeffs, self.dim, N)

    def rebanded(self, K):
        c, dim = self.coeffs, self.dim
        K0 = self.band
        if K <= K0:
            s = slice(K0 - K, K0 + K + 1)
            return FourierField(c[(Ellipsis,) + (s,) * dim].copy(), dim)
        out = FourierField.zeros(dim, K, self.shape)
        s = slice(K - K0, K + K0 + 1)
        out.coeffs[(Ellipsis,) + (s,) * dim] = c
        return out

    def mean(self):
        return self.coeffs[(Ellipsis,) + (self.band,) * self.dim].real

    def __add__(self, other):
        if isinstance(other, FourierField):
            K = max(self.band, other.band)
            return FourierField(self.rebanded(K).coeffs + other.rebanded(K).coeffs, self.dim)
        out = FourierField(self.coeffs.copy(), self.dim)
        out.coeffs[(Ellipsis,) + (self.band,) * self.dim] += other
        return out

    def __neg__(self):
        return FourierField(-self.coeffs, self.dim)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, FourierField):
            return multiply(self, scalar)
        return FourierField(self.coeffs * scalar, self.dim)

    __rmul__ = __mul__

    def to_dict(self):
        K, dim = self.band, self.dim
        coeffs = []
        for k in product(range(-K, K + 1), repeat=dim):
            val = self.coeffs[(Ellipsis,) + tuple(x + K for x in k)]
            if np.any(val != 0):
                coeffs.append([list(k), np.real(val).tolist(), np.imag(val).tolist()])
        rec = {"dim": dim, "band": K, "coeffs": coeffs}
        if self.shape:
            rec["shape"] = list(self.shape)
        return rec

    @classmethod
    def from_dict(cls, rec):
        dim, K = int(rec["dim"]), int(rec["band"])
        f = cls.zeros(dim, K, tuple(rec.get("shape", ())))
        for k, re, im in rec["coeffs"]:
            f.coeffs[(Ellipsis,) + tuple(int(x) + K for x in k)] = np.asarray(re) + 1j * np.asarray(im)
        return f


def multiply(f, g):
    """Pointwise product; band grows to the sum of bands and the result is exact."""
    dim = f.dim
    K = f.band + g.band
    N = 2 * K + 1
    vals = to_grid(f.coeffs, dim, N) * to_grid(g.coeffs, dim, N)
    return FourierField(from_grid(vals, dim, K), dim)


def differentiate(f, axis):
    """Partial derivative along ``axis`` (0-based)."""
    return FourierField(derivative(f.coeffs, f.dim, axis), f.dim)


def shift(f, delta):
    """``q -> f(q + delta)``."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    phase = np.ones((1,) * f.dim, dtype=complex)
    for ax in range(f.dim):
        phase = phase * np.exp(2j * np.pi * delta[ax] * _kgrid(f.band, f.dim, ax))
    return FourierField(f.coeffs * phase, f.dim)


def compose_near_identity(f, u, band_out=None, return_alias=False):
    """``q -> f(q + u(q))`` for a small vector field ``u``, projected on ``band_out``.

    Collocates on a grid of ``2 (K_f + K_out) + 1`` points per axis.  With
    ``return_alias`` the coefficient mass that fell between ``band_out`` and
    the grid Nyquist band is returned as an aliasing estimate.
    """
    dim = f.dim
    K_out = band_out if band_out is not None else max(f.band, u.band)
    N = 2 * (f.band + K_out) + 1
    if N ** dim > MAX_GRID:
        raise MemoryError(f"collocation grid of {N}^{dim} points exceeds the limit {MAX_GRID}")
    q = grid_points(dim, N)
    uval = to_grid(u.coeffs, dim, N).reshape(dim, -1).T
    if np.abs(uval).max() >= 0.25:
        raise ValueError("displacement must stay below 1/4 for a near-identity composition")
    x = q + uval
    c = f.coeffs.reshape((1, -1) + f.coeffs.shape[-dim:])
    vals = eval_points(c, dim, x[None])[0].reshape(f.shape + (N,) * dim)
    full = from_grid(vals, dim, N // 2)
    out = FourierField(full, dim).rebanded(K_out)
    if not return_alias:
        return out
    alias = float(np.abs(full).sum() - np.abs(out.coeffs).sum())
    return out, alias


def holder_norm(f, sigma, N=None):
    c = f.coeffs.reshape((1,) + f.coeffs.shape)
    return float(_holder_lead(c, f.dim, sigma, N)[0])


def analytic_norm(f, s):
    c = f.coeffs.reshape((1,) + f.coeffs.shape)
    return float(_analytic_lead(c, f.dim, s)[0])


class GridField:
    """A field sampled on a time grid, with a rule for times past the last node.

    Past the last node a slice is continued as ``slice(T) * env(t) / env(T)``;
    ``envelope=None`` freezes the last slice.  An optional ``generator``
    (``times -> coefficient array``) gives exact slices at any time and then
    takes precedence over interpolation.
    """

    def __init__(self, nodes, coeffs, dim, envelope=None, generator=None):
        nodes = np.asarray(nodes, dtype=float)
        coeffs = np.asarray(coeffs, dtype=complex)
        if nodes.ndim != 1 or np.any(np.diff(nodes) <= 0):
            raise ValueError("time nodes must be strictly increasing")
        if coeffs.shape[0] != nodes.size:
            raise ValueError("one slice per node is required")
        self.nodes = nodes
        self.coeffs = coeffs
        self.dim = dim
        self.envelope = envelope
        self.generator = generator

    @property
    def band(self):
        return _band(self.coeffs, self.dim)

    @property
    def shape(self):
        return self.coeffs.shape[1: self.coeffs.ndim - self.dim]

    @property
    def t_end(self):
        return float(self.nodes[-1])

    @classmethod
    def zeros(cls, nodes, dim, band, shape=(), envelope=None):
        nodes = np.asarray(nodes, dtype=float)
        c = np.zeros((nodes.size,) + tuple(shape) + (2 * band + 1,) * dim, dtype=complex)
        return cls(nodes, c, dim, envelope, generator=lambda t: np.zeros(
            (np.size(t),) + c.shape[1:], dtype=complex))

    @classmethod
    def separable(cls, spatial, profile, nodes, envelope=None):
        """``profile(t) * spatial(q)`` with an exact generator."""
        base = spatial.coeffs

        def gen(t):
            p = np.atleast_1d(profile(np.atleast_1d(np.asarray(t, dtype=float))))
            return p.reshape((-1,) + (1,) * base.ndim) * base

        nodes = np.asarray(nodes, dtype=float)
        return cls(nodes, gen(nodes), spatial.dim, envelope, generator=gen)

    @classmethod
    def from_function(cls, func, nodes, dim, band, shape=(), envelope=None, N=None):
        """Sample ``func(q, t)`` (values ``(P,)+shape``) slice by slice."""
        N = N or 4 * band + 2

        def gen(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            return np.stack([FourierField.from_function(lambda q: func(q, ti), dim, band,
                                                        shape, N).coeffs for ti in t])

        nodes = np.asarray(nodes, dtype=float)
        return cls(nodes, gen(nodes), dim, envelope, generator=gen)

    def slice(self, i):
        return FourierField(self.coeffs[i], self.dim)

    @cached_property
    def _spline(self):
        return CubicSpline(self.nodes, self.coeffs, axis=0)

    def at(self, t):
        """Coefficient arrays at the given times, shape ``(len(t),) + slice shape``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.generator is not None:
            return self.generator(t)
        if np.any(t < self.nodes[0] - 1e-12 * max(1.0, abs(self.nodes[0]))):
            raise ValueError(f"time {t.min()} precedes the grid start {self.nodes[0]}")
        out = np.empty((t.size,) + self.coeffs.shape[1:], dtype=complex)
        inside = t <= self.nodes[-1]
        if np.any(inside):
            out[inside] = self._spline(np.clip(t[inside], self.nodes[0], self.nodes[-1]))
        if np.any(~inside):
            last = self.coeffs[-1]
            if self.envelope is None:
                factor = np.ones(np.count_nonzero(~inside))
            else:
                factor = self.envelope(t[~inside]) / self.envelope(self.nodes[-1])
            out[~inside] = factor.reshape((-1,) + (1,) * last.ndim) * last
        return out

    def field_at(self, t):
        return FourierField(self.at(t)[0], self.dim)

    def resample(self, nodes):
        nodes = np.asarray(nodes, dtype=float)
        return GridField(nodes, self.at(nodes), self.dim, self.envelope, self.generator)

    def rebanded(self, K):
        K0 = self.band
        c = self.coeffs
        if K <= K0:
            s = slice(K0 - K, K0 + K + 1)
            c = c[(Ellipsis,) + (s,) * self.dim]
        else:
            out = np.zeros(c.shape[: c.ndim - self.dim] + (2 * K + 1,) * self.dim, dtype=complex)
            s = slice(K - K0, K + K0 + 1)
            out[(Ellipsis,) + (s,) * self.dim] = c
            c = out
        return GridField(self.nodes, c.copy(), self.dim, self.envelope)

    def with_coeffs(self, coeffs, envelope=None):
        return GridField(self.nodes, coeffs, self.dim,
                         self.envelope if envelope is None else envelope)

    def norms(self, spec):
        return slice_norms(self.coeffs, self.dim, spec)

    def to_dict(self):
        return {
            "nodes": self.nodes.tolist(),
            "envelope": None if self.envelope is None else self.envelope.to_dict(),
            "slices": [self.slice(i).to_dict() for i in range(self.nodes.size)],
        }

    @classmethod
    def from_dict(cls, rec):
        slices = [FourierField.from_dict(s) for s in rec["slices"]]
        K = max(s.band for s in slices)
        coeffs = np.stack([s.rebanded(K).coeffs for s in slices])
        env = rec.get("envelope")
        return cls(rec["nodes"], coeffs, slices[0].dim,
                   None if env is None else decay_from_dict(env))


def weighted_time_norm(F, spec):
    """``sup_t |F^t| / weight(t)`` over the grid nodes (unweighted if no weight)."""
    n = F.norms(spec)
    if spec.weight is None:
        return float(n.max())
    w = spec.weight(F.nodes)
    if np.any(w <= 0):
        raise ValueError("weight vanishes on the grid")
    return float(np.max(n / w))
