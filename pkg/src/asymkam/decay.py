"""Decay envelopes on half-lines and the compatibility test between two of them.

An envelope is a positive, non-increasing function of time.  The integrable
ones (``Exponential``, ``Polynomial``, ``Tabulated``) bound perturbation
sizes; their tails ``tail(t) = int_t^inf d`` bound the torus corrections.
``TailOf`` wraps such a tail so it can be used as a weight, and ``Harmonic``
and ``Constant`` describe slowly decaying profiles that are *not* integrable.
"""

from dataclasses import dataclass, field
from math import inf

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "DecayFn", "Exponential", "Polynomial", "Tabulated", "TailOf", "Harmonic",
    "Constant", "SharpReport", "evaluate", "tail", "scaled", "check_sharp",
    "choose_upsilon", "decay_from_dict",
]


class DecayFn:
    """Base class: positive non-increasing function on ``[t_min, inf)``."""

    kind = "abstract"
    integrable = True
    t_min = 0.0

    def __call__(self, t):
        raise NotImplementedError

    def tail(self, t):
        raise NotImplementedError

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_min - 1e-12):
            raise ValueError(f"{self.kind} envelope evaluated at t={t.min()} < {self.t_min}")
        return t

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(DecayFn):
    """``scale * exp(-rate * t)``; defined for every real t, natural start 0."""

    rate: float
    scale: float = 1.0
    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential rate must be positive")
        if not self.scale >= 0:
            raise ValueError("envelope scale must be non-negative")

    def __call__(self, t):
        return self.scale * np.exp(-self.rate * np.asarray(t, dtype=float))

    def tail(self, t):
        return self(t) / self.rate

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate, "scale": self.scale}


@dataclass(frozen=True)
class Polynomial(DecayFn):
    """``scale * t**(-power)`` on ``t >= 1`` with ``power > 1``."""

    power: float
    scale: float = 1.0
    kind = "polynomial"
    t_min = 1.0

    def __post_init__(self):
        if not self.power > 1:
            raise ValueError("polynomial envelope needs power > 1 to be integrable")
        if not self.scale >= 0:
            raise ValueError("envelope scale must be non-negative")

    def __call__(self, t):
        t = self._check(t)
        return self.scale * t ** (-self.power)

    def tail(self, t):
        t = self._check(t)
        return self.scale * t ** (1.0 - self.power) / (self.power - 1.0)

    def to_dict(self):
        return {"kind": self.kind, "power": self.power, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class Tabulated(DecayFn):
    """Monotone cubic interpolation of samples, continued past the last node.

    ``continuation`` fixes the shape beyond the table (an ``Exponential`` or a
    ``Polynomial``); its scale is rematched so the two pieces agree at the
    last node.
    """

    grid: np.ndarray
    values: np.ndarray
    continuation: DecayFn
    kind = "tabulated"
    _pchip: PchipInterpolator = field(init=False, repr=False)
    _anti: object = field(init=False, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("tabulated grid must be strictly increasing with >= 2 nodes")
        if values.shape != grid.shape or np.any(values <= 0):
            raise ValueError("tabulated values must be positive and match the grid")
        if np.any(np.diff(values) > 0):
            raise ValueError("tabulated values must be non-increasing")
        cont = self.continuation
        if isinstance(cont, Exponential):
            cont = Exponential(cont.rate, values[-1] * np.exp(cont.rate * grid[-1]))
        elif isinstance(cont, Polynomial):
            if grid[-1] < 1:
                raise ValueError("polynomial continuation needs the last node >= 1")
            cont = Polynomial(cont.power, values[-1] * grid[-1] ** cont.power)
        else:
            raise ValueError("continuation must be Exponential or Polynomial")
        pchip = PchipInterpolator(grid, values)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "continuation", cont)
        object.__setattr__(self, "_pchip", pchip)
        object.__setattr__(self, "_anti", pchip.antiderivative())

    @property
    def t_min(self):
        return float(self.grid[0])

    def __call__(self, t):
        t = self._check(t)
        inside = t <= self.grid[-1]
        out = np.where(inside, self._pchip(np.minimum(t, self.grid[-1])),
                       self.continuation(np.maximum(t, self.grid[-1])))
        return out

    def tail(self, t):
        t = self._check(t)
        last = self.grid[-1]
        tc = np.minimum(t, last)
        inside = self._anti(last) - self._anti(tc) + self.continuation.tail(last)
        return np.where(t <= last, inside, self.continuation.tail(np.maximum(t, last)))

    def to_dict(self):
        cont = self.continuation.to_dict()
        cont.pop("scale")
        return {"kind": self.kind, "grid": self.grid.tolist(),
                "values": self.values.tolist(), "continuation": cont}


@dataclass(frozen=True)
class TailOf(DecayFn):
    """The tail ``t -> int_t^inf base`` used as a weight.  Not assumed integrable."""

    base: DecayFn
    kind = "tail"
    integrable = False

    @property
    def t_min(self):
        return self.base.t_min

    def __call__(self, t):
        return self.base.tail(t)

    def tail(self, t):
        raise ValueError("the tail of an envelope is not assumed integrable")

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict()}


@dataclass(frozen=True)
class Harmonic(DecayFn):
    """``scale / (shift + t)``: decays to zero but is not integrable."""

    scale: float = 1.0
    shift: float = 1.0
    kind = "harmonic"
    integrable = False

    def __post_init__(self):
        if not self.shift > 0:
            raise ValueError("harmonic profile needs a positive shift")

    def __call__(self, t):
        t = self._check(t)
        return self.scale / (self.shift + t)

    def integral(self, t0, t1):
        return self.scale * np.log((self.shift + np.asarray(t1, dtype=float)) / (self.shift + t0))

    def tail(self, t):
        raise ValueError("harmonic profile is not integrable")

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale, "shift": self.shift}


@dataclass(frozen=True)
class Constant(DecayFn):
    """A profile that does not decay at all."""

    scale: float = 1.0
    kind = "constant"
    integrable = False

    def __call__(self, t):
        return self.scale * np.ones_like(np.asarray(t, dtype=float))

    def integral(self, t0, t1):
        return self.scale * (np.asarray(t1, dtype=float) - t0)

    def tail(self, t):
        raise ValueError("constant profile is not integrable")

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}


def evaluate(d, t):
    return d(t)


def tail(d, t):
    return d.tail(t)


def scaled(d, factor):
    """Same shape, scale multiplied by ``factor``."""
    if isinstance(d, Exponential):
        return Exponential(d.rate, d.scale * factor)
    if isinstance(d, Polynomial):
        return Polynomial(d.power, d.scale * factor)
    if isinstance(d, Tabulated):
        return Tabulated(d.grid, d.values * factor, d.continuation)
    if isinstance(d, Harmonic):
        return Harmonic(d.scale * factor, d.shift)
    if isinstance(d, Constant):
        return Constant(d.scale * factor)
    raise TypeError(f"cannot rescale {type(d).__name__}")


_ALIASES = {"exp": "exponential", "poly": "polynomial", "table": "tabulated"}


def decay_from_dict(rec):
    kind = _ALIASES.get(rec["kind"], rec["kind"])
    if kind == "exponential":
        return Exponential(float(rec["rate"]), float(rec.get("scale", 1.0)))
    if kind == "polynomial":
        return Polynomial(float(rec["power"]), float(rec.get("scale", 1.0)))
    if kind == "tabulated":
        cont = dict(rec["continuation"])
        cont.setdefault("scale", 1.0)
        return Tabulated(rec["grid"], rec["values"], decay_from_dict(cont))
    if kind == "tail":
        return TailOf(decay_from_dict(rec["base"]))
    if kind == "harmonic":
        return Harmonic(float(rec.get("scale", 1.0)), float(rec.get("shift", 1.0)))
    if kind == "constant":
        return Constant(float(rec.get("scale", 1.0)))
    raise ValueError(f"unknown envelope kind {kind!r}")


@dataclass
class SharpReport:
    holds: bool
    lambda_min: float
    upsilon_used: float
    worst_t: float


def _horizon(a, upsilon, ratio=1e-9):
    target = ratio * a.tail(upsilon)
    h = 1.0
    for _ in range(80):
        if a.tail(upsilon + h) < target:
            return h
        h *= 2.0
    raise ValueError("envelope tail does not fall off within the search horizon")


def check_sharp(a, b, upsilon, grid_points=512):
    """Smallest Lambda with ``abar <= Lambda b`` and ``abar b <= Lambda a bbar``.

    Sampled on a geometric grid from ``upsilon`` up to where the tail of ``a``
    has dropped by 1e-9.  A ratio still climbing at the end of the horizon
    means no finite Lambda exists and ``holds`` is False.
    """
    if grid_points < 16:
        raise ValueError("check_sharp needs at least 16 grid points")
    if not (a.integrable and b.integrable):
        raise ValueError("both envelopes must be integrable")
    upsilon = max(float(upsilon), a.t_min, b.t_min)
    h = _horizon(a, upsilon)
    offsets = np.concatenate([[0.0], np.geomspace(h * 1e-6, h, grid_points - 1)])
    t = upsilon + offsets
    av, bv, abar, bbar = a(t), b(t), a.tail(t), b.tail(t)
    if np.any(av <= 0) or np.any(bv <= 0) or np.any(bbar <= 0):
        raise ValueError("envelope vanishes on the sampled grid")
    ratio = np.maximum(abar / bv, abar * bv / (av * bbar))
    i = int(np.argmax(ratio))
    lam = float(ratio[i])
    # still growing at the horizon: the supremum is not attained
    tail_part = ratio[int(0.9 * grid_points):]
    growing = i >= grid_points - 2 and tail_part[-1] > 1.001 * tail_part[0]
    holds = bool(np.isfinite(lam) and not growing)
    return SharpReport(holds, lam if holds else inf, upsilon, float(t[i]))


def choose_upsilon(a, b, lam, budget, t_start=None):
    """Smallest ``t`` where ``bbar``, ``lam b`` and ``lam**2 b bbar`` are all <= budget."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    start = max(a.t_min, b.t_min) if t_start is None else float(t_start)
    checks = {
        "bbar": lambda t: b.tail(t),
        "Lambda*b": lambda t: lam * b(t),
        "Lambda^2*b*bbar": lambda t: lam ** 2 * b(t) * b.tail(t),
    }

    def ok(t):
        return all(f(t) <= budget for f in checks.values())

    if ok(start):
        return start
    hi = 1.0
    while not ok(start + hi):
        hi *= 2.0
        if hi > 1e12:
            bad = [k for k, f in checks.items() if f(start + hi) > budget]
            raise ValueError(f"budget {budget} not reached; violated: {', '.join(bad)}")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ok(start + mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * max(1.0, start + hi):
            break
    return start + hi
