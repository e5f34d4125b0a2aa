"""Scenario files: a JSON document describing one run.

A scenario holds exactly one of ``hamiltonian`` or ``torus_field``, plus
optional ``solver``, ``verify`` and ``output`` sections.  Fields are given
either as sampled ``GridField`` records or as short sums of trigonometric
terms times a time profile::

    {"terms": [{"k": [1], "cos": 0.1, "sin": 0.0}],
     "profile": {"kind": "exponential", "rate": 1.0, "hold_before": 0.0}}
"""

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .decay import Harmonic, Constant, decay_from_dict
from .field import FourierField, GridField, default_band
from .hamiltonian import build_model, constant_field
from .solver import SolverConfig

__all__ = ["Scenario", "ScenarioError", "load_scenario", "bundled_scenarios", "profile_from_dict"]

GOLDEN = (5 ** 0.5 - 1) / 2


class ScenarioError(ValueError):
    """The scenario document is malformed or inconsistent."""


@dataclass
class Scenario:
    name: str
    kind: str
    model: object = None
    omega: np.ndarray = None
    P: GridField = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    verify: dict = field(default_factory=dict)
    output: str = None
    seed: int = 0
    raw: dict = None


def bundled_scenarios():
    root = resources.files("asymkam") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read(source):
    if isinstance(source, dict):
        return source
    path = Path(str(source))
    if not path.exists():
        if str(source) in bundled_scenarios():
            text = (resources.files("asymkam") / "scenarios" / f"{source}.json").read_text()
            return json.loads(text)
        raise ScenarioError(f"no scenario file or bundled scenario named {source!r}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def profile_from_dict(rec):
    """Time profile ``t -> value``; ``hold_before`` freezes it for earlier times."""
    kind = rec.get("kind", "constant")
    scale = float(rec.get("scale", 1.0))
    hold = rec.get("hold_before")
    if kind == "exponential":
        rate = float(rec["rate"])
        base = lambda t: scale * np.exp(-rate * t)
    elif kind == "polynomial":
        power = float(rec["power"])
        base = lambda t: scale * np.asarray(t, dtype=float) ** (-power)
    elif kind == "harmonic":
        shift = float(rec.get("shift", 1.0))
        base = lambda t: scale / (shift + np.asarray(t, dtype=float))
    elif kind == "constant":
        base = lambda t: scale * np.ones_like(np.asarray(t, dtype=float))
    else:
        raise ScenarioError(f"unknown profile kind {kind!r}")
    if hold is None:
        return base
    hold = float(hold)
    return lambda t: base(np.maximum(np.asarray(t, dtype=float), hold))


def _omega(rec, dim):
    raw = rec.get("omega")
    if raw is None:
        raise ScenarioError("frequency 'omega' is required")
    vals = []
    for x in np.atleast_1d(raw):
        if isinstance(x, str):
            table = {"golden": GOLDEN, "sqrt2": 2 ** 0.5 - 1, "sqrt3": 3 ** 0.5 - 1}
            if x not in table:
                raise ScenarioError(f"unknown named frequency {x!r}")
            vals.append(table[x])
        else:
            vals.append(float(x))
    omega = np.array(vals)
    if omega.size != dim:
        raise ScenarioError(f"omega has {omega.size} components for dimension {dim}")
    return omega


def _nodes(rec, default_start):
    g = rec.get("grid", {})
    start = float(g.get("start", default_start))
    end = float(g.get("end", start + 40.0))
    n = int(g.get("nodes", 400))
    if end <= start or n < 5:
        raise ScenarioError("field grid needs end > start and at least five nodes")
    return np.linspace(start, end, n)


def _spatial(terms, dim, band, shape=()):
    modes = {}
    for term in terms:
        k = tuple(int(x) for x in term["k"])
        if len(k) != dim:
            raise ScenarioError(f"mode {k} does not match dimension {dim}")
        c = 0.5 * float(term.get("cos", 0.0)) - 0.5j * float(term.get("sin", 0.0))
        if not any(k):
            c = float(term.get("cos", 0.0))
        else:
            # store each pair once, on the representative with first nonzero entry positive
            first = next(x for x in k if x)
            if first < 0:
                k = tuple(-x for x in k)
                c = np.conj(c)
        modes[k] = modes.get(k, 0) + c
    return FourierField.from_modes(dim, band, modes, shape)


def _scalar_field(rec, dim, band, nodes, envelope):
    if rec is None:
        return GridField.zeros(nodes, dim, band, (), envelope)
    if "slices" in rec:
        F = GridField.from_dict(rec)
        F.envelope = envelope
        return F.rebanded(band)
    spatial = _spatial(rec.get("terms", []), dim, band)
    profile = profile_from_dict(rec.get("profile", {"kind": "constant"}))
    return GridField.separable(spatial, profile, nodes, envelope)


def _vector_field(rec, dim, band, nodes, envelope):
    if rec is None:
        return GridField.zeros(nodes, dim, band, (dim,), envelope)
    comps = rec.get("components")
    if comps is None or len(comps) != dim:
        raise ScenarioError(f"vector field needs {dim} 'components'")
    parts = [_scalar_field(c, dim, band, nodes, envelope) for c in comps]
    coeffs = np.stack([p.coeffs for p in parts], axis=1)
    gens = [p.generator for p in parts]

    def gen(t):
        return np.stack([g(t) for g in gens], axis=1)

    return GridField(nodes, coeffs, dim, envelope, gen if all(gens) else None)


def _config(rec, overrides):
    rec = dict(rec or {})
    rec.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in fields(SolverConfig)}
    bad = set(rec) - names
    if bad:
        raise ScenarioError(f"unknown solver settings: {', '.join(sorted(bad))}")
    return SolverConfig(**rec)


def load_scenario(source, **overrides):
    """Parse a scenario (path, bundled name or dict); ``overrides`` patch the solver section."""
    rec = _read(source)
    has_h = "hamiltonian" in rec
    has_p = "torus_field" in rec
    if has_h == has_p:
        raise ScenarioError("a scenario needs exactly one of 'hamiltonian' or 'torus_field'")
    dim = int(rec.get("dim", 1))
    name = rec.get("name", Path(str(source)).stem if not isinstance(source, dict) else "scenario")
    cfg = _config(rec.get("solver"), overrides)
    band = cfg.band or default_band(dim)
    out = Scenario(name, "hamiltonian" if has_h else "torus_field", solver=cfg,
                   verify=rec.get("verify", {}), output=rec.get("output"),
                   seed=int(rec.get("seed", 0)), raw=rec)
    try:
        if has_h:
            h = rec["hamiltonian"]
            a_env = decay_from_dict(h["a_envelope"])
            b_env = decay_from_dict(h["b_envelope"])
            nodes = _nodes(h, float(h.get("upsilon", 0.0)))
            a = _scalar_field(h.get("a"), dim, band, nodes, a_env)
            b = _vector_field(h.get("b"), dim, band, nodes, b_env)
            Q = {}
            for term in h.get("Q", []):
                alpha = tuple(int(x) for x in term["alpha"])
                if "value" in term:
                    f = FourierField.from_modes(dim, 0, {(0,) * dim: float(term["value"])})
                    Q[alpha] = constant_field(f, nodes)
                else:
                    Q[alpha] = _scalar_field(term["field"], dim, band, nodes, None)
            out.model = build_model(_omega(h, dim), a, b, Q, a_env, b_env,
                                    float(h.get("upsilon", 0.0)), cfg.sigma)
            out.omega = out.model.omega
        else:
            p = rec["torus_field"]
            env = decay_from_dict(p["envelope"])
            start = float(p.get("start", env.t_min))
            nodes = _nodes(p, start)
            out.omega = _omega(p, dim)
            out.P = _vector_field(p.get("P"), dim, band, nodes, env)
    except KeyError as exc:
        raise ScenarioError(f"missing key {exc}") from exc
    return out


def counterexample_profile(rec):
    kind = rec.get("kind", "harmonic")
    if kind == "harmonic":
        return Harmonic(float(rec.get("scale", 1.0)), float(rec.get("shift", 1.0)))
    if kind == "constant":
        return Constant(float(rec.get("scale", 1.0)))
    raise ScenarioError(f"unknown counterexample profile {kind!r}")
