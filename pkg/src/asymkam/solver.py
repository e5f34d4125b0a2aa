"""Quasi-Newton construction of an asymptotic KAM torus.

The unknown is ``y = (u, v)`` and the embedding is
``phi^t(q) = (q + u(q, t), v(q, t))``.  Invariance with rigid rotation
``q -> q + omega t`` is ``F(y) = 0`` where

    F1 = b(q+u) + d_p Q(q+u, v) - nabla_Omega u
    F2 = d_q a(q+u) + d_q b(q+u)^T v + d_q Q(q+u, v) + nabla_Omega v

and ``nabla_Omega w = omega . d_q w + d_t w``.  The iteration
``y <- y - DF(0)^{-1} F(y)`` only needs two transport solves per step because
``DF(0)(u, v) = (mbar_0 v - nabla_Omega u, nabla_Omega v)`` is triangular.

Each transport solve returns a field whose ``nabla_Omega`` is exactly the
right-hand side at the nodes, so the iterate carries its own transport terms
``(Tu, Tv)`` and ``F`` never differentiates numerically in time.
"""

from dataclasses import dataclass, field

import numpy as np

from .decay import Exponential, Polynomial, Tabulated, TailOf, check_sharp, choose_upsilon
from .field import GridField, NormSpec, default_band, eval_points, from_grid, grid_points, slice_norms, to_grid
from .hamiltonian import build_model, certify_envelopes, grad_q, mbar_zero
from .homological import solve_he, time_grid

__all__ = [
    "SolverConfig", "TorusFamily", "StepRecord", "IterationTrace", "TorusProblem",
    "LinearizedSolution", "DecayCertificate", "SolverFailure", "NonIntegrableError",
    "eval_F", "invert_linearized", "solve_torus", "solve_torus_field", "certify_decay",
    "companion_envelope", "torus_field_model",
]


class SolverFailure(RuntimeError):
    """The iteration could not be brought to convergence."""


class NonIntegrableError(ValueError):
    """The perturbation profile has infinite integral; no asymptotic torus exists."""


@dataclass
class SolverConfig:
    sigma: float = 1.5
    s: float = None
    band: int = None
    nodes: int = 200
    tol: float = 1e-8
    max_iter: int = 50
    contraction_cap: float = 0.5
    budget: float = 0.01
    tail_ratio: float = 1e-3
    upsilon_prime: float = None
    max_escalations: int = 8
    ball: float = None
    certify: bool = True

    def __post_init__(self):
        if self.nodes < 8:
            raise ValueError("the solver grid needs at least 8 time nodes")
        if self.band is not None and self.band < 1:
            raise ValueError("band must be at least 1")
        if not self.tol > 0 or not self.budget > 0 or not 0 < self.contraction_cap < 1:
            raise ValueError("tol and budget must be positive and contraction_cap in (0, 1)")
        if not 0 < self.tail_ratio < 1:
            raise ValueError("tail_ratio must lie in (0, 1)")
        if self.s is not None and self.s <= 0:
            raise ValueError("analytic width s must be positive")

    def norm(self):
        if self.s is not None:
            return NormSpec.analytic(self.s / 2)
        return NormSpec.holder(self.sigma)

    def report_norm(self):
        if self.s is not None:
            return NormSpec.analytic(self.s / 4)
        return NormSpec.holder(self.sigma)


@dataclass
class StepRecord:
    step: int
    dy_norm: float
    f1: float
    f2: float
    ratio: float
    upsilon_prime: float


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    status: str = "failed"
    escalations: list = field(default_factory=list)

    @property
    def iterations(self):
        """Newton steps taken on the final grid."""
        if not self.records:
            return 0
        last = self.records[-1].upsilon_prime
        return sum(1 for r in self.records if r.upsilon_prime == last and r.step > 0)

    @property
    def residual(self):
        r = self.records[-1]
        return max(r.f1, r.f2)

    @property
    def ratios(self):
        last = self.records[-1].upsilon_prime
        return [r.ratio for r in self.records
                if r.upsilon_prime == last and np.isfinite(r.ratio)]

    def to_dict(self):
        return {
            "status": self.status,
            "escalations": self.escalations,
            "records": [vars(r) for r in self.records],
        }


@dataclass
class TorusFamily:
    omega: np.ndarray
    u: GridField
    v: GridField
    Tu: GridField
    Tv: GridField
    a_env: object
    b_env: object
    upsilon_prime: float
    Lambda: float
    norm: NormSpec

    @property
    def dim(self):
        return self.omega.size

    @property
    def nodes(self):
        return self.u.nodes

    def phi(self, q, t):
        """Embedding ``(q + u(q,t), v(q,t))`` at points ``q`` (``(P, dim)``) and time t."""
        if t < self.upsilon_prime - 1e-12:
            raise ValueError("the torus is only built for t >= upsilon'; use extend_backward")
        q = np.atleast_2d(np.asarray(q, dtype=float))
        cu = self.u.at(t)
        cv = self.v.at(t)
        both = np.concatenate([cu, cv], axis=1)
        vals = eval_points(both, self.dim, q[None])[0]
        n = self.dim
        return q + vals[:n].T, vals[n:].T

    def min_jacobian_det(self):
        """Smallest ``det(I + d_q u)`` over the collocation grid and nodes."""
        n, K = self.dim, self.u.band
        N = 4 * K + 2
        du = grad_q(self.u)  # (T, n, n, modes): d_{q_j} u_i
        vals = to_grid(du, n, N).reshape(du.shape[0], n, n, -1)
        jac = np.moveaxis(vals, -1, 1) + np.eye(n)
        return float(np.linalg.det(jac).min())

    def sup_u(self):
        return float(slice_norms(self.u.coeffs, self.dim, NormSpec.holder(0.0)).max())


class TorusProblem:
    """Model fields sampled on a solver grid, ready for repeated ``F`` evaluations."""

    def __init__(self, H, nodes, band, norm):
        self.H = H
        self.dim = n = H.dim
        self.omega = H.omega
        self.nodes = np.asarray(nodes, dtype=float)
        self.K = K = band
        self.norm = norm
        self.N = 2 * (K + K) + 1
        self.q = grid_points(n, self.N)
        self.a_env, self.b_env = H.a_env, H.b_env
        self.u_env, self.v_env = TailOf(H.b_env), TailOf(H.a_env)
        self.alphas = list(H.Q)

        def sampled(F):
            return F.resample(self.nodes).rebanded(K)

        a = sampled(H.a)
        b = sampled(H.b)
        parts = [grad_q(a), b.coeffs, grad_q(b).reshape((b.coeffs.shape[0], n * n) + b.coeffs.shape[2:])]
        for alpha in self.alphas:
            c = sampled(H.Q[alpha])
            parts.append(c.coeffs[:, None])
            parts.append(grad_q(c))
        stack = np.concatenate(parts, axis=1)
        # components that vanish or do not depend on q need no scattered evaluation
        centre = (slice(None), slice(None)) + (K,) * n
        rest = stack.copy()
        rest[centre] = 0
        self.live = np.flatnonzero(np.abs(rest).reshape(rest.shape[0], rest.shape[1], -1).max(axis=(0, 2)) > 0)
        self.stack = stack[:, self.live]
        self.means = stack[centre].real
        M = sampled(mbar_zero(H)) if self.alphas else None
        if M is None:
            self.mbar_grid = None
        else:
            self.mbar_grid = to_grid(M.coeffs, n, self.N).reshape(self.nodes.size, n, n, -1)

    def zeros(self):
        n, K = self.dim, self.K
        return np.zeros((self.nodes.size, n) + (2 * K + 1,) * n, dtype=complex)

    def _grid(self, c):
        return to_grid(c, self.dim, self.N).reshape(c.shape[0], c.shape[1], -1)

    def _project(self, vals):
        n = self.dim
        return from_grid(vals.reshape(vals.shape[:2] + (self.N,) * n), n, self.K)

    def F(self, u, v, Tu, Tv):
        n = self.dim
        T = self.nodes.size
        U = self._grid(u)
        V = self._grid(v)
        X = self.q[None] + np.moveaxis(U, 1, 2)
        vals = np.broadcast_to(self.means[:, :, None], self.means.shape + (X.shape[1],)).copy()
        if self.live.size:
            vals[:, self.live] = eval_points(self.stack, n, X)
        da = vals[:, :n]
        b = vals[:, n:2 * n]
        db = vals[:, 2 * n:2 * n + n * n].reshape(T, n, n, -1)  # [component j, derivative i]
        qeq = b.copy()
        peq = da + np.einsum("tjip,tjp->tip", db, V)
        pos = 2 * n + n * n
        for alpha in self.alphas:
            c = vals[:, pos]
            dc = vals[:, pos + 1: pos + 1 + n]
            pos += 1 + n
            al = np.asarray(alpha).reshape(1, n, 1)
            mono = np.prod(V ** al, axis=1)
            peq = peq + dc * mono[:, None]
            for i in range(n):
                if alpha[i]:
                    lower = al.copy()
                    lower[0, i, 0] -= 1
                    qeq[:, i] += c * alpha[i] * np.prod(V ** lower, axis=1)
        F1 = self._project(qeq) - Tu
        F2 = self._project(peq) + Tv
        return F1, F2

    def mbar_times(self, v):
        if self.mbar_grid is None:
            return np.zeros_like(v)
        V = self._grid(v)
        return self._project(np.einsum("tijp,tjp->tip", self.mbar_grid, V))

    def invert(self, z, g):
        """Solve ``DF(0)(u, v) = (z, g)``; returns ``u, v`` and their transport terms."""
        he_v = solve_he(GridField(self.nodes, g, self.dim, self.a_env), self.omega)
        v = he_v.kappa.coeffs
        rhs = self.mbar_times(v) - z
        he_u = solve_he(GridField(self.nodes, rhs, self.dim, self.b_env), self.omega)
        return he_u.kappa.coeffs, v, rhs, g, (he_u, he_v)

    def wnorm(self, c, env, spec=None):
        spec = spec or self.norm
        w = env(self.nodes)
        return float(np.max(slice_norms(c, self.dim, spec) / w))

    def y_norm(self, u, v, Tu, Tv):
        nu = max(self.wnorm(u, self.u_env), self.wnorm(Tu, self.b_env))
        nv = max(self.wnorm(v, self.v_env), self.wnorm(Tv, self.a_env))
        return max(nu, nv)

    def residual(self, F1, F2):
        return self.wnorm(F1, self.b_env), self.wnorm(F2, self.a_env)

    def family(self, u, v, Tu, Tv, Lambda):
        n = self.dim
        mk = lambda c, env: GridField(self.nodes, c, n, env)
        return TorusFamily(self.omega, mk(u, self.u_env), mk(v, self.v_env),
                           mk(Tu, self.b_env), mk(Tv, self.a_env),
                           self.a_env, self.b_env, float(self.nodes[0]), Lambda, self.norm)


def _solver_nodes(H, t0, cfg):
    ends = []
    for env in (H.a_env, H.b_env):
        ends.append(time_grid(env, t0, 4, cfg.tail_ratio)[-1])
    t_end = max(ends)
    kind = H.b_env if all(isinstance(e, Exponential) for e in (H.a_env, H.b_env)) else Polynomial(2.0)
    return time_grid(kind, t0, cfg.nodes, t_end=t_end)


def eval_F(H, y, cfg=None):
    """Residuals ``(F1, F2)`` of a torus family as coefficient arrays on its nodes."""
    cfg = cfg or SolverConfig()
    prob = TorusProblem(H, y.nodes, y.u.band, cfg.norm())
    return prob.F(y.u.coeffs, y.v.coeffs, y.Tu.coeffs, y.Tv.coeffs)


@dataclass
class LinearizedSolution:
    u: GridField
    v: GridField
    Tu: GridField
    Tv: GridField
    bound: float
    estimate_ok: bool
    C_bar: float


def invert_linearized(H, z, g, cfg=None, Lambda=None):
    """Apply ``DF(0)^{-1}`` to ``(z, g)`` (``GridField`` vector fields on a common grid).

    Also checks ``|u| <= C_bar Upsilon Lambda |g| + |z|`` with ``C_bar`` the
    measured constant of the product ``mbar_0 v`` in the slice norms.
    """
    cfg = cfg or SolverConfig()
    prob = TorusProblem(H, z.nodes, z.band, cfg.norm())
    if Lambda is None:
        Lambda = check_sharp(H.a_env, H.b_env, z.nodes[0]).lambda_min
    u, v, Tu, Tv, _ = prob.invert(z.coeffs, g.coeffs)
    spec = prob.norm
    mv = prob.mbar_times(v)
    if prob.mbar_grid is not None:
        M = mbar_zero(H).resample(prob.nodes).rebanded(prob.K).coeffs
        nm = slice_norms(M, prob.dim, spec)
        nv = slice_norms(v, prob.dim, spec)
        nmv = slice_norms(mv, prob.dim, spec)
        denom = nm * nv
        C_bar = float(np.max(np.where(denom > 0, nmv / np.where(denom > 0, denom, 1), 0.0)))
    else:
        C_bar = 0.0
    nz = max(prob.wnorm(z.coeffs, prob.b_env), 0.0)
    ng = prob.wnorm(g.coeffs, prob.a_env)
    bound = C_bar * H.Upsilon * Lambda * ng + nz
    nu = max(prob.wnorm(u, prob.u_env), prob.wnorm(Tu, prob.b_env))
    mk = lambda c, env: GridField(prob.nodes, c, prob.dim, env)
    return LinearizedSolution(mk(u, prob.u_env), mk(v, prob.v_env), mk(Tu, prob.b_env),
                              mk(Tv, prob.a_env), bound, bool(nu <= bound * (1 + 1e-6) + 1e-14),
                              C_bar)


def _next_upsilon(H, Lambda, budget, current):
    for _ in range(60):
        t = choose_upsilon(H.a_env, H.b_env, Lambda, budget)
        if t > current + 1e-9:
            return t, budget
        budget /= 2
    return current + 1.0, budget


def solve_torus(H, cfg=None):
    """Iterate ``y <- y - DF(0)^{-1} F(y)`` from ``y = 0``, escalating ``upsilon'`` if needed.

    Returns ``(TorusFamily, IterationTrace)``.  The iterate is restarted on a
    later time window when the contraction ratio exceeds the cap on two
    consecutive steps or the iterate leaves the ball; after
    ``cfg.max_escalations`` restarts a ``SolverFailure`` is raised.
    """
    cfg = cfg or SolverConfig()
    if cfg.certify:
        H, _ = certify_envelopes(H, cfg.sigma)
    sharp = check_sharp(H.a_env, H.b_env, H.upsilon)
    if not sharp.holds:
        raise ValueError("envelopes are incompatible: no finite Lambda on the horizon")
    Lambda = sharp.lambda_min
    K = cfg.band or default_band(H.dim)
    upsilon = H.upsilon if cfg.upsilon_prime is None else max(cfg.upsilon_prime, H.upsilon)
    budget = cfg.budget
    trace = IterationTrace()
    for attempt in range(cfg.max_escalations + 1):
        nodes = _solver_nodes(H, upsilon, cfg)
        prob = TorusProblem(H, nodes, K, cfg.norm())
        outcome, state = _iterate(prob, cfg, trace, upsilon)
        if outcome == "converged":
            fam = prob.family(*state, Lambda)
            if fam.min_jacobian_det() < 0.1 or fam.sup_u() > 0.25:
                outcome = "not a diffeomorphism"
            else:
                trace.status = "converged" if attempt == 0 else "escalated_upsilon"
                return fam, trace
        if attempt == cfg.max_escalations:
            break
        new, budget = _next_upsilon(H, Lambda, budget / 2, upsilon)
        trace.escalations.append({"from": upsilon, "to": new, "reason": outcome})
        upsilon = new
    trace.status = "failed"
    raise SolverFailure(f"no convergence after {cfg.max_escalations} escalations "
                        f"(last: {trace.escalations[-1]['reason'] if trace.escalations else outcome})")


def _iterate(prob, cfg, trace, upsilon):
    u = prob.zeros()
    v = prob.zeros()
    Tu = prob.zeros()
    Tv = prob.zeros()
    prev = None
    first = None
    path = 0.0
    over = 0
    for step in range(cfg.max_iter + 1):
        F1, F2 = prob.F(u, v, Tu, Tv)
        r1, r2 = prob.residual(F1, F2)
        if max(r1, r2) < cfg.tol:
            trace.records.append(StepRecord(step, 0.0, r1, r2, np.nan, upsilon))
            return "converged", (u, v, Tu, Tv)
        if step == cfg.max_iter:
            trace.records.append(StepRecord(step, 0.0, r1, r2, np.nan, upsilon))
            return "iteration limit", None
        du, dv, dTu, dTv, _ = prob.invert(F1, F2)
        dy = prob.y_norm(du, dv, dTu, dTv)
        ratio = dy / prev if prev else np.nan
        trace.records.append(StepRecord(step, dy, r1, r2, ratio, upsilon))
        u, v, Tu, Tv = u - du, v - dv, Tu - dTu, Tv - dTv
        if not np.isfinite(dy):
            return "non-finite step", None
        first = dy if first is None else first
        path += dy
        ball = cfg.ball if cfg.ball is not None else max(1.0, 4.0 * first)
        # the path length bounds |y|; measure |y| itself only when that bound is too weak
        if path > ball and prob.y_norm(u, v, Tu, Tv) > ball:
            return "left the ball", None
        over = over + 1 if (prev and ratio > cfg.contraction_cap) else 0
        if over >= 2:
            return "contraction ratio above cap", None
        prev = dy
    return "iteration limit", None


def companion_envelope(b_env):
    """An envelope for the (absent) zeroth-order term that satisfies the compatibility test with ``b_env``."""
    if isinstance(b_env, Exponential):
        return b_env
    if isinstance(b_env, Polynomial):
        return Polynomial(b_env.power + 1.0, b_env.scale)
    if isinstance(b_env, Tabulated):
        cont = b_env.continuation
        if isinstance(cont, Exponential):
            return b_env
        g = b_env.grid
        return Tabulated(g, b_env.values / np.maximum(g, 1.0), Polynomial(cont.power + 1.0))
    raise NonIntegrableError(f"{b_env.kind} profile is not integrable")


def torus_field_model(omega, P):
    """The Hamiltonian ``(omega + P).p`` whose torus problem is the conjugacy of ``omega + P``."""
    env = P.envelope
    if env is None or not env.integrable:
        raise NonIntegrableError(
            "perturbation profile is not integrable; the rotation is not asymptotically "
            "conjugate (see verify.counterexample_divergence)")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n = omega.size
    comp = companion_envelope(env)
    a = GridField.zeros(P.nodes, n, P.band, (), comp)
    return build_model(omega, a, P, {}, comp, env, upsilon=float(P.nodes[0]))


def solve_torus_field(omega, P, cfg=None):
    """Asymptotic conjugacy of ``dq/dt = omega + P(q, t)`` to the rigid rotation.

    Lifted to ``H = (omega + P).p`` this is the torus problem with ``a = 0``
    and ``Q = 0``; the ``u`` part of the solution is the conjugacy.
    """
    return solve_torus(torus_field_model(omega, P), cfg)


@dataclass
class DecayCertificate:
    C_u: float
    C_v: float
    trend_u: float
    trend_v: float

    @property
    def bounded(self):
        return self.trend_u <= 1.5 and self.trend_v <= 1.5

    def __iter__(self):
        return iter((self.C_u, self.C_v))


def certify_decay(y, a_env=None, b_env=None, spec=None):
    """``C_u = sup |u^t| / bbar(t)`` and ``C_v = sup |v^t| / abar(t)``.

    ``trend`` compares the ratio at the last node with its maximum over the
    first half of the grid; a value well above one means the declared
    envelope decays faster than the torus does.
    """
    a_env = a_env or y.a_env
    b_env = b_env or y.b_env
    spec = spec or y.norm
    t = y.nodes
    ru = slice_norms(y.u.coeffs, y.dim, spec) / b_env.tail(t)
    rv = slice_norms(y.v.coeffs, y.dim, spec) / a_env.tail(t)
    half = t.size // 2

    def trend(r):
        head = r[: half + 1].max()
        return float(r[-1] / head) if head > 0 else 0.0

    return DecayCertificate(float(ru.max()), float(rv.max()), trend(ru), trend(rv))
