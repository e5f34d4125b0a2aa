import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asymkam.decay import Exponential
from asymkam.field import (
    FourierField, GridField, NormSpec, analytic_norm, compose_near_identity, differentiate,
    eval_points, from_grid, grid_points, holder_norm, multiply, shift, to_grid,
    weighted_time_norm,
)

TWO_PI = 2 * np.pi


def cos_field(dim=1, band=4, k=(1,), amp=1.0):
    return FourierField.from_modes(dim, band, {tuple(k): amp / 2})


def random_field(rng, dim=1, band=4, shape=(), decay=0.6):
    c = rng.normal(size=shape + (2 * band + 1,) * dim) + 1j * rng.normal(size=shape + (2 * band + 1,) * dim)
    ks = np.meshgrid(*[np.arange(-band, band + 1)] * dim, indexing="ij")
    c = c * decay ** sum(np.abs(k) for k in ks)
    # impose c_{-k} = conj(c_k)
    flip = np.conj(c[(Ellipsis,) + (slice(None, None, -1),) * dim])
    return FourierField(0.5 * (c + flip), dim)


def test_real_fields_are_conjugate_symmetric():
    f = random_field(np.random.default_rng(0), dim=2, band=3)
    c = f.coeffs
    assert np.allclose(c, np.conj(c[::-1, ::-1]), atol=1e-14)
    q = np.random.default_rng(1).random((20, 2))
    assert np.all(np.isfinite(f(q)))


def test_grid_round_trip():
    f = random_field(np.random.default_rng(2), dim=2, band=5)
    N = 16
    back = from_grid(to_grid(f.coeffs, 2, N), 2, 5)
    assert np.allclose(back, f.coeffs, atol=1e-13)


def test_point_evaluation_matches_direct_sum():
    rng = np.random.default_rng(3)
    f = random_field(rng, dim=2, band=3)
    q = rng.random((7, 2))
    ks = np.arange(-3, 4)
    direct = np.einsum("ij,pi,pj->p", f.coeffs,
                       np.exp(2j * np.pi * np.outer(q[:, 0], ks)),
                       np.exp(2j * np.pi * np.outer(q[:, 1], ks)))
    assert np.allclose(f(q), direct.real, atol=1e-13)
    # batch evaluation at different points per leading slice
    c = np.stack([f.coeffs, 2 * f.coeffs])[:, None]
    x = np.stack([q, q])
    vals = eval_points(c, 2, x)
    assert np.allclose(vals[1, 0], 2 * direct.real, atol=1e-12)


def test_multiply_examples():
    f = cos_field()
    one = FourierField.from_modes(1, 0, {(0,): 1.0})
    q = grid_points(1, 64)
    assert np.allclose(multiply(f, one)(q), np.cos(TWO_PI * q[:, 0]), atol=1e-14)
    sq = multiply(f, f)
    assert np.allclose(sq(q), 0.5 + 0.5 * np.cos(2 * TWO_PI * q[:, 0]), atol=1e-14)
    assert sq.band == 8
    zero = FourierField.zeros(1, 2)
    assert np.all(multiply(f, zero).coeffs == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2))
def test_multiply_is_exact(seed, dim):
    rng = np.random.default_rng(seed)
    f, g = random_field(rng, dim, 3), random_field(rng, dim, 2)
    q = rng.random((30, dim))
    assert np.allclose(multiply(f, g)(q), f(q) * g(q), atol=1e-12)


def test_differentiate_examples():
    f = cos_field()
    df = differentiate(f, 0)
    q = np.linspace(0, 1, 17)[:, None]
    assert np.allclose(df(q), -TWO_PI * np.sin(TWO_PI * q[:, 0]), atol=1e-12)
    h = 1e-6
    fd = (f(q + h) - f(q - h)) / (2 * h)
    assert np.allclose(df(q), fd, atol=1e-6)
    const = FourierField.from_modes(1, 2, {(0,): 3.0})
    assert np.all(differentiate(const, 0).coeffs == 0)
    g = FourierField.from_modes(2, 2, {(0, 1): -0.5j})  # sin(2 pi q2)
    assert np.all(differentiate(g, 0).coeffs == 0)


def test_shift_examples():
    f = cos_field()
    assert np.allclose(shift(f, [0.0]).coeffs, f.coeffs)
    q = grid_points(1, 32)
    assert np.allclose(shift(f, [0.5])(q), -np.cos(TWO_PI * q[:, 0]), atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_shift_group_law_and_norms(seed):
    rng = np.random.default_rng(seed)
    f = random_field(rng, 2, 3)
    d1, d2 = rng.random(2), rng.random(2)
    assert np.allclose(shift(shift(f, d1), d2).coeffs, shift(f, d1 + d2).coeffs, atol=1e-13)
    g = shift(f, d1)
    assert analytic_norm(g, 0.1) == pytest.approx(analytic_norm(f, 0.1), rel=1e-13)


def test_compose_examples():
    f = cos_field(band=4)
    zero = FourierField.zeros(1, 4, (1,))
    assert np.allclose(compose_near_identity(f, zero, 6).coeffs[2:-2], f.coeffs, atol=1e-14)
    c = 0.13
    u = FourierField.from_modes(1, 0, {(0,): c}, shape=(1,))
    out = compose_near_identity(f, u, 4)
    assert np.allclose(out.coeffs, shift(f, [c]).coeffs, atol=1e-12)


def test_compose_mean_and_alias():
    rng = np.random.default_rng(4)
    f = random_field(rng, 1, 4)
    u = random_field(rng, 1, 3, shape=(1,))
    u = FourierField(0.05 * u.coeffs / np.abs(u.coeffs).sum(), 1)
    out, alias = compose_near_identity(f, u, 8, return_alias=True)
    N = 2 * (4 + 8) + 1
    q = grid_points(1, N)
    vals = f(q + u(q)[:, 0][:, None])
    assert out.mean() == pytest.approx(vals.mean(), abs=1e-14)
    assert alias >= 0
    # f(q + u(q)) is not band limited; a wider output band converges to it
    qs = rng.random((20, 1))
    exact = f(qs + u(qs)[:, 0][:, None])
    errs = [np.abs(compose_near_identity(f, u, K)(qs) - exact).max() for K in (8, 16, 32)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-10


def test_compose_preconditions():
    f = cos_field()
    big = FourierField.from_modes(1, 0, {(0,): 0.3}, shape=(1,))
    with pytest.raises(ValueError):
        compose_near_identity(f, big)
    with pytest.raises(MemoryError):
        compose_near_identity(FourierField.zeros(3, 60), FourierField.zeros(3, 60, (3,)), 60)


def test_holder_examples():
    assert holder_norm(FourierField.zeros(1, 3), 1.5) == 0.0
    f = cos_field()
    assert holder_norm(f, 0) == pytest.approx(1.0, abs=1e-3)
    # dense oracle: sup|f'| + Lipschitz constant of f  (sigma = 1 is k = 0 with mu = 1)
    x = np.linspace(0, 1, 10_001)
    lip = np.max(np.abs(np.diff(np.cos(TWO_PI * x)) / np.diff(x)))
    assert holder_norm(f, 1) == pytest.approx(1 + lip, abs=2e-2)
    assert holder_norm(f, 1) == pytest.approx(1 + TWO_PI, abs=2e-2)


def test_holder_fractional_is_between_integer_orders():
    f = random_field(np.random.default_rng(5), 1, 6)
    n0, n05, n1 = holder_norm(f, 0), holder_norm(f, 0.5), holder_norm(f, 1.0)
    assert n0 <= n05 <= n1 + 1e-12


def test_analytic_examples():
    assert analytic_norm(FourierField.from_modes(1, 2, {(0,): -2.5}), 0.3) == pytest.approx(2.5)
    s = 0.2
    assert analytic_norm(cos_field(), s) == pytest.approx(np.exp(TWO_PI * s), rel=1e-14)
    assert analytic_norm(FourierField.zeros(2, 3), 0.5) == 0.0
    with pytest.raises(OverflowError):
        analytic_norm(cos_field(band=200), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_holder_product_estimate(seed):
    rng = np.random.default_rng(seed)
    f, g = random_field(rng, 1, 8), random_field(rng, 1, 8)
    sig = 1.5
    lhs = holder_norm(multiply(f, g), sig)
    rhs = 4 ** sig * (holder_norm(f, 0) * holder_norm(g, sig) + holder_norm(f, sig) * holder_norm(g, 0))
    assert lhs <= rhs


def test_weighted_time_norm_examples():
    nodes = np.linspace(0, 5, 21)
    F = GridField.separable(cos_field(), lambda t: np.exp(-t), nodes, Exponential(1.0))
    spec = NormSpec.holder(0.0, Exponential(1.0))
    assert weighted_time_norm(F, spec) == pytest.approx(1.0, abs=1e-3)
    assert weighted_time_norm(GridField.zeros(nodes, 1, 3), spec) == 0.0
    plain = weighted_time_norm(F, NormSpec.holder(0.0))
    assert plain == pytest.approx(np.max(F.norms(NormSpec.holder(0.0))))


def test_gridfield_interpolation_and_tail():
    nodes = np.linspace(0, 10, 81)
    env = Exponential(1.0)
    F = GridField.separable(cos_field(), lambda t: np.exp(-t), nodes, env)
    G = GridField(nodes, F.coeffs, 1, env)  # no generator: spline plus envelope tail
    t = np.array([0.33, 4.71, 12.0])
    exact = F.at(t)
    assert np.allclose(G.at(t), exact, atol=1e-6 * np.exp(-t)[:, None] + 1e-9)
    with pytest.raises(ValueError):
        G.at(-1.0)


def test_serialization_round_trip():
    rng = np.random.default_rng(6)
    f = random_field(rng, 2, 2)
    assert np.allclose(FourierField.from_dict(f.to_dict()).coeffs, f.coeffs)
    nodes = np.linspace(0, 1, 4)
    F = GridField.separable(f, lambda t: 1 + t, nodes, Exponential(2.0))
    back = GridField.from_dict(F.to_dict())
    assert np.allclose(back.coeffs, F.coeffs)
    assert back.envelope == Exponential(2.0)


def test_normspec_validation():
    with pytest.raises(ValueError):
        NormSpec("sobolev")
    with pytest.raises(ValueError):
        NormSpec.analytic(-0.1)
