import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from asymkam.decay import (
    Constant, Exponential, Harmonic, Polynomial, Tabulated, TailOf, check_sharp,
    choose_upsilon, decay_from_dict, evaluate, scaled, tail,
)


def test_eval_examples():
    assert evaluate(Exponential(1.0), 0.0) == 1.0
    assert evaluate(Polynomial(2.0), 2.0) == 0.25
    tab = Tabulated([1.0, 2.0], [1.0, 0.5], Polynomial(2.0))
    assert float(tab(1.0)) == pytest.approx(1.0, abs=1e-15)


def test_tail_examples():
    assert tail(Exponential(1.0), 0.0) == pytest.approx(1.0, rel=1e-12)
    assert tail(Polynomial(3.0), 1.0) == pytest.approx(0.5, rel=1e-12)
    assert tail(Exponential(2.0, 0.0), 3.7) == 0.0


def test_domain_violation():
    with pytest.raises(ValueError):
        Polynomial(2.0)(0.5)
    with pytest.raises(ValueError):
        Polynomial(1.0)
    with pytest.raises(ValueError):
        Exponential(-1.0)


def test_tabulated_junction_and_tail():
    grid = np.geomspace(1.0, 5.0, 41)
    vals = 2.0 * grid ** -2.5
    tab = Tabulated(grid, vals, Polynomial(2.5))
    last = grid[-1]
    assert float(tab(last + 1e-9)) == pytest.approx(float(tab(last)), rel=1e-8)
    ref = quad(lambda s: float(tab(s)), 1.0, 5.0, points=grid[1:-1], limit=200)[0] + float(tab.continuation.tail(5.0))
    assert float(tab.tail(1.0)) == pytest.approx(ref, rel=1e-9)
    # the interpolant reproduces a power law closely, so the tail does too
    assert float(tab.tail(1.0)) == pytest.approx(2.0 / 1.5, rel=1e-3)


def test_tabulated_rejects_increasing():
    with pytest.raises(ValueError):
        Tabulated([1.0, 2.0], [0.5, 1.0], Exponential(1.0))


envelopes = st.one_of(
    st.builds(Exponential, st.floats(0.2, 3.0), st.floats(0.1, 5.0)),
    st.builds(Polynomial, st.floats(1.2, 4.0), st.floats(0.1, 5.0)),
)


@settings(max_examples=60, deadline=None)
@given(envelopes, st.floats(1.01, 20.0), st.floats(0.01, 10.0))
def test_tail_properties(env, t1, gap):
    t2 = t1 + gap
    T1, T2 = float(env.tail(t1)), float(env.tail(t2))
    assert T1 >= T2 >= 0
    # monotone density: the integral over [t1, t2] dominates gap * env(t2)
    assert T1 - T2 >= gap * float(env(t2)) * (1 - 1e-12)
    assert T1 - T2 == pytest.approx(quad(lambda s: float(env(s)), t1, t2, epsabs=0)[0], rel=1e-9)
    h = 1e-4 * max(1.0, t1)
    deriv = (float(env.tail(t1 + h)) - float(env.tail(t1 - h))) / (2 * h)
    assert deriv == pytest.approx(-float(env(t1)), rel=1e-6)


def test_check_sharp_exponential_pair():
    rep = check_sharp(Exponential(2.0), Exponential(1.0), 0.0)
    assert rep.holds
    assert rep.lambda_min <= 0.5 + 1e-12


def test_check_sharp_polynomial_pair():
    rep = check_sharp(Polynomial(3.0), Polynomial(2.0), 1.0)
    assert rep.holds
    assert rep.lambda_min <= 1.0 + 1e-12


def test_check_sharp_equal_rates_is_tight():
    rep = check_sharp(Exponential(1.0), Exponential(1.0), 0.0)
    assert rep.holds
    assert rep.lambda_min == pytest.approx(1.0, rel=1e-12)


def test_check_sharp_fails_for_faster_b():
    rep = check_sharp(Exponential(1.0), Exponential(2.0), 0.0)
    assert not rep.holds
    assert rep.lambda_min == np.inf


def test_check_sharp_rejects_tiny_grids_and_non_integrable():
    with pytest.raises(ValueError):
        check_sharp(Exponential(1.0), Exponential(1.0), 0.0, grid_points=8)
    with pytest.raises(ValueError):
        check_sharp(Harmonic(), Exponential(1.0), 0.0)


def test_choose_upsilon_examples():
    t = choose_upsilon(Exponential(1.0), Exponential(1.0), 1.0, 0.01)
    assert t == pytest.approx(np.log(100.0), abs=1e-6)
    assert choose_upsilon(Exponential(3.0), Exponential(3.0), 0.1, 1.0) == 0.0
    t = choose_upsilon(Polynomial(3.0), Polynomial(2.0), 1.0, 0.01)
    assert t == pytest.approx(100.0, rel=1e-6)


def test_choose_upsilon_names_violation():
    with pytest.raises(ValueError, match="bbar"):
        choose_upsilon(Polynomial(3.0), Polynomial(1.0 + 1e-9), 1.0, 1e-12)


def test_serialization_round_trip():
    for env in [Exponential(1.5, 2.0), Polynomial(2.5, 0.3),
                Tabulated([1.0, 2.0, 3.0], [1.0, 0.4, 0.2], Exponential(0.7)),
                TailOf(Exponential(2.0)), Harmonic(1.0, 2.0), Constant(0.3)]:
        back = decay_from_dict(env.to_dict())
        t = np.linspace(1.0, 6.0, 11)
        assert np.allclose(back(t), env(t), rtol=1e-14)
    assert decay_from_dict({"kind": "exp", "rate": 2.0})(0.0) == 1.0
    assert decay_from_dict({"kind": "poly", "power": 2.0})(2.0) == 0.25


def test_scaled():
    assert scaled(Exponential(1.0), 3.0)(0.0) == 3.0
    assert scaled(Polynomial(2.0, 2.0), 0.5)(1.0) == 1.0


def test_non_integrable_profiles():
    h = Harmonic()
    assert not h.integrable
    assert h.integral(0.0, np.expm1(10.0)) == pytest.approx(10.0, abs=1e-12)
    with pytest.raises(ValueError):
        h.tail(1.0)
    assert Constant(2.0).integral(0.0, 3.0) == 6.0
