import numpy as np
import pytest

from asymkam.decay import Exponential
from asymkam.field import FourierField, GridField
from asymkam.hamiltonian import build_model, quadratic_remainder
from asymkam.solver import SolverConfig, solve_torus

GOLDEN = (5 ** 0.5 - 1) / 2


def clamped_exp(t):
    # e^{-t} for t >= 0, held at 1 before so the model can be flowed backward
    return np.exp(-np.maximum(np.asarray(t, dtype=float), 0.0))


def model_problem(eps=0.1, band=16, nodes=None):
    """H = omega p + eps e^{-t} cos(2 pi q) + p^2/2 with omega the golden mean."""
    nodes = np.linspace(-6.0, 40.0, 400) if nodes is None else nodes
    env = Exponential(1.0)
    a = GridField.separable(FourierField.from_modes(1, band, {(1,): eps / 2}), clamped_exp, nodes, env)
    b = GridField.zeros(nodes, 1, band, (1,), env)
    return build_model([GOLDEN], a, b, quadratic_remainder([[1.0]], 1, nodes), env, env)


def unperturbed(dim=1, band=16):
    nodes = np.linspace(-6.0, 40.0, 200)
    env = Exponential(1.0)
    a = GridField.zeros(nodes, dim, band, (), env)
    b = GridField.zeros(nodes, dim, band, (dim,), env)
    omega = [GOLDEN, 2 ** 0.5 - 1][:dim]
    return build_model(omega, a, b, quadratic_remainder(np.eye(dim), dim, nodes), env, env)


def model_problem_2d(band=8):
    omega = np.array([GOLDEN, 2 ** 0.5 - 1])
    nodes = np.linspace(0.0, 40.0, 300)
    env = Exponential(1.0)
    prof = lambda t: np.exp(-t)
    a = GridField.separable(FourierField.from_modes(2, band, {(1, 0): 0.05, (1, 1): 0.05}), prof, nodes, env)
    bsp = FourierField.from_modes(2, band, {(0, 1): -0.025j}, shape=(2,))
    bsp.coeffs[1] = 0
    b = GridField.separable(bsp, prof, nodes, env)
    return build_model(omega, a, b, quadratic_remainder(np.eye(2), 2, nodes), env, env)


@pytest.fixture(scope="session")
def model():
    return model_problem()


@pytest.fixture(scope="session")
def model_solution(model):
    return solve_torus(model, SolverConfig(band=16, nodes=200))


@pytest.fixture(scope="session")
def model_2d_solution():
    H = model_problem_2d()
    fam, trace = solve_torus(H, SolverConfig(band=8, nodes=200, tail_ratio=1e-9))
    return H, fam, trace


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
