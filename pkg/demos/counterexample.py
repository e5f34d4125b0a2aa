"""
When the perturbation is not integrable
=======================================

For ``dq/dt = omega + 1/(1+t)`` the drift adds up to ``log(1+t)``, which never
settles, so no time-dependent change of phase can turn the flow into the
rigid rotation. The solver refuses such a profile and the lift offset shows why.
"""

# %%
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from asymkam import Exponential, FourierField, GridField, Harmonic, NonIntegrableError, solve_torus_field
from asymkam.verify import counterexample_divergence

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
omega = 0.5

# %%
# The solver rejects the harmonic profile before doing any work.
nodes = np.linspace(0.0, 20.0, 60)
P = GridField.separable(FourierField.from_modes(1, 2, {(0,): 1.0}, shape=(1,)),
                        lambda t: 1 / (1 + t), nodes, Harmonic())
try:
    solve_torus_field([omega], P)
except NonIntegrableError as exc:
    print("rejected:", exc)

# %%
# Offset of the lift relative to omega t, by formula and by integration.
rep = counterexample_divergence([omega], Harmonic())
print(f"max |offset - log(1+t)| = {np.abs(rep.offset - np.log1p(rep.times)).max():.1e}")
print(f"increment ratio over doublings of 1 + t: {rep.doubling_ratio:.6f} (log 2 each time)")

# %%
# For contrast, an integrable drift c e^{-t} is conjugated with u = -c e^{-t}.
# (With c of order one the solver would first move its start time forward,
# since it only accepts embeddings with |u| <= 1/4.)
env = Exponential(1.0)
grid = np.linspace(0.0, 15.0, 200)
P2 = GridField.separable(FourierField.from_modes(1, 2, {(0,): 0.05}, shape=(1,)),
                         lambda t: np.exp(-t), grid, env)
fam, trace = solve_torus_field([omega], P2)
t0 = fam.nodes[0]
print(f"integrable case ({trace.status}): u({t0:g}) = {fam.u.coeffs[0, 0, fam.u.band].real:.6f}"
      f" (expected {-0.05 * np.exp(-t0):.6f})")

# %%
fig, ax = plt.subplots(figsize=(6, 4))
ax.semilogx(1 + rep.times, rep.offset, label="offset, closed form")
ax.semilogx(1 + rep.times, rep.offset_flow, "--", label="offset, integrated")
ax.set_xlabel("1 + t")
ax.set_ylabel("q(t) - omega t")
ax.legend()
fig.tight_layout()
fig.savefig(out / "counterexample_offset.svg")
print("wrote", out / "counterexample_offset.svg")
