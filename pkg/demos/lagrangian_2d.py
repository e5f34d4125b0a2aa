"""
Two degrees of freedom: the torus becomes Lagrangian
====================================================

With n = 2 the symplectic form pulled back to the torus is a single number
per point. It need not vanish at finite time, but it has to fade at least as
fast as the perturbation. This runs the bundled ``lagrangian-2d`` scenario
(about 20 seconds) and plots that decay.
"""

# %%
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from asymkam import load_scenario, solve_torus
from asymkam.verify import lagrangian_curve

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

scn = load_scenario("lagrangian-2d")
fam, trace = solve_torus(scn.model, scn.solver)
print(f"status {trace.status}, {trace.iterations} steps, residual {trace.residual:.2e}")

# %%
t = fam.nodes
L = lagrangian_curve(fam)
w = fam.b_env.tail(t) + fam.a_env.tail(t)
print(f"sup defect / envelope = {np.max(L / w):.2e}")
m = L > 0
print(f"log-log slope against the envelope: {np.polyfit(np.log(w[m]), np.log(L[m]), 1)[0]:.2f}")

# %%
fig, ax = plt.subplots(figsize=(6, 4))
ax.semilogy(t, L, label="Lagrangian defect")
ax.semilogy(t, w, "--", label="bbar + abar")
ax.set_xlabel("t")
ax.legend()
fig.tight_layout()
fig.savefig(out / "lagrangian_2d.svg")
print("wrote", out / "lagrangian_2d.svg")
