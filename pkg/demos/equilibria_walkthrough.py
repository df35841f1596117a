"""Where can the system come to rest, and which of those states attract?

Without control the model has up to four equilibria: the empty state, the
tumor at carrying capacity with no CAR T cells, and two coexistence points
given by the roots of a quadratic in x1. For the bundled parameters the
carrying-capacity point and the small coexistence point are both stable, so
the outcome depends on where treatment starts (bistability). The middle
coexistence point is a saddle separating the two basins.

Switching on the backstepping flux removes the tumor from the picture: the
only equilibrium left has x1 = 0, with the CAR T populations pinned by tau.
"""

import numpy as np

from cartsim import ControlLaw, analyze_equilibria, controlled_equilibrium, integrate, load_bundled
from cartsim.control import tau_from_a

p = load_bundled("backstepping").params

analysis = analyze_equilibria(p)
for r in analysis.reports:
    eig = ", ".join(f"{complex(v).real:+.4f}" for v in r.eigenvalues)
    print(f"{r.kind.value:18s} x={np.array2string(r.point, precision=4)}  {r.stability.value}  Re(eig)=[{eig}]")
print("bistable:", analysis.bistable)
for note in analysis.notes:
    print("note:", note)

# Same tumor burden, two CAR T levels: a strong enough presence is pulled to
# the coexistence point, a weak one is overrun and the tumor fills capacity.
for cells in (1e5, 1e4):
    traj = integrate(p, (3e8, cells, cells), ControlLaw.off(), horizon=2000)
    x1, x2, _ = traj.final_state
    print(f"x2(0)=x3(0)={cells:g} -> x1={x1:.4g} x2={x2:.4g} on day 2000")

tau = tau_from_a(p, 2.0)
eq = controlled_equilibrium(p, tau)
print(f"controlled (tau={tau:.4g}): x={np.array2string(eq.point, precision=6)} {eq.stability.value}")
