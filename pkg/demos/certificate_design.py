"""Designing the backstepping controller and its Lyapunov certificate.

The controller makes the tumor obey dx1/dt = r (1 - a) x1, so any a > 1
clears it. Stability of the full loop is certified by

    V = (xi x1^2 + z2^2) / 2,

where z2 measures how far the active CAR T cells are from the level the
controller asks for. V decreases as long as the cross term coupling x1 and z2
stays below k and k^2 < xi ell_hat m_hat. Here k is estimated on a region
around the expected trajectory and xi is chosen to leave a margin.
"""

import numpy as np

from cartsim import PreconditionError, Region, cli, design_backstepping, load_bundled, pd_condition
from cartsim.control import rate_upper_bound, tau_lower_bound

s = load_bundled("backstepping")
p = s.params

print(f"flux must exceed {tau_lower_bound(p):.4g} cells/day")
for a in (1.5, 2.0, 4.0):
    d = design_backstepping(p, a, region=s.region, u_bound=s.certificate.u_bound)
    print(
        f"a={a}: tau={d.tau:.4g} k={d.k:.3g} xi={d.xi:.3g} "
        f"sqrt(xi ell m)={np.sqrt(d.xi * d.ell_hat * d.m_hat):.3g} certified={pd_condition(d)}"
    )

# Fixing xi by hand: too small a weight loses the certificate.
for xi in (1e-6, 1e-3):
    d = design_backstepping(p, 2.0, xi=xi, region=s.region, u_bound=s.certificate.u_bound)
    print(f"xi={xi:g}: k={d.k:.3g} certified={pd_condition(d)}")

# The cross term grows with gamma xi x1, so on a region reaching large tumors
# no (k, xi) pair is self-consistent.
wide = Region(0.0, 1e6, -2e5, 2e5)
try:
    design_backstepping(p, 2.0, region=wide, u_bound=s.certificate.u_bound)
except PreconditionError as exc:
    print("wide region:", exc)

# Along the simulated trajectory V decreases once the flux is on.
traj, _, d = cli.run_scenario(s)
after = traj.t >= s.law.start
v = traj.v[after]
print(f"V from {v[0]:.4g} to {v[-1]:.4g}; non-increasing on {np.mean(np.diff(v) <= 0):.1%} of steps")
i = np.argmax(after)
print(f"dV/dt bound at switch-on: {float(rate_upper_bound(d, traj.x[i, 0], traj.z2[i])):.4g}")
