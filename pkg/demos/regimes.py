"""Three treatment regimes on the same tumor.

A 2e6-cell tumor grows for six weeks, then 6e5 non-active CAR T cells are
infused. We compare three ways of handling the activation flux tau:

1. no flux: the infusion shrinks the tumor for a while, then it relapses;
2. the backstepping flux, drawn from the non-active pool: the tumor is
   cleared and the CAR T populations settle at a fixed point;
3. a constant flux that does not draw on the pool: the CAR T
   populations grow without bound.

Run with ``python3 demos/regimes.py``. Each run also writes a CSV and an SVG
chart to the current directory.
"""

from cartsim import cli
from cartsim import scenario as scn
from cartsim.plotting import plot_trajectory, read_trajectory_csv


def describe(name):
    s = scn.load_bundled(name)
    traj, out, design = cli.run_scenario(s)
    print(f"== {name}: {s.description}")
    t_n, x_n = out.nadir
    print(f"   tumor nadir {x_n:.3g} cells on day {t_n:.1f}")
    if out.relapse_time is not None:
        print(f"   relapse (10x the nadir) on day {out.relapse_time:.1f}")
    if out.clearance_time is not None:
        print(f"   cleared (< 1 cell) on day {out.clearance_time:.1f}")
    if out.monotone_growth or out.diverged:
        print("   CAR T populations grow monotonically")
    x1, x2, x3 = traj.final_state
    print(f"   day {traj.t[-1]:.0f}: x1={x1:.3g} x2={x2:.4g} x3={x3:.4g}")

    csv_path = f"{name}.csv"
    with open(csv_path, "w", newline="") as fh:
        cli.write_trajectory_csv(traj, fh)
    plot_trajectory(read_trajectory_csv(csv_path), f"{name}.svg", log=True, title=name)


if __name__ == "__main__":
    for name in ("uncontrolled", "backstepping", "uncontrolled-activation"):
        describe(name)
