"""Command-line front end.

    cartsim simulate <scn> -o <csv>
    cartsim equilibria <scn>
    cartsim design <scn> [--a A] [--k K | --estimate-k] [--xi auto|XI] [--seed N]
    cartsim sweep <scn> --vary FIELD --from F --to F --steps N -o <csv> [--jobs N]
    cartsim plot <csv> -o <svg> [--log]

Exit status: 0 success, 1 design not certified, 2 invalid input,
3 integration failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import control, equilibria
from . import scenario as scn
from .errors import CartsimError, IntegrationError, InvalidInputError, PreconditionError
from .simulate import DoseEvent, analyze_outcome, applied_tau, integrate

EXIT_OK, EXIT_UNCERTIFIED, EXIT_INVALID, EXIT_INTEGRATION = 0, 1, 2, 3

CSV_HEADER = ("t", "x1", "x2", "x3", "tau", "V", "z2")
SWEEP_HEADER = ("cell_index", "varied_value", "clearance_time", "relapse_time", "diverged", "nadir_t", "nadir_x1")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return format(float(value), ".17g")


# -- library-level helpers used by the commands ------------------------------------


def resolve_design(s: scn.Scenario, a=None, k=None, xi=None, rng=None) -> control.BacksteppingDesign:
    """Backstepping design for a scenario; CLI overrides win over the certificate."""
    if a is None:
        if s.law.kind != "backstepping":
            raise InvalidInputError("law.kind: design needs a backstepping law or --a")
        a = s.law.a
    cert = s.certificate or scn.Certificate()
    k = cert.k if k is None else k
    xi = cert.xi if xi is None else xi
    region = s.region or control.default_region(s.params, a, s.initial)
    return control.design_backstepping(
        s.params,
        a,
        k=None if k == scn.AUTO else float(k),
        xi=None if xi == scn.AUTO else float(xi),
        region=region,
        u_bound=cert.u_bound,
        rng=rng,
    )


def run_scenario(s: scn.Scenario):
    """Integrate a scenario; returns ``(trajectory, outcome, design or None)``."""
    design = resolve_design(s) if s.certificate is not None else None
    xi = design.xi if design is not None else 1.0
    traj = integrate(s.params, s.initial, s.law, s.events, s.horizon, s.integrator, xi=xi)
    a = s.analysis
    outcome = analyze_outcome(traj, a.clearance_threshold, a.relapse_factor, a.growth_rate_tol)
    return traj, outcome, design


def write_trajectory_csv(traj, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i in range(len(traj)):
        v = traj.v[i] if traj.v is not None else None
        z = traj.z2[i] if traj.z2 is not None else None
        w.writerow([fmt(traj.t[i]), *(fmt(c) for c in traj.x[i]), fmt(traj.tau[i]), fmt(v), fmt(z)])


SWEEP_FIELDS = ("a", "tau", "dose", "horizon", "law.start", "params.<name>", "initial.<x1|x2|x3>")


def vary(s: scn.Scenario, field: str, value: float) -> scn.Scenario:
    """Copy of ``s`` with one field set to ``value``."""
    value = float(value)
    if field == "a":
        if s.law.kind != "backstepping":
            raise InvalidInputError("--vary a needs a backstepping law")
        return s.with_(law=replace(s.law, a=value))
    if field == "tau":
        if s.law.kind == "backstepping":
            raise InvalidInputError("--vary tau needs an off or constant law")
        return s.with_(law=replace(s.law, kind="constant", tau=value))
    if field == "dose":
        if not s.events:
            raise InvalidInputError("--vary dose needs at least one dose event")
        first = s.events[0]
        changed = DoseEvent(first.time, (first.delta[0], first.delta[1], value))
        return s.with_(events=(changed, *s.events[1:]))
    if field == "horizon":
        return s.with_(horizon=value)
    if field == "law.start":
        return s.with_(law=replace(s.law, start=value))
    if field.startswith("params."):
        name = field.split(".", 1)[1]
        if name not in s.params.as_dict():
            raise InvalidInputError(f"unknown parameter {name!r}")
        return s.with_(params=s.params.replace(**{name: value}))
    if field.startswith("initial."):
        name = field.split(".", 1)[1]
        if name not in ("x1", "x2", "x3"):
            raise InvalidInputError(f"unknown state component {name!r}")
        return s.with_(initial=replace(s.initial, **{name: value}))
    raise InvalidInputError(f"cannot vary {field!r}; choose one of {', '.join(SWEEP_FIELDS)}")


def _sweep_cell(s):
    _, outcome, _ = run_scenario(s)
    return outcome


def sweep(s: scn.Scenario, field: str, values, jobs: int = 1):
    """Outcome of every grid cell, in grid order."""
    cells = [vary(s, field, v) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return cells, list(pool.map(_sweep_cell, cells))
    return cells, [_sweep_cell(c) for c in cells]


# -- commands ----------------------------------------------------------------------


def print_outcome(outcome, out=None):
    for key, value in outcome.as_dict().items():
        print(f"{key}={fmt(value) if value is not None else 'none'}", file=out or sys.stdout)


def cmd_simulate(args) -> int:
    s = scn.load(args.scenario)
    traj, outcome, design = run_scenario(s)
    with open(args.output, "w", newline="") as fh:
        write_trajectory_csv(traj, fh)
    print_outcome(outcome)
    tau = applied_tau(s.params, s.law)
    if s.law.tau_drains_pool and tau > 0 and s.params.phi < s.params.rho and s.params.mu > 0:
        eq = equilibria.controlled_equilibrium(s.params, tau)
        print(f"xbar2={fmt(eq.point[1])}", f"xbar3={fmt(eq.point[2])}", sep="\n")
    if design is not None:
        print(f"xi={fmt(design.xi)}", f"k={fmt(design.k)}", sep="\n")
    return EXIT_OK


def _point(p):
    return "(" + ", ".join(format(float(v), ".6g") for v in p) + ")"


def _eigs(eig):
    return "[" + ", ".join(format(complex(z), ".6g") for z in eig) + "]"


def cmd_equilibria(args) -> int:
    s = scn.load(args.scenario)
    analysis = equilibria.analyze_equilibria(s.params, args.tol_eig)
    for r in analysis.reports:
        print(
            f"{r.kind.value}: point={_point(r.point)} admissible={fmt(r.admissible)} "
            f"stability={r.stability.value} eigenvalues={_eigs(r.eigenvalues)}"
        )
    tau = applied_tau(s.params, s.law)
    if tau > 0:
        try:
            r = equilibria.controlled_equilibrium(s.params, tau, args.tol_eig)
        except CartsimError as exc:
            print(f"controlled: unavailable ({exc})")
        else:
            print(
                f"controlled: tau={fmt(tau)} point={_point(r.point)} admissible={fmt(r.admissible)} "
                f"stability={r.stability.value} eigenvalues={_eigs(r.eigenvalues)}"
            )
    print(f"bistable={fmt(analysis.bistable)}")
    for note in analysis.notes:
        print(f"note: {note}")
    return EXIT_OK


def cmd_design(args) -> int:
    s = scn.load(args.scenario)
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    k = scn.AUTO if args.estimate_k else args.k
    xi = args.xi
    if xi not in (None, scn.AUTO):
        try:
            xi = float(xi)
        except ValueError:
            raise InvalidInputError(f"--xi: expected 'auto' or a number, got {xi!r}") from None
    try:
        d = resolve_design(s, a=args.a, k=k, xi=xi, rng=rng)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNCERTIFIED
    bound = control.tau_lower_bound(s.params)
    pd = control.pd_condition(d)
    for key, value in (
        ("a", d.a), ("tau", d.tau), ("tau_lower_bound", bound), ("ell_hat", d.ell_hat),
        ("m_hat", d.m_hat), ("b_hat", d.b_hat), ("k", d.k), ("xi", d.xi),
        ("sqrt_xi_ell_m", float(np.sqrt(d.xi * d.ell_hat * d.m_hat))), ("pd_condition", pd),
    ):
        print(f"{key}={fmt(value)}")
    return EXIT_OK if pd and d.tau > bound else EXIT_UNCERTIFIED


def cmd_sweep(args) -> int:
    s = scn.load(args.scenario)
    if args.steps < 1:
        raise InvalidInputError("--steps must be >= 1")
    values = np.linspace(args.start, args.stop, args.steps)
    _, outcomes = sweep(s, args.vary, values, args.jobs)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for i, (v, o) in enumerate(zip(values, outcomes)):
            w.writerow([i, fmt(v), fmt(o.clearance_time), fmt(o.relapse_time), fmt(o.diverged),
                        fmt(o.nadir[0]), fmt(o.nadir[1])])
    print(f"cells={len(values)}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_trajectory, read_trajectory_csv

    try:
        cols = read_trajectory_csv(args.csv)
    except (OSError, ValueError, IndexError, KeyError) as exc:
        raise InvalidInputError(f"{args.csv}: {exc}") from None
    plot_trajectory(cols, args.output, log=args.log, title=args.title)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cartsim", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a scenario and write its trajectory CSV")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("equilibria", help="equilibria and their local stability")
    p.add_argument("scenario")
    p.add_argument("--tol-eig", type=float, default=equilibria.DEFAULT_TOL_EIG)
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("design", help="backstepping flux, k, xi and the certificate condition")
    p.add_argument("scenario")
    p.add_argument("--a", type=float)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k", type=float)
    g.add_argument("--estimate-k", action="store_true")
    p.add_argument("--xi", help="'auto' or a positive number")
    p.add_argument("--seed", type=int, help="jitter the k-estimation grid with this seed")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("sweep", help="outcomes over a 1-D grid of one scenario field")
    p.add_argument("scenario")
    p.add_argument("--vary", required=True, help=", ".join(SWEEP_FIELDS))
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="SVG line chart of a trajectory CSV")
    p.add_argument("csv")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--log", action="store_true", help="log-scale populations")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except CartsimError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
