"""Time integration with dose events and outcome classification."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import control
from .errors import InvalidInputError
from .integrators import DIVERGENCE_LIMIT, Diverged, IntegratorConfig, integrate_segment
from .model import ControlLaw, ModelParams, StateLike, _as_vector, rhs

logger = logging.getLogger(__name__)

_TIME_EPS = 1e-9


@dataclass(frozen=True)
class DoseEvent:
    """Instantaneous addition of cells at ``time`` (days)."""

    time: float
    delta: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        t = float(self.time)
        delta = tuple(float(v) for v in self.delta)
        if not (math.isfinite(t) and t >= 0):
            raise InvalidInputError(f"dose time must be finite and >= 0, got {self.time}")
        if len(delta) != 3:
            raise InvalidInputError(f"dose increment needs three components, got {self.delta}")
        if not all(math.isfinite(v) and v >= 0 for v in delta):
            raise InvalidInputError(f"dose increments must be finite and >= 0, got {self.delta}")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "delta", delta)


@dataclass(frozen=True)
class AppliedEvent:
    event: DoseEvent
    before: np.ndarray
    after: np.ndarray


@dataclass
class Trajectory:
    """Samples on the output grid.

    ``x`` has shape ``(n, 3)``. ``v`` and ``z2`` are filled only for
    backstepping runs. When the state blows up, ``diverged_at`` holds the
    time and the samples stop there.
    """

    t: np.ndarray
    x: np.ndarray
    tau: np.ndarray
    v: Optional[np.ndarray] = None
    z2: Optional[np.ndarray] = None
    events_applied: list = field(default_factory=list)
    diverged_at: Optional[float] = None

    def __len__(self):
        return len(self.t)

    @property
    def final_state(self) -> np.ndarray:
        return self.x[-1]


@dataclass(frozen=True)
class OutcomeReport:
    clearance_time: Optional[float]
    relapse_time: Optional[float]
    diverged: bool
    nadir: tuple
    monotone_growth: bool = False

    def as_dict(self) -> dict:
        return {
            "clearance_time": self.clearance_time,
            "relapse_time": self.relapse_time,
            "diverged": self.diverged,
            "nadir_t": self.nadir[0],
            "nadir_x1": self.nadir[1],
            "monotone_growth": self.monotone_growth,
        }


def applied_tau(p: ModelParams, law: ControlLaw) -> float:
    """Flux the law applies once it is switched on."""
    if law.kind == "constant":
        return law.tau
    if law.kind == "backstepping":
        return control.tau_from_a(p, law.a)
    return 0.0


def output_grid(horizon: float, dt: float) -> np.ndarray:
    """Uniform sample times ``0, dt, 2 dt, ...`` ending exactly at ``horizon``."""
    n = int(math.floor(horizon / dt + _TIME_EPS))
    grid = np.arange(n + 1) * dt
    if abs(grid[-1] - horizon) <= _TIME_EPS * max(1.0, horizon):
        grid[-1] = horizon
    else:
        grid = np.append(grid, horizon)
    return grid


def integrate(
    p: ModelParams,
    s0: StateLike,
    law: ControlLaw,
    events: Sequence[DoseEvent] = (),
    horizon: float = 100.0,
    cfg: IntegratorConfig | None = None,
    xi: float = 1.0,
) -> Trajectory:
    """Integrate the model over ``[0, horizon]`` days.

    Integration stops exactly at each dose time, the increment is added and
    stepping restarts from the new state. The control switch-on time is
    handled the same way, so no step straddles a discontinuity. For
    backstepping laws the certificate ``V`` (weight ``xi``) and ``z2`` are
    recorded at every sample.
    """
    cfg = cfg or IntegratorConfig()
    horizon = float(horizon)
    if not (math.isfinite(horizon) and horizon > 0):
        raise InvalidInputError(f"horizon must be finite and > 0, got {horizon}")
    y = _as_vector(s0).copy()
    if np.any(y < 0):
        raise InvalidInputError(f"initial state must be non-negative, got {y}")

    events = sorted(events, key=lambda e: e.time)
    late = [e for e in events if e.time > horizon]
    if late:
        logger.warning("ignoring %d dose event(s) after the horizon", len(late))
    events = [e for e in events if e.time <= horizon]

    tau_on = applied_tau(p, law)
    drain_on = tau_on if law.tau_drains_pool else 0.0
    breaks = sorted({0.0, horizon, *(e.time for e in events), *([law.start] if law.start < horizon else [])})

    grid = output_grid(horizon, cfg.output_step)
    xs = np.full((len(grid), 3), np.nan)
    filled = 0
    applied = []
    diverged_at = None

    def segment_rhs(active):
        tau = tau_on if active else 0.0
        drain = drain_on if active else 0.0
        return lambda v: np.array(rhs(p, v[0], v[1], v[2], tau, drain))

    def record_upto(t_hi, interp, y_hi, inclusive):
        nonlocal filled
        while filled < len(grid):
            tg = grid[filled]
            tol = _TIME_EPS * max(1.0, abs(t_hi))
            if tg > t_hi + tol or (not inclusive and tg >= t_hi - tol):
                break
            val = y_hi if abs(tg - t_hi) <= tol else interp(tg)
            if cfg.nonneg_floor:
                val = np.where((val < 0) & (val >= -cfg.abs_tol), 0.0, val)
            xs[filled] = val
            filled += 1

    ei = 0
    try:
        for ta, tb in zip(breaks[:-1], breaks[1:]):
            while ei < len(events) and events[ei].time <= ta + _TIME_EPS:
                before = y.copy()
                y = y + np.asarray(events[ei].delta)
                applied.append(AppliedEvent(events[ei], before, y.copy()))
                ei += 1
            record_upto(ta, None, y, inclusive=True)
            f = segment_rhs(ta >= law.start and law.kind != "off")

            def on_step(step, t_new, y_new, tb=tb):
                record_upto(t_new, step, y_new, inclusive=t_new < tb)

            y = integrate_segment(f, ta, tb, y, cfg, on_step)
        while ei < len(events):
            before = y.copy()
            y = y + np.asarray(events[ei].delta)
            applied.append(AppliedEvent(events[ei], before, y.copy()))
            ei += 1
        record_upto(horizon, None, y, inclusive=True)
    except Diverged as exc:
        diverged_at = exc.time
        logger.info("state diverged at t = %g d", exc.time)

    t = grid[:filled]
    xs = xs[:filled]
    tau_col = np.where((t >= law.start - _TIME_EPS) & (law.kind != "off"), tau_on, 0.0)
    v = z = None
    if law.kind == "backstepping":
        z = xs[:, 1] - control.kappa(p, law.a, xs[:, 0])
        v = control.lyapunov(xi, xs[:, 0], z)
        v = np.atleast_1d(v)
    return Trajectory(t, xs, tau_col, v, z, applied, diverged_at)


def analyze_outcome(
    traj: Trajectory,
    clearance_threshold: float = 1.0,
    relapse_factor: float = 10.0,
    growth_rate_tol: float = 1e-3,
) -> OutcomeReport:
    """Classify a trajectory as cleared, relapsed, diverged and/or growing.

    * clearance: first sample after which x1 stays below the threshold to the end
    * nadir: minimum of x1 from the first dose on (whole run if no doses)
    * relapse: first sample after the nadir with x1 above ``relapse_factor`` times the nadir
    * monotone growth: over the final half of the run x2 and x3 never decrease
      and the CAR T total still grows faster than ``growth_rate_tol`` per day
    """
    if len(traj) == 0:
        raise InvalidInputError("empty trajectory")
    if not clearance_threshold > 0:
        raise InvalidInputError("clearance threshold must be > 0")
    if not relapse_factor > 1:
        raise InvalidInputError("relapse factor must be > 1")

    t, x = traj.t, traj.x
    x1 = x[:, 0]
    diverged = (
        traj.diverged_at is not None
        or not np.all(np.isfinite(x))
        or bool(np.any(np.abs(x) > DIVERGENCE_LIMIT))
    )

    start = traj.events_applied[0].event.time if traj.events_applied else t[0]
    after = np.nonzero(t >= start - _TIME_EPS)[0]
    i_nadir = after[int(np.argmin(x1[after]))]
    nadir = (float(t[i_nadir]), float(x1[i_nadir]))

    clearance_time = None
    if not diverged:
        above = np.nonzero(x1 >= clearance_threshold)[0]
        if len(above) == 0:
            clearance_time = float(t[0])
        elif above[-1] + 1 < len(t):
            clearance_time = float(t[above[-1] + 1])

    relapse_time = None
    if clearance_time is None:
        later = np.nonzero((np.arange(len(t)) > i_nadir) & (x1 > relapse_factor * nadir[1]))[0]
        if len(later):
            relapse_time = float(t[later[0]])

    growing = bool(_monotone_growth(t, x, growth_rate_tol))
    return OutcomeReport(clearance_time, relapse_time, diverged, nadir, growing)


def _monotone_growth(t, x, rate_tol):
    if len(t) < 4:
        return False
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    cart = x[half, 1:]
    steps = np.diff(cart, axis=0)
    if np.any(steps < -1e-9 * np.abs(cart[1:])):
        return False
    total = cart.sum(axis=1)
    tail = t[half] >= t[-1] - 0.05 * (t[-1] - t[0])
    tt, tot = t[half][tail], total[tail]
    if len(tt) < 2 or tot[0] <= 0:
        return False
    rate = math.log(tot[-1] / tot[0]) / (tt[-1] - tt[0])
    return rate > rate_tol
