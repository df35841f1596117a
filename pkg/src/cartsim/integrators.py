"""Explicit Runge-Kutta steppers with dense output.

Two methods are provided: classical fixed-step RK4 (cubic Hermite dense
output) and the adaptive Dormand-Prince 5(4) pair (fourth-order continuous
extension). Both integrate an autonomous segment ``[t0, t1]`` of a
right-hand side ``f(y) -> ndarray`` and report every accepted step so the
caller can sample the solution on an output grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NegativeStateError, StiffnessError

DIVERGENCE_LIMIT = 1e15


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping configuration.

    ``method`` is ``"rk45"`` (adaptive; ``rel_tol``, ``abs_tol``,
    ``min_step``, ``max_step``) or ``"rk4"`` (fixed ``step``). With
    ``nonneg_floor`` small negative excursions (down to ``-abs_tol``) are
    clamped to zero after every accepted step; larger ones raise
    :class:`NegativeStateError`. Trajectories are sampled every
    ``output_step`` days.
    """

    method: str = "rk45"
    step: float = 0.01
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    min_step: float = 1e-10
    max_step: float = 1.0
    nonneg_floor: bool = True
    output_step: float = 0.1

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise InvalidInputError(f"unknown integration method {self.method!r}")
        for name in ("step", "rel_tol", "abs_tol", "min_step", "max_step", "output_step"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidInputError(f"integrator {name} must be finite and > 0, got {value}")
        if self.min_step > self.max_step:
            raise InvalidInputError("integrator min_step must not exceed max_step")

    @classmethod
    def rk4(cls, step: float, **kw) -> "IntegratorConfig":
        return cls(method="rk4", step=step, **kw)

    @classmethod
    def rk45(cls, rel_tol=1e-8, abs_tol=1e-10, min_step=1e-10, max_step=1.0, **kw) -> "IntegratorConfig":
        return cls(method="rk45", rel_tol=rel_tol, abs_tol=abs_tol, min_step=min_step, max_step=max_step, **kw)


class Diverged(Exception):
    """Internal signal: the state left the finite / bounded range at ``time``."""

    def __init__(self, time, y):
        super().__init__(time)
        self.time = time
        self.y = y


# -- dense output -----------------------------------------------------------------


class HermiteStep:
    __slots__ = ("t0", "h", "y0", "y1", "f0", "f1")

    def __init__(self, t0, h, y0, y1, f0, f1):
        self.t0, self.h, self.y0, self.y1, self.f0, self.f1 = t0, h, y0, y1, f0, f1

    def __call__(self, t):
        s = (t - self.t0) / self.h
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        return h00 * self.y0 + h10 * self.h * self.f0 + h01 * self.y1 + h11 * self.h * self.f1


# Dormand-Prince 5(4) tableau
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_A = [np.array(row) for row in _A]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (Shampine); rows are stages, columns powers s..s^4
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


class DopriStep:
    __slots__ = ("t0", "h", "y0", "Q")

    def __init__(self, t0, h, y0, K):
        self.t0, self.h, self.y0 = t0, h, y0
        self.Q = K.T @ _P

    def __call__(self, t):
        s = (t - self.t0) / self.h
        return self.y0 + self.h * (self.Q @ np.array([s, s * s, s**3, s**4]))


# -- steppers ---------------------------------------------------------------------


def _floor(y, t, cfg):
    if not cfg.nonneg_floor:
        return y
    if np.all(y >= 0):
        return y
    if np.any(y < -cfg.abs_tol):
        raise NegativeStateError(f"population went negative: {y.tolist()}", t)
    return np.maximum(y, 0.0)


def _check_bounded(y, t):
    if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_LIMIT:
        raise Diverged(t, y)


def rk4_segment(f, t0, t1, y0, cfg, on_step):
    """Integrate ``[t0, t1]`` with RK4, splitting it into equal steps no longer than ``cfg.step``."""
    n = max(1, math.ceil((t1 - t0) / cfg.step - 1e-9))
    h = (t1 - t0) / n
    y = np.array(y0, dtype=float)
    fy = f(y)
    for i in range(n):
        t = t0 + i * h
        k1 = fy
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_new = t1 if i == n - 1 else t0 + (i + 1) * h
        _check_bounded(y_new, t_new)
        y_new = _floor(y_new, t_new, cfg)
        f_new = f(y_new)
        on_step(HermiteStep(t, t_new - t, y, y_new, fy, f_new), t_new, y_new)
        y, fy = y_new, f_new
    return y


def _initial_step(f, y0, f0, cfg, span):
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    d2 = np.sqrt(np.mean(((f(y1) - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100 * h0, h1, cfg.max_step, span)


def rk45_segment(f, t0, t1, y0, cfg, on_step):
    """Integrate ``[t0, t1]`` with adaptive Dormand-Prince steps."""
    y = np.array(y0, dtype=float)
    t = t0
    fy = f(y)
    span = t1 - t0
    h = _initial_step(f, y, fy, cfg, span)
    K = np.empty((7, y.size))
    while t < t1:
        if h < cfg.min_step:
            raise StiffnessError("step size fell below min_step", t)
        last = t + h >= t1 - 1e-12 * max(1.0, abs(t1))
        h_try = t1 - t if last else h
        K[0] = fy
        for i in range(1, 6):
            K[i] = f(y + h_try * (_A[i] @ K[:i]))
        y_new = y + h_try * (_B[:6] @ K[:6])
        if not np.all(np.isfinite(y_new)):
            h = 0.25 * h_try
            continue
        K[6] = f(y_new)
        err_vec = h_try * (_E @ K)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            t_new = t1 if last else t + h_try
            _check_bounded(y_new, t_new)
            step = DopriStep(t, h_try, y, K.copy())
            floored = _floor(y_new, t_new, cfg)
            fy = K[6].copy() if floored is y_new else f(floored)
            y_new = floored
            on_step(step, t_new, y_new)
            t, y = t_new, y_new
            factor = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
            h = min(cfg.max_step, h_try * factor)
        else:
            h = h_try * max(0.2, 0.9 * err ** -0.2)
    return y


def integrate_segment(f, t0, t1, y0, cfg: IntegratorConfig, on_step):
    if t1 <= t0:
        return np.array(y0, dtype=float)
    if cfg.method == "rk4":
        return rk4_segment(f, t0, t1, y0, cfg, on_step)
    return rk45_segment(f, t0, t1, y0, cfg, on_step)
