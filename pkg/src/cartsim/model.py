"""Three-population tumor / CAR T model and its control-augmented variant.

State ordering is ``(x1, x2, x3)``:

* ``x1`` tumor cells
* ``x2`` active (effector) CAR T cells
* ``x3`` non-active (memory) CAR T cells

All populations are absolute cell counts and time is measured in days.
The controlled model adds a constant activation flux ``tau`` to the active
compartment and, optionally, removes the same flux from the non-active pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateParameterError, InvalidInputError

PARAM_NAMES = ("r", "b", "gamma", "phi", "rho", "theta", "alpha", "epsilon", "mu")


@dataclass(frozen=True)
class ModelParams:
    """Rate constants of the model.

    Attributes
    ----------
    r : float
        Maximum tumor growth rate [1/day].
    b : float
        Inverse tumor carrying capacity [1/cell].
    gamma : float
        Cytotoxic coefficient of active CAR T cells [1/(cell day)].
    phi : float
        Active CAR T proliferation rate [1/day].
    rho : float
        Active CAR T reduction rate, death plus differentiation [1/day].
    theta : float
        Tumor-driven conversion of non-active into active cells [1/(cell day)].
    alpha : float
        Tumor-modulated inhibition of active cells [1/(cell day)].
    epsilon : float
        Conversion rate of active into non-active cells [1/day].
    mu : float
        Death rate of non-active cells [1/day].
    """

    r: float
    b: float
    gamma: float
    phi: float
    rho: float
    theta: float
    alpha: float
    epsilon: float
    mu: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise InvalidInputError(f"parameter {f.name!r} is not a number: {value!r}")
            if not math.isfinite(value):
                raise InvalidInputError(f"parameter {f.name!r} must be finite, got {value}")
            if value < 0:
                raise InvalidInputError(f"parameter {f.name!r} must be >= 0, got {value}")
            object.__setattr__(self, f.name, value)
        if self.b <= 0:
            raise DegenerateParameterError("parameter 'b' must be > 0 (finite carrying capacity)")
        if self.gamma <= 0:
            raise DegenerateParameterError("parameter 'gamma' must be > 0")

    @property
    def carrying_capacity(self) -> float:
        return 1.0 / self.b

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def replace(self, **changes) -> "ModelParams":
        values = self.as_dict()
        values.update(changes)
        return ModelParams(**values)


@dataclass(frozen=True)
class State:
    """Cell counts ``(x1, x2, x3)``; all components finite and non-negative."""

    x1: float
    x2: float
    x3: float

    def __post_init__(self):
        for name in ("x1", "x2", "x3"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidInputError(f"state component {name} must be finite, got {value}")
            if value < 0:
                raise InvalidInputError(f"state component {name} must be >= 0, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "State":
        x1, x2, x3 = (float(v) for v in x)
        return cls(x1, x2, x3)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3])


StateLike = Union[State, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class ControlLaw:
    """How the activation flux ``tau`` is produced.

    ``kind`` is one of ``"off"``, ``"constant"`` or ``"backstepping"``.
    ``tau`` is only used by ``"constant"``; ``a`` only by ``"backstepping"``,
    where the flux is derived from the gain (see :func:`cartsim.control.tau_from_a`).
    The flux is applied for ``t >= start`` (days). When ``tau_drains_pool`` is
    set, the same flux is withdrawn from the non-active compartment.
    """

    kind: str = "off"
    tau: float = 0.0
    a: float | None = None
    tau_drains_pool: bool = True
    start: float = 0.0

    KINDS = ("off", "constant", "backstepping")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidInputError(f"unknown control law kind {self.kind!r}")
        if not math.isfinite(self.start) or self.start < 0:
            raise InvalidInputError(f"control start time must be finite and >= 0, got {self.start}")
        if self.kind == "constant":
            if not math.isfinite(self.tau) or self.tau < 0:
                raise InvalidInputError(f"constant tau must be finite and >= 0, got {self.tau}")
        if self.kind == "backstepping":
            if self.a is None or not math.isfinite(self.a) or self.a <= 1:
                raise InvalidInputError(f"backstepping gain must satisfy a > 1, got {self.a}")

    @classmethod
    def off(cls) -> "ControlLaw":
        return cls("off")

    @classmethod
    def constant(cls, tau: float, drains_pool: bool = True, start: float = 0.0) -> "ControlLaw":
        return cls("constant", tau=float(tau), tau_drains_pool=drains_pool, start=float(start))

    @classmethod
    def backstepping(cls, a: float, drains_pool: bool = True, start: float = 0.0) -> "ControlLaw":
        return cls("backstepping", a=float(a), tau_drains_pool=drains_pool, start=float(start))


def _as_vector(s: StateLike) -> np.ndarray:
    if isinstance(s, State):
        return s.as_array()
    x = np.asarray(s, dtype=float)
    if x.shape != (3,):
        raise InvalidInputError(f"state must have three components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"state must be finite, got {x}")
    return x


def rhs(p: ModelParams, x1: float, x2: float, x3: float, tau: float, drain: float) -> tuple:
    """Unchecked right-hand side used by the integrators.

    ``drain`` is the flux removed from ``x3`` (``tau`` or ``0``).
    """
    return (
        p.r * x1 * (1.0 - p.b * x1) - p.gamma * x2 * x1,
        (p.phi - p.rho) * x2 - p.alpha * x2 * x1 + p.theta * x3 * x1 + tau,
        -p.mu * x3 - p.theta * x3 * x1 + p.epsilon * x2 - drain,
    )


def vector_field(p: ModelParams, s: StateLike, tau: float = 0.0, drains_pool: bool = True) -> np.ndarray:
    """Time derivative of the (controlled) model at state ``s``.

    With ``tau = 0`` this is the original three-equation model. A positive
    ``tau`` adds an activation flux to ``x2`` and, if ``drains_pool``, removes
    it from ``x3``.
    """
    x = _as_vector(s)
    tau = float(tau)
    if not math.isfinite(tau):
        raise InvalidInputError(f"tau must be finite, got {tau}")
    if tau < 0:
        raise InvalidInputError(f"tau must be >= 0, got {tau}")
    return np.array(rhs(p, x[0], x[1], x[2], tau, tau if drains_pool else 0.0))


def jacobian(p: ModelParams, s: StateLike) -> np.ndarray:
    """Analytic Jacobian of the vector field with respect to ``(x1, x2, x3)``.

    ``tau`` enters additively and does not appear.
    """
    x1, x2, x3 = _as_vector(s)
    return np.array(
        [
            [p.r * (1.0 - 2.0 * p.b * x1) - p.gamma * x2, -p.gamma * x1, 0.0],
            [p.theta * x3 - p.alpha * x2, p.phi - p.rho - p.alpha * x1, p.theta * x1],
            [-p.theta * x3, p.epsilon, -p.mu - p.theta * x1],
        ]
    )
