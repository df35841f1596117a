"""Backstepping design for tumor clearance and its Lyapunov certificate.

The active CAR T population is treated as a virtual input to the tumor
equation. The feedback ``kappa(x1) = (r/gamma)(a - b x1)`` turns tumor
dynamics into ``dx1/dt = r (1 - a) x1``; the error ``z2 = x2 - kappa(x1)``
is then driven to zero with the constant activation flux ``tau``.
The certificate is ``V = (xi x1**2 + z2**2) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateParameterError, InvalidInputError, PreconditionError
from .model import ModelParams, StateLike, _as_vector

DEFAULT_XI_SAFETY = 4.0
DEFAULT_K_MARGIN = 0.10
DEFAULT_GRID = (201, 201, 11)


class Region(NamedTuple):
    """Box ``[x1_lo, x1_hi] x [z2_lo, z2_hi]`` in backstepping coordinates."""

    x1_lo: float
    x1_hi: float
    z2_lo: float
    z2_hi: float


def _check_gamma(p: ModelParams):
    if p.gamma <= 0:
        raise DegenerateParameterError("gamma = 0: the feedback kappa is undefined")


def _check_gain(a: float):
    if not math.isfinite(a) or a <= 1:
        raise InvalidInputError(f"gain must satisfy a > 1, got {a}")


def kappa(p: ModelParams, a: float, x1):
    """Target active CAR T level ``(r/gamma)(a - b x1)``; may be negative."""
    _check_gamma(p)
    _check_gain(a)
    return (p.r / p.gamma) * (a - p.b * np.asarray(x1, dtype=float))


def z2(p: ModelParams, a: float, s: StateLike) -> float:
    """Backstepping error ``x2 - kappa(x1)``."""
    x = _as_vector(s)
    return float(x[1] - kappa(p, a, x[0]))


def tau_from_a(p: ModelParams, a: float) -> float:
    """Activation flux ``(rho - phi) r a / gamma`` cancelling the isolated z2 term."""
    _check_gamma(p)
    _check_gain(a)
    net = p.phi - p.rho
    if net >= 0:
        raise PreconditionError(f"activation flux requires phi < rho (phi - rho = {net})")
    return -net * (p.r / p.gamma) * a


def tau_lower_bound(p: ModelParams) -> float:
    """Infimum ``(rho - phi) r / gamma`` of fluxes compatible with some a > 1."""
    _check_gamma(p)
    return (p.rho - p.phi) * p.r / p.gamma


def lyapunov(xi: float, x1, z2):
    """Certificate value ``(xi x1**2 + z2**2) / 2``."""
    if not xi > 0:
        raise InvalidInputError(f"xi must be > 0, got {xi}")
    x1 = np.asarray(x1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    v = 0.5 * (xi * x1 * x1 + z2 * z2)
    return float(v) if v.ndim == 0 else v


@dataclass(frozen=True)
class BacksteppingDesign:
    """Gain, flux and certificate constants of one backstepping design.

    ``ell_hat = |r (1 - a)|``, ``m_hat = |phi - rho|`` and ``b_hat = r b / gamma``.
    ``k`` bounds half the coefficient multiplying ``x1 z2`` in the certificate
    rate near the origin.
    """

    a: float
    tau: float
    xi: float
    k: float
    ell_hat: float
    m_hat: float
    b_hat: float

    def __post_init__(self):
        _check_gain(self.a)
        if not self.xi > 0:
            raise InvalidInputError(f"xi must be > 0, got {self.xi}")
        if not (math.isfinite(self.k) and self.k >= 0):
            raise InvalidInputError(f"k must be finite and >= 0, got {self.k}")
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise InvalidInputError(f"tau must be finite and >= 0, got {self.tau}")

    @classmethod
    def from_params(cls, p: ModelParams, a: float, xi: float = 1.0, k: float = 0.0, tau: float | None = None):
        if tau is None:
            tau = tau_from_a(p, a)
        return cls(
            a=float(a),
            tau=float(tau),
            xi=float(xi),
            k=float(k),
            ell_hat=abs(p.r * (1.0 - a)),
            m_hat=abs(p.phi - p.rho),
            b_hat=p.r * p.b / p.gamma,
        )

    def with_(self, **changes) -> "BacksteppingDesign":
        values = dict(self.__dict__)
        values.update(changes)
        return BacksteppingDesign(**values)

    @property
    def certified(self) -> bool:
        return pd_condition(self)


def isolated_z2_coefficient(p: ModelParams, design: BacksteppingDesign) -> float:
    """Coefficient ``(phi - rho)(r/gamma) a + tau`` of the lone z2 term in the rate."""
    return (p.phi - p.rho) * (p.r / p.gamma) * design.a + design.tau


def cross_coefficient(p: ModelParams, design: BacksteppingDesign, x1, z2, u):
    """Bracketed coefficient multiplying ``x1 z2`` in the certificate rate.

    It is affine in each of ``x1``, ``z2`` and ``u`` separately.
    """
    a, bh, xi = design.a, design.b_hat, design.xi
    x1 = np.asarray(x1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    u = np.asarray(u, dtype=float)
    return (
        bh * p.r * (1.0 - a)
        - bh * p.gamma * z2
        + p.theta * u
        - bh * (p.phi - p.rho)
        - p.alpha * z2
        + p.alpha * (p.r / p.gamma) * (p.b * x1 - a)
        - p.gamma * xi * x1
    )


def lyapunov_rate(p: ModelParams, design: BacksteppingDesign, s: StateLike, u: float) -> float:
    """Closed-form time derivative of the certificate along the controlled model.

    ``u`` stands in for the non-active pool feeding the active compartment;
    ``z2`` is computed from ``s`` with the design gain.
    """
    x = _as_vector(s)
    x1 = x[0]
    e = x[1] - (p.r / p.gamma) * (design.a - p.b * x1)
    return float(
        design.xi * p.r * (1.0 - design.a) * x1 * x1
        + (p.phi - p.rho) * e * e
        + isolated_z2_coefficient(p, design) * e
        + cross_coefficient(p, design, x1, e, u) * x1 * e
    )


def rate_upper_bound(design: BacksteppingDesign, x1, z2):
    """``-xi ell_hat x1**2 - m_hat z2**2 + 2 k |x1| |z2|``."""
    x1 = np.asarray(x1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    return (
        -design.xi * design.ell_hat * x1 * x1
        - design.m_hat * z2 * z2
        + 2.0 * design.k * np.abs(x1) * np.abs(z2)
    )


def pd_condition(design: BacksteppingDesign) -> bool:
    """True iff ``k < sqrt(xi ell_hat m_hat)`` (strict)."""
    return design.k < math.sqrt(design.xi * design.ell_hat * design.m_hat)


def select_xi(p: ModelParams, a: float, k: float, safety: float = DEFAULT_XI_SAFETY) -> float:
    """Certificate weight ``safety k**2 / (ell_hat m_hat)``; 1 when ``k = 0``."""
    if not (math.isfinite(k) and k >= 0):
        raise InvalidInputError(f"k must be finite and >= 0, got {k}")
    if safety <= 1:
        raise InvalidInputError(f"safety factor must exceed 1, got {safety}")
    ell_hat = abs(p.r * (1.0 - a))
    m_hat = abs(p.phi - p.rho)
    if ell_hat == 0:
        raise DegenerateParameterError("ell_hat = 0 (a = 1 or r = 0)")
    if m_hat == 0:
        raise DegenerateParameterError("m_hat = 0 (phi = rho)")
    if k == 0:
        return 1.0
    return safety * k * k / (ell_hat * m_hat)


def estimate_k(
    p: ModelParams,
    design: BacksteppingDesign,
    region: Region,
    u_bound: float,
    grid=DEFAULT_GRID,
    margin: float = DEFAULT_K_MARGIN,
    rng: np.random.Generator | None = None,
) -> float:
    """Half the sampled supremum of ``|cross_coefficient|`` times ``1 + margin``.

    The coefficient is sampled on a dense grid over ``region x [0, u_bound]``.
    With ``rng`` the interior grid nodes are jittered inside their cells; the
    box corners are always kept.
    """
    region = Region(*(float(v) for v in region))
    if not all(math.isfinite(v) for v in region):
        raise InvalidInputError("region bounds must be finite")
    if region.x1_lo > region.x1_hi or region.z2_lo > region.z2_hi:
        raise InvalidInputError(f"empty region {tuple(region)}")
    if not (region.x1_lo <= 0 <= region.x1_hi and region.z2_lo <= 0 <= region.z2_hi):
        raise InvalidInputError("region must contain the origin")
    if not (math.isfinite(u_bound) and u_bound >= 0):
        raise InvalidInputError(f"u_bound must be finite and >= 0, got {u_bound}")

    axes = [
        _axis(region.x1_lo, region.x1_hi, grid[0], rng),
        _axis(region.z2_lo, region.z2_hi, grid[1], rng),
        _axis(0.0, u_bound, grid[2], rng),
    ]
    x1, e, u = np.meshgrid(*axes, indexing="ij", sparse=True)
    sup = float(np.max(np.abs(cross_coefficient(p, design, x1, e, u))))
    return 0.5 * sup * (1.0 + margin)


def _axis(lo, hi, n, rng):
    if lo == hi:
        return np.array([lo])
    pts = np.linspace(lo, hi, int(n))
    if rng is not None and len(pts) > 2:
        width = (hi - lo) / (len(pts) - 1)
        pts[1:-1] += rng.uniform(-0.5, 0.5, len(pts) - 2) * width
    return pts


def default_region(p: ModelParams, a: float, s0: StateLike) -> Region:
    """``[0, x1(0)] x [-|z2(0)|, |z2(0)|]`` around the initial condition."""
    x = _as_vector(s0)
    e = abs(z2(p, a, x))
    return Region(0.0, float(x[0]), -e, e)


def design_backstepping(
    p: ModelParams,
    a: float,
    k: float | None = None,
    xi: float | None = None,
    region: Region | None = None,
    u_bound: float = 0.0,
    safety: float = DEFAULT_XI_SAFETY,
    rng: np.random.Generator | None = None,
    max_iter: int = 500,
) -> BacksteppingDesign:
    """Assemble a design; ``k`` is estimated on ``region`` when not given and
    ``xi`` chosen by :func:`select_xi` when not given.

    Estimating ``k`` with an automatic ``xi`` is a fixed-point problem, since
    the coefficient contains ``-gamma xi x1``. It is iterated from ``xi = 1``;
    if ``k`` keeps growing the region is too large and ``PreconditionError``
    is raised.
    """
    base = BacksteppingDesign.from_params(p, a)
    if k is not None:
        k = float(k)
        return base.with_(k=k, xi=float(xi) if xi is not None else select_xi(p, a, k, safety))
    if region is None:
        raise InvalidInputError("estimating k requires a region")
    if xi is not None:
        design = base.with_(xi=float(xi))
        return design.with_(k=estimate_k(p, design, region, u_bound, rng=rng))

    seed = rng.bit_generator.state if rng is not None else None
    xi_cur, k_cur = 1.0, None
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            if seed is not None:
                rng.bit_generator.state = seed
            k_new = estimate_k(p, base.with_(xi=xi_cur), region, u_bound, rng=rng)
            if not math.isfinite(k_new) or k_new > 1e150:
                raise PreconditionError(
                    "no consistent (k, xi) pair on this region: the -gamma*xi*x1 term "
                    "outgrows the bound; shrink the x1 extent of the region"
                )
            xi_new = select_xi(p, a, k_new, safety)
            if k_cur is not None and abs(k_new - k_cur) <= 1e-10 * k_new:
                return base.with_(k=k_new, xi=xi_new)
            k_cur, xi_cur = k_new, xi_new
    raise PreconditionError(f"k/xi fixed-point iteration did not converge in {max_iter} steps")
