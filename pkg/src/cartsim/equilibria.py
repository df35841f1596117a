"""Equilibria of the uncontrolled and controlled model and their local stability."""

from __future__ import annotations

import cmath
import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateParameterError, InvalidInputError, PreconditionError
from .model import ModelParams, jacobian, vector_field

logger = logging.getLogger(__name__)

DEFAULT_TOL_EIG = 1e-9


class EquilibriumKind(str, enum.Enum):
    TRIVIAL = "trivial"
    CARRYING_CAPACITY = "carrying_capacity"
    INTERIOR1 = "interior1"
    INTERIOR2 = "interior2"
    CONTROLLED = "controlled"


class Stability(str, enum.Enum):
    ASYMPTOTICALLY_STABLE = "asymptotically_stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class EquilibriumReport:
    point: np.ndarray
    kind: EquilibriumKind
    admissible: bool
    eigenvalues: np.ndarray
    stability: Stability

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "point": [float(v) for v in self.point],
            "admissible": self.admissible,
            "eigenvalues": [complex(v) for v in self.eigenvalues],
            "stability": self.stability.value,
        }


@dataclass
class EquilibriumAnalysis:
    """All equilibria of the uncontrolled model plus a bistability flag."""

    reports: list
    bistable: bool
    notes: list = field(default_factory=list)


# -- eigenvalues ----------------------------------------------------------------


def _quadratic_roots(b: complex, c: complex) -> tuple:
    """Roots of ``z**2 + b z + c`` without cancellation."""
    disc = cmath.sqrt(b * b - 4.0 * c)
    # pick the sign that avoids subtracting nearly equal numbers
    if (b.conjugate() * disc).real >= 0:
        q = -0.5 * (b + disc)
    else:
        q = -0.5 * (b - disc)
    if q == 0:
        return 0j, 0j
    return q, c / q


def _eig2(m) -> tuple:
    a, b, c, d = m[0][0], m[0][1], m[1][0], m[1][1]
    if b == 0 or c == 0:
        return complex(a), complex(d)
    return _quadratic_roots(complex(-(a + d)), complex(a * d - b * c))


def _cubic_roots(c2: float, c1: float, c0: float) -> list:
    """Roots of ``z**3 + c2 z**2 + c1 z + c0`` with real coefficients."""
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    if p == 0 and q == 0:
        return [complex(-shift)] * 3
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc <= 0 and p < 0:
        # three real roots: trigonometric form
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        arg = min(1.0, max(-1.0, arg))
        phi = math.acos(arg) / 3.0
        return [complex(m * math.cos(phi - 2.0 * math.pi * k / 3.0) - shift) for k in range(3)]
    # one real root (Cardano), the other two from deflation
    sq = math.sqrt(max(disc, 0.0))
    u = math.copysign(abs(-q / 2.0 - math.copysign(sq, q)) ** (1.0 / 3.0), -q / 2.0 - math.copysign(sq, q))
    t = u - p / (3.0 * u) if u != 0 else 0.0
    real_root = t - shift
    # z**3 + c2 z**2 + c1 z + c0 = (z - real_root)(z**2 + e1 z + e0)
    e1 = c2 + real_root
    e0 = c1 + e1 * real_root
    z1, z2 = _quadratic_roots(complex(e1), complex(e0))
    return [complex(real_root), z1, z2]


def _polish(roots, c2, c1, c0, steps=3):
    poly = lambda z: ((z + c2) * z + c1) * z + c0
    dpoly = lambda z: (3.0 * z + 2.0 * c2) * z + c1
    out = []
    for z in roots:
        best, best_res = z, abs(poly(z))
        for _ in range(steps):
            d = dpoly(best)
            if d == 0:
                break
            cand = best - poly(best) / d
            res = abs(poly(cand))
            if res >= best_res:
                break
            best, best_res = cand, res
        out.append(best)
    return out


def eigenvalues_3x3(m) -> np.ndarray:
    """Eigenvalues of a real 3x3 matrix as three complex numbers.

    Decoupled 1x1 blocks are split off exactly (this covers the triangular
    Jacobians at the trivial equilibria); otherwise the characteristic cubic is
    solved in closed form and each root refined by Newton steps.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise InvalidInputError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix entries must be finite")

    for i in range(3):
        others = [j for j in range(3) if j != i]
        row_free = all(m[i, j] == 0 for j in others)
        col_free = all(m[j, i] == 0 for j in others)
        if row_free or col_free:
            block = m[np.ix_(others, others)]
            z1, z2 = _eig2(block)
            return np.array([complex(m[i, i]), z1, z2])

    tr = m[0, 0] + m[1, 1] + m[2, 2]
    minors = (
        m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
        + m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    )
    det = float(np.linalg.det(m))
    c2, c1, c0 = -tr, minors, -det
    roots = _polish(_cubic_roots(c2, c1, c0), c2, c1, c0)
    return np.array(roots, dtype=complex)


def classify(eigenvalues, tol_eig: float = DEFAULT_TOL_EIG) -> Stability:
    lead = max(z.real for z in eigenvalues)
    if lead < -tol_eig:
        return Stability.ASYMPTOTICALLY_STABLE
    if lead > tol_eig:
        return Stability.UNSTABLE
    return Stability.MARGINAL


def _report(p, point, kind, tol_eig):
    point = np.asarray(point, dtype=float)
    finite = bool(np.all(np.isfinite(point)))
    admissible = finite and bool(np.all(point >= 0))
    if finite:
        eig = eigenvalues_3x3(jacobian(p, point))
        stability = classify(eig, tol_eig)
    else:
        eig = np.full(3, complex(math.nan, math.nan))
        stability = Stability.MARGINAL
    return EquilibriumReport(point, kind, admissible, eig, stability)


# -- equilibria -----------------------------------------------------------------


def trivial_equilibria(p: ModelParams, tol_eig: float = DEFAULT_TOL_EIG) -> tuple:
    """Reports for the cell-free origin and the tumor-only carrying capacity point."""
    if p.b <= 0:
        raise DegenerateParameterError("b = 0: no finite carrying capacity")
    origin = _report(p, (0.0, 0.0, 0.0), EquilibriumKind.TRIVIAL, tol_eig)
    capacity = _report(p, (1.0 / p.b, 0.0, 0.0), EquilibriumKind.CARRYING_CAPACITY, tol_eig)
    return origin, capacity


def interior_quadratic(p: ModelParams) -> tuple:
    """Coefficients ``(A, B, C)`` of ``A x1**2 + B x1 + C = 0`` for coexistence points.

    From dx1/dt = 0 with x1 != 0, x2 = r (1 - b x1) / gamma; from dx3/dt = 0,
    x3 = epsilon x2 / (mu + theta x1). Substituting into dx2/dt = 0 and
    dividing by x2 leaves this quadratic in x1.
    """
    net = p.phi - p.rho
    return (
        -p.alpha * p.theta,
        net * p.theta - p.alpha * p.mu + p.epsilon * p.theta,
        net * p.mu,
    )


def interior_roots(p: ModelParams) -> list:
    """Real roots x1 of :func:`interior_quadratic` (distinct, ascending)."""
    A, B, C = interior_quadratic(p)
    if A == 0:
        if B == 0:
            logger.info("interior equilibria degenerate: quadratic vanishes to order 0")
            return []
        return [-C / B]
    disc = B * B - 4.0 * A * C
    if disc < 0:
        return []
    if disc == 0:
        return [-B / (2.0 * A)]
    sq = math.sqrt(disc)
    q = -0.5 * (B + math.copysign(sq, B))
    roots = [q / A, C / q] if q != 0 else [0.0, -B / A]
    return sorted(roots)


def interior_point(p: ModelParams, x1: float) -> np.ndarray:
    x2 = p.r * (1.0 - p.b * x1) / p.gamma
    denom = p.mu + p.theta * x1
    x3 = p.epsilon * x2 / denom if denom != 0 else math.nan
    return np.array([x1, x2, x3])


def interior_equilibria(p: ModelParams, tol_eig: float = DEFAULT_TOL_EIG) -> list:
    """Coexistence equilibria, one per real root of the reduced quadratic.

    Inadmissible points (a negative component) are returned and flagged;
    roots whose reconstruction is non-finite are dropped.
    """
    if p.gamma <= 0:
        raise DegenerateParameterError("gamma = 0: x2 cannot be reconstructed")
    kinds = (EquilibriumKind.INTERIOR1, EquilibriumKind.INTERIOR2)
    reports = []
    for x1 in interior_roots(p):
        point = interior_point(p, x1)
        if not np.all(np.isfinite(point)):
            logger.info("dropping interior root x1=%g with non-finite reconstruction", x1)
            continue
        reports.append(_report(p, point, kinds[len(reports)], tol_eig))
    return reports


def controlled_equilibrium(p: ModelParams, tau: float, tol_eig: float = DEFAULT_TOL_EIG) -> EquilibriumReport:
    """Tumor-free equilibrium of the controlled model with the pool drained by ``tau``.

    Setting x1 = 0 leaves a linear system in (x2, x3) whose solution is
    x2 = -tau / (phi - rho) and x3 = tau (rho - phi - epsilon) / ((phi - rho) mu).
    """
    tau = float(tau)
    if not math.isfinite(tau) or tau < 0:
        raise InvalidInputError(f"tau must be finite and >= 0, got {tau}")
    net = p.phi - p.rho
    if net >= 0:
        raise PreconditionError(f"controlled equilibrium requires phi < rho (phi - rho = {net})")
    if p.mu == 0:
        raise DegenerateParameterError("mu = 0: non-active pool has no equilibrium")
    x2 = -tau / net
    x3 = tau * (p.rho - p.phi - p.epsilon) / (net * p.mu)
    return _report(p, (0.0, x2, x3), EquilibriumKind.CONTROLLED, tol_eig)


def analyze_equilibria(p: ModelParams, tol_eig: float = DEFAULT_TOL_EIG) -> EquilibriumAnalysis:
    """All four (possibly inadmissible) equilibria and the bistability flag.

    Bistability means the tumor-only point and some admissible coexistence
    point are both asymptotically stable.
    """
    origin, capacity = trivial_equilibria(p, tol_eig)
    interior = interior_equilibria(p, tol_eig)
    notes = []
    A, B, _ = interior_quadratic(p)
    if A == 0 and B == 0:
        notes.append("interior quadratic is degenerate; no isolated coexistence points")
    elif len(interior) < 2:
        notes.append(f"{2 - len(interior)} coexistence point(s) are complex or coincident")
    stable = Stability.ASYMPTOTICALLY_STABLE
    bistable = capacity.stability is stable and any(
        r.admissible and r.stability is stable for r in interior
    )
    return EquilibriumAnalysis([origin, capacity, *interior], bistable, notes)


def residual(p: ModelParams, point, tau: float = 0.0, drains_pool: bool = True) -> float:
    """Infinity norm of the vector field at ``point``."""
    return float(np.max(np.abs(vector_field(p, point, tau, drains_pool))))
