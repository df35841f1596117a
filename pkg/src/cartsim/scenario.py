"""Scenario files: one experiment per file, TOML syntax.

A scenario bundles model parameters, the initial state, the control law,
dose events, the horizon, integrator settings, outcome thresholds and an
optional certificate request. See ``docs/scenario-format.md`` for the
grammar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import tomlkit

from .control import Region
from .errors import CartsimError, InvalidInputError
from .integrators import IntegratorConfig
from .model import PARAM_NAMES, ControlLaw, ModelParams, State
from .simulate import DoseEvent

AUTO = "auto"


class ScenarioError(InvalidInputError):
    """A scenario file is missing a field or holds an invalid value."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Analysis:
    clearance_threshold: float = 1.0
    relapse_factor: float = 10.0
    growth_rate_tol: float = 1e-3

    def __post_init__(self):
        if not self.clearance_threshold > 0:
            raise ScenarioError("analysis.clearance_threshold", "must be > 0")
        if not self.relapse_factor > 1:
            raise ScenarioError("analysis.relapse_factor", "must be > 1")
        if not self.growth_rate_tol >= 0:
            raise ScenarioError("analysis.growth_rate_tol", "must be >= 0")


@dataclass(frozen=True)
class Certificate:
    """Request for a Lyapunov certificate. ``k`` and ``xi`` may be ``"auto"``.

    ``region`` is ``None`` for the default box spanned by the initial condition.
    """

    k: Union[float, str] = AUTO
    xi: Union[float, str] = AUTO
    region: Optional[tuple] = None
    u_bound: float = 0.0

    def __post_init__(self):
        for name in ("k", "xi"):
            value = getattr(self, name)
            if value != AUTO and not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
                raise ScenarioError(f"certificate.{name}", f"expected a number >= 0 or 'auto', got {value!r}")
        if self.xi != AUTO and not self.xi > 0:
            raise ScenarioError("certificate.xi", "must be > 0")
        if self.region is not None:
            if len(self.region) != 4:
                raise ScenarioError("certificate.region", "expected [x1_lo, x1_hi, z2_lo, z2_hi]")
            object.__setattr__(self, "region", tuple(float(v) for v in self.region))
        if not (math.isfinite(self.u_bound) and self.u_bound >= 0):
            raise ScenarioError("certificate.u_bound", "must be finite and >= 0")


@dataclass(frozen=True)
class Scenario:
    params: ModelParams
    initial: State
    law: ControlLaw = field(default_factory=ControlLaw.off)
    events: tuple = ()
    horizon: float = 100.0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    analysis: Analysis = field(default_factory=Analysis)
    certificate: Optional[Certificate] = None
    description: str = ""

    def __post_init__(self):
        if not (isinstance(self.horizon, (int, float)) and math.isfinite(self.horizon) and self.horizon > 0):
            raise ScenarioError("horizon", f"must be finite and > 0, got {self.horizon!r}")
        if self.certificate is not None and self.law.kind != "backstepping":
            raise ScenarioError("certificate", "only valid with a backstepping law")
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.time)))

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    @property
    def region(self) -> Optional[Region]:
        if self.certificate is None or self.certificate.region is None:
            return None
        return Region(*self.certificate.region)


# -- parsing ----------------------------------------------------------------------


def _number(table, key, prefix, default=None, required=False):
    if key not in table:
        if required:
            raise ScenarioError(f"{prefix}{key}", "missing")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{prefix}{key}", f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(f"{prefix}{key}", "must be finite")
    return value


def _table(doc, key, required=True):
    if key not in doc:
        if required:
            raise ScenarioError(key, "missing section")
        return {}
    value = doc[key]
    if not isinstance(value, dict):
        raise ScenarioError(key, "expected a table")
    return value


def _wrap(field_name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError:
        raise
    except CartsimError as exc:
        raise ScenarioError(field_name, str(exc)) from None


def _check_keys(table, allowed, prefix):
    for key in table:
        if key not in allowed:
            raise ScenarioError(f"{prefix}{key}", "unknown field")


def from_dict(doc: dict) -> Scenario:
    _check_keys(doc, {"description", "horizon", "params", "initial", "law", "events",
                      "integrator", "analysis", "certificate"}, "")
    ptab = _table(doc, "params")
    _check_keys(ptab, PARAM_NAMES, "params.")
    params = _wrap("params", ModelParams, **{n: _number(ptab, n, "params.", required=True) for n in PARAM_NAMES})

    itab = _table(doc, "initial")
    _check_keys(itab, ("x1", "x2", "x3"), "initial.")
    initial = _wrap("initial", State, *(_number(itab, n, "initial.", required=True) for n in ("x1", "x2", "x3")))

    ltab = _table(doc, "law", required=False)
    _check_keys(ltab, ("kind", "tau", "a", "tau_drains_pool", "start"), "law.")
    kind = ltab.get("kind", "off")
    if kind not in ControlLaw.KINDS:
        raise ScenarioError("law.kind", f"expected one of {ControlLaw.KINDS}, got {kind!r}")
    drains = ltab.get("tau_drains_pool", True)
    if not isinstance(drains, bool):
        raise ScenarioError("law.tau_drains_pool", "expected true or false")
    law = _wrap(
        "law",
        ControlLaw,
        kind,
        tau=_number(ltab, "tau", "law.", 0.0),
        a=_number(ltab, "a", "law.", None, required=kind == "backstepping"),
        tau_drains_pool=drains,
        start=_number(ltab, "start", "law.", 0.0),
    )

    raw_events = doc.get("events", [])
    if not isinstance(raw_events, list):
        raise ScenarioError("events", "expected an array of tables")
    events = []
    for i, ev in enumerate(raw_events):
        prefix = f"events[{i}]."
        if not isinstance(ev, dict):
            raise ScenarioError(f"events[{i}]", "expected a table")
        _check_keys(ev, ("time", "delta"), prefix)
        delta = ev.get("delta")
        if not isinstance(delta, list) or len(delta) != 3:
            raise ScenarioError(f"{prefix}delta", "expected [dx1, dx2, dx3]")
        comps = {f"d{j}": v for j, v in enumerate(delta)}
        delta = tuple(_number(comps, f"d{j}", f"{prefix}delta.") for j in range(3))
        events.append(_wrap(f"events[{i}]", DoseEvent, _number(ev, "time", prefix, required=True), delta))

    gtab = _table(doc, "integrator", required=False)
    allowed = ("method", "step", "rel_tol", "abs_tol", "min_step", "max_step", "nonneg_floor", "output_step")
    _check_keys(gtab, allowed, "integrator.")
    gkw = {k: _number(gtab, k, "integrator.") for k in allowed[1:-2] + ("output_step",) if k in gtab}
    if "method" in gtab:
        gkw["method"] = gtab["method"]
    if "nonneg_floor" in gtab:
        if not isinstance(gtab["nonneg_floor"], bool):
            raise ScenarioError("integrator.nonneg_floor", "expected true or false")
        gkw["nonneg_floor"] = gtab["nonneg_floor"]
    integrator = _wrap("integrator", IntegratorConfig, **gkw)

    atab = _table(doc, "analysis", required=False)
    _check_keys(atab, ("clearance_threshold", "relapse_factor", "growth_rate_tol"), "analysis.")
    analysis = Analysis(**{k: _number(atab, k, "analysis.") for k in atab})

    certificate = None
    if "certificate" in doc:
        ctab = _table(doc, "certificate")
        _check_keys(ctab, ("k", "xi", "region", "u_bound"), "certificate.")
        ckw = {}
        for key in ("k", "xi"):
            if key in ctab:
                ckw[key] = ctab[key] if ctab[key] == AUTO else _number(ctab, key, "certificate.")
        if "region" in ctab:
            reg = ctab["region"]
            if not isinstance(reg, list):
                raise ScenarioError("certificate.region", "expected [x1_lo, x1_hi, z2_lo, z2_hi]")
            comps = {str(j): v for j, v in enumerate(reg)}
            ckw["region"] = tuple(_number(comps, str(j), "certificate.region.") for j in range(len(reg)))
        if "u_bound" in ctab:
            ckw["u_bound"] = _number(ctab, "u_bound", "certificate.")
        certificate = Certificate(**ckw)

    description = doc.get("description", "")
    if not isinstance(description, str):
        raise ScenarioError("description", "expected a string")
    return Scenario(
        params=params,
        initial=initial,
        law=law,
        events=tuple(events),
        horizon=_number(doc, "horizon", "", required=True),
        integrator=integrator,
        analysis=analysis,
        certificate=certificate,
        description=description,
    )


def loads(text: str) -> Scenario:
    try:
        doc = tomlkit.parse(text).unwrap()
    except tomlkit.exceptions.ParseError as exc:
        raise ScenarioError("<file>", f"syntax error: {exc}") from None
    return from_dict(doc)


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


# -- serialization ----------------------------------------------------------------


def to_dict(s: Scenario) -> dict:
    law = {"kind": s.law.kind, "tau_drains_pool": s.law.tau_drains_pool, "start": s.law.start}
    if s.law.kind == "constant":
        law["tau"] = s.law.tau
    if s.law.a is not None:
        law["a"] = s.law.a
    g = s.integrator
    doc = {
        "description": s.description,
        "horizon": float(s.horizon),
        "params": s.params.as_dict(),
        "initial": {"x1": s.initial.x1, "x2": s.initial.x2, "x3": s.initial.x3},
        "law": law,
        "events": [{"time": e.time, "delta": list(e.delta)} for e in s.events],
        "integrator": {
            "method": g.method,
            "step": g.step,
            "rel_tol": g.rel_tol,
            "abs_tol": g.abs_tol,
            "min_step": g.min_step,
            "max_step": g.max_step,
            "nonneg_floor": g.nonneg_floor,
            "output_step": g.output_step,
        },
        "analysis": {
            "clearance_threshold": s.analysis.clearance_threshold,
            "relapse_factor": s.analysis.relapse_factor,
            "growth_rate_tol": s.analysis.growth_rate_tol,
        },
    }
    if s.certificate is not None:
        c = s.certificate
        cert = {"k": c.k, "xi": c.xi, "u_bound": c.u_bound}
        if c.region is not None:
            cert["region"] = list(c.region)
        doc["certificate"] = cert
    return doc


def dumps(s: Scenario) -> str:
    doc = to_dict(s)
    out = tomlkit.document()
    for key, value in doc.items():
        if key == "events":
            aot = tomlkit.aot()
            for ev in value:
                aot.append(tomlkit.item(ev))
            out.add(key, aot)
        else:
            out.add(key, value)
    return tomlkit.dumps(out)


def dump(s: Scenario, path) -> None:
    Path(path).write_text(dumps(s))


# -- bundled scenarios ------------------------------------------------------------


def bundled_names() -> list:
    root = resources.files(__package__) / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def bundled_path(name: str):
    return resources.files(__package__) / "scenarios" / f"{name}.scn"


def load_bundled(name: str) -> Scenario:
    return loads(bundled_path(name).read_text())
