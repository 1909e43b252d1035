"""Run configuration: JSON documents validated against a schema plus semantic checks."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

import jsonschema

from .convergence import StudyOptions
from .harmonic import KernelQuadrature
from .lattice import Window, domain_for_extents
from .scenarios import (BoundaryProfile, Scenario, arctan_profile, constant_profile, cosine_potential,
                        dislocation_profile)

COMMANDS = ("simulate", "extend", "converge", "beta-study", "extension-study", "barriers")

# keys that change how a run executes but never what it computes
EXECUTION_KEYS = ("out", "workers")

_REQUIRED = {
    "simulate": ("eps", "T"),
    "barriers": ("eps", "T"),
    "extend": ("eps",),
    "converge": ("eps_list", "eps_ref", "window", "T"),
    "beta-study": ("eps", "beta_list", "T"),
    "extension-study": ("eps_list", "window"),
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class ProfileConfig:
    kind: str = "screw"
    width: float = 1.0
    low: float = 0.0
    high: float = 1.0
    value: float = 0.0
    offset: float = 0.0


@dataclass(frozen=True)
class WindowConfig:
    lateral_radius: float
    height: float
    t_min: float = 0.0
    t_max: Optional[float] = None


@dataclass(frozen=True)
class RunConfig:
    command: str
    n: int
    beta: float = 0.0
    eps: Optional[float] = None
    eps_list: Optional[tuple[float, ...]] = None
    eps_ref: Optional[float] = None
    beta_list: Optional[tuple[float, ...]] = None
    amplitude: float = 1 / (4 * math.pi**2)
    sigma: float = 0.0
    forcing: str = "effective"
    forcing_eps: str = "zero"
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    lateral_extent: float = 6.4
    height_extent: float = 6.4
    T: float = 1.0
    snapshot_times: tuple[float, ...] = ()
    window: Optional[WindowConfig] = None
    closure: str = "dirichlet-from-kernel"
    step_order: str = "boundary-first"
    elliptic_method: str = "direct"
    elliptic_tol: float = 1e-10
    quadrature_tol: float = 1e-8
    safety: float = 0.9
    dt_max: Optional[float] = None
    ordering_gap: Optional[float] = None
    out: Optional[str] = None
    workers: int = 1

    # --- derived objects ----------------------------------------------------
    def build_profile(self) -> BoundaryProfile:
        p = self.profile
        if p.kind in ("screw", "edge"):
            prof = dislocation_profile(p.kind, p.width, self.n)
        elif p.kind == "arctan":
            prof = arctan_profile(p.width, self.n, low=p.low, high=p.high)
        else:
            prof = constant_profile(p.value, self.n)
        return prof.shifted(p.offset) if p.offset else prof

    def build_scenario(self) -> Scenario:
        pot = cosine_potential(self.amplitude) if self.amplitude > 0 else None
        return Scenario(self.build_profile(), pot, self.sigma, self.forcing, self.forcing_eps,
                        name=f"{self.profile.kind}-n{self.n}")

    def build_window(self) -> Window:
        w = self.window
        t_max = math.inf if w.t_max is None else w.t_max
        return Window(w.lateral_radius, w.height, w.t_min, t_max)

    def quadrature(self) -> KernelQuadrature:
        return KernelQuadrature(tol=self.quadrature_tol)

    def study_options(self) -> StudyOptions:
        return StudyOptions(self.lateral_extent, self.height_extent, self.closure, self.safety,
                            self.elliptic_tol, self.quadrature(), self.dt_max, self.step_order,
                            self.elliptic_method, self.workers)

    def domain(self, eps: float | None = None):
        return domain_for_extents(self.n, self.eps if eps is None else eps,
                                  self.lateral_extent, self.height_extent)

    # --- identity -----------------------------------------------------------
    def canonical(self) -> dict:
        """Fully defaulted document without execution-only keys."""
        d = asdict(self)
        for k in EXECUTION_KEYS:
            d.pop(k)
        return _jsonable(d)

    def canonical_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def load_schema() -> dict:
    return json.loads(resources.files("fkpn").joinpath("config_schema.json").read_text())


def parse_config(text: str | dict) -> RunConfig:
    """Validate a JSON document (or an already-parsed mapping); every violation is reported."""
    if isinstance(text, str):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from None
    else:
        doc = dict(text)
    schema = load_schema()
    errors = []
    for e in sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.path)):
        where = "/".join(str(p) for p in e.path) or "<root>"
        errors.append(f"{where}: {e.message}")
    if errors:
        raise ConfigError(errors)
    errors = _semantic_errors(doc)
    if errors:
        raise ConfigError(errors)
    kw = dict(doc)
    if "profile" in kw:
        kw["profile"] = ProfileConfig(**kw["profile"])
    if "window" in kw:
        kw["window"] = WindowConfig(**kw["window"])
    for k in ("eps_list", "beta_list", "snapshot_times"):
        if k in kw:
            kw[k] = tuple(float(v) for v in kw[k])
    for k in ("beta", "eps", "eps_ref", "amplitude", "sigma", "lateral_extent", "height_extent", "T",
              "elliptic_tol", "quadrature_tol", "safety", "dt_max", "ordering_gap"):
        if k in kw:
            kw[k] = float(kw[k])
    return RunConfig(**kw)


def _semantic_errors(doc: dict) -> list[str]:
    errs = []
    cmd, n = doc["command"], doc["n"]
    for k in _REQUIRED[cmd]:
        if k not in doc:
            errs.append(f"{k}: required by command {cmd!r}")
    prof = doc.get("profile", {"kind": "screw"})
    if prof["kind"] in ("screw", "edge", "arctan") and n < 2:
        errs.append(f"profile/kind: {prof['kind']!r} needs n >= 2 (use 'constant' for n = 1)")
    if prof["kind"] == "edge" and n < 3:
        errs.append("profile/kind: an edge dislocation needs n >= 3")
    eps_list = doc.get("eps_list")
    if eps_list:
        for a, b in zip(eps_list, eps_list[1:]):
            if not math.isclose(a / b, 2.0, rel_tol=1e-12):
                errs.append(f"eps_list: {a} and {b} are not nested (ratio must be exactly 2)")
        if "eps_ref" in doc:
            r = min(eps_list) / doc["eps_ref"]
            k = round(math.log2(r)) if r > 0 else -1
            if k < 0 or not math.isclose(r, 2.0**k, rel_tol=1e-12):
                errs.append(f"eps_ref: {doc['eps_ref']} is not a power-of-2 refinement of {min(eps_list)}")
    beta_list = doc.get("beta_list")
    if beta_list:
        for a, b in zip(beta_list, beta_list[1:]):
            if not b < a:
                errs.append(f"beta_list: {a} then {b} is not strictly decreasing")
    T = doc.get("T", 1.0)
    for t in doc.get("snapshot_times", []):
        if t > T:
            errs.append(f"snapshot_times: {t} exceeds T={T}")
    lat, hgt = doc.get("lateral_extent", 6.4), doc.get("height_extent", 6.4)
    spacings = [doc[k] for k in ("eps", "eps_ref") if k in doc] + list(eps_list or [])
    for e in spacings:
        for what, ext in (("lateral_extent", lat), ("height_extent", hgt)):
            if what == "lateral_extent" and n == 1:
                continue
            if not math.isclose(round(ext / e) * e, ext, rel_tol=1e-12, abs_tol=1e-12):
                errs.append(f"{what}: {ext} is not a multiple of eps={e}")
    w = doc.get("window")
    if w is not None:
        if n > 1 and not w["lateral_radius"] < lat:
            errs.append(f"window/lateral_radius: {w['lateral_radius']} touches lateral extent {lat}")
        if not w["height"] < hgt:
            errs.append(f"window/height: {w['height']} touches height extent {hgt}")
        if "t_max" in w and w["t_max"] < w.get("t_min", 0.0):
            errs.append("window/t_max: smaller than t_min")
    return errs
