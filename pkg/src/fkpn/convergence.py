"""Refinement studies: lattice spacing, inertia, and the discrete harmonic extension.

All errors are measured against a computed reference (the finest lattice, or
the quasi-static run) and are labelled as such; none is a distance to an exact
solution.
"""
from __future__ import annotations

import math
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import SimState, Trajectory, barrier_audit, ordering_audit, simulate
from .harmonic import Closure, KernelQuadrature, continuous_extension, discrete_extension
from .io import fmt, write_csv, write_json
from .lattice import (BoundaryField, LatticeDomain, LatticeField, Window, boundary_operator_field,
                      domain_for_extents, laplacian_field, restrict, sup_error)
from .scenarios import BoundaryProfile, Scenario

ERROR_LABEL = "sup error vs reference"


class StudyError(RuntimeError):
    """A run inside a study failed; ``report`` keeps the rows finished before it."""

    def __init__(self, message: str, report: "ConvergenceReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class StudyOptions:
    lateral_extent: float = 6.4
    height_extent: float = 6.4
    closure: str = Closure.DIRICHLET.value
    safety: float = 0.9
    elliptic_tol: float = 1e-10
    quad: Optional[KernelQuadrature] = None
    dt_max: Optional[float] = None
    step_order: str = "boundary-first"
    method: str = "direct"
    workers: int = 1

    def domain(self, n: int, eps: float) -> LatticeDomain:
        return domain_for_extents(n, eps, self.lateral_extent, self.height_extent)

    def sim_kwargs(self) -> dict:
        return dict(closure=self.closure, safety=self.safety, elliptic_tol=self.elliptic_tol,
                    quad=self.quad, dt_max=self.dt_max, step_order=self.step_order,
                    method=self.method)


@dataclass
class ConvergenceReport:
    kind: str                      # "epsilon", "beta" or "extension"
    scenario_id: str
    parameter: str                 # name of the refined quantity ("eps" or "beta")
    values: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    reference: dict = field(default_factory=dict)
    window: Optional[Window] = None
    audits: list[dict] = field(default_factory=list)
    complete: bool = True
    failure: Optional[str] = None

    @property
    def ratios(self) -> list[float]:
        out = [math.nan]
        for a, b in zip(self.errors, self.errors[1:]):
            out.append(b / a if a > 0 else math.nan)
        return out

    @property
    def non_decreasing_pairs(self) -> list[tuple[float, float]]:
        """Consecutive parameter pairs where the error failed to drop strictly."""
        return [(self.values[k], self.values[k + 1]) for k in range(len(self.errors) - 1)
                if not self.errors[k + 1] < self.errors[k]]

    def decreasing(self, slack: float = 0.1) -> bool:
        """Each error below (1 + slack) times its predecessor (both zero also counts)."""
        e = self.errors
        return all(b < (1 + slack) * a or (a == 0 and b == 0) for a, b in zip(e, e[1:]))

    def rows(self) -> list[tuple]:
        return list(zip(self.values, self.errors, self.ratios, self.steps))

    def write_csv(self, path) -> None:
        write_csv(path, [self.parameter, "sup_error", "ratio", "steps"], self.rows())

    def write_timings(self, path) -> None:
        write_csv(path, [self.parameter, "wall_ms"], zip(self.values, self.wall_ms))

    def write_plot_data(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# {self.kind} study, {ERROR_LABEL} ({_ref_text(self.reference)})\n")
            fh.write(f"# {self.parameter} sup_error\n")
            for v, e in zip(self.values, self.errors):
                fh.write(f"{fmt(v)} {fmt(e)}\n")

    def manifest(self) -> dict:
        w = self.window
        return {
            "kind": self.kind,
            "scenario": self.scenario_id,
            "parameter": self.parameter,
            "error_label": ERROR_LABEL,
            "reference": self.reference,
            "window": None if w is None else {"lateral_radius": w.lateral_radius, "height": w.height,
                                              "t_min": w.t_min, "t_max": _finite(w.t_max)},
            "values": self.values,
            "errors": self.errors,
            "ratios": [_finite(r) for r in self.ratios],
            "non_decreasing_pairs": self.non_decreasing_pairs,
            "decreasing_with_10pct_slack": self.decreasing(0.1),
            "audits": self.audits,
            "complete": self.complete,
            "failure": self.failure,
        }

    def write_manifest(self, path) -> None:
        write_json(path, self.manifest())


def _finite(x):
    return None if x is None or not math.isfinite(x) else x


def _ref_text(ref: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in ref.items() if not isinstance(v, dict))


def _check_nested(eps_list: Sequence[float], eps_ref: float) -> None:
    if not eps_list:
        raise ValueError("eps_list is empty")
    for a, b in zip(eps_list, eps_list[1:]):
        if not math.isclose(a / b, 2.0, rel_tol=1e-12):
            raise ValueError(f"eps values {a} and {b} are not nested by a factor 2")
    r = eps_list[-1] / eps_ref
    k = round(math.log2(r)) if r > 0 else -1
    if k < 0 or not math.isclose(r, 2.0**k, rel_tol=1e-12):
        raise ValueError(f"eps_ref {eps_ref} is not a power-of-2 refinement of {eps_list[-1]}")


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map; results come back in input order whatever the worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _timed_run(scenario: Scenario, dom: LatticeDomain, beta: float, T: float,
               times: Sequence[float], opts: StudyOptions) -> tuple[Trajectory, float]:
    t0 = _time.perf_counter()
    tr = simulate(scenario, dom, beta, T, times, **opts.sim_kwargs())
    return tr, 1e3 * (_time.perf_counter() - t0)


def _audit(tr: Trajectory) -> dict:
    return barrier_audit(tr).summary()


def epsilon_study(scenario: Scenario, window: Window, eps_list: Sequence[float], eps_ref: float,
                  times: Sequence[float], *, beta: float = 0.0,
                  opts: StudyOptions = StudyOptions(), ordering_gap: float | None = None,
                  name: str | None = None) -> ConvergenceReport:
    """Sup error on ``window`` of each coarse run against the ``eps_ref`` run.

    Errors are maximized over the snapshot times inside the window's time range.
    With ``ordering_gap`` every coarse run is paired with a run on data shifted
    up by the gap, and the ordering audit joins the per-run audits.
    """
    eps_list = [float(e) for e in eps_list]
    _check_nested(eps_list, eps_ref)
    times = sorted({float(t) for t in times})
    if not times or times[0] < 0:
        raise ValueError("snapshot times must be nonnegative and nonempty")
    T = times[-1]
    n = scenario.n
    doms = [opts.domain(n, e) for e in eps_list]
    ref_dom = opts.domain(n, eps_ref)
    for d in doms + [ref_dom]:
        window.check(d)
    report = ConvergenceReport("epsilon", name or scenario.name, "eps",
                               reference={"eps_ref": float(eps_ref), "beta": float(beta)},
                               window=window)
    jobs = [(ref_dom, None)] + [(d, None) for d in doms]
    if ordering_gap is not None:
        jobs += [(d, ordering_gap) for d in doms]

    def run(job):
        d, gap = job
        sc = scenario if gap is None else scenario.shifted(gap)
        try:
            return _timed_run(sc, d, beta, T, times, opts)
        except Exception as exc:   # surfaced below, in eps order
            return exc

    results = _map(run, jobs, opts.workers)
    ref = results[0]
    if isinstance(ref, Exception):
        report.complete, report.failure = False, f"reference run failed: {ref}"
        raise StudyError(report.failure, report) from ref
    ref_tr = ref[0]
    for k, (d, e) in enumerate(zip(doms, eps_list)):
        res = results[1 + k]
        if isinstance(res, Exception):
            report.complete, report.failure = False, f"eps={e} run failed: {res}"
            raise StudyError(report.failure, report) from res
        tr, ms = res
        err = 0.0
        for snap in tr.snapshots:
            if not window.contains_time(snap.time):
                continue
            fine = LatticeField(ref_dom, ref_tr.at(snap.time).values, snap.time)
            err = max(err, sup_error(restrict(fine, d), LatticeField(d, snap.values, snap.time), window))
        audit = {"eps": e, "barrier": _audit(tr)}
        if ordering_gap is not None:
            shifted = results[1 + len(doms) + k]
            if isinstance(shifted, Exception):
                report.complete, report.failure = False, f"eps={e} shifted run failed: {shifted}"
                raise StudyError(report.failure, report) from shifted
            audit["ordering"] = ordering_audit(tr, shifted[0])
        report.values.append(e)
        report.errors.append(err)
        report.steps.append(tr.steps)
        report.wall_ms.append(ms)
        report.audits.append(audit)
    report.reference["reference_steps"] = ref_tr.steps
    report.reference["reference_barrier"] = _audit(ref_tr)
    return report


def beta_study(scenario: Scenario, eps: float, beta_list: Sequence[float], T: float,
               times: Sequence[float] | None = None, *, opts: StudyOptions = StudyOptions(),
               name: str | None = None) -> ConvergenceReport:
    """Boundary-plane sup difference of each inertial run to the quasi-static run."""
    betas = [float(b) for b in beta_list]
    if not betas or any(b <= 0 for b in betas):
        raise ValueError("beta values must be positive")
    if any(not b < a for a, b in zip(betas, betas[1:])):
        raise ValueError("beta_list must be strictly decreasing")
    times = sorted({float(T), *(float(t) for t in (times or ()))})
    dom = opts.domain(scenario.n, eps)
    report = ConvergenceReport("beta", name or scenario.name, "beta",
                               reference={"beta": 0.0, "eps": float(eps)})
    results = _map(lambda b: _guarded(_timed_run, scenario, dom, b, T, times, opts),
                   [0.0] + betas, opts.workers)
    if isinstance(results[0], Exception):
        report.complete, report.failure = False, f"quasi-static run failed: {results[0]}"
        raise StudyError(report.failure, report) from results[0]
    base = results[0][0]
    for b, res in zip(betas, results[1:]):
        if isinstance(res, Exception):
            report.complete, report.failure = False, f"beta={b} run failed: {res}"
            raise StudyError(report.failure, report) from res
        tr, ms = res
        diff = max(float(np.max(np.abs(s.values[0] - base.at(s.time).values[0])))
                   for s in tr.snapshots)
        report.values.append(b)
        report.errors.append(diff)
        report.steps.append(tr.steps)
        report.wall_ms.append(ms)
        report.audits.append({"beta": b, "barrier": _audit(tr)})
    report.reference["reference_steps"] = base.steps
    report.reference["reference_barrier"] = _audit(base)
    return report


def _guarded(fn, *args):
    try:
        return fn(*args)
    except Exception as exc:
        return exc


def extension_study(profile: BoundaryProfile, window: Window, eps_list: Sequence[float], *,
                    opts: StudyOptions = StudyOptions(), name: str | None = None) -> ConvergenceReport:
    """Sup difference on ``window`` between the lattice and kernel extensions of ``profile``."""
    eps_list = [float(e) for e in eps_list]
    _check_nested(eps_list, eps_list[-1])
    doms = [opts.domain(profile.n, e) for e in eps_list]
    for d in doms:
        window.check(d)
    report = ConvergenceReport("extension", name or profile.kind, "eps",
                               reference={"truth": "kernel extension"}, window=window)

    def run(d: LatticeDomain):
        t0 = _time.perf_counter()
        x = d.coords()
        cont = continuous_extension(profile, x, opts.quad)
        g = BoundaryField(d, cont[0, ...])
        disc = discrete_extension(g, opts.closure, opts.elliptic_tol, faces=cont,
                                  method=opts.method)
        m = window.mask(d)
        return float(np.max(np.abs(disc.values[m] - cont[m]))), 1e3 * (_time.perf_counter() - t0)

    results = _map(lambda d: _guarded(run, d), doms, opts.workers)
    for e, res in zip(eps_list, results):
        if isinstance(res, Exception):
            report.complete, report.failure = False, f"eps={e} failed: {res}"
            raise StudyError(report.failure, report) from res
        report.values.append(e)
        report.errors.append(res[0])
        report.steps.append(0)
        report.wall_ms.append(res[1])
    return report


@dataclass(frozen=True)
class ResidualReport:
    time: float
    dt: float
    bulk: float        # sup over interior of |beta du/dt - Delta^eps u|
    boundary: float    # sup over the boundary plane of |du/dt - F(u) - D^eps u|

    def as_dict(self) -> dict:
        return {"time": self.time, "dt": self.dt, "bulk": self.bulk, "boundary": self.boundary}


def residual_report(state: SimState) -> ResidualReport:
    """Equation residuals at the current state, with du/dt from the last step.

    Operators are evaluated at the new state, so for a forward-Euler step the
    residuals measure one-step consistency (order dt) rather than vanishing
    identically.  A state that has not stepped reports zero time derivative.
    """
    dom, u = state.domain, state.values
    if state.previous is None or state.last_dt == 0:
        ut = np.zeros_like(u)
    else:
        ut = (u - state.previous) / state.last_dt
    lap = laplacian_field(u, dom.eps)
    bulk = float(np.max(np.abs(state.beta * ut[dom.interior] - lap), initial=0.0))
    ab = dom.active_boundary
    rb = ut[ab] - state.nonlinearity.F(u[ab]) - boundary_operator_field(u, dom.eps)
    return ResidualReport(state.time, state.last_dt, bulk, float(np.max(np.abs(rb), initial=0.0)))
