"""Explicit time stepping of the Frenkel-Kontorova system and runtime audits."""
from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .harmonic import Closure, EllipticSolver, KernelQuadrature, continuous_extension, refresh_faces
from .lattice import BoundaryField, LatticeDomain, LatticeField, boundary_operator_field, laplacian_field
from .scenarios import Nonlinearity, Scenario


class SimulationError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


STEP_ORDERS = ("boundary-first", "corrected-bulk")


def stable_timestep(dom: LatticeDomain, beta: float, f: Nonlinearity, safety: float = 1.0) -> float:
    """Largest step keeping every explicit update a positive-coefficient combination."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if not 0 < safety <= 1:
        raise ValueError("safety factor must be in (0, 1]")
    n, eps = dom.n, dom.eps
    boundary = 1.0 / ((2 * n - 1) / eps + f.sup_dF)
    if beta == 0:
        return safety * boundary
    return safety * min(beta * eps**2 / (2 * n), boundary)


@dataclass
class SimState:
    domain: LatticeDomain
    values: np.ndarray
    beta: float
    nonlinearity: Nonlinearity
    closure: Closure
    dt: float
    step: int = 0
    time: float = 0.0
    elliptic_tol: float = 1e-10
    step_order: str = "boundary-first"
    solver: Optional[EllipticSolver] = field(default=None, repr=False)
    previous: Optional[np.ndarray] = field(default=None, repr=False)
    last_dt: float = 0.0
    bulk_residual: float = 0.0

    def field(self) -> LatticeField:
        return LatticeField(self.domain, self.values, self.time)

    def boundary(self) -> BoundaryField:
        return BoundaryField(self.domain, self.values[0, ...], self.time)


def _advance(s: SimState, new: np.ndarray, dt: float, **kw) -> SimState:
    if not np.all(np.isfinite(new)):
        raise SimulationError("non-finite value", s.step + 1)
    return replace(s, values=new, step=s.step + 1, time=s.time + dt, previous=s.values,
                   last_dt=dt, **kw)


def _check_dt(s: SimState, dt: float) -> float:
    dt = s.dt if dt is None else dt
    limit = stable_timestep(s.domain, s.beta, s.nonlinearity, 1.0)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the monotonicity threshold {limit}")
    return dt


def step_beta_positive(s: SimState, dt: float | None = None) -> SimState:
    """Forward Euler on the full ODE system (bulk and boundary plane)."""
    if not s.beta > 0:
        raise ValueError("step_beta_positive needs beta > 0")
    dt = _check_dt(s, dt)
    dom, u = s.domain, s.values
    ab = dom.active_boundary
    new = u.copy()
    with np.errstate(over="ignore", invalid="ignore"):    # non-finite values are caught below
        new[dom.interior] += (dt / s.beta) * laplacian_field(u, dom.eps)
        new[ab] = u[ab] + dt * (s.nonlinearity.F(u[ab]) + boundary_operator_field(u, dom.eps))
    refresh_faces(new, dom, s.closure, include_boundary_plane=True)
    return _advance(s, new, dt)


def elliptic_solve(boundary_trace: BoundaryField | np.ndarray, dom: LatticeDomain,
                   closure: Closure | str, tol: float, *, previous: np.ndarray,
                   solver: EllipticSolver | None = None) -> LatticeField:
    """Quasi-static bulk for the given trace, warm-started from ``previous`` (full-shape)."""
    solver = solver or EllipticSolver(dom, closure)
    u = np.array(previous, dtype=float, copy=True)
    u[0, ...] = boundary_trace.values if isinstance(boundary_trace, BoundaryField) else boundary_trace
    out, _, _ = solver.solve(u, tol)
    return LatticeField(dom, out)


def step_beta_zero(s: SimState, dt: float | None = None) -> SimState:
    """Boundary update with the current bulk, then a fresh quasi-static bulk solve."""
    if s.beta != 0:
        raise ValueError("step_beta_zero needs beta == 0")
    dt = _check_dt(s, dt)
    dom, u = s.domain, s.values
    ab = dom.active_boundary
    solver = s.solver or EllipticSolver(dom, s.closure)
    new = u.copy()
    new[ab] = u[ab] + dt * (s.nonlinearity.F(u[ab]) + boundary_operator_field(u, dom.eps))
    if s.step_order == "corrected-bulk":
        # re-evaluate the upward coupling against the bulk of the predicted trace
        refresh_faces(new, dom, s.closure, include_boundary_plane=True)
        pred, _, _ = solver.solve(new, s.elliptic_tol)
        mixed = u.copy()
        mixed[1:, ...] = pred[1:, ...]
        new = u.copy()
        new[ab] = u[ab] + dt * (s.nonlinearity.F(u[ab]) + boundary_operator_field(mixed, dom.eps))
    elif s.step_order != "boundary-first":
        raise ValueError(f"unknown step order {s.step_order!r}")
    refresh_faces(new, dom, s.closure, include_boundary_plane=True)
    new, res, _ = solver.solve(new, s.elliptic_tol)
    return _advance(s, new, dt, solver=solver, bulk_residual=res)


def step(s: SimState, dt: float | None = None) -> SimState:
    return step_beta_positive(s, dt) if s.beta > 0 else step_beta_zero(s, dt)


# --- runs -----------------------------------------------------------------------

@dataclass
class Snapshot:
    time: float
    step: int
    values: np.ndarray = field(repr=False)
    wall_time: float = 0.0


@dataclass
class Trajectory:
    domain: LatticeDomain
    beta: float
    nonlinearity: Nonlinearity
    snapshots: list[Snapshot]
    u0c: np.ndarray = field(repr=False)
    profile_sup: float = 0.0
    dt_max: float = 0.0
    steps: int = 0
    final_state: Optional[SimState] = field(default=None, repr=False)

    @property
    def times(self) -> list[float]:
        return [s.time for s in self.snapshots]

    def at(self, t: float) -> Snapshot:
        for s in self.snapshots:
            if abs(s.time - t) <= 1e-12 * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot at t={t}")


def initial_state(scenario: Scenario, dom: LatticeDomain, beta: float, *,
                  closure: Closure | str = Closure.DIRICHLET, safety: float = 0.9,
                  elliptic_tol: float = 1e-10, quad: KernelQuadrature | None = None,
                  dt_max: float | None = None, step_order: str = "boundary-first",
                  method: str = "direct", initial: np.ndarray | None = None,
                  u0c: np.ndarray | None = None) -> tuple[SimState, np.ndarray]:
    """Build the t = 0 state; returns it with the sampled kernel extension of the data."""
    closure = Closure(closure)
    if step_order not in STEP_ORDERS:
        raise ValueError(f"unknown step order {step_order!r}")
    f = scenario.nonlinearity(dom.eps)
    if u0c is None:
        u0c = continuous_extension(scenario.profile, dom.coords(), quad)
    u = np.array(u0c, dtype=float, copy=True)
    if initial is not None:
        initial = np.asarray(initial, float)
        if initial.shape == dom.shape:
            u = initial.copy()
        elif initial.shape == dom.boundary_shape:
            u[0, ...] = initial
        else:
            raise ValueError(f"initial data shape {initial.shape} fits neither the domain nor its boundary")
    dt = stable_timestep(dom, beta, f, safety)
    if dt_max is not None:
        dt = min(dt, dt_max)
    solver = None
    res = 0.0
    refresh_faces(u, dom, closure, include_boundary_plane=True)
    if beta == 0:
        solver = EllipticSolver(dom, closure, method=method)
        u, res, _ = solver.solve(u, elliptic_tol)
    s = SimState(dom, u, float(beta), f, closure, dt, elliptic_tol=elliptic_tol,
                 step_order=step_order, solver=solver, bulk_residual=res)
    return s, u0c


def simulate(scenario: Scenario, dom: LatticeDomain, beta: float, T: float,
             snapshot_times: Sequence[float] | None = None, **kw) -> Trajectory:
    """Run to time ``T``, recording snapshots (always including 0 and T).

    Each inter-snapshot interval is split into equal steps no larger than the
    stable step, so snapshot times are hit exactly.
    """
    if T < 0:
        raise ValueError("horizon must be >= 0")
    times = sorted({0.0, float(T), *(float(t) for t in (snapshot_times or ()))})
    if times[0] < 0 or times[-1] > T:
        raise ValueError("snapshot times must lie in [0, T]")
    t0 = _time.perf_counter()
    s, u0c = initial_state(scenario, dom, beta, **kw)
    snaps = [Snapshot(0.0, 0, s.values.copy(), 0.0)]
    dt_used = 0.0
    for t_next in times[1:]:
        length = t_next - s.time
        k = max(1, math.ceil(length / s.dt - 1e-9))
        h = length / k
        dt_used = max(dt_used, h)
        for _ in range(k):
            s = step(s, h)
        s = replace(s, time=t_next)
        snaps.append(Snapshot(t_next, s.step, s.values.copy(), _time.perf_counter() - t0))
    return Trajectory(dom, float(beta), s.nonlinearity, snaps, u0c, scenario.profile.sup_abs,
                      dt_used, s.step, s)


# --- barriers and audits ----------------------------------------------------------

@dataclass
class BarrierPair:
    """u0c +- C (sqrt(1 + x_n) - 1 + t), the flat bound, and for beta > 0 u_0 +- t C_beta."""

    u0c: np.ndarray = field(repr=False)
    lift: np.ndarray = field(repr=False)     # sqrt(1 + x_n) - 1
    C: float
    data_sup: float
    sup_F: float
    beta: float
    u0: Optional[np.ndarray] = field(default=None, repr=False)
    C_beta: Optional[float] = None

    def upper(self, t: float) -> np.ndarray:
        return self.u0c + self.C * (self.lift + t)

    def lower(self, t: float) -> np.ndarray:
        return self.u0c - self.C * (self.lift + t)

    def flat(self, t: float) -> float:
        return self.data_sup + t * self.sup_F


def build_barriers(dom: LatticeDomain, u0c: np.ndarray, f: Nonlinearity, data_sup: float,
                   beta: float, initial: np.ndarray | None = None) -> BarrierPair:
    """Smallest admissible constants from measured operator bounds on the kernel extension.

    C covers the boundary constraint (with D^eps[sqrt(1+x_n)] <= 1/2 at x_n = 0)
    and the bulk envelope 4 (1+x_n)^{3/2} |Delta^eps u0c|, then is doubled.
    """
    eps = dom.eps
    xn = dom.coords()[-1]
    lift = np.sqrt(1.0 + xn) - 1.0
    d_sup = float(np.max(np.abs(boundary_operator_field(u0c, eps)), initial=0.0))
    lap = laplacian_field(u0c, eps)
    bulk = float(np.max(4 * (1 + xn[dom.interior]) ** 1.5 * np.abs(lap), initial=0.0))
    C = 2.0 * max(2.0 * (f.sup_F + d_sup), bulk)
    u0 = C_beta = None
    if beta > 0:
        u0 = np.asarray(u0c if initial is None else initial, float)
        db = float(np.max(np.abs(boundary_operator_field(u0, eps)), initial=0.0))
        lb = float(np.max(np.abs(laplacian_field(u0, eps)), initial=0.0))
        C_beta = max(f.sup_F + db, lb / beta)
    return BarrierPair(np.asarray(u0c, float), lift, C, float(data_sup), f.sup_F, float(beta),
                       u0, C_beta)


def barriers_for(traj: Trajectory) -> BarrierPair:
    return build_barriers(traj.domain, traj.u0c, traj.nonlinearity, traj.profile_sup, traj.beta,
                          traj.snapshots[0].values if traj.beta > 0 else None)


@dataclass
class BarrierAudit:
    times: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    flat: np.ndarray
    beta_bound: np.ndarray
    tolerance: float
    beta_tolerance: float
    C: float
    C_beta: Optional[float]

    @property
    def worst(self) -> dict:
        return {k: float(np.nanmax(getattr(self, k), initial=0.0))
                for k in ("upper", "lower", "flat", "beta_bound")}

    @property
    def passed(self) -> bool:
        w = self.worst
        ok = max(w["upper"], w["lower"], w["flat"]) <= self.tolerance
        return ok and w["beta_bound"] <= self.beta_tolerance

    def summary(self) -> dict:
        return {"C": self.C, "C_beta": self.C_beta, "tolerance": self.tolerance,
                "beta_tolerance": self.beta_tolerance, **{f"max_{k}": v for k, v in self.worst.items()},
                "passed": self.passed}


def barrier_audit(traj: Trajectory, b: BarrierPair | None = None) -> BarrierAudit:
    """Per-snapshot largest positive violation of each barrier."""
    b = b or barriers_for(traj)
    up, lo, fl, bb = [], [], [], []
    for snap in traj.snapshots:
        u, t = snap.values, snap.time
        up.append(max(float(np.max(u - b.upper(t))), 0.0))
        lo.append(max(float(np.max(b.lower(t) - u)), 0.0))
        fl.append(max(float(np.max(np.abs(u) - b.flat(t))), 0.0))
        if b.C_beta is not None:
            bb.append(max(float(np.max(np.abs(u - b.u0) - t * b.C_beta)), 0.0))
        else:
            bb.append(np.nan)
    dt = traj.dt_max
    tol = 5 * dt * (b.C + b.sup_F)
    btol = 5 * dt * b.C_beta if b.C_beta is not None else math.inf
    return BarrierAudit(np.array(traj.times), np.array(up), np.array(lo), np.array(fl),
                        np.array(bb), tol, btol, b.C, b.C_beta)


class OrderingPreconditionError(ValueError):
    pass


def ordering_audit(traj_a: Trajectory, traj_b: Trajectory) -> float:
    """max over snapshots and sites of (a - b)^+, given a <= b at t = 0."""
    if traj_a.domain != traj_b.domain or traj_a.times != traj_b.times:
        raise ValueError("trajectories are not comparable (domain or snapshot times differ)")
    first_a, first_b = traj_a.snapshots[0].values, traj_b.snapshots[0].values
    if np.any(first_a > first_b):
        raise OrderingPreconditionError(
            f"initial data not ordered: max(a - b) = {float(np.max(first_a - first_b)):.3e}")
    worst = 0.0
    for sa, sb in zip(traj_a.snapshots, traj_b.snapshots):
        worst = max(worst, float(np.max(sa.values - sb.values)))
    return max(worst, 0.0)
