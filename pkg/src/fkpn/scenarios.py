"""Potentials, forcing nonlinearities and dislocation-shaped boundary data."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import pi, sqrt
from typing import Callable, Optional

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PeriodicPotential:
    """1-periodic even potential W with closed-form derivatives and their sup-norms."""

    amplitude: float
    W: ArrayFn = field(repr=False)
    dW: ArrayFn = field(repr=False)
    d2W: ArrayFn = field(repr=False)
    sup_dW: float
    sup_d2W: float
    sup_d3W: float


def cosine_potential(amplitude: float) -> PeriodicPotential:
    """W(a) = amplitude * (1 - cos(2 pi a))."""
    if not amplitude > 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    A = float(amplitude)
    k = 2 * pi
    return PeriodicPotential(
        amplitude=A,
        W=lambda a: A * (1.0 - np.cos(k * np.asarray(a, float))),
        dW=lambda a: A * k * np.sin(k * np.asarray(a, float)),
        d2W=lambda a: A * k**2 * np.cos(k * np.asarray(a, float)),
        sup_dW=A * k,
        sup_d2W=A * k**2,
        sup_d3W=A * k**3,
    )


@dataclass(frozen=True)
class Nonlinearity:
    F: ArrayFn = field(repr=False)
    dF: ArrayFn = field(repr=False)
    sup_F: float
    sup_dF: float
    sup_d2F: float
    label: str = ""

    def __call__(self, a):
        return self.F(a)


def effective_nonlinearity(w: Optional[PeriodicPotential], sigma: float, eps: float) -> Nonlinearity:
    """F(a) = sigma - W'(2a + eps*sigma); ``eps = 0`` gives the limit forcing."""
    s, e = float(sigma), float(eps)
    if w is None:
        return constant_nonlinearity(s)
    shift = e * s
    return Nonlinearity(
        F=lambda a: s - w.dW(2.0 * np.asarray(a, float) + shift),
        dF=lambda a: -2.0 * w.d2W(2.0 * np.asarray(a, float) + shift),
        sup_F=abs(s) + w.sup_dW,
        sup_dF=2.0 * w.sup_d2W,
        sup_d2F=4.0 * w.sup_d3W,
        label=f"effective(sigma={s!r}, eps={e!r})",
    )


def direct_nonlinearity(w: Optional[PeriodicPotential], sigma: float) -> Nonlinearity:
    """F(a) = sigma - W'(a), the textbook overdamped FK forcing."""
    s = float(sigma)
    if w is None:
        return constant_nonlinearity(s)
    return Nonlinearity(
        F=lambda a: s - w.dW(a),
        dF=lambda a: -w.d2W(a),
        sup_F=abs(s) + w.sup_dW,
        sup_dF=w.sup_d2W,
        sup_d2F=w.sup_d3W,
        label=f"direct(sigma={s!r})",
    )


def constant_nonlinearity(c: float) -> Nonlinearity:
    c = float(c)
    return Nonlinearity(
        F=lambda a: np.full(np.shape(a), c),
        dF=lambda a: np.zeros(np.shape(a)),
        sup_F=abs(c), sup_dF=0.0, sup_d2F=0.0,
        label=f"constant({c!r})",
    )


@dataclass(frozen=True)
class BoundaryProfile:
    """Boundary data u_0 on the plane x_n = 0.

    ``g`` is a one-dimensional profile along lateral ``axis`` (0-based) when the
    data is planar; ``func`` is the general form taking lateral coordinates of
    shape ``(n-1, ...)``.  ``limits`` are the far-field values at -inf and +inf
    along ``axis``.
    """

    kind: str
    n: int
    func: ArrayFn = field(repr=False)
    limits: tuple[float, float]
    sup_abs: float
    derivative_bounds: tuple[float, float, float]
    axis: Optional[int] = 0
    g: Optional[ArrayFn] = field(default=None, repr=False)
    width: float = 1.0
    center: float = 0.0
    # closed-form harmonic extension, used only as a test oracle
    exact_extension: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __call__(self, zprime):
        return self.func(np.asarray(zprime, float))

    @property
    def planar(self) -> bool:
        return self.g is not None

    def breakpoints(self, radius: float) -> np.ndarray:
        """Positions along ``axis`` where the profile has structure, out to ``radius``."""
        if self.kind == "constant":
            return np.array([self.center])
        k_max = max(int(np.ceil(np.log2(max(radius / self.width, 1.0)))) + 1, 1)
        scales = self.width * 2.0 ** np.arange(-3, k_max)
        return np.concatenate([[self.center], self.center - scales, self.center + scales])

    def shifted(self, offset: float) -> "BoundaryProfile":
        """The same profile plus a constant."""
        o = float(offset)
        ext = self.exact_extension
        return BoundaryProfile(
            kind=self.kind, n=self.n,
            func=lambda z, f=self.func: f(z) + o,
            limits=(self.limits[0] + o, self.limits[1] + o),
            sup_abs=self.sup_abs + abs(o),
            derivative_bounds=self.derivative_bounds,
            axis=self.axis,
            g=None if self.g is None else (lambda s, g=self.g: g(s) + o),
            width=self.width, center=self.center,
            exact_extension=None if ext is None else (lambda x, e=ext: e(x) + o),
        )


def arctan_profile(width: float = 1.0, n: int = 2, *, low: float = 0.0, high: float = 1.0,
                   axis: int = 0, center: float = 0.0, kind: str = "arctan") -> BoundaryProfile:
    """u_0 = low + (high - low) * (1/2 + arctan((z_axis - center)/width)/pi)."""
    if not width > 0:
        raise ValueError(f"width must be positive, got {width}")
    if n < 2:
        raise ValueError("an arctan profile needs at least one lateral axis (n >= 2)")
    if not 0 <= axis < n - 1:
        raise ValueError(f"axis {axis} is not a lateral axis for n={n}")
    w, lo, amp, c = float(width), float(low), float(high) - float(low), float(center)

    def g(s):
        return lo + amp * (0.5 + np.arctan((np.asarray(s, float) - c) / w) / pi)

    def exact(x):
        x = np.asarray(x, float)
        return lo + amp * (0.5 + np.arctan((x[axis] - c) / (w + x[-1])) / pi)

    a = abs(amp)
    return BoundaryProfile(
        kind=kind, n=n,
        func=lambda z: g(np.asarray(z, float)[axis]),
        limits=(lo, lo + amp),
        sup_abs=max(abs(lo), abs(lo + amp)),
        derivative_bounds=(a / (pi * w), a * 3 * sqrt(3) / (8 * pi * w**2), 2 * a / (pi * w**3)),
        axis=axis, g=g, width=w, center=c,
        exact_extension=exact,
    )


def dislocation_profile(kind: str, width: float, n: int) -> BoundaryProfile:
    """Straight screw (varies along x_1) or edge (varies along x_2) dislocation, from 0 to 1/2."""
    if kind == "screw":
        axis = 0
    elif kind == "edge":
        if n < 3:
            raise ValueError("an edge dislocation needs n >= 3 (its axis is x_2)")
        axis = 1
    else:
        raise ValueError(f"unknown dislocation kind {kind!r}")
    return arctan_profile(width, n, low=0.0, high=0.5, axis=axis, kind=kind)


def constant_profile(value: float, n: int) -> BoundaryProfile:
    v = float(value)
    return BoundaryProfile(
        kind="constant", n=n,
        func=lambda z: np.full(np.shape(z)[1:], v),
        limits=(v, v), sup_abs=abs(v),
        derivative_bounds=(0.0, 0.0, 0.0),
        axis=0, g=lambda s: np.full(np.shape(s), v),
        width=1.0,
        exact_extension=lambda x: np.full(np.shape(x)[1:], v),
    )


def function_profile(func: ArrayFn, n: int, *, sup_abs: float,
                     limits: tuple[float, float] = (0.0, 0.0),
                     derivative_bounds=(np.inf, np.inf, np.inf)) -> BoundaryProfile:
    """Arbitrary (non-planar) boundary data given as ``func(zprime)``."""
    return BoundaryProfile(kind="function", n=n, func=func, limits=limits, sup_abs=sup_abs,
                           derivative_bounds=tuple(derivative_bounds), axis=None)


@dataclass(frozen=True)
class Scenario:
    """Everything physical about a run: forcing and initial boundary data."""

    profile: BoundaryProfile
    potential: Optional[PeriodicPotential] = None
    sigma: float = 0.0
    forcing: str = "effective"          # "effective": sigma - W'(2a + eps sigma); "direct": sigma - W'(a)
    forcing_eps: str = "zero"           # "zero": limit forcing; "lattice": use the run's eps
    name: str = "custom"

    @property
    def n(self) -> int:
        return self.profile.n

    def nonlinearity(self, eps: float) -> Nonlinearity:
        if self.forcing == "direct":
            return direct_nonlinearity(self.potential, self.sigma)
        if self.forcing != "effective":
            raise ValueError(f"unknown forcing {self.forcing!r}")
        e = eps if self.forcing_eps == "lattice" else 0.0
        return effective_nonlinearity(self.potential, self.sigma, e)

    def shifted(self, offset: float) -> "Scenario":
        return Scenario(self.profile.shifted(offset), self.potential, self.sigma,
                        self.forcing, self.forcing_eps, f"{self.name}+{offset!r}")


def screw_scenario(n: int = 2, width: float = 1.0, amplitude: float = 1 / (4 * pi**2),
                   sigma: float = 0.0) -> Scenario:
    return Scenario(dislocation_profile("screw", width, n), cosine_potential(amplitude),
                    sigma, name="screw")


def extend_initial_data(p: BoundaryProfile, dom, beta: float, q=None):
    """Initial data on the lattice.

    For ``beta > 0`` the whole closed half-space carries data: the kernel
    extension of ``p`` in the bulk, ``p`` itself on the boundary plane.  For
    ``beta == 0`` only the boundary plane does.
    """
    from .harmonic import continuous_extension
    from .lattice import BoundaryField, LatticeField

    if beta < 0:
        raise ValueError("beta must be >= 0")
    if p.n != dom.n:
        raise ValueError(f"profile dimension {p.n} != domain dimension {dom.n}")
    if beta == 0:
        return BoundaryField(dom, p.func(dom.boundary_coords()), 0.0)
    return LatticeField(dom, continuous_extension(p, dom.coords(), q), 0.0)
