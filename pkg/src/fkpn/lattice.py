"""Truncated half-space lattices, fields on them, and the discrete operators.

Storage convention: a field on a domain of dimension ``n`` is a numpy array of
shape ``(height + 1, 2L + 1, ..., 2L + 1)``.  Axis 0 is the vertical index
``i_n`` (slowest, so the boundary plane ``u[0, ...]`` is one contiguous
slab); axes ``1..n-1`` are the lateral indices shifted by ``L``.

Public site tuples use the physical ordering ``(i_1, ..., i_{n-1}, i_n)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Callable, Sequence

import numpy as np

DEFAULT_MAX_SITES = 50_000_000


class SiteError(ValueError):
    """A site does not satisfy the stencil's contract."""


class DomainTooLarge(ValueError):
    pass


class EmptyWindow(ValueError):
    """The window contains no lattice site."""


@dataclass(frozen=True)
class LatticeDomain:
    n: int
    eps: float
    lateral_halfwidth: int
    height: int

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.height + 1,) + (2 * self.lateral_halfwidth + 1,) * (self.n - 1)

    @property
    def size(self) -> int:
        return prod(self.shape)

    @property
    def boundary_shape(self) -> tuple[int, ...]:
        return self.shape[1:]

    @property
    def lateral_extent(self) -> float:
        return self.lateral_halfwidth * self.eps

    @property
    def height_extent(self) -> float:
        return self.height * self.eps

    def offset(self, site: Sequence[int]) -> int:
        """Linear offset of ``site`` (physical ordering) in the flat value block."""
        return int(np.ravel_multi_index(self.array_index(site), self.shape))

    def array_index(self, site: Sequence[int]) -> tuple[int, ...]:
        site = tuple(int(s) for s in site)
        if len(site) != self.n:
            raise SiteError(f"site {site} has {len(site)} indices, expected {self.n}")
        *lateral, vertical = site
        L = self.lateral_halfwidth
        if not 0 <= vertical <= self.height or any(abs(i) > L for i in lateral):
            raise SiteError(f"site {site} lies outside the truncated domain")
        return (vertical,) + tuple(i + L for i in lateral)

    def coords(self) -> np.ndarray:
        """Physical coordinates, shape ``(n,) + shape``; ``coords()[k]`` is x_{k+1}."""
        L = self.lateral_halfwidth
        axes = [np.arange(self.height + 1) * self.eps]
        axes += [np.arange(-L, L + 1) * self.eps] * (self.n - 1)
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids[1:] + grids[:1])

    def boundary_coords(self) -> np.ndarray:
        """Lateral coordinates of the boundary plane, shape ``(n-1,) + boundary_shape``."""
        return self.coords()[:-1, 0]

    @property
    def interior(self) -> tuple[slice, ...]:
        """Sites whose full 2n-neighbour stencil lies in the domain."""
        return (slice(1, -1),) * self.n

    @property
    def active_boundary(self) -> tuple:
        """Boundary-plane sites whose lateral neighbours and upward neighbour exist."""
        return (0,) + (slice(1, -1),) * (self.n - 1)

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.interior] = True
        return m

    def face_mask(self) -> np.ndarray:
        """Truncation faces: every site that is neither interior nor on the boundary plane."""
        m = ~self.interior_mask()
        m[0, ...] = False
        return m

    def is_nested_in(self, fine: "LatticeDomain") -> bool:
        try:
            refinement_ratio(fine, self)
        except ValueError:
            return False
        return True


def make_domain(
    n: int,
    eps: float,
    lateral_halfwidth: int,
    height: int,
    *,
    max_sites: int = DEFAULT_MAX_SITES,
) -> LatticeDomain:
    if int(n) != n or n < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {n}")
    if not eps > 0 or not np.isfinite(eps):
        raise ValueError(f"spacing must be positive and finite, got {eps}")
    if int(height) != height or height < 1:
        raise ValueError(f"height must be an integer >= 1, got {height}")
    if int(lateral_halfwidth) != lateral_halfwidth or lateral_halfwidth < 0:
        raise ValueError(f"lateral_halfwidth must be an integer >= 0, got {lateral_halfwidth}")
    n, lateral_halfwidth, height = int(n), int(lateral_halfwidth), int(height)
    count = (2 * lateral_halfwidth + 1) ** (n - 1) * (height + 1)
    if count > max_sites:
        raise DomainTooLarge(f"domain has {count} sites, budget is {max_sites}")
    return LatticeDomain(n, float(eps), lateral_halfwidth, height)


def domain_for_extents(n: int, eps: float, lateral_extent: float, height_extent: float,
                       **kw) -> LatticeDomain:
    """Domain covering ``[-lateral_extent, lateral_extent]^{n-1} x [0, height_extent]``."""
    L = _exact_multiple(lateral_extent, eps, "lateral extent") if n > 1 else 0
    H = _exact_multiple(height_extent, eps, "height extent")
    return make_domain(n, eps, L, H, **kw)


def _exact_multiple(extent: float, eps: float, what: str) -> int:
    k = round(extent / eps)
    if not np.isclose(k * eps, extent, rtol=1e-12, atol=1e-12):
        raise ValueError(f"{what} {extent} is not a multiple of eps={eps}")
    return int(k)


@dataclass
class LatticeField:
    domain: LatticeDomain
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape:
            raise ValueError(f"values shape {self.values.shape} != domain shape {self.domain.shape}")

    @classmethod
    def sample(cls, domain: LatticeDomain, f: Callable[[np.ndarray], np.ndarray],
               time: float = 0.0) -> "LatticeField":
        """Sample ``f(coords)`` where ``coords`` has shape ``(n,) + domain.shape``."""
        vals = np.broadcast_to(np.asarray(f(domain.coords()), dtype=float), domain.shape)
        return cls(domain, vals.copy(), time)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def boundary(self) -> "BoundaryField":
        return BoundaryField(self.domain, self.values[0, ...].copy(), self.time)

    def __getitem__(self, site):
        return float(self.values[self.domain.array_index(site)])


@dataclass
class BoundaryField:
    domain: LatticeDomain
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.boundary_shape:
            raise ValueError(f"boundary values shape {self.values.shape} "
                             f"!= {self.domain.boundary_shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("boundary values must be finite")


@dataclass(frozen=True)
class Window:
    """Compact comparison set: |x_k| <= lateral_radius, 0 <= x_n <= height, t in [t_min, t_max]."""

    lateral_radius: float
    height: float
    t_min: float = 0.0
    t_max: float = float("inf")

    def check(self, domain: LatticeDomain) -> None:
        problems = []
        if domain.n > 1 and not self.lateral_radius < domain.lateral_extent:
            problems.append(f"lateral radius {self.lateral_radius} not inside "
                            f"lateral extent {domain.lateral_extent}")
        if not self.height < domain.height_extent:
            problems.append(f"height {self.height} not inside height extent {domain.height_extent}")
        if problems:
            raise ValueError("window touches the truncation: " + "; ".join(problems))

    def mask(self, domain: LatticeDomain) -> np.ndarray:
        x = domain.coords()
        tol = 1e-9 * domain.eps
        m = x[-1] <= self.height + tol
        for k in range(domain.n - 1):
            m &= np.abs(x[k]) <= self.lateral_radius + tol
        return m

    def contains_time(self, t: float) -> bool:
        return self.t_min - 1e-12 <= t <= self.t_max + 1e-12


# --- stencils -----------------------------------------------------------------

def _shifted(u: np.ndarray, axis: int, step: int, region: tuple) -> np.ndarray:
    idx = list(region)
    s = idx[axis]
    if isinstance(s, slice):
        start = (s.start or 0) + step
        stop = s.stop + step if s.stop is not None else None
        if stop == 0:
            stop = None
        idx[axis] = slice(start, stop)
    else:
        idx[axis] = s + step
    return u[tuple(idx)]


def laplacian_field(u: np.ndarray, eps: float) -> np.ndarray:
    """Discrete Laplacian on all interior sites; returns an array of shape ``shape - 2``."""
    region = (slice(1, -1),) * u.ndim
    centre = u[region]
    acc = np.zeros_like(centre)
    for axis in range(u.ndim):
        acc += _shifted(u, axis, 1, region) - centre
        acc += _shifted(u, axis, -1, region) - centre
    return acc / eps**2


def boundary_operator_field(u: np.ndarray, eps: float) -> np.ndarray:
    """Boundary operator on the active boundary sites (lateral pairs plus the upward neighbour)."""
    region = (0,) + (slice(1, -1),) * (u.ndim - 1)
    centre = u[region]
    acc = _shifted(u, 0, 1, region) - centre
    for axis in range(1, u.ndim):
        acc = acc + (_shifted(u, axis, 1, region) - centre)
        acc = acc + (_shifted(u, axis, -1, region) - centre)
    return np.asarray(acc / eps)


def discrete_laplacian(f: LatticeField, site: Sequence[int]) -> float:
    dom = f.domain
    idx = dom.array_index(site)
    if idx[0] == 0:
        raise SiteError(f"site {tuple(site)} is on the boundary plane")
    if idx[0] == dom.height or any(i in (0, 2 * dom.lateral_halfwidth) for i in idx[1:]):
        raise SiteError(f"site {tuple(site)} is on a truncation face")
    u = f.values
    centre = u[idx]
    total = 0.0
    for axis in range(dom.n):
        for step in (1, -1):
            nb = list(idx)
            nb[axis] += step
            total += u[tuple(nb)] - centre
    return float(total / dom.eps**2)


def discrete_boundary_operator(f: LatticeField, site: Sequence[int]) -> float:
    dom = f.domain
    idx = dom.array_index(site)
    if idx[0] != 0:
        raise SiteError(f"site {tuple(site)} is not on the boundary plane")
    if any(i in (0, 2 * dom.lateral_halfwidth) for i in idx[1:]):
        raise SiteError(f"site {tuple(site)} lacks a lateral neighbour")
    u = f.values
    centre = u[idx]
    total = u[(1,) + idx[1:]] - centre
    for axis in range(1, dom.n):
        for step in (1, -1):
            nb = list(idx)
            nb[axis] += step
            total += u[tuple(nb)] - centre
    return float(total / dom.eps)


# --- nested lattices and norms ------------------------------------------------

def refinement_ratio(fine: LatticeDomain, coarse: LatticeDomain) -> int:
    if fine.n != coarse.n:
        raise ValueError("domains have different dimensions")
    r = coarse.eps / fine.eps
    k = round(np.log2(r)) if r > 0 else -1
    if k < 0 or not np.isclose(r, 2**k, rtol=1e-12):
        raise ValueError(f"eps ratio {coarse.eps}/{fine.eps} is not a power of 2")
    r = 2**k
    if coarse.height * r > fine.height or coarse.lateral_halfwidth * r > fine.lateral_halfwidth:
        raise ValueError("coarse domain is not contained in the fine domain")
    return r


def restrict(fine: LatticeField, coarse: LatticeDomain) -> LatticeField:
    """Injection of ``fine`` onto the sites of ``coarse`` (no averaging)."""
    r = refinement_ratio(fine.domain, coarse)
    Lf, Lc = fine.domain.lateral_halfwidth, coarse.lateral_halfwidth
    idx = (slice(0, coarse.height * r + 1, r),)
    idx += (slice(Lf - Lc * r, Lf + Lc * r + 1, r),) * (coarse.n - 1)
    return LatticeField(coarse, fine.values[idx].copy(), fine.time)


def sup_error(a: LatticeField, b: LatticeField, window: Window) -> float:
    if a.domain != b.domain:
        raise ValueError("fields live on different domains; restrict first")
    mask = window.mask(a.domain)
    if not mask.any():
        raise EmptyWindow("window contains no lattice site")
    return float(np.max(np.abs(a.values[mask] - b.values[mask])))
