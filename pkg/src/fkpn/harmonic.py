"""Half-space harmonic extensions: Poisson-kernel quadrature and lattice solves."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from math import gamma, pi

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .lattice import BoundaryField, LatticeDomain, LatticeField, laplacian_field


class QuadratureWarning(UserWarning):
    pass


class EllipticNonConvergence(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class Closure(str, Enum):
    DIRICHLET = "dirichlet-from-kernel"
    NEUMANN = "zero-normal-difference"


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 pi for n=2, 4 pi for n=3)."""
    return 2 * pi ** (n / 2) / gamma(n / 2)


def poisson_kernel(zprime, zn, n: int):
    """H(z', z_n) = 2 z_n / (omega_n (z_n^2 + |z'|^2)^{n/2}).

    ``zprime`` has shape ``(n-1, ...)`` (or is a scalar when n == 2).
    """
    if n < 2:
        raise ValueError("the half-space Poisson kernel needs n >= 2")
    zn = np.asarray(zn, float)
    if np.any(zn <= 0):
        raise ValueError("Poisson kernel evaluated at z_n <= 0")
    zp = np.asarray(zprime, float)
    r2 = zp**2 if (n == 2 and zp.ndim == 0) else np.sum(np.atleast_1d(zp) ** 2, axis=0)
    return 2 * zn / (sphere_measure(n) * (zn**2 + r2) ** (n / 2))


@dataclass(frozen=True)
class KernelQuadrature:
    """Discretisation of the Poisson integral.

    The integral is taken over |z' - x'| <= radius after the substitution
    |z' - x'| = x_n tan(theta), split into ``panels`` uniform angular panels
    plus panels ending where the boundary data has structure, with
    ``order``-point Gauss-Legendre on each.  Mass beyond ``radius`` is added
    analytically using the far-field limits when ``tail_correction`` is set.
    """

    radius: float = 1.0e5
    panels: int = 16
    order: int = 8
    tail_correction: bool = True
    tol: float = 1e-8

    def __post_init__(self):
        if self.panels < 8:
            raise ValueError("panel count must be >= 8")
        if self.order < 2:
            raise ValueError("Gauss-Legendre order must be >= 2")
        if not self.radius > 0:
            raise ValueError("truncation radius must be positive")

    def check_heights(self, max_height: float) -> None:
        if self.radius < 8 * max_height:
            raise ValueError(f"truncation radius {self.radius} < 8 x max evaluation height {max_height}")


def _gl(order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    return t, w


def _estimate(diff):
    # QUADPACK-style sharpening of a fine-vs-coarse difference
    diff = np.abs(diff)
    return np.minimum(diff, 200.0 * diff**1.5)


def _panel_rule(edges: np.ndarray, order: int):
    """Nodes and weights for Gauss-Legendre on consecutive panels; edges has shape (P, E)."""
    t, w = _gl(order)
    a, b = edges[:, :-1, None], edges[:, 1:, None]
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * t, half * w


_CHUNK = 2048


def continuous_extension(u0, x, q: KernelQuadrature | None = None, *, return_error: bool = False):
    """Poisson-kernel harmonic extension of boundary data ``u0`` at points ``x``.

    ``x`` has shape ``(n, ...)`` with ``x[-1]`` the height; points with
    ``x_n == 0`` return the boundary data itself.
    """
    q = q or KernelQuadrature()
    n = u0.n
    x = np.asarray(x, float)
    if x.shape[0] != n:
        raise ValueError(f"points have leading dimension {x.shape[0]}, expected n={n}")
    out_shape = x.shape[1:]
    pts = x.reshape(n, -1)
    h = pts[-1]
    if np.any(h < 0):
        raise ValueError("extension evaluated below the boundary plane")
    vals = np.empty(h.shape)
    errs = np.zeros(h.shape)
    on_plane = h == 0
    if on_plane.any():
        vals[on_plane] = u0.func(pts[:-1, on_plane])
    up = ~on_plane
    constant = u0.limits[0] == u0.limits[1] and not any(u0.derivative_bounds)
    if up.any():
        if constant:
            # the kernel has unit mass, so constant data extends to itself
            vals[up] = u0.limits[0]
        elif n == 1:
            # bounded harmonic functions on a half-line are constant
            vals[up] = np.asarray(u0.func(np.zeros((0, 1)))).reshape(-1)[0]
        else:
            q.check_heights(float(h[up].max()))
            idx = np.flatnonzero(up)
            for start in range(0, idx.size, _CHUNK):
                sel = idx[start:start + _CHUNK]
                if u0.planar:
                    v, e = _planar_extension(u0, pts[u0.axis, sel], h[sel], q)
                elif n == 3:
                    v, e = _polar3_extension(u0, pts[:-1, sel], h[sel], q)
                else:
                    raise NotImplementedError("non-planar boundary data is supported for n <= 3 only")
                vals[sel], errs[sel] = v, e
    worst = float(errs.max()) if errs.size else 0.0
    if worst > q.tol:
        warnings.warn(f"quadrature error estimate {worst:.2e} exceeds tolerance {q.tol:.1e}",
                      QuadratureWarning, stacklevel=2)
    vals = vals.reshape(out_shape)
    if return_error:
        return vals, errs.reshape(out_shape)
    return vals


def _planar_extension(u0, s, h, q):
    # u^c = (1/pi) int g(s + h tan(theta)) dtheta over (-pi/2, pi/2)
    R = q.radius
    th_R = np.arctan(R / h)
    uni = np.linspace(-1.0, 1.0, q.panels + 1)[None, :] * th_R[:, None]
    bp = u0.breakpoints(R + float(np.abs(s).max()))
    thb = np.arctan((bp[None, :] - s[:, None]) / h[:, None])
    thb = np.clip(thb, -th_R[:, None], th_R[:, None])
    # geometric in |z' - x'| / x_n resolves the kernel peak at every height
    rel = np.minimum(np.arctan(2.0 ** np.arange(-2, 1 + np.ceil(np.log2(R / h.min()))))[None, :],
                     th_R[:, None])
    edges = np.sort(np.concatenate([uni, thb, rel, -rel], axis=1), axis=1)

    def integrate(order):
        th, w = _panel_rule(edges, order)
        z = s[:, None, None] + h[:, None, None] * np.tan(th)
        return np.sum(u0.g(z) * w, axis=(1, 2)) / pi

    fine = integrate(q.order)
    err = _estimate(fine - integrate(max(q.order // 2, 1)))
    tail_mass = (pi / 2 - th_R) / pi          # on each side
    lo, hi = u0.limits
    if q.tail_correction:
        fine = fine + tail_mass * (lo + hi)
        dev = np.maximum(np.abs(u0.g(s + R) - hi), np.abs(u0.g(s - R) - lo))
        err = err + tail_mass * dev
    else:
        err = err + tail_mass * 2 * u0.sup_abs
    return fine, err


def _polar3_extension(u0, xp, h, q):
    # u^c = (1/2pi) int_0^{pi/2} sin(theta) int_0^{2pi} u0(x' + h tan(theta) (cos phi, sin phi)) dphi dtheta
    R = q.radius
    th_R = np.arctan(R / h)
    uni = np.linspace(0.0, 1.0, q.panels + 1)[None, :] * th_R[:, None]
    radii = 2.0 ** np.arange(-3, int(np.ceil(np.log2(R))) + 1)
    thb = np.minimum(np.arctan(radii[None, :] / h[:, None]), th_R[:, None])
    edges = np.sort(np.concatenate([uni, thb], axis=1), axis=1)
    m = 4 * q.panels
    phi = 2 * pi * (np.arange(m) + 0.5) / m

    def integrate(order, m_phi):
        th, w = _panel_rule(edges, order)
        ph = phi[:: m // m_phi]
        r = h[:, None, None, None] * np.tan(th)[..., None]
        z = np.stack([xp[0][:, None, None, None] + r * np.cos(ph),
                      xp[1][:, None, None, None] + r * np.sin(ph)])
        inner = np.mean(u0.func(z), axis=-1) * 2 * pi
        return np.sum(inner * np.sin(th) * w, axis=(1, 2)) / (2 * pi)

    fine = integrate(q.order, m)
    err = _estimate(fine - integrate(max(q.order // 2, 1), m // 2))
    tail_mass = np.cos(th_R)
    if q.tail_correction:
        mid = 0.5 * (u0.limits[0] + u0.limits[1])
        fine = fine + tail_mass * mid
        # the tail carries the angular mean of the data beyond R; sample it at R
        ring = np.stack([xp[0][:, None] + R * np.cos(phi), xp[1][:, None] + R * np.sin(phi)])
        err = err + tail_mass * np.abs(np.mean(u0.func(ring), axis=-1) - mid)
    else:
        err = err + tail_mass * u0.sup_abs
    return fine, err


def kernel_mass(xn: float, n: int, q: KernelQuadrature | None = None) -> tuple[float, float]:
    """Integral of H(z', x_n) over the boundary, by direct quadrature of the kernel formula.

    Returns ``(mass, error_estimate)``; the exact value is 1.
    """
    q = q or KernelQuadrature()
    q.check_heights(xn)
    R = q.radius
    k = np.arange(-6, int(np.ceil(np.log2(R / xn))) + 1)
    radial_edges = np.unique(np.concatenate([[0.0, R], np.minimum(xn * 2.0**k, R),
                                             np.linspace(0, min(R, 16 * xn), q.panels + 1)]))
    surf = sphere_measure(n - 1) if n > 2 else 2.0

    def integrate(order):
        r, w = _panel_rule(radial_edges[None, :], order)
        dens = 2 * xn / (sphere_measure(n) * (xn**2 + r**2) ** (n / 2))
        return float(np.sum(dens * surf * r ** (n - 2) * w))

    fine, coarse = integrate(q.order), integrate(max(q.order // 2, 1))
    th_R = np.arctan(R / xn)
    th, w = _panel_rule(np.array([[th_R, pi / 2]]), 16)
    tail = float(2 / sphere_measure(n) * surf * np.sum(np.sin(th) ** (n - 2) * w))
    if q.tail_correction:
        return fine + tail, float(_estimate(fine - coarse))
    return fine, float(_estimate(fine - coarse)) + tail


# --- lattice harmonic extension -----------------------------------------------

@dataclass
class _Operator:
    n_unknowns: int
    flat_ids: np.ndarray        # flat site index of each unknown
    A: sp.csr_matrix            # diag - adjacency among unknowns
    B: sp.csr_matrix            # known-neighbour gather, (unknowns x sites)
    diag: np.ndarray
    adj: sp.csr_matrix


@lru_cache(maxsize=16)
def _build_operator(domain: LatticeDomain, closure: Closure) -> _Operator:
    shape = domain.shape
    interior = domain.interior_mask()
    face = domain.face_mask()
    ids = -np.ones(shape, dtype=np.int64)
    sites = np.argwhere(interior)
    N = len(sites)
    ids[tuple(sites.T)] = np.arange(N)
    diag = np.zeros(N)
    rows_a, cols_a, rows_b, cols_b = [], [], [], []
    for axis in range(domain.n):
        for step in (1, -1):
            nb = sites.copy()
            nb[:, axis] += step
            nb_t = tuple(nb.T)
            in_int = interior[nb_t]
            known = ~in_int
            if closure == Closure.NEUMANN:
                known &= ~face[nb_t]
            diag += in_int | known
            r = np.arange(N)
            rows_a.append(r[in_int]); cols_a.append(ids[nb_t][in_int])
            rows_b.append(r[known]); cols_b.append(np.ravel_multi_index(nb[known].T, shape))
    ra, ca = np.concatenate(rows_a), np.concatenate(cols_a)
    adj = sp.csr_matrix((np.ones(ra.size), (ra, ca)), shape=(N, N))
    rb, cb = np.concatenate(rows_b), np.concatenate(cols_b)
    B = sp.csr_matrix((np.ones(rb.size), (rb, cb)), shape=(N, int(np.prod(shape))))
    A = (sp.diags(diag) - adj).tocsr()
    return _Operator(N, np.ravel_multi_index(sites.T, shape), A, B, diag, adj)


@lru_cache(maxsize=16)
def _factor(domain: LatticeDomain, closure: Closure):
    return splu(_build_operator(domain, closure).A.tocsc())


def refresh_faces(u: np.ndarray, domain: LatticeDomain, closure: Closure,
                  include_boundary_plane: bool = False) -> None:
    """Apply the zero-normal-difference closure in place (copy inward neighbours).

    Dirichlet faces are data and are left untouched.
    """
    if closure != Closure.NEUMANN:
        return
    first = 0 if include_boundary_plane else 1
    u[-1, ...] = u[-2, ...]
    for axis in range(1, domain.n):
        lo = [slice(first, None)] + [slice(None)] * (domain.n - 1)
        hi = list(lo)
        src_lo, src_hi = list(lo), list(lo)
        lo[axis], src_lo[axis] = 0, 1
        hi[axis], src_hi[axis] = -1, -2
        u[tuple(lo)] = u[tuple(src_lo)]
        u[tuple(hi)] = u[tuple(src_hi)]


class EllipticSolver:
    """Solves Delta^eps u = 0 on the interior given the boundary plane and face data.

    ``method="direct"`` factorises the interior operator once per
    (domain, closure) and reuses it; ``method="jacobi"`` performs full-snapshot
    neighbour-average sweeps.
    """

    def __init__(self, domain: LatticeDomain, closure: Closure | str = Closure.DIRICHLET,
                 method: str = "direct", max_sweeps: int = 200_000):
        self.domain = domain
        self.closure = Closure(closure)
        if method not in ("direct", "jacobi"):
            raise ValueError(f"unknown elliptic method {method!r}")
        self.method = method
        self.max_sweeps = max_sweeps
        self.op = _build_operator(domain, self.closure)

    def residual(self, u: np.ndarray) -> float:
        if self.op.n_unknowns == 0:
            return 0.0
        v = u.copy()
        refresh_faces(v, self.domain, self.closure)
        return float(np.max(np.abs(laplacian_field(v, self.domain.eps))))

    def solve(self, u: np.ndarray, tol: float, *, warm: bool = True) -> tuple[np.ndarray, float, int]:
        """Return ``(field, residual, iterations)``; interior values of ``u`` seed the iteration."""
        out = np.array(u, dtype=float, copy=True)
        op = self.op
        if op.n_unknowns == 0:
            refresh_faces(out, self.domain, self.closure)
            return out, 0.0, 0
        flat = out.reshape(-1)
        rhs = op.B @ flat
        if not warm:
            data = flat[op.B.indices] if op.B.nnz else np.zeros(1)
            flat[op.flat_ids] = 0.5 * (data.min() + data.max())
        res = self.residual(out)
        if res <= tol:
            refresh_faces(out, self.domain, self.closure)
            return out, res, 0
        if self.method == "direct":
            lu = _factor(self.domain, self.closure)
            x = flat[op.flat_ids]
            it = 0
            while res > tol and it < 4:
                x = x + lu.solve(rhs - op.A @ x)
                flat[op.flat_ids] = x
                res = self.residual(out)
                it += 1
        else:
            x = flat[op.flat_ids]
            it = 0
            while res > tol:
                if it >= self.max_sweeps:
                    raise EllipticNonConvergence(f"Jacobi did not converge in {it} sweeps", res)
                for _ in range(25):
                    x = (rhs + op.adj @ x) / op.diag
                it += 25
                flat[op.flat_ids] = x
                res = self.residual(out)
        if res > tol:
            raise EllipticNonConvergence("direct solve did not reach tolerance", res)
        refresh_faces(out, self.domain, self.closure)
        return out, res, it

    def sweep(self, u: np.ndarray) -> np.ndarray:
        """One full-snapshot Jacobi sweep."""
        out = np.array(u, dtype=float, copy=True)
        flat = out.reshape(-1)
        op = self.op
        if op.n_unknowns:
            x = flat[op.flat_ids]
            flat[op.flat_ids] = (op.B @ flat + op.adj @ x) / op.diag
        refresh_faces(out, self.domain, self.closure)
        return out


def discrete_extension(g: BoundaryField, trunc: Closure | str = Closure.DIRICHLET,
                       tol: float = 1e-10, *, faces: np.ndarray | None = None, profile=None,
                       quad: KernelQuadrature | None = None, method: str = "direct",
                       max_sweeps: int = 200_000) -> LatticeField:
    """Lattice harmonic extension of boundary values ``g``.

    With the Dirichlet closure the truncation-face values come from ``faces``
    (a full-shape array) or, failing that, from the kernel extension of
    ``profile``.
    """
    dom = g.domain
    trunc = Closure(trunc)
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    u = np.zeros(dom.shape)
    fmask = dom.face_mask()
    if trunc == Closure.DIRICHLET and fmask.any():
        if faces is None:
            if profile is None:
                raise ValueError("Dirichlet closure needs face values or a profile")
            coords = dom.coords()[:, fmask]
            faces_vals = continuous_extension(profile, coords, quad)
            u[fmask] = faces_vals
        else:
            u[fmask] = np.asarray(faces)[fmask]
    u[0, ...] = g.values
    solver = EllipticSolver(dom, trunc, method=method, max_sweeps=max_sweeps)
    out, _, _ = solver.solve(u, tol, warm=False)
    return LatticeField(dom, out, g.time)


# --- decay of the extension -----------------------------------------------------

@dataclass
class ExtensionReport:
    heights: np.ndarray
    grad_product: np.ndarray
    hess_product: np.ndarray
    d_eps_product: np.ndarray
    lap_eps_product: np.ndarray
    eps: float
    constant: float = field(init=False)
    growth: bool = field(init=False)

    def __post_init__(self):
        cols = np.vstack([self.grad_product, self.hess_product,
                          self.d_eps_product, self.lap_eps_product])
        self.constant = float(cols.max()) if cols.size else 0.0
        # a growth trend: a product rising over the last three heights without slowing
        # down (a bounded product approaching its limit has shrinking increments)
        self.growth = bool(len(self.heights) >= 3 and any(_growing(c) for c in cols))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["height", "grad_product", "hess_product", "d_eps_product", "lap_eps_product"])
        for row in zip(self.heights, self.grad_product, self.hess_product,
                       self.d_eps_product, self.lap_eps_product):
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


def _growing(c: np.ndarray) -> bool:
    d = np.diff(c[-3:])
    return bool(np.all(d > 1e-12 * max(1.0, c.max())) and d[1] >= d[0])


def _unit(n, k):
    e = np.zeros(n)
    e[k] = 1.0
    return e


def decay_report(u0, heights, q: KernelQuadrature | None = None, *, eps: float = 0.25,
                 lateral_samples: np.ndarray | None = None) -> ExtensionReport:
    """Measured |Du^c|(1+x_n), |D^2u^c|(1+x_n^2), |D^eps u^c|(1+x_n), |Delta^eps u^c|(1+x_n^2)."""
    q = q or KernelQuadrature()
    n = u0.n
    heights = np.asarray(heights, float)
    if np.any(heights < eps):
        raise ValueError("heights must be >= eps so the lattice stencils stay in the half-space")
    if lateral_samples is None:
        lateral_samples = u0.center + u0.width * np.linspace(-4, 4, 33)
    axis = u0.axis if u0.axis is not None else 0
    out = {k: [] for k in ("g", "h", "d", "l")}
    for hgt in heights:
        base = np.zeros((n, lateral_samples.size))
        base[axis] = lateral_samples
        base[-1] = hgt
        ev = lambda shift: continuous_extension(u0, base + shift[:, None], q)
        d = hgt / 100
        u_c = ev(np.zeros(n))
        grad = np.empty((n, lateral_samples.size))
        hess = np.empty((n, n, lateral_samples.size))
        for i in range(n):
            ei = d * _unit(n, i)
            up, dn = ev(ei), ev(-ei)
            grad[i] = (up - dn) / (2 * d)
            hess[i, i] = (up - 2 * u_c + dn) / d**2
            for j in range(i + 1, n):
                ej = d * _unit(n, j)
                hess[i, j] = hess[j, i] = (ev(ei + ej) - ev(ei - ej) - ev(-ei + ej)
                                           + ev(-ei - ej)) / (4 * d**2)
        gnorm = np.sqrt(np.sum(grad**2, axis=0))
        hnorm = np.array([np.linalg.norm(hess[:, :, k], 2) for k in range(lateral_samples.size)])
        nb = {(i, s): ev(s * eps * _unit(n, i)) for i in range(n) for s in (1, -1)}
        d_eps = sum(nb[(i, s)] - u_c for i in range(n - 1) for s in (1, -1)) + nb[(n - 1, 1)] - u_c
        d_eps = d_eps / eps
        lap = sum(nb[k] - u_c for k in nb) / eps**2
        out["g"].append(gnorm.max() * (1 + hgt))
        out["h"].append(hnorm.max() * (1 + hgt**2))
        out["d"].append(np.abs(d_eps).max() * (1 + hgt))
        out["l"].append(np.abs(lap).max() * (1 + hgt**2))
    return ExtensionReport(heights, *(np.array(out[k]) for k in ("g", "h", "d", "l")), eps=eps)
