import warnings
from math import atan, pi

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fkpn.harmonic import (Closure, EllipticNonConvergence, EllipticSolver, KernelQuadrature,
                           QuadratureWarning, continuous_extension, decay_report, discrete_extension,
                           kernel_mass, poisson_kernel, sphere_measure)
from fkpn.lattice import BoundaryField, domain_for_extents, laplacian_field, make_domain
from fkpn.scenarios import arctan_profile, constant_profile, function_profile


def test_sphere_measure():
    assert sphere_measure(2) == pytest.approx(2 * pi)
    assert sphere_measure(3) == pytest.approx(4 * pi)


def test_poisson_kernel_values():
    assert poisson_kernel(0.0, 1.0, 2) == pytest.approx(1 / pi)
    assert poisson_kernel(1.0, 1.0, 2) == pytest.approx(1 / (2 * pi))
    assert poisson_kernel(np.zeros(2), 1.0, 3) == pytest.approx(1 / (2 * pi))
    with pytest.raises(ValueError):
        poisson_kernel(0.0, 0.0, 2)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("xn", [0.05, 0.5, 1.0, 4.0, 100.0])
def test_kernel_has_unit_mass(n, xn):
    mass, err = kernel_mass(xn, n)
    assert abs(mass - 1) <= 1e-9
    assert err <= 1e-6


def test_kernel_mass_matches_adaptive_quadrature_oracle():
    # independent route: scipy adaptive quadrature over the whole line
    val, _ = integrate.quad(lambda z: poisson_kernel(z, 0.7, 2), -np.inf, np.inf, epsabs=1e-13)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_quadrature_rejects_small_radius():
    with pytest.raises(ValueError):
        KernelQuadrature(panels=4)
    q = KernelQuadrature(radius=10.0)
    with pytest.raises(ValueError):
        q.check_heights(2.0)


def test_extension_of_constant():
    for n in (1, 2, 3):
        p = constant_profile(0.3, n)
        x = np.zeros((n, 4))
        x[-1] = [0.0, 0.5, 2.0, 30.0]
        assert np.allclose(continuous_extension(p, x), 0.3, atol=1e-9)


def test_arctan_extension_examples():
    p = arctan_profile(1.0, 2)
    assert continuous_extension(p, np.array([0.0, 1.0])) == pytest.approx(0.5, abs=1e-12)
    assert continuous_extension(p, np.array([1.0, 1.0])) == pytest.approx(0.5 + atan(0.5) / pi, abs=1e-10)
    assert 0.5 + atan(0.5) / pi == pytest.approx(0.6475836, abs=1e-7)


@pytest.mark.parametrize("x,h", [(0.3, 0.2), (-2.5, 1.0), (7.0, 3.0), (0.0, 25.0)])
def test_arctan_extension_matches_adaptive_quadrature(x, h):
    # oracle: adaptive quadrature of the kernel against the data in z' coordinates
    g = lambda z: 0.5 + np.arctan(z) / pi
    oracle, _ = integrate.quad(lambda z: poisson_kernel(x - z, h, 2) * g(z), -np.inf, np.inf,
                               epsabs=1e-12, limit=400)
    got = continuous_extension(arctan_profile(1.0, 2), np.array([x, h]))
    assert got == pytest.approx(oracle, abs=1e-8)
    assert got == pytest.approx(0.5 + np.arctan(x / (1 + h)) / pi, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20), st.floats(1e-3, 50), st.floats(0.2, 5), st.floats(-3, 3), st.floats(-2, 2))
def test_arctan_extension_matches_closed_form(x, h, w, lo, amp):
    p = arctan_profile(w, 2, low=lo, high=lo + amp)
    got = continuous_extension(p, np.array([x, h]))
    assert got == pytest.approx(p.exact_extension(np.array([x, h])), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-2, 20))
def test_planar_data_in_three_dimensions(x1, x2, h):
    p = arctan_profile(1.0, 3, axis=1)
    got = continuous_extension(p, np.array([x1, x2, h]))
    assert got == pytest.approx(0.5 + np.arctan(x2 / (1 + h)) / pi, abs=1e-9)


def _gaussian3():
    return function_profile(lambda z: np.exp(-(z[0] ** 2 + z[1] ** 2)), 3, sup_abs=1.0)


def test_three_dimensional_radial_data_matches_oracle():
    oracle, _ = integrate.quad(lambda r: r * np.exp(-r * r) / (1 + r * r) ** 1.5, 0, np.inf, epsabs=1e-13)
    got, err = continuous_extension(_gaussian3(), np.array([0.0, 0.0, 1.0]), return_error=True)
    assert got == pytest.approx(oracle, abs=1e-9)
    assert err <= 1e-8


def test_three_dimensional_offcentre_point_matches_oracle():
    x1, x2, h = 0.5, -0.3, 0.7
    f = lambda z2, z1: poisson_kernel(np.array([x1 - z1, x2 - z2]), h, 3) * np.exp(-(z1 * z1 + z2 * z2))
    oracle, _ = integrate.dblquad(f, -8, 8, -8, 8, epsabs=1e-11)
    with warnings.catch_warnings():
        warnings.simplefilter("error", QuadratureWarning)
        got = continuous_extension(_gaussian3(), np.array([x1, x2, h]))
    assert got == pytest.approx(oracle, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(-10, 10), st.floats(1e-3, 100), st.floats(-3, 3), st.floats(-3, 3))
def test_continuous_maximum_principle(x, h, lo, hi):
    p = arctan_profile(0.7, 2, low=lo, high=hi)
    v, e = continuous_extension(p, np.array([x, h]), return_error=True)
    assert min(lo, hi) - e - 1e-12 <= v <= max(lo, hi) + e + 1e-12


def test_quadrature_warning_carries_the_value():
    q = KernelQuadrature(panels=8, order=2, tol=1e-15)
    with pytest.warns(QuadratureWarning):
        v = continuous_extension(arctan_profile(0.05, 2), np.array([0.1, 0.01]), q)
    assert np.isfinite(v)


def test_extension_is_consistent_with_lattice_harmonicity():
    # Delta^eps of samples of a harmonic function is O(eps^2): ~4x smaller per halving
    p = arctan_profile(1.0, 2)
    vals = []
    for eps in (0.5, 0.25, 0.125):
        dom = domain_for_extents(2, eps, 2.0, 2.0)
        u = continuous_extension(p, dom.coords())
        lap = laplacian_field(u, eps)
        x = dom.coords()[:, 1:-1, 1:-1]
        # compare at the same physical sites (the coarse interior)
        on_coarse = (np.abs(x[-1] / 0.5 - np.round(x[-1] / 0.5)) < 1e-9) & (
            np.abs(x[0] / 0.5 - np.round(x[0] / 0.5)) < 1e-9)
        vals.append(np.abs(lap[on_coarse]).max())
    assert 3.0 < vals[0] / vals[1] < 5.0
    assert 3.0 < vals[1] / vals[2] < 5.0


# --- lattice extension ----------------------------------------------------------

def _dense_strip_oracle(u, eps):
    # unknowns: the three interior sites of a (3 x 5) domain; 4 u_i - sum(neighbours) = 0
    cols = [1, 2, 3]
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for r, c in enumerate(cols):
        A[r, r] = 4
        for (i, j) in ((0, c), (2, c), (1, c - 1), (1, c + 1)):
            if i == 1 and j in cols:
                A[r, cols.index(j)] -= 1
            else:
                b[r] += u[i, j]
    return np.linalg.solve(A, b)


@pytest.mark.parametrize("method", ["direct", "jacobi"])
def test_strip_matches_dense_solve(method):
    rng = np.random.default_rng(7)
    dom = make_domain(2, 0.5, 2, 2)
    faces = rng.normal(size=dom.shape)
    g = BoundaryField(dom, rng.normal(size=dom.boundary_shape))
    out = discrete_extension(g, "dirichlet-from-kernel", 1e-12, faces=faces, method=method)
    ref_u = faces.copy()
    ref_u[0] = g.values
    assert np.allclose(out.values[1, 1:4], _dense_strip_oracle(ref_u, dom.eps), atol=1e-11)


def test_half_line_extension_is_constant():
    dom = make_domain(1, 0.5, 0, 10)
    g = BoundaryField(dom, np.array(0.37))
    out = discrete_extension(g, "zero-normal-difference", 1e-12)
    assert np.allclose(out.values, 0.37, atol=1e-12)


def test_constant_data_is_reproduced():
    dom = make_domain(2, 0.5, 4, 4)
    g = BoundaryField(dom, np.full(dom.boundary_shape, 5.0))
    out = discrete_extension(g, Closure.NEUMANN, 1e-12)
    assert np.all(out.values == 5.0)
    out = discrete_extension(g, Closure.DIRICHLET, 1e-12, faces=np.full(dom.shape, 5.0))
    assert np.all(out.values == 5.0)


def test_dirichlet_closure_needs_face_data():
    dom = make_domain(2, 0.5, 2, 2)
    with pytest.raises(ValueError):
        discrete_extension(BoundaryField(dom, np.zeros(dom.boundary_shape)), Closure.DIRICHLET)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["dirichlet-from-kernel", "zero-normal-difference"]),
       st.sampled_from([2, 3]))
def test_discrete_maximum_principle(seed, closure, n):
    rng = np.random.default_rng(seed)
    dom = make_domain(n, 0.5, 3, 4)
    faces = rng.uniform(-1, 2, size=dom.shape)
    g = BoundaryField(dom, rng.uniform(-1, 2, size=dom.boundary_shape))
    out = discrete_extension(g, closure, 1e-11, faces=faces)
    data = g.values if closure == "zero-normal-difference" else np.concatenate(
        [g.values.ravel(), faces[dom.face_mask()]])
    assert data.min() - 1e-12 <= out.values.min()
    assert out.values.max() <= data.max() + 1e-12
    assert EllipticSolver(dom, closure).residual(out.values) <= 1e-11


def test_jacobi_and_direct_agree():
    p = arctan_profile(1.0, 2)
    dom = domain_for_extents(2, 0.5, 3.0, 3.0)
    cont = continuous_extension(p, dom.coords())
    g = BoundaryField(dom, cont[0])
    a = discrete_extension(g, Closure.DIRICHLET, 1e-11, faces=cont, method="direct")
    b = discrete_extension(g, Closure.DIRICHLET, 1e-11, faces=cont, method="jacobi")
    assert np.max(np.abs(a.values - b.values)) < 1e-9


def test_jacobi_budget_exhaustion_reports_residual():
    dom = make_domain(2, 0.1, 20, 20)
    g = BoundaryField(dom, np.linspace(0, 1, dom.boundary_shape[0]))
    with pytest.raises(EllipticNonConvergence) as info:
        discrete_extension(g, Closure.NEUMANN, 1e-12, method="jacobi", max_sweeps=50)
    assert info.value.residual > 1e-12


def test_solver_returns_immediately_when_converged():
    dom = make_domain(2, 0.5, 3, 3)
    s = EllipticSolver(dom, Closure.NEUMANN)
    u = np.full(dom.shape, 2.0)
    out, res, it = s.solve(u, 1e-10)
    assert it == 0 and res == 0.0 and np.array_equal(out, u)


# --- decay report ------------------------------------------------------------------

def test_decay_report_constant_profile_is_zero():
    rep = decay_report(constant_profile(1.5, 2), [1, 2, 4])
    assert rep.constant == pytest.approx(0.0, abs=1e-8)
    assert not rep.growth


def test_decay_report_arctan_bounded():
    rep = decay_report(arctan_profile(1.0, 2), [1, 2, 4, 8])
    # closed form: |d/dx_n| * (1 + x_n) <= |D u| (1 + x_n) <= 1/pi for the shifted arctan
    assert np.all(rep.grad_product <= 1 / pi + 1e-6)
    assert not rep.growth
    text = rep.to_csv().splitlines()
    assert text[0] == "height,grad_product,hess_product,d_eps_product,lap_eps_product"
    assert len(text) == 5


def test_decay_report_lattice_products_uniform_in_eps():
    p = arctan_profile(1.0, 2)
    a = decay_report(p, [1, 2, 4, 8], eps=0.5)
    b = decay_report(p, [1, 2, 4, 8], eps=0.25)
    assert a.lap_eps_product.max() < 1.0 and b.lap_eps_product.max() < 1.0
    assert np.all(np.isfinite(a.d_eps_product)) and np.all(a.d_eps_product >= 0)


def test_decay_report_rejects_heights_below_eps():
    with pytest.raises(ValueError):
        decay_report(arctan_profile(1.0, 2), [0.1], eps=0.25)
