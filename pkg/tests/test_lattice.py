import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fkpn.lattice import (BoundaryField, DomainTooLarge, EmptyWindow, LatticeField, SiteError, Window,
                          boundary_operator_field, discrete_boundary_operator, discrete_laplacian,
                          domain_for_extents, laplacian_field, make_domain, refinement_ratio, restrict,
                          sup_error)


@pytest.mark.parametrize("args,count,bcount", [
    ((1, 0.5, 0, 8), 9, 1),
    ((2, 0.25, 4, 3), 36, 9),
    ((3, 1.0, 2, 2), 75, 25),
])
def test_site_counts(args, count, bcount):
    dom = make_domain(*args)
    assert dom.size == count
    assert int(np.prod(dom.boundary_shape)) == bcount


def test_make_domain_rejects_bad_input():
    with pytest.raises(ValueError):
        make_domain(0, 1.0, 1, 1)
    with pytest.raises(ValueError):
        make_domain(2, -1.0, 1, 1)
    with pytest.raises(ValueError):
        make_domain(2, 1.0, 1, 0)
    with pytest.raises(DomainTooLarge, match="1002001"):
        make_domain(2, 1.0, 500, 1000, max_sites=1000)


def test_offsets_are_lexicographic_with_height_slowest():
    dom = make_domain(3, 1.0, 1, 2)
    offs = [dom.offset((i1, i2, i3)) for i3 in range(3) for i1 in (-1, 0, 1) for i2 in (-1, 0, 1)]
    assert offs == list(range(dom.size))
    with pytest.raises(SiteError):
        dom.offset((2, 0, 0))


def test_coordinates_are_eps_times_index():
    dom = make_domain(2, 0.25, 4, 3)
    x = dom.coords()
    f = LatticeField(dom, x[0] + 10 * x[1])
    assert f[(-4, 3)] == pytest.approx(-1.0 + 7.5)
    assert f[(2, 0)] == pytest.approx(0.5)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("eps", [1.0, 0.5, 0.25])
def test_laplacian_of_square_norm_is_2n(n, eps):
    dom = make_domain(n, eps, 3, 4)
    f = LatticeField.sample(dom, lambda x: np.sum(x**2, axis=0))
    assert np.max(np.abs(laplacian_field(f.values, eps) - 2 * n)) <= 1e-12
    assert np.max(np.abs(boundary_operator_field(LatticeField.sample(dom, lambda x: x[-1]).values, eps) - 1)) <= 1e-12


def test_boundary_operator_examples():
    dom = make_domain(2, 0.5, 2, 2)
    f = LatticeField.sample(dom, lambda x: x[0] ** 2)
    assert discrete_boundary_operator(f, (0, 0)) == pytest.approx(1.0, abs=1e-14)
    g = LatticeField.sample(dom, lambda x: x[0])
    assert discrete_boundary_operator(g, (1, 0)) == pytest.approx(0.0, abs=1e-14)
    h = LatticeField.sample(dom, lambda x: x[-1])
    assert discrete_boundary_operator(h, (-1, 0)) == pytest.approx(1.0, abs=1e-14)


def test_per_site_operators_check_their_contract():
    dom = make_domain(2, 0.5, 2, 3)
    f = LatticeField(dom, np.zeros(dom.shape))
    with pytest.raises(SiteError):
        discrete_laplacian(f, (0, 0))          # boundary plane
    with pytest.raises(SiteError):
        discrete_laplacian(f, (2, 1))          # lateral face
    with pytest.raises(SiteError):
        discrete_laplacian(f, (0, 3))          # top face
    with pytest.raises(SiteError):
        discrete_boundary_operator(f, (0, 1))  # not on the boundary plane
    with pytest.raises(SiteError):
        discrete_boundary_operator(f, (-2, 0))  # missing lateral neighbour


def test_vectorized_and_per_site_stencils_agree():
    rng = np.random.default_rng(3)
    dom = make_domain(3, 0.5, 2, 3)
    f = LatticeField(dom, rng.normal(size=dom.shape))
    lap = laplacian_field(f.values, dom.eps)
    D = boundary_operator_field(f.values, dom.eps)
    assert lap[0, 0, 0] == pytest.approx(discrete_laplacian(f, (-1, -1, 1)), rel=1e-14)
    assert lap[1, 2, 0] == pytest.approx(discrete_laplacian(f, (1, -1, 2)), rel=1e-14)
    assert D[2, 1] == pytest.approx(discrete_boundary_operator(f, (1, 0, 0)), rel=1e-14)


quad_coeffs = st.lists(st.floats(-3, 3), min_size=10, max_size=10)


@settings(max_examples=40, deadline=None)
@given(quad_coeffs, st.sampled_from([1.0, 0.5, 0.25, 0.125]))
def test_laplacian_exact_on_quadratics(c, eps):
    dom = make_domain(3, eps, 3, 4)
    x = dom.coords()
    q = (c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[2] + c[4] * x[0] ** 2 + c[5] * x[1] ** 2
         + c[6] * x[2] ** 2 + c[7] * x[0] * x[1] + c[8] * x[1] * x[2] + c[9] * x[0] * x[2])
    exact = 2 * (c[4] + c[5] + c[6])
    assert np.max(np.abs(laplacian_field(q, eps) - exact)) <= 1e-12 * max(1.0, np.abs(q).max())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5))
def test_operators_are_linear(seed, alpha):
    rng = np.random.default_rng(seed)
    dom = make_domain(2, 0.5, 3, 3)
    f, g = rng.normal(size=(2,) + dom.shape)
    lhs = laplacian_field(alpha * f + g, dom.eps)
    rhs = alpha * laplacian_field(f, dom.eps) + laplacian_field(g, dom.eps)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())
    lhs = boundary_operator_field(alpha * f + g, dom.eps)
    rhs = alpha * boundary_operator_field(f, dom.eps) + boundary_operator_field(g, dom.eps)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_laplacian_symmetric_under_lateral_permutation_and_reflection(seed):
    rng = np.random.default_rng(seed)
    dom = make_domain(3, 0.5, 3, 3)
    u = rng.normal(size=dom.shape)
    lap = laplacian_field(u, dom.eps)
    # summation order changes with the axis order, so agreement is to rounding
    assert np.allclose(laplacian_field(np.swapaxes(u, 1, 2), dom.eps), np.swapaxes(lap, 1, 2),
                       rtol=1e-14, atol=1e-12)
    assert np.allclose(laplacian_field(u[:, ::-1, :], dom.eps), lap[:, ::-1, :], rtol=1e-14, atol=1e-12)


def test_restrict_identity_and_injection():
    fine = domain_for_extents(2, 0.25, 2.0, 2.0)
    coarse = domain_for_extents(2, 0.5, 2.0, 2.0)
    f = LatticeField.sample(fine, lambda x: x[-1])
    assert np.array_equal(restrict(f, fine).values, f.values)
    r = restrict(f, coarse)
    assert np.array_equal(r.values, LatticeField.sample(coarse, lambda x: x[-1]).values)


def test_restrict_index_arithmetic():
    rng = np.random.default_rng(0)
    fine = make_domain(2, 0.25, 0, 2)
    coarse = make_domain(2, 0.5, 0, 1)
    f = LatticeField(fine, rng.normal(size=fine.shape))
    r = restrict(f, coarse)
    assert r[(0, 0)] == f[(0, 0)]
    assert r[(0, 1)] == f[(0, 2)]


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.floats(-2, 2), st.floats(-2, 2))
def test_restrict_of_sampled_function_is_bit_exact(k, a, b):
    coarse = domain_for_extents(2, 0.5, 2.0, 1.5)
    fine = domain_for_extents(2, 0.5 / 2**k, 2.0, 1.5)
    fn = lambda x: np.sin(a * x[0]) + b * x[1] ** 3
    assert np.array_equal(restrict(LatticeField.sample(fine, fn), coarse).values,
                          LatticeField.sample(coarse, fn).values)


def test_restrict_rejects_non_nested():
    with pytest.raises(ValueError):
        refinement_ratio(make_domain(2, 0.3, 4, 4), make_domain(2, 0.5, 2, 2))
    with pytest.raises(ValueError):
        refinement_ratio(make_domain(2, 0.25, 2, 2), make_domain(2, 0.5, 2, 2))


def test_sup_error_examples():
    dom = domain_for_extents(2, 0.25, 2.0, 2.0)
    w = Window(1.0, 1.0)
    a = LatticeField.sample(dom, lambda x: x[-1])
    zero = LatticeField(dom, np.zeros(dom.shape))
    assert sup_error(a, a, w) == 0.0
    assert sup_error(a, zero, w) == 1.0
    assert sup_error(LatticeField(dom, zero.values + 0.3), zero, w) == pytest.approx(0.3)


def test_sup_error_empty_window():
    dom = make_domain(2, 1.0, 2, 2)
    z = LatticeField(dom, np.zeros(dom.shape))
    with pytest.raises(EmptyWindow):
        sup_error(z, z, Window(-1.0, 1.0))


def test_window_must_stay_inside_truncation():
    dom = domain_for_extents(2, 0.25, 2.0, 2.0)
    Window(1.9, 1.9).check(dom)
    with pytest.raises(ValueError, match="truncation"):
        Window(2.0, 1.0).check(dom)
    with pytest.raises(ValueError, match="truncation"):
        Window(1.0, 2.0).check(dom)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.25, 1.75), st.floats(0.25, 1.75))
def test_shrinking_window_never_increases_error(seed, r, h):
    rng = np.random.default_rng(seed)
    dom = domain_for_extents(2, 0.25, 2.0, 2.0)
    a = LatticeField(dom, rng.normal(size=dom.shape))
    b = LatticeField(dom, rng.normal(size=dom.shape))
    assert sup_error(a, b, Window(r * 0.5, h * 0.5)) <= sup_error(a, b, Window(r, h))


def test_fields_validate_shape_and_finiteness():
    dom = make_domain(2, 1.0, 1, 1)
    with pytest.raises(ValueError):
        LatticeField(dom, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        BoundaryField(dom, np.array([0.0, np.nan, 0.0]))
