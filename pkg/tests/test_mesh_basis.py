import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdg_kdv.mesh import Mesh, build_uniform_mesh
from hdg_kdv.polybasis import (
    build_reference_basis,
    default_quadrature_count,
    eval_field_on_element,
    gauss_quadrature,
)


# -- mesh -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "a, b, N, i, expected",
    [
        (0.0, 1.0, 2, 1, (0.0, 0.5, 0.5)),
        (0.0, 1.0, 2, 2, (0.5, 1.0, 0.5)),
    ],
)
def test_element_of_small(a, b, N, i, expected):
    assert build_uniform_mesh(a, b, N).element_of(i) == pytest.approx(expected)


def test_element_of_last_soliton_element():
    xl, xr, h = build_uniform_mesh(-10.0, 0.0, 100).element_of(100)
    assert xl == pytest.approx(-0.1)
    assert xr == 0.0
    assert h == pytest.approx(0.1)


@pytest.mark.parametrize("i", [0, 3])
def test_element_of_out_of_range(i):
    with pytest.raises(IndexError):
        build_uniform_mesh(0.0, 1.0, 2).element_of(i)


@pytest.mark.parametrize("a, b, N", [(1.0, 0.0, 4), (0.0, 0.0, 4), (0.0, 1.0, 0)])
def test_uniform_mesh_rejects_bad_input(a, b, N):
    with pytest.raises(ValueError):
        build_uniform_mesh(a, b, N)


def test_nonuniform_nodes_must_increase():
    with pytest.raises(ValueError):
        Mesh(np.array([0.0, 0.5, 0.5, 1.0]))
    mesh = Mesh(np.array([0.0, 0.1, 0.5, 1.0]))
    assert mesh.N == 3
    assert mesh.sizes == pytest.approx([0.1, 0.4, 0.5])


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-100, 100),
    st.floats(1e-3, 100),
    st.integers(1, 500),
)
def test_sizes_sum_and_shared_nodes(a, length, N):
    mesh = build_uniform_mesh(a, a + length, N)
    assert abs(mesh.sizes.sum() - length) <= 8 * np.finfo(float).eps * N * max(1.0, abs(a) + length)
    for i in range(1, min(N, 20)):
        assert mesh.element_of(i)[1] == mesh.element_of(i + 1)[0]


# -- quadrature and basis ----------------------------------------------------------


def test_gauss_one_and_two_points():
    x, w = gauss_quadrature(1)
    assert x == pytest.approx([0.0]) and w == pytest.approx([2.0])
    x, w = gauss_quadrature(2)
    assert np.sort(x) == pytest.approx([-1 / np.sqrt(3), 1 / np.sqrt(3)])
    assert w == pytest.approx([1.0, 1.0])


def test_gauss_rejects_zero():
    with pytest.raises(ValueError):
        gauss_quadrature(0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20))
def test_gauss_exactness(n):
    x, w = gauss_quadrature(n)
    assert w.sum() == pytest.approx(2.0, abs=1e-13)
    for j in range(2 * n):
        exact = 2.0 / (j + 1) if j % 2 == 0 else 0.0
        assert np.dot(w, x**j) == pytest.approx(exact, abs=1e-12)


def test_basis_k0_and_k1_and_k2():
    b0 = build_reference_basis(0)
    assert np.all(b0.V == 1.0) and np.all(b0.Vx == 0.0)
    b1 = build_reference_basis(1)
    assert b1.right_vals == pytest.approx([1, 1])
    assert b1.left_vals == pytest.approx([1, -1])
    b2 = build_reference_basis(2)
    assert b2.evaluate([0, 0, 1], np.array([0.0]))[0] == pytest.approx(-0.5)


def test_basis_rejects_underintegration():
    with pytest.raises(ValueError):
        build_reference_basis(3, n_q=3)


@pytest.mark.parametrize("k", range(0, 7))
def test_discrete_mass_is_diagonal(k):
    b = build_reference_basis(k, n_q=k + 1)
    M = (b.V * b.quad_weights[:, None]).T @ b.V
    assert np.abs(M - np.diag(2.0 / (2 * np.arange(k + 1) + 1))).max() <= 1e-13
    assert b.mass == pytest.approx(np.diag(M))


@pytest.mark.parametrize("k", range(0, 6))
def test_stiffness_matches_analytic_integrals(k):
    b = build_reference_basis(k)
    P = [np.polynomial.Legendre.basis(j) for j in range(k + 1)]
    for i in range(k + 1):
        for j in range(k + 1):
            integ = (P[j] * P[i].deriv()).integ()
            assert b.stiffness[i, j] == pytest.approx(integ(1) - integ(-1), abs=1e-13)


def test_affine_map_integration():
    b = build_reference_basis(3)
    mesh = build_uniform_mesh(0.3, 2.0, 5)
    x = mesh.map_to_physical(b.quad_points)
    f = lambda t: 4 * t**3 - t + 2
    num = (0.5 * mesh.sizes[:, None] * b.quad_weights * f(x)).sum(axis=1)
    F = lambda t: t**4 - t**2 / 2 + 2 * t
    assert num == pytest.approx(F(mesh.right) - F(mesh.left), abs=1e-12 * mesh.h)


def test_eval_field_on_element():
    assert eval_field_on_element([3, 0, 0, 0], 0.37) == 3
    assert eval_field_on_element([0, 1], 0.5) == 0.5
    assert eval_field_on_element([1, 1, 1], 1.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        eval_field_on_element([1, 1], 1.5)


def test_default_quadrature_count():
    assert default_quadrature_count(0) == 2
    assert default_quadrature_count(3, m=2) == 7
    # exact for F(u_h) w_x with F = u^m: degree m k + k - 1
    for k in range(5):
        for m in range(1, 5):
            n = default_quadrature_count(k, m)
            assert 2 * n - 1 >= m * k + k - 1
