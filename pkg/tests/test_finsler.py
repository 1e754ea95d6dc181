import itertools

import numpy as np
import pytest

from finslerlab import finsler
from finslerlab.errors import DegenerateMetricError, DomainError
from finslerlab.finsler import (
    MetricSpec,
    curvature,
    douglas,
    fundamental,
    h_cov_deriv_oneform,
    spray_connection,
    t_tensor,
    v_curvature,
)
from finslerlab.jets import fd_oracle

QUARTIC2 = finsler.quartic_minkowski(2)


def fd_tensor(m, x, y, rank, scale):
    """scale * d^rank (L^2) / dy^... by finite differences, all index tuples."""
    n = m.dim
    L2 = lambda xx, yy: m(xx, yy) ** 2  # noqa: E731
    out = np.empty((n,) * rank)
    for idx in itertools.product(range(n), repeat=rank):
        beta = tuple(idx.count(i) for i in range(n))
        out[idx] = scale * fd_oracle(L2, x, y, (0,) * n, beta)
    return out


def test_euclidean_example():
    fb = fundamental(finsler.euclidean(2), [0, 0], [3, 4])
    assert np.allclose(fb.g, np.eye(2))
    assert np.allclose(fb.C, 0.0)
    assert np.allclose(fb.h, [[0.64, -0.48], [-0.48, 0.36]])


@pytest.mark.parametrize("m", [finsler.riemannian_diag(3), finsler.quartic_minkowski(3)])
def test_euler_homogeneity(m):
    x, y = np.array([0.2, -0.4, 0.1]), np.array([0.9, -0.3, 0.5])
    fb = fundamental(m, x, y)
    assert np.allclose(fb.g @ y, fb.L * fb.l_lo, rtol=1e-12)
    assert np.abs(np.einsum("ijk,k->ij", fb.C, y)).max() < 1e-12
    assert np.abs(fb.h @ y).max() < 1e-12
    assert np.abs(fb.g_inv @ fb.g - np.eye(3)).max() < 1e-12


def test_quartic_g_and_c_against_fd():
    x, y = np.zeros(2), np.array([1.0, 1.0])
    fb = fundamental(QUARTIC2, x, y)
    assert np.abs(fb.g - fd_tensor(QUARTIC2, x, y, 2, 0.5)).max() < 1e-6
    assert np.abs(fb.C - fd_tensor(QUARTIC2, x, y, 3, 0.25)).max() < 1e-6


def test_degenerate_metric():
    flat = MetricSpec(2, lambda x, y: abs_y1(y), label="degenerate")
    with pytest.raises(DegenerateMetricError):
        fundamental(flat, [0, 0], [1.0, 0.5])


def abs_y1(y):
    return (y[0] * y[0]) ** 0.5


def test_domain_errors():
    with pytest.raises(DomainError):
        fundamental(finsler.euclidean(2), [0, 0], [0, 0])
    with pytest.raises(DomainError):
        fundamental(finsler.euclidean(2), [0, 0], [1, 2, 3])


# -- spray and connection ------------------------------------------------------


def test_minkowski_connection_vanishes():
    con = spray_connection(finsler.quartic_minkowski(3), [0.3, 0.1, -0.2], [1.0, 0.4, -0.7])
    assert np.abs(con.G).max() == 0.0
    assert np.abs(con.N).max() == 0.0
    assert np.abs(con.Gamma).max() < 1e-15


def test_riemannian_gamma_is_levi_civita():
    m = finsler.riemannian_diag(2)
    x, y = np.array([0.3, -0.2]), np.array([0.7, 1.1])
    con = spray_connection(m, x, y)
    g = np.diag([1.0, 1.0 + x[0] ** 2])
    dg = np.zeros((2, 2, 2))  # dg[j, a, b] = d_j g_ab
    dg[0, 1, 1] = 2 * x[0]
    gi = np.linalg.inv(g)
    chris = 0.5 * np.einsum("ir,jkr->ijk", gi, dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0))
    assert np.abs(con.Gamma - chris).max() < 1e-9


@pytest.mark.parametrize("m", [finsler.riemannian_diag(3), finsler.from_expression(
    "sqrt((1 + x1^2)*y1^2 + y2^2 + y3^2) + 0.2*(y1^4 + y2^4 + y3^4)^0.25", 3, "mixed")])
def test_gamma_contracts_to_spray(m):
    x, y = np.array([0.3, -0.2, 0.4]), np.array([0.7, 1.1, -0.5])
    con = spray_connection(m, x, y)
    lhs = np.einsum("ijk,j,k->i", con.Gamma, y, y)
    assert np.linalg.norm(lhs - 2 * con.G) <= 1e-9 * (1 + np.linalg.norm(con.G))
    c2 = spray_connection(m, x, 2 * y)
    assert np.allclose(c2.G, 4 * con.G, rtol=1e-12, atol=1e-14)


# -- curvature ------------------------------------------------------------------


def test_riemannian_curvatures_vanish():
    m = finsler.riemannian_diag(4)
    x, y = np.full(4, 0.2), np.array([1.0, -0.3, 0.5, 0.8])
    cb = curvature(m, x, y)
    assert np.abs(cb.S4).max() < 1e-13
    assert np.abs(cb.T4).max() < 1e-12
    assert np.abs(douglas(m, x, y)).max() < 1e-8


def test_minkowski_douglas_vanishes():
    assert np.abs(douglas(finsler.quartic_minkowski(3), np.zeros(3), [1.0, 0.5, -0.3])).max() < 1e-10


def test_s4_antisymmetry():
    fb = fundamental(finsler.quartic_minkowski(3), [0, 0, 0], [1, 1, 1])
    S4, _, _ = v_curvature(fb)
    assert np.abs(S4 + S4.transpose(0, 1, 3, 2)).max() == 0.0


def test_cartan_derivative_euler():
    m = finsler.quartic_minkowski(3)
    y = np.array([1.0, 1.0, 1.3])
    cb = curvature(m, np.zeros(3), y)
    fb = fundamental(m, np.zeros(3), y)
    assert np.abs(np.einsum("hijk,k->hij", cb.Cder, y) + fb.C).max() < 1e-9


def test_cartan_derivative_against_fd():
    x, y = np.zeros(2), np.array([1.0, 0.6])
    fb = fundamental(QUARTIC2, x, y, order=4)
    C = fd_tensor(QUARTIC2, x, y, 3, 0.25)
    dC = fd_tensor(QUARTIC2, x, y, 4, 0.25)
    gi = np.linalg.inv(fd_tensor(QUARTIC2, x, y, 2, 0.5))
    Cm = np.einsum("ir,rjk->ijk", gi, C)
    ref = (dC - np.einsum("mhk,mij->hijk", Cm, C) - np.einsum("mik,hmj->hijk", Cm, C)
           - np.einsum("mjk,hmi->hijk", Cm, C))
    cb = curvature(QUARTIC2, x, y, fb)
    assert np.abs(cb.Cder - ref).max() < 1e-6 * max(1.0, np.abs(ref).max())

    L = QUARTIC2(x, y)
    l = fd_tensor(QUARTIC2, x, y, 1, 1.0) / (2 * L)
    T_ref = (L * ref + np.einsum("hij,k->hijk", C, l) + np.einsum("hik,j->hijk", C, l)
             + np.einsum("hjk,i->hijk", C, l) + np.einsum("ijk,h->hijk", C, l))
    assert np.abs(cb.T4 - T_ref).max() < 1e-6 * max(1.0, np.abs(T_ref).max())


def test_t_tensor_is_indicatory():
    y = np.array([1.0, 1.0, 1.3])
    T4, _, _ = t_tensor(finsler.quartic_minkowski(3), np.zeros(3), y)
    for axis in range(4):
        assert np.abs(np.tensordot(T4, y, axes=([axis], [0]))).max() < 1e-9
    assert np.abs(T4 - T4.transpose(1, 0, 2, 3)).max() < 1e-12
    assert np.abs(T4 - T4.transpose(0, 1, 3, 2)).max() < 1e-12


# -- covariant derivative of a one-form ------------------------------------------


def test_constant_oneform_on_minkowski():
    b_cov, _, _ = h_cov_deriv_oneform(finsler.quartic_minkowski(2), lambda x: (0.3, -0.1), [0.2, 0.1], [1, 0.5])
    assert np.abs(b_cov).max() == 0.0


def test_gradient_oneform_is_closed():
    grad = lambda x: (0.2 * x[0] + 0.1 * x[1], 0.1 * x[0] + 0.2)  # noqa: E731
    _, _, F = h_cov_deriv_oneform(finsler.riemannian_diag(2), grad, [0.4, -0.3], [0.6, 1.2])
    assert np.abs(F).max() < 1e-9


def test_rotation_oneform_curl():
    # b_{i|j} = d_j b_i and F_ij = (b_{i|j} - b_{j|i}) / 2, so F_12 = (1 - (-1)) / 2
    _, _, F = h_cov_deriv_oneform(finsler.euclidean(2), lambda x: (x[1], -x[0]), [0.1, 0.2], [1, 0.5])
    assert F[0, 1] == pytest.approx(1.0, abs=1e-10)
    assert F[1, 0] == pytest.approx(-1.0, abs=1e-10)
