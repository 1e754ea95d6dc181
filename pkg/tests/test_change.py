import math

import numpy as np
import pytest

from conftest import b_field, base_family, change_family, sigma_field
from finslerlab import change as chg
from finslerlab import finsler, jets
from finslerlab.errors import DegenerateChangeError, DomainError, MisuseError
from finslerlab.finsler import curvature, fundamental
from finslerlab.sampling import COND_MAX, sample_points
from finslerlab.tensor import pairs3, rel_err

E2 = finsler.euclidean(2)
B01 = chg.constant_oneform(0.1, 0.0)


def bundles(c, base, x, y):
    fb = fundamental(base, x, y, order=4)
    sb = chg.scalars(c, base, x, y, fb)
    tm = chg.transformed_metric(c, base)
    fbar = fundamental(tm, x, y, order=4)
    return fb, sb, fbar, tm


def points(c, base, count=8, seed=0):
    pts, _ = sample_points(lambda x, y: chg.admissible(c, base, x, y, COND_MAX), base.dim, count, seed)
    return pts


# -- scalars ------------------------------------------------------------------


def test_randers_scalars_by_hand():
    sb = chg.scalars(chg.randers(B01), E2, [0, 0], [3, 4])
    expected = dict(beta_val=0.3, f=5.3, p=1.06, q=5.3, q0=0.0, p0=1.0, p_m1=0.2, m2=0.0064,
                    q_m2=-0.0424, p_m2=-0.0024, eps=1.191016)
    for name, v in expected.items():
        assert getattr(sb, name) == pytest.approx(v, rel=1e-12, abs=1e-15), name


def test_energy_scalars_vanish():
    c = chg.energy(1, 1, b_field)
    base = finsler.riemannian_diag(3)
    for x, y in points(c, base):
        sb = chg.scalars(c, base, x, y)
        assert abs(sb.p_m1) * sb.L < 1e-12
        assert abs(sb.p02) * sb.L < 1e-12


def test_scalar_degrees():
    c = chg.ChangeSpec(lambda Lt, b: jets.sqrt(Lt * Lt + b * b) + 0.1 * b, b_field, sigma_field)
    base = finsler.quartic_minkowski(3)
    for x, y in points(c, base, 4):
        worst, name = chg.degree_residual(c, base, x, y)
        assert worst <= 1e-9, name


def test_degenerate_and_domain_errors():
    with pytest.raises(DegenerateChangeError):
        chg.scalars(chg.randers(B01), E2, [0, 0], [1.0, 0.0])  # y parallel to b: m = 0
    with pytest.raises(DomainError):
        chg.scalars(chg.kropina(B01), E2, [0, 0], [-1.0, 0.5])
    assert not chg.admissible(chg.kropina(B01), E2, [0, 0], [-1.0, 0.5])


# -- transformed metric ------------------------------------------------------------


def test_trivial_changes():
    base = finsler.quartic_minkowski(3)
    ident = chg.transformed_metric(chg.identity(3), base)
    conf = chg.transformed_metric(chg.conformal(lambda x: 0.3, 3), base)
    for x, y in points(chg.identity(3), base, 5):
        assert ident(x, y) == base(x, y)
        assert conf(x, y) == pytest.approx(math.exp(0.3) * base(x, y), rel=1e-14)


def test_kropina_value():
    assert chg.transformed_metric(chg.kropina(chg.constant_oneform(1, 0)), E2)([0, 0], [3, 4]) == pytest.approx(25 / 3)


def test_conformal_metric_tensor():
    c = chg.conformal(lambda x: 0.2 * x[0] - 0.1 * x[1], 3)
    base = finsler.quartic_minkowski(3)
    x, y = np.array([0.4, -0.2, 0.1]), np.array([1.0, 0.3, -0.6])
    fb, sb, fbar, _ = bundles(c, base, x, y)
    assert np.allclose(fbar.g, math.exp(2 * sb.sigma) * fb.g, rtol=1e-13)


def test_randers_metric_closed_form():
    fb, sb, fbar, _ = bundles(chg.randers(B01), E2, [0, 0], [3, 4])
    mc = chg.closed_form_metric(sb, fb)
    assert rel_err(mc.g_bar, fbar.g) <= 1e-9
    assert np.abs(mc.g_bar_inv @ mc.g_bar - np.eye(2)).max() <= 1e-10
    cf = chg.closed_form_cartan(sb, fb)
    assert rel_err(cf.C_bar, fbar.C) <= 1e-9


@pytest.mark.parametrize("base", base_family(), ids=lambda m: m.label)
def test_energy_cartan_scales(base):
    c = chg.energy(3, 2, b_field, sigma_field)
    for x, y in points(c, base, 5):
        fb, sb, fbar, _ = bundles(c, base, x, y)
        cf = chg.closed_form_cartan(sb, fb)
        assert np.abs(cf.V).max() <= 1e-10
        assert rel_err(fbar.C, sb.es * sb.p * fb.C) <= 1e-10


@pytest.mark.parametrize("c", change_family(), ids=lambda c: c.label)
@pytest.mark.parametrize("base", base_family(), ids=lambda m: m.label)
def test_pair_residuals(c, base):
    for x, y in points(c, base, 4, seed=3):
        res = chg.pair_residuals(c, base, x, y)
        for block, tol in chg.BLOCKS.items():
            assert max(res[block].values()) <= tol, block


# -- S family ---------------------------------------------------------------------


def test_h_and_omega_indicatory_with_trace():
    c = chg.ChangeSpec(lambda Lt, b: jets.sqrt(Lt * Lt + b * b) + 0.1 * b, b_field, sigma_field)
    base = finsler.quartic_minkowski(3)
    for x, y in points(c, base, 4):
        fb, sb, _, _ = bundles(c, base, x, y)
        cb = curvature(base, x, y, fb)
        cf = chg.closed_form_cartan(sb, fb)
        sc = chg.closed_form_s(sb, fb, cb.S4, cb.S_ric, cb.S_scal, cf)
        scale = 1 + np.abs(sc.H).max()
        assert np.abs(sc.H @ y).max() <= 1e-9 * scale
        assert np.abs(sc.omega @ y).max() <= 1e-9 * (1 + np.abs(sc.omega).max())
        tr = float(np.einsum("ij,ij->", fb.g_inv, sc.H))
        want = sb.K1 * sb.m2 + sb.K2 * cf.C_beta + (sb.n - 1) * sb.K3
        assert abs(tr - want) <= 1e-9 * (1 + abs(want))


def test_v_curvature_sign_on_quartic():
    c = chg.randers(b_field)
    base = finsler.quartic_minkowski(3)
    x, y = np.zeros(3), np.ones(3)
    fb, sb, fbar, tm = bundles(c, base, x, y)
    cb, ct = curvature(base, x, y, fb), curvature(tm, x, y, fbar)
    sc = chg.closed_form_s(sb, fb, cb.S4, cb.S_ric, cb.S_scal)
    assert rel_err(sc.S_bar4, ct.S4) <= 1e-7
    # the opposite sign convention flips S-bar and cannot match
    assert rel_err(-sc.S_bar4, ct.S4) > 1e-3


# -- pinned corrections ----------------------------------------------------------


def phi_uncorrected(sb, fb, cf):
    es, p, s0, lam, m2 = sb.es, sb.p, sb.s0, sb.lam, sb.m2
    Cb, Cbbb, bh, Crbb = cf.C_beta, cf.C_bbb, sb.b_hi, cf.C_ibb
    Chbb = fb.g_inv @ Crbb
    return (lam**2 * m2 * (1 / (es * p) - s0 * m2) + Cb * (2 * lam / (es * p) - s0 * (1 + 2 * lam * m2))
            + s0 * Cbbb * (1 - 3 * lam + es * s0 * p * Cb)
            + s0 * (es**2 * s0**2 * p**2 * Cbbb * (Crbb @ bh) - lam * s0 * m2 * (Crbb @ bh)
                    - es * s0 * p * (Crbb @ Chbb) - 2 * (Crbb @ fb.C_hi)))


@pytest.fixture
def quartic4_point():
    base = finsler.quartic_minkowski(4)
    c = chg.ChangeSpec(lambda Lt, b: (Lt * Lt + b * b) ** 0.5 + 0.1 * b, lambda x: (0.2, 0.1, -0.15, 0.3))
    x, y = np.zeros(4), np.array([1.0, 0.7, -0.5, 0.9])
    return c, base, x, y


def test_phi_correction(quartic4_point):
    c, base, x, y = quartic4_point
    fb, sb, fbar, _ = bundles(c, base, x, y)
    cf = chg.closed_form_cartan(sb, fb)
    direct = fbar.C2 - fb.C2 / (sb.es * sb.p)
    assert cf.Phi == pytest.approx(direct, rel=1e-10)
    assert cf.Phi == pytest.approx(-0.2193040296528, rel=1e-9)
    assert abs(phi_uncorrected(sb, fb, cf) - direct) > 0.1


def test_ricci_extra_omega_term(quartic4_point):
    # n = 4 is where the two H coefficients coincide, isolating the C_beta omega term
    c, base, x, y = quartic4_point
    fb, sb, fbar, tm = bundles(c, base, x, y)
    cb, ct = curvature(base, x, y, fb), curvature(tm, x, y, fbar)
    cf = chg.closed_form_cartan(sb, fb)
    sc = chg.closed_form_s(sb, fb, cb.S4, cb.S_ric, cb.S_scal, cf)
    assert rel_err(sc.S_bar_ric, ct.S_ric) <= 1e-12
    without = sc.S_bar_ric + cf.C_beta * sc.omega / (sb.es * sb.p)
    assert rel_err(without, ct.S_ric) > 1e-2


@pytest.mark.parametrize("n, floor", [(3, math.inf), (5, 4e-4)])
def test_ricci_h_coefficient(n, floor):
    base = finsler.riemannian_diag(n)
    b = (0.2, 0.1, -0.15, 0.3, 0.05)[:n]
    c = chg.ChangeSpec(lambda Lt, be: (Lt * Lt + be * be) ** 0.5 + 0.1 * be, lambda x: b)
    x, y = np.linspace(0.1, 0.5, n), np.linspace(1, -0.6, n) + 0.05
    fb, sb, fbar, tm = bundles(c, base, x, y)
    cb, ct = curvature(base, x, y, fb), curvature(tm, x, y, fbar)
    sc = chg.closed_form_s(sb, fb, cb.S4, cb.S_ric, cb.S_scal)
    assert rel_err(sc.S_bar_ric, ct.S_ric) <= 1e-12
    good = sb.s0 * sb.m2 - (n - 3) / (sb.es * sb.p)
    if n == 3:
        return  # the alternative coefficient 1/((n-3) e^sigma p) is undefined here
    bad = sb.s0 * sb.m2 - 1 / ((n - 3) * sb.es * sb.p)
    assert rel_err(sc.S_bar_ric + (bad - good) * sc.H, ct.S_ric) > floor


# -- T family -----------------------------------------------------------------------


def special(kind, c, base, x, y):
    fb, sb, fbar, tm = bundles(c, base, x, y)
    ct = curvature(tm, x, y, fbar)
    cb = curvature(base, x, y, fb)
    return chg.special_t(kind, sb, fb, cb.T4, fbar.L), ct.T4


X3 = np.array([0.3, -0.2, 0.5])


def test_conformal_t():
    T, ref = special("conformal", chg.conformal(lambda x: 0.1 * x[0] + 0.2 * x[2], 3),
                     finsler.quartic_minkowski(3), X3, np.array([1, 0.5, -0.7]))
    assert rel_err(T, ref) <= 1e-9


def test_randers_t_theta1():
    T, ref = special("randers", chg.randers(lambda x: (0.1 + 0.1 * x[1], 0.2, 0.0)),
                     finsler.riemannian_diag(3), X3, np.ones(3))
    assert rel_err(T, ref) <= 1e-8


def test_kropina_t():
    T, ref = special("kropina", chg.kropina(chg.constant_oneform(1, 0, 0)), finsler.euclidean(3), X3, np.ones(3))
    assert rel_err(T, ref) <= 1e-7


def test_beta_conformal_t():
    c = chg.beta_conformal(lambda x: (0.1 + 0.1 * x[1], 0.2, 0.0), sigma_field)
    T, ref = special("beta-conformal", c, finsler.quartic_minkowski(3), X3, np.array([1, 0.5, -0.7]))
    assert rel_err(T, ref) <= 1e-8


def test_beta_conformal_reduces_to_randers():
    b = lambda x: (0.1 + 0.1 * x[1], 0.2, 0.0)  # noqa: E731
    c = chg.beta_conformal(b, lambda x: 0.0)
    base = finsler.riemannian_diag(3)
    fb, sb, _, _ = bundles(c, base, X3, np.ones(3))
    T4 = np.zeros((3,) * 4)
    a = chg.special_t("beta-conformal", sb, fb, T4)
    r = -sb.Theta1 / (4 * sb.L**3) * pairs3(fb.h)
    assert np.abs(a - r).max() <= 1e-12 * (1 + np.abs(r).max())


def test_ttensor_trace_condition():
    c = chg.beta_conformal(lambda x: (0.1 + 0.1 * x[1], 0.2, 0.0), sigma_field)
    base = finsler.quartic_minkowski(3)
    fb, sb, _, _ = bundles(c, base, X3, np.array([1, 0.5, -0.7]))
    cb = curvature(base, X3, np.array([1, 0.5, -0.7]), fb)
    assert chg.ttensor_trace_residual(sb, fb, cb.T4) <= 1e-8


def test_special_t_misuse():
    fb, sb, _, _ = bundles(chg.randers(b_field), finsler.quartic_minkowski(3), X3, np.array([1, 0.5, -0.7]))
    with pytest.raises(MisuseError):
        chg.special_t("randers", sb, fb)
    with pytest.raises(MisuseError):
        chg.special_t("conformal", sb, fb, np.zeros((3,) * 4))
    with pytest.raises(MisuseError):
        chg.special_t("beta-conformal", sb, fb)
    with pytest.raises(MisuseError):
        chg.special_t("finsler", sb, fb)


# -- identity suite ---------------------------------------------------------------


def test_identity_suite_randers():
    rep = chg.identity_suite(chg.randers(B01), E2, 20, 0)
    assert rep.passed and rep.samples == 20
    assert max(rep.worst.values()) < 1e-10


def test_identity_suite_kropina_filters():
    rep = chg.identity_suite(chg.kropina(chg.constant_oneform(1.0, 0.3)), E2, 20, 0)
    assert rep.passed and rep.filtered > 0


def test_identity_suite_rejects_inhomogeneous_f():
    bad = chg.ChangeSpec(lambda Lt, be: Lt + be * be / Lt + 1, B01)
    rep = chg.identity_suite(bad, E2, 5, 0)
    assert not rep.passed
    assert any("f_homogeneity" in f for f in rep.failures)
