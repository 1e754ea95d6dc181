"""The generalized beta-conformal change  L -> f(e^sigma L, beta).

Two independent routes are provided for every transformed quantity:

* :func:`transformed_metric` builds the new fundamental function as a
  :class:`~finslerlab.finsler.MetricSpec`, so all of :mod:`finslerlab.finsler`
  applies to it directly;
* the ``closed_form_*`` functions evaluate the transformation laws in terms
  of base-space tensors and the scalars of :class:`ScalarBundle`.

Where a law as commonly written is internally inconsistent, the implemented
variant is the one that agrees with the direct route; each such spot is
marked in a comment and frozen by a regression test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jets
from .errors import DegenerateChangeError, DomainError, FinslerLabError, MisuseError
from .finsler import (
    FundamentalBundle,
    MetricSpec,
    curvature,
    fundamental,
    is_riemannian,
    scalar_gradient,
)
from .jets import Jet, JetConfig, extract, lift_variable
from .tensor import alt_jk, cyclic3, outer, pairs3, pairs6, rank3_times_vec, rel_err

M2_MIN = 1e-12
EPS_MIN = 1e-12
KROPINA_BETA_MIN = 1e-6
CARTAN_SCALE_MAX = 1e6

FAMILIES = (
    "identity",
    "conformal",
    "randers",
    "beta-conformal",
    "kropina",
    "kropina-type",
    "energy",
    "generalized-randers",
    "custom",
)


def _zero(x):
    return 0.0


@dataclass(frozen=True)
class ChangeSpec:
    """A generalized beta-conformal change.

    ``f(Lt, beta)`` must be positively 1-homogeneous and accept floats or
    jets; ``sigma(x)`` and ``b(x)`` likewise take a sequence of coordinates.
    """

    f: Callable
    b: Callable
    sigma: Callable = _zero
    family: str = "custom"
    params: tuple = ()
    label: str = ""
    min_beta: Optional[float] = None

    def beta(self, x, y) -> float:
        return float(np.dot(self.b_values(x), y))

    def b_values(self, x) -> np.ndarray:
        return np.array([float(v) for v in self.b(list(np.asarray(x, float)))])

    def sigma_value(self, x) -> float:
        return float(self.sigma(list(np.asarray(x, float))))


# -- family constructors ----------------------------------------------------


def constant_oneform(*coeffs):
    coeffs = tuple(float(c) for c in coeffs)
    return lambda x: coeffs


def randers(b, sigma=_zero, label="randers"):
    fam = "randers" if sigma is _zero else "beta-conformal"
    return ChangeSpec(lambda Lt, beta: Lt + beta, b, sigma, fam, (), label)


def beta_conformal(b, sigma, label="beta-conformal"):
    return ChangeSpec(lambda Lt, beta: Lt + beta, b, sigma, "beta-conformal", (), label)


def conformal(sigma, n, label="conformal"):
    return ChangeSpec(lambda Lt, beta: Lt, constant_oneform(*([0.0] * n)), sigma, "conformal", (), label)


def identity(n, label="identity"):
    return ChangeSpec(lambda Lt, beta: Lt, constant_oneform(*([0.0] * n)), _zero, "identity", (), label)


def kropina(b, sigma=_zero, label="kropina"):
    return ChangeSpec(lambda Lt, beta: Lt * Lt / beta, b, sigma, "kropina", (), label, KROPINA_BETA_MIN)


def kropina_type(c3, b, sigma=_zero, label="kropina-type"):
    c3 = float(c3)
    return ChangeSpec(
        lambda Lt, beta: (Lt * Lt + beta * beta) / (c3 * beta),
        b, sigma, "kropina-type", (c3,), label, KROPINA_BETA_MIN,
    )


def energy(k, k_prime, b, sigma=_zero, label="energy"):
    k, kp = float(k), float(k_prime)
    return ChangeSpec(
        lambda Lt, beta: jets.sqrt(kp * Lt * Lt + k * beta * beta), b, sigma, "energy", (k, kp), label
    )


def generalized_randers(c1, c2, b, sigma=_zero, label="generalized-randers"):
    """f = c2 Lt + c1 beta."""
    c1, c2 = float(c1), float(c2)
    return ChangeSpec(lambda Lt, beta: c2 * Lt + c1 * beta, b, sigma, "generalized-randers", (c1, c2), label)


def custom(f_source: str, b, sigma=_zero, label="custom"):
    """f given as an expression in ``Lt`` and ``beta``."""
    from .expr import evaluate, parse

    tree = parse(f_source, 0, extra=("Lt", "beta"))
    return ChangeSpec(lambda Lt, beta: evaluate(tree, Lt=Lt, beta=beta), b, sigma, "custom", (f_source,), label)


# -- transformed metric -----------------------------------------------------


def transformed_metric(c: ChangeSpec, base: MetricSpec) -> MetricSpec:
    """The metric L-bar(x, y) = f(e^sigma(x) L(x, y), b_i(x) y^i) as a MetricSpec."""

    def L(x, y):
        s = c.sigma(x)
        es = jets.exp(s) if isinstance(s, Jet) else math.exp(float(s))
        b = c.b(x)
        beta = 0.0
        for bi, yi in zip(b, y):
            beta = beta + bi * yi
        return c.f(es * base.L(x, y), beta)

    def domain(x, y):
        if not base.domain(x, y):
            return False
        if c.min_beta is not None and c.beta(x, y) <= c.min_beta:
            return False
        return True

    label = f"{c.label or c.family}({base.label})"
    return MetricSpec(base.dim, L, domain, label)


# -- scalar machinery -------------------------------------------------------


@dataclass(frozen=True)
class ScalarBundle:
    n: int
    L: float
    sigma: float
    es: float
    Lt: float
    beta_val: float
    f: float
    f1: float
    f2: float
    f11: float
    f12: float
    f22: float
    q: float
    p: float
    q0: float
    p0: float
    q_m1: float
    p_m1: float
    q_m2: float
    p_m2: float
    p02: float
    p022: float
    b_lo: np.ndarray
    b_hi: np.ndarray
    b2: float
    y: np.ndarray
    y_lo: np.ndarray
    m_lo: np.ndarray
    m_hi: np.ndarray
    m2: float
    eps: float
    s0: float
    s_m1: float
    s_m2: float
    lam: float
    K1: float
    K2: float
    K3: float
    K4: float
    K5: float
    alpha1: float
    alpha2: float
    Theta: float
    Theta1: float
    sigma_grad: np.ndarray = field(default=None, repr=False)

    @property
    def lambda_(self):
        return self.lam

    @property
    def kappa(self):
        """e^sigma p + q0 m^2, the denominator shared by K1, K3, K4, K5 and lambda."""
        return self.es * self.p + self.q0 * self.m2


# Homogeneity degree in y of every scalar field (checked by identity_suite).
DEGREES = {
    "q": 1, "p": 0, "q0": 0, "p0": 0, "q_m1": -1, "p_m1": -1, "q_m2": -2, "p_m2": -2,
    "p02": -1, "p022": -2, "m2": 0, "eps": 0, "s0": 0, "s_m1": -1, "s_m2": -2, "lam": -1,
    "K1": -2, "K2": -1, "K3": -2, "K4": -1, "K5": -2, "alpha1": -1, "alpha2": -1,
    "beta_val": 1, "b2": 0, "Theta": 2, "Theta1": 2, "f": 1, "L": 1,
}


def f_derivatives(c: ChangeSpec, Lt: float, beta: float):
    """f and its partials in (Lt, beta), plus p02 and p022 as beta-derivatives of p0."""
    cfg = JetConfig(0, 2, 0, 4)
    F = c.f(lift_variable("y1", Lt, cfg), lift_variable("y2", beta, cfg))
    if not isinstance(F, Jet):
        F = jets.constant(float(F), cfg)
    F2 = F.diff("y2")
    P0 = F2 * F2 + F * F2.diff("y2")
    d = {
        (a, b): extract(F, beta=(a, b))
        for a in range(3)
        for b in range(3)
        if a + b <= 2
    }
    return d, extract(P0, beta=(0, 1)), extract(P0, beta=(0, 2))


def scalars(c: ChangeSpec, m: MetricSpec, x, y, fb: Optional[FundamentalBundle] = None) -> ScalarBundle:
    """Every change scalar of the notation block at one point (x, y)."""
    x, y = m.check_point(x, y)
    if fb is None:
        fb = fundamental(m, x, y)
    n = m.dim
    L = fb.L
    sigma, sigma_grad = scalar_gradient(c.sigma, x)
    es = math.exp(sigma)
    b_lo = c.b_values(x)
    beta = float(b_lo @ y)
    if c.min_beta is not None and beta <= c.min_beta:
        raise DomainError(f"beta = {beta:.3g} is not above {c.min_beta:g} for {c.family}")
    Lt = es * L
    d, p02, p022 = f_derivatives(c, Lt, beta)
    f, f1, f2 = d[0, 0], d[1, 0], d[0, 1]
    f11, f12, f22 = d[2, 0], d[1, 1], d[0, 2]
    if f <= 0.0:
        raise DomainError(f"f = {f:.3g} is not positive")

    q = f * f2
    p = f * f1 / L
    q0 = f * f22
    p0 = f2 * f2 + q0
    q_m1 = f * f12 / L
    p_m1 = q_m1 + p * f2 / f
    q_m2 = f * (es * f11 - f1 / L) / L**2
    p_m2 = q_m2 + es * p * p / f**2

    y_lo = fb.g @ y
    b_hi = fb.g_inv @ b_lo
    b2 = float(b_lo @ b_hi)
    m_lo = b_lo - (beta / L**2) * y_lo
    m_hi = fb.g_inv @ m_lo
    m2 = float(m_lo @ m_hi)
    # A vanishing one-form (pure conformal change) has m = 0 identically and
    # nothing below divides by m^2, so the gate applies only when b != 0.
    if m2 <= M2_MIN and b2 > 0.0:
        raise DegenerateChangeError(f"m^2 = {m2:.3g} at this point (b parallel to y)")
    eps = f * f * (es * p + m2 * q0) / L**2
    if abs(eps) <= EPS_MIN:
        raise DegenerateChangeError(f"epsilon = {eps:.3g} at this point")
    s0 = f * f * q0 / (es * eps * p * L**2)
    s_m1 = p_m1 * f * f / (p * eps * L**2)
    s_m2 = p_m1 * (es * m2 * p * L**2 - b2 * f * f) / (eps * p * beta * L**2) if beta != 0 else 0.0
    if beta == 0.0 and p_m1 != 0.0:
        raise DegenerateChangeError("s_-2 is singular at beta = 0")

    kap = es * p + q0 * m2
    lam = (n + 1) * p_m1 / (2 * p) - 1.5 * es * p_m1 * m2 * s0 + p02 * m2 / (2 * kap)
    K1 = es**2 * p_m1**2 / (4 * p) * (1 / es - 2 * s0 * p * m2) + es * p_m1 * p02 * m2 / (4 * kap)
    K2 = 0.5 * es * p_m1 - 0.5 * es**2 * s0 * p * p_m1 * m2
    K3 = es**2 * p_m1**2 * m2 / (8 * kap)
    K4 = es * p * p02 / (2 * kap) - es**2 * s0 * p * p_m1
    K5 = es**2 * s0 * p_m1**2 - (4 * es * p_m1 * p02 + p02**2 * m2) / (4 * kap)
    alpha1 = 0.5 * es * p_m1 - es * p * lam / (n + 1)
    alpha2 = p02 / 6 - q0 * lam / (n + 1)
    Theta = L**2 * b2 + beta**2 + 2 * es * L * beta
    Theta1 = L**2 * b2 + beta**2 + 2 * L * beta

    return ScalarBundle(
        n=n, L=L, sigma=sigma, es=es, Lt=Lt, beta_val=beta, f=f, f1=f1, f2=f2,
        f11=f11, f12=f12, f22=f22, q=q, p=p, q0=q0, p0=p0, q_m1=q_m1, p_m1=p_m1,
        q_m2=q_m2, p_m2=p_m2, p02=p02, p022=p022, b_lo=b_lo, b_hi=b_hi, b2=b2,
        y=np.asarray(y, float), y_lo=y_lo, m_lo=m_lo, m_hi=m_hi, m2=m2, eps=eps,
        s0=s0, s_m1=s_m1, s_m2=s_m2, lam=lam, K1=K1, K2=K2, K3=K3, K4=K4, K5=K5,
        alpha1=alpha1, alpha2=alpha2, Theta=Theta, Theta1=Theta1, sigma_grad=sigma_grad,
    )


def admissible(c: ChangeSpec, base: MetricSpec, x, y, cond_max: Optional[float] = None) -> bool:
    """The executable admissibility predicate: domain, L > 0, m^2 and epsilon bounds.

    With ``cond_max`` the base and transformed metric tensors must also have
    condition number at most ``cond_max``, and the scale-free Cartan size
    L-bar |C-bar| at most CARTAN_SCALE_MAX (beyond it, curvature built from
    C-bar C-bar products loses all digits to cancellation).
    """
    try:
        fb = fundamental(base, x, y)
        scalars(c, base, x, y, fb)
        tm = transformed_metric(c, base)
        tm.check_point(x, y)
        if cond_max is not None:
            fbar = fundamental(tm, x, y)
            if fb.cond > cond_max or fbar.cond > cond_max:
                return False
            if fbar.L * float(np.linalg.norm(fbar.C)) > CARTAN_SCALE_MAX:
                return False
    except (FinslerLabError, ArithmeticError, ValueError):
        return False
    return True


# -- closed forms -----------------------------------------------------------


@dataclass(frozen=True)
class MetricClosedForm:
    l_bar: np.ndarray
    h_bar: np.ndarray
    g_bar: np.ndarray
    g_bar_inv: np.ndarray


def closed_form_metric(sb: ScalarBundle, fb: FundamentalBundle) -> MetricClosedForm:
    es, y, yl, b, bh = sb.es, sb.y, sb.y_lo, sb.b_lo, sb.b_hi
    l_bar = es * sb.f1 * fb.l_lo + sb.f2 * b
    h_bar = es * sb.p * fb.h + sb.q0 * np.outer(sb.m_lo, sb.m_lo)
    g_bar = (
        es * sb.p * fb.g
        + sb.p0 * np.outer(b, b)
        + es * sb.p_m1 * (np.outer(b, yl) + np.outer(yl, b))
        + es * sb.p_m2 * np.outer(yl, yl)
    )
    g_bar_inv = (
        fb.g_inv / (es * sb.p)
        - sb.s0 * np.outer(bh, bh)
        - sb.s_m1 * (np.outer(y, bh) + np.outer(bh, y))
        - sb.s_m2 * np.outer(y, y)
    )
    return MetricClosedForm(l_bar, h_bar, g_bar, g_bar_inv)


@dataclass(frozen=True)
class CartanClosedForm:
    C_bar: np.ndarray
    V: np.ndarray
    M_mixed: np.ndarray
    C_bar_mixed: np.ndarray
    C_bar_lo: np.ndarray
    C_bar_hi: np.ndarray
    C2_bar: float
    J_hi: np.ndarray
    Phi: float
    C_beta: float
    C_bbb: float
    C_ib: np.ndarray = field(repr=False, default=None)
    C_ibb: np.ndarray = field(repr=False, default=None)


def closed_form_cartan(sb: ScalarBundle, fb: FundamentalBundle) -> CartanClosedForm:
    es, p, m, mh, m2 = sb.es, sb.p, sb.m_lo, sb.m_hi, sb.m2
    bh, y = sb.b_hi, sb.y
    s0, sm1, lam = sb.s0, sb.s_m1, sb.lam

    V = 0.5 * es * sb.p_m1 * cyclic3(fb.h, m) + 0.5 * sb.p02 * outer(m, m, m)
    C_bar = es * p * fb.C + V

    C_ib = np.einsum("ijr,r->ij", fb.C, bh)  # C_ij beta
    C_ibb = C_ib @ bh  # C_i beta beta
    C_bbb = float(C_ibb @ bh)
    C_beta = float(fb.C_lo @ bh)
    h_mixed = fb.g_inv @ fb.h  # h^l_i
    u = s0 * bh + sm1 * y
    M_mixed = (
        0.5 * np.einsum("l,ij->lij", mh / (es * p) - m2 * u, sb.p02 * np.outer(m, m) + es * sb.p_m1 * fb.h)
        - es * np.einsum("l,ij->lij", u, p * C_ib + sb.p_m1 * np.outer(m, m))
        + sb.p_m1 / (2 * p) * (np.einsum("li,j->lij", h_mixed, m) + np.einsum("lj,i->lij", h_mixed, m))
    )
    C_bar_mixed = fb.C_mixed + M_mixed

    C_bar_lo = fb.C_lo - es * p * s0 * C_ibb + lam * m
    # J^i: the bracket is (C_beta + lambda m^2 - e^sigma s0 p C_bbb), which equals
    # m^i C-bar_i; this reading is the one consistent with C-bar^i = g-bar^ij C-bar_j.
    C_hi_bb = fb.g_inv @ C_ibb
    J_hi = lam / (es * p) * mh - s0 * C_hi_bb - (C_beta + lam * m2 - es * s0 * p * C_bbb) * u
    C_bar_hi = fb.C_hi / (es * p) + J_hi

    # Phi = C-bar^i C-bar_i - C^2 / (e^sigma p), expanded from the two lines above.
    # The familiar expansion carries a "1" where C_beta belongs and sign slips
    # in the C_bbb terms; this is the algebraically consistent form.
    A = C_beta + lam * m2 - es * s0 * p * C_bbb
    Phi = (
        lam / (es * p) * (C_beta + A)
        - 2 * s0 * float(fb.C_hi @ C_ibb)
        + es * p * s0**2 * float(C_hi_bb @ C_ibb)
        - lam * s0 * C_bbb
        - s0 * A * A
    )
    C2_bar = fb.C2 / (es * p) + Phi
    return CartanClosedForm(
        C_bar, V, M_mixed, C_bar_mixed, C_bar_lo, C_bar_hi, C2_bar, J_hi, Phi, C_beta, C_bbb, C_ib, C_ibb
    )


@dataclass(frozen=True)
class SClosedForm:
    H: np.ndarray
    omega: np.ndarray
    S_bar4: np.ndarray
    S_bar_ric: np.ndarray
    S_bar_scal: float
    Psi: np.ndarray
    K_big: float
    Omega_big: float


def closed_form_s(sb: ScalarBundle, fb: FundamentalBundle, S4, S_ric, S_scal, cf: Optional[CartanClosedForm] = None):
    """Transformed v-curvature, vertical Ricci tensor and scalar.

    The Ricci law is implemented as obtained by contracting the rank-4 law
    with the closed-form g-bar^ij: the coefficient of H_ik is
    s0 m^2 - (n - 3) e^-sigma / p and Psi_ik carries a -(e^-sigma/p) C_beta omega_ik
    term.  This form reproduces the scalar law exactly.  H_ij is
    K1 m_i m_j + K2 C_ijb + K3 h_ij.
    """
    if cf is None:
        cf = closed_form_cartan(sb, fb)
    n, es, p, s0, m, m2 = sb.n, sb.es, sb.p, sb.s0, sb.m_lo, sb.m2
    h, bh = fb.h, sb.b_hi
    C_ib = cf.C_ib
    mm = np.outer(m, m)
    H = sb.K1 * mm + sb.K2 * C_ib + sb.K3 * h
    omega = sb.K4 * mm - 0.5 * es**2 * p**2 * s0 * C_ib
    inner = (
        np.einsum("lk,ij->lijk", H, h)
        + np.einsum("ij,lk->lijk", H, h)
        + np.einsum("lk,ij->lijk", omega, C_ib)
        + np.einsum("ij,lk->lijk", omega, C_ib)
    )
    S_bar4 = es * p * S4 + alt_jk(inner)

    trH = float(np.einsum("ij,ij->", fb.g_inv, H))
    tr_om = float(np.einsum("ij,ij->", fb.g_inv, omega))
    H_bb = float(bh @ H @ bh)
    om_bb = float(bh @ omega @ bh)
    H_b = H @ bh
    om_b = omega @ bh
    C_mixed_b = np.einsum("rij,j->ri", fb.C_mixed, bh)  # C^r_i beta
    K_big = s0 * H_bb - trH / (es * p)
    S_bbik = np.einsum("hijk,h,j->ik", S4, bh, bh)
    Psi = (
        (np.einsum("rk,ri->ik", omega, C_mixed_b) + np.einsum("ri,rk->ik", omega, C_mixed_b)
         - tr_om * C_ib - cf.C_beta * omega) / (es * p)
        - s0 * (
            np.outer(m, H_b) + np.outer(H_b, m)
            + np.outer(cf.C_ibb, om_b) + np.outer(om_b, cf.C_ibb)
            - om_bb * C_ib - omega * cf.C_bbb
            + es * p * S_bbik
        )
    )
    S_bar_ric = S_ric + K_big * h + (s0 * m2 - (n - 3) / (es * p)) * H + Psi
    Psi_tr = float(np.einsum("ij,ij->", fb.g_inv, Psi))
    Psi_bb = float(bh @ Psi @ bh)
    S_bb = float(bh @ S_ric @ bh)
    Omega_big = Psi_tr / (es * p) - s0 * S_bb - s0 * Psi_bb + 2 * K_big * (n - 2 - es * p * s0 * m2) / (es * p)
    S_bar_scal = S_scal / (es * p) + Omega_big
    return SClosedForm(H, omega, S_bar4, S_bar_ric, S_bar_scal, Psi, K_big, Omega_big)


@dataclass(frozen=True)
class TClosedForm:
    T_bar4: np.ndarray
    nu: np.ndarray
    n_small: np.ndarray
    n_dot: np.ndarray
    M2: np.ndarray


def closed_form_t(sb: ScalarBundle, fb: FundamentalBundle, T4, L_bar: float, cf: Optional[CartanClosedForm] = None):
    """Transformed T-tensor in terms of base tensors.

    The last two groups read n_ij m_k m_l + n_lk m_i m_j (the symmetric
    reading; a repeated m_j there is a slip).
    """
    if cf is None:
        cf = closed_form_cartan(sb, fb)
    es, p, L, beta = sb.es, sb.p, sb.L, sb.beta_val
    m, h, l = sb.m_lo, fb.h, fb.l_lo
    l_bar = es * sb.f1 * l + sb.f2 * sb.b_lo
    n_small = np.outer(l, m) + np.outer(m, l)
    n_dot = np.outer(l_bar, m) + np.outer(m, l_bar)
    mm = np.outer(m, m)
    M2 = sb.K2 * h + sb.K4 * mm
    nu = (
        0.5 * es * sb.p_m1 * n_dot
        - L_bar * (sb.K1 + 3 * es * sb.p_m1**2 / (4 * p) + beta * sb.p02 / (2 * L**2)) * mm
        - L_bar * es * sb.p_m1 / (2 * L) * n_small
    )
    C_ib = cf.C_ib
    T_bar4 = (
        es * p * L_bar / L * T4
        - L_bar * (beta * es * sb.p_m1 / (2 * L**2) + 2 * sb.K3) * pairs3(h)
        + pairs6(h, nu)
        + (es * p * sb.f2 - 0.5 * es * L_bar * sb.p_m1) * rank3_times_vec(fb.C, m)
        - L_bar * pairs6(M2, C_ib)
        + L_bar * es**2 * sb.s0 * p**2 * pairs3(C_ib)
        + 0.5 * L_bar * (6 * sb.K5 + sb.p022) * outer(m, m, m, m)
        - L_bar * sb.p02 / (2 * L) * (np.einsum("ij,k,l->lijk", n_small, m, m) + np.einsum("lk,i,j->lijk", n_small, m, m))
        + 0.5 * sb.p02 * (np.einsum("ij,k,l->lijk", n_dot, m, m) + np.einsum("lk,i,j->lijk", n_dot, m, m))
    )
    return TClosedForm(T_bar4, nu, n_small, n_dot, M2)


SPECIAL_KINDS = ("conformal", "randers", "kropina", "beta-conformal")


def special_t(kind: str, sb: ScalarBundle, fb: FundamentalBundle, T4=None, L_bar: Optional[float] = None):
    """The four special-case T-tensor laws.

    ``kind`` is one of ``conformal`` (any base, needs T4), ``randers`` and
    ``kropina`` (Riemannian base, sigma = 0) and ``beta-conformal``
    (any base, needs T4).  Hypotheses are checked on the supplied data.
    """
    es, L, beta, b2, h, m = sb.es, sb.L, sb.beta_val, sb.b2, fb.h, sb.m_lo
    if L_bar is None:
        L_bar = sb.f
    if kind == "conformal":
        if T4 is None:
            raise MisuseError("conformal law needs the base T-tensor")
        if abs(sb.f2) > 1e-12:
            raise MisuseError("conformal law needs f independent of beta")
        return es**3 * T4
    if kind in ("randers", "kropina"):
        if not is_riemannian(fb):
            raise MisuseError(f"{kind} law requires a Riemannian base")
        if abs(sb.sigma) > 1e-14 or np.any(np.abs(sb.sigma_grad) > 1e-14):
            raise MisuseError(f"{kind} law requires sigma = 0")
        if kind == "randers":
            return -sb.Theta1 / (4 * L**3) * pairs3(h)
        mm = np.outer(m, m)
        return (
            2 * L_bar / (L**2 * b2) * pairs3(h)
            + 2 * L_bar**2 / (beta * L**2 * b2) * pairs6(h, mm)
            + 6 * L_bar**3 / (beta**2 * L**2 * b2) * outer(m, m, m, m)
        )
    if kind == "beta-conformal":
        if T4 is None:
            raise MisuseError("beta-conformal law needs the base T-tensor")
        C_ib = np.einsum("ijr,r->ij", fb.C, sb.b_hi)
        return (
            es * L_bar**2 / L**2 * T4
            - es * sb.Theta / (4 * L**3) * pairs3(h)
            + es * L_bar / (2 * L) * rank3_times_vec(fb.C, m)
            - es * L_bar / (2 * L) * pairs6(h, C_ib)
        )
    raise MisuseError(f"unknown special kind {kind!r}")


def ttensor_trace_condition(sb: ScalarBundle, fb: FundamentalBundle) -> float:
    """T required by a vanishing beta-conformal T-bar: (n^2-1) Theta/(4 L Lb^2) + (n-1) L C_beta / Lb."""
    n, L, Lb = sb.n, sb.L, sb.f
    C_beta = float(fb.C_lo @ sb.b_hi)
    return (n * n - 1) * sb.Theta / (4 * L * Lb**2) + (n - 1) * L * C_beta / Lb


def ttensor_trace_residual(sb: ScalarBundle, fb: FundamentalBundle, T4) -> float:
    """Full g^lj g^ik contraction of the beta-conformal law, rescaled, against T minus the condition.

    Zero means the contraction of the law is consistent with the stated necessary condition.
    """
    Tbar = special_t("beta-conformal", sb, fb, T4)
    gi = fb.g_inv
    full = float(np.einsum("lj,ik,lijk->", gi, gi, Tbar))
    T = float(np.einsum("lj,ik,lijk->", gi, gi, T4))
    scale = sb.L**2 / (sb.es * sb.f**2)
    lhs = full * scale
    rhs = T - ttensor_trace_condition(sb, fb)
    return abs(lhs - rhs) / (1.0 + abs(rhs))


# -- identity suite ---------------------------------------------------------


@dataclass
class IdentityReport:
    passed: bool
    samples: int
    filtered: int
    worst: dict
    failures: list = field(default_factory=list)


def f_homogeneity_residual(c: ChangeSpec, Lt: float, beta: float, ts=(0.5, 2.0, 3.0)) -> float:
    f0 = float(c.f(Lt, beta))
    return max(abs(float(c.f(t * Lt, t * beta)) - t * f0) / (1.0 + abs(f0)) for t in ts)


def euler_residuals(sb: ScalarBundle):
    """L~f1 + beta f2 = f, L~f11 + beta f12 = 0, L~f12 + beta f22 = 0."""
    Lt, b = sb.Lt, sb.beta_val
    scale1 = 1.0 + abs(sb.f)
    scale2 = 1.0 + abs(sb.f1) + abs(sb.f2)
    return (
        abs(Lt * sb.f1 + b * sb.f2 - sb.f) / scale1,
        abs(Lt * sb.f11 + b * sb.f12) / scale2,
        abs(Lt * sb.f12 + b * sb.f22) / scale2,
    )


def scalar_identity_residuals(sb: ScalarBundle):
    """beta s0 + L^2 s_-1 = q / eps and b^2 s_-1 + beta s_-2 = e^sigma p_-1 m^2 / eps, as relative residuals."""
    r1 = sb.beta_val * sb.s0 + sb.L**2 * sb.s_m1
    t1 = sb.q / sb.eps
    r2 = sb.b2 * sb.s_m1 + sb.beta_val * sb.s_m2
    t2 = sb.es * sb.p_m1 * sb.m2 / sb.eps
    return abs(r1 - t1) / (1.0 + abs(t1)), abs(r2 - t2) / (1.0 + abs(t2))


def degree_residual(c: ChangeSpec, m: MetricSpec, x, y, ts=(0.5, 2.0, 3.0)) -> tuple:
    """Worst relative violation of the declared y-degree over all scalar fields."""
    sb = scalars(c, m, x, y)
    worst, name = 0.0, ""
    for t in ts:
        st = scalars(c, m, x, t * np.asarray(y))
        for key, deg in DEGREES.items():
            a, b = getattr(st, key), t**deg * getattr(sb, key)
            r = abs(a - b) / (1.0 + abs(b))
            if r > worst:
                worst, name = r, key
    return worst, name


def identity_suite(c: ChangeSpec, m: MetricSpec, samples: int = 20, seed: int = 0, tol: float = 1e-9, **kw) -> IdentityReport:
    from .sampling import sample_points

    from .sampling import COND_MAX

    pts, filtered = sample_points(lambda x, y: admissible(c, m, x, y, COND_MAX), m.dim, samples, seed, **kw)
    worst = {"s_contract_y": 0.0, "s_contract_b": 0.0, "euler": 0.0, "f_homogeneity": 0.0, "degrees": 0.0}
    failures = []
    for k, (x, y) in enumerate(pts):
        sb = scalars(c, m, x, y)
        a, b = scalar_identity_residuals(sb)
        res = {
            "s_contract_y": a,
            "s_contract_b": b,
            "euler": max(euler_residuals(sb)),
            "f_homogeneity": f_homogeneity_residual(c, sb.Lt, sb.beta_val),
        }
        deg, field_name = degree_residual(c, m, x, y)
        res["degrees"] = deg
        for key, v in res.items():
            worst[key] = max(worst[key], v)
            if not v <= tol:
                detail = f" ({field_name})" if key == "degrees" else ""
                failures.append(f"sample {k}: {key}{detail} residual {v:.3g}")
    return IdentityReport(not failures, len(pts), filtered, worst, failures)


# -- closed form vs direct computation --------------------------------------

BLOCKS = {
    "metric": 1e-9,
    "scalar_identities": 1e-10,
    "cartan": 1e-8,
    "v_curvature": 1e-7,
    "t_tensor": 1e-7,
}


def pair_residuals(c: ChangeSpec, base: MetricSpec, x, y) -> dict:
    """Relative residuals of every closed form against the transformed metric, grouped by block."""
    tm = transformed_metric(c, base)
    fb = fundamental(base, x, y, order=4)
    sb = scalars(c, base, x, y, fb)
    fbb = fundamental(tm, x, y, order=4)
    mc = closed_form_metric(sb, fb)
    cf = closed_form_cartan(sb, fb)
    cb = curvature(base, x, y, fb)
    ct = curvature(tm, x, y, fbb)
    sc = closed_form_s(sb, fb, cb.S4, cb.S_ric, cb.S_scal, cf)
    tc = closed_form_t(sb, fb, cb.T4, fbb.L, cf)
    a, b = scalar_identity_residuals(sb)
    return {
        "metric": {
            "l": rel_err(mc.l_bar, fbb.l_lo),
            "h": rel_err(mc.h_bar, fbb.h),
            "g": rel_err(mc.g_bar, fbb.g),
            "g_inv": rel_err(mc.g_bar_inv, fbb.g_inv),
        },
        "scalar_identities": {"s_contract_y": a, "s_contract_b": b},
        "cartan": {
            "C": rel_err(cf.C_bar, fbb.C),
            "C_mixed": rel_err(cf.C_bar_mixed, fbb.C_mixed),
            "C_lo": rel_err(cf.C_bar_lo, fbb.C_lo),
            "C_hi": rel_err(cf.C_bar_hi, fbb.C_hi),
            "C2": rel_err(cf.C2_bar, fbb.C2),
        },
        "v_curvature": {
            "S4": rel_err(sc.S_bar4, ct.S4),
            "S_ric": rel_err(sc.S_bar_ric, ct.S_ric),
            "S_scal": rel_err(sc.S_bar_scal, ct.S_scal),
        },
        "t_tensor": {"T": rel_err(tc.T_bar4, ct.T4)},
    }
