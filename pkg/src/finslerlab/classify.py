"""Special Finsler spaces: defect tensors, change-level deltas and consistency sweeps.

A defect tensor vanishes exactly when the space belongs to the class, so
every membership test is ``norm(defect) / norm(reference) <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import change as chg
from .errors import FinslerLabError, MisuseError
from .finsler import FundamentalBundle, MetricSpec, curvature, fundamental, is_riemannian, v_curvature
from .sampling import COND_MAX, sample_points
from .tensor import alt_jk, cyclic3, frak_f, outer

THRESHOLD = 1e-8
LAMBDA_MIN = 1e-10
C2_MIN = 1e-12


def _fro(t) -> float:
    return float(np.linalg.norm(np.asarray(t, dtype=float)))


def _ratio(num: float, den: float) -> float:
    if num == 0.0:
        return 0.0
    return num / den if den > 0.0 else float("inf")


# -- single-space defects ---------------------------------------------------


def c_reducible_defect(fb: FundamentalBundle) -> np.ndarray:
    A = fb.C_lo / (fb.dim + 1)
    return fb.C - cyclic3(fb.h, A)


def c2_like_defect(fb: FundamentalBundle) -> np.ndarray:
    return fb.C2 * fb.C - outer(fb.C_lo, fb.C_lo, fb.C_lo)


def s3_like_defect(fb: FundamentalBundle, S4, S_scal) -> np.ndarray:
    n, h = fb.dim, fb.h
    shape = np.einsum("ik,lj->lijk", h, h) - np.einsum("ij,lk->lijk", h, h)
    return S4 - S_scal / ((n - 1) * (n - 2)) * shape


def s4_tensor_m(fb: FundamentalBundle, S_ric, S_scal) -> np.ndarray:
    n = fb.dim
    return (S_ric - S_scal * fb.h / (2 * (n - 2))) / (n - 3)


def s4_like_defect(fb: FundamentalBundle, S4, S_ric, S_scal) -> np.ndarray:
    M = s4_tensor_m(fb, S_ric, S_scal)
    h = fb.h
    return S4 - alt_jk(np.einsum("lj,ik->lijk", h, M) + np.einsum("ik,lj->lijk", h, M))


@dataclass(frozen=True)
class SemiDecomposition:
    r: float
    t: float
    residual: float
    method: str  # "formula" or "least-squares"


def semi_terms(fb: FundamentalBundle):
    n = fb.dim
    A = cyclic3(fb.h, fb.C_lo) / (n + 1)
    B = outer(fb.C_lo, fb.C_lo, fb.C_lo) / fb.C2
    return A, B


def semi_fit(fb: FundamentalBundle) -> Optional[SemiDecomposition]:
    """Least-squares (r, t) for a generic space; None when C^2 is too small."""
    if fb.C2 <= C2_MIN:
        return None
    A, B = semi_terms(fb)
    design = np.stack([A.ravel(), B.ravel()], axis=1)
    (r, t), *_ = np.linalg.lstsq(design, fb.C.ravel(), rcond=None)
    res = _fro(fb.C - r * A - t * B) / _fro(fb.C)
    return SemiDecomposition(float(r), float(t), res, "least-squares")


def semi_formula(sb: chg.ScalarBundle, fbar: FundamentalBundle) -> Optional[SemiDecomposition]:
    """(r, t) from the change scalars, residual measured on the transformed Cartan tensor.

    The cyclic term uses h-bar_ki C-bar_j in the third slot.
    """
    if fbar.C2 <= C2_MIN or abs(sb.lam) <= LAMBDA_MIN:
        return None
    n = sb.n
    r = sb.p_m1 * (n + 1) / (2 * sb.p * sb.lam)
    t = sb.m2 * (sb.p * sb.p02 - 3 * sb.p_m1 * sb.q0) / (2 * sb.p * sb.lam * sb.kappa)
    A, B = semi_terms(fbar)
    res = _fro(fbar.C - r * A - t * B) / _fro(fbar.C)
    return SemiDecomposition(r, t, res, "formula")


def quasi_split(sb: chg.ScalarBundle, fb: FundamentalBundle, fbar: FundamentalBundle):
    """Q-bar and q_ijk of the quasi-C-reducible split, plus both residuals.

    Returns ``(Qbar, q_closed, residual, q_mismatch)``, where ``residual`` is
    ``|C-bar - S{Q-bar C-bar}| / |C-bar|`` from the directly computed
    transformed tensors and ``q_mismatch`` compares the closed-form q_ijk
    with that difference.  None when |lambda| is below the gate.
    """
    if abs(sb.lam) <= LAMBDA_MIN:
        return None
    es, p, m, lam = sb.es, sb.p, sb.m_lo, sb.lam
    core = 3 * es * sb.p_m1 * fb.h + sb.p02 * np.outer(m, m)
    Qbar = core / (6 * lam)
    C_kbb = np.einsum("kij,i,j->k", fb.C, sb.b_hi, sb.b_hi)
    q_closed = (6 * es * lam * p * fb.C + cyclic3(core, es * p * sb.s0 * C_kbb - fb.C_lo)) / (6 * lam)
    diff = fbar.C - cyclic3(Qbar, fbar.C_lo)
    ref = _fro(fbar.C)
    return Qbar, q_closed, _ratio(_fro(diff), ref), _fro(q_closed - diff) / (1.0 + ref)


@dataclass
class DefectTensors:
    K3: Optional[np.ndarray] = None
    eta3: Optional[np.ndarray] = None
    mu4: Optional[np.ndarray] = None
    zeta4: Optional[np.ndarray] = None
    semi: Optional[SemiDecomposition] = None
    quasi_residual: Optional[float] = None
    riemannian: bool = False
    norms: dict = field(default_factory=dict)
    absent: dict = field(default_factory=dict)

    def flags(self, threshold: float = THRESHOLD) -> dict:
        out = {k: bool(v <= threshold) for k, v in self.norms.items()}
        if self.semi is not None:
            out["semi"] = bool(self.semi.residual <= threshold)
        if self.quasi_residual is not None:
            out["quasi"] = bool(self.quasi_residual <= threshold)
        return out


def defects_from_bundle(fb: FundamentalBundle, S4=None, S_ric=None, S_scal=None) -> DefectTensors:
    n = fb.dim
    out = DefectTensors()
    if S4 is None:
        S4, S_ric, S_scal = v_curvature(fb)
    if is_riemannian(fb):
        out.riemannian = True
        C = np.zeros_like(fb.C)
        S4 = np.zeros_like(S4)
        S_ric = np.zeros_like(S_ric)
        S_scal = 0.0
        fb = FundamentalBundle(fb.L, fb.y, fb.l_lo, fb.l_hi, fb.g, fb.g_inv, fb.h, C, C, np.zeros(n), np.zeros(n), 0.0, fb.cond)
    c_norm = _fro(fb.C)
    s_norm = _fro(S4)
    if n >= 3:
        out.K3 = c_reducible_defect(fb)
        out.norms["K3"] = _ratio(_fro(out.K3), c_norm)
    else:
        out.absent["K3"] = "needs n >= 3"
    out.eta3 = c2_like_defect(fb)
    out.norms["eta3"] = _ratio(_fro(out.eta3), fb.C2 * c_norm)
    if n > 3:
        out.mu4 = s3_like_defect(fb, S4, S_scal)
        out.norms["mu4"] = _ratio(_fro(out.mu4), s_norm)
    else:
        out.absent["mu4"] = "needs n > 3"
    if n > 4:
        out.zeta4 = s4_like_defect(fb, S4, S_ric, S_scal)
        out.norms["zeta4"] = _ratio(_fro(out.zeta4), s_norm)
    else:
        out.absent["zeta4"] = "needs n > 4"
    if n >= 3 and not out.riemannian:
        out.semi = semi_fit(fb)
        if out.semi is None:
            out.absent["semi"] = "C^2 below threshold"
    elif out.riemannian:
        out.absent["semi"] = "Riemannian"
    else:
        out.absent["semi"] = "needs n >= 3"
    out.absent.setdefault("quasi", "only tested for transformed spaces")
    return out


def defects(m: MetricSpec, x, y) -> DefectTensors:
    fb = fundamental(m, x, y)
    return defects_from_bundle(fb)


def transformed_defects(c: chg.ChangeSpec, base: MetricSpec, x, y) -> DefectTensors:
    """Defects of the transformed space; semi and quasi use the change scalars."""
    fb = fundamental(base, x, y)
    sb = chg.scalars(c, base, x, y, fb)
    fbar = fundamental(chg.transformed_metric(c, base), x, y)
    out = defects_from_bundle(fbar)
    out.absent.pop("quasi", None)
    if out.riemannian or fbar.dim < 3:
        return out
    if is_riemannian(fb):
        semi = semi_formula(sb, fbar)
        if semi is not None:
            out.semi = semi
            out.absent.pop("semi", None)
    split = quasi_split(sb, fb, fbar)
    if split is None:
        out.absent["quasi"] = "indeterminate: |lambda| <= 1e-10"
    else:
        out.quasi_residual = split[2]
    return out


def semi_c_decomposition(m: MetricSpec, x, y, change: Optional[chg.ChangeSpec] = None, base: Optional[MetricSpec] = None):
    """(r, t, residual).  With ``change`` and a Riemannian ``base`` the formula values are used."""
    if change is not None:
        if base is None:
            raise MisuseError("a change needs its base metric")
        fb = fundamental(base, x, y)
        fbar = fundamental(chg.transformed_metric(change, base), x, y)
        if fbar.C2 <= C2_MIN:
            return None
        if is_riemannian(fb):
            d = semi_formula(chg.scalars(change, base, x, y, fb), fbar)
            if d is not None:
                return d
        return semi_fit(fbar)
    fb = fundamental(m, x, y)
    return semi_fit(fb)


# -- change-level deltas ----------------------------------------------------


def d_closed(sb: chg.ScalarBundle, fb: FundamentalBundle, literal: bool = False) -> np.ndarray:
    """The C-reducibility delta d_ijk.

    Expanding h-bar_ij C-bar_k gives -q0 m_i m_j C_k and conformal factors
    e^sigma on both C_kbb coefficients; ``literal=True`` evaluates the
    uncorrected variant (+q0 term, no e^sigma factors) for comparison.
    """
    n, es, p, q0, s0, m = sb.n, sb.es, sb.p, sb.q0, sb.s0, sb.m_lo
    mm = np.outer(m, m)
    C_kbb = np.einsum("kij,i,j->k", fb.C, sb.b_hi, sb.b_hi)
    core = cyclic3(sb.alpha1 * fb.h + sb.alpha2 * mm, m)
    if literal:
        extra = cyclic3(q0 * mm, fb.C_lo) + cyclic3(s0 * p * q0 * mm + es * p**2 * s0 * fb.h, C_kbb)
    else:
        extra = -cyclic3(q0 * mm, fb.C_lo) + cyclic3(es * s0 * p * q0 * mm + es**2 * p**2 * s0 * fb.h, C_kbb)
    return core + extra / (n + 1)


def r_closed(sb, fb, base_curv, sc: chg.SClosedForm) -> np.ndarray:
    """The S3-like delta r_lijk."""
    n, es, p, q0, m, h = sb.n, sb.es, sb.p, sb.q0, sb.m_lo, fb.h
    C_ib = np.einsum("ijr,r->ij", fb.C, sb.b_hi)
    H, om, Om = sc.H, sc.omega, sc.Omega_big
    k = (n - 1) * (n - 2)
    X = (
        np.einsum("lk,ij->lijk", H, h) + np.einsum("ij,lk->lijk", H, h)
        + np.einsum("lk,ij->lijk", om, C_ib) + np.einsum("ij,lk->lijk", om, C_ib)
        - es**2 * p**2 * Om / k * np.einsum("lj,ik->lijk", h, h)
        - q0 / k * (base_curv.S_scal + es * p * Om)
        * (np.einsum("ik,l,j->lijk", h, m, m) + np.einsum("lj,i,k->lijk", h, m, m))
    )
    return alt_jk(X)


def r_beta_conformal(sb, fb) -> np.ndarray:
    """The usual beta-conformal specialisation of r_lijk, taken literally (it does not hold)."""
    n, m, h, Lb = sb.n, sb.m_lo, fb.h, sb.f
    C_b = np.einsum("ijr,r->ij", fb.C, sb.b_hi)
    C_beta = float(fb.C_lo @ sb.b_hi)
    A_beta = (C_beta + (n + 1) * sb.m2 / (4 * Lb)) / (n - 1)
    return (
        np.einsum("jk,il->lijk", C_b, h)
        + np.einsum("j,k,il->lijk", m, m, h) / (2 * Lb)
        + sb.m2 / (4 * Lb) * np.einsum("jk,il->lijk", h, h)
        - A_beta * np.einsum("jk,il->lijk", h, h)
    )


def eps_closed(sb, fb, base_curv, sc: chg.SClosedForm) -> np.ndarray:
    """The S4-like delta epsilon_lijk, literal form (holds only when q0 = 0)."""
    n, es, p, q0, s0, m, m2, h = sb.n, sb.es, sb.p, sb.q0, sb.s0, sb.m_lo, sb.m2, fb.h
    C_ib = np.einsum("ijr,r->ij", fb.C, sb.b_hi)
    H, om, Psi, K, Om = sc.H, sc.omega, sc.Psi, sc.K_big, sc.Omega_big
    S = base_curv.S_scal
    Mb = s4_tensor_m(fb, base_curv.S_ric, S)
    mm = np.outer(m, m)
    out = frak_f(om, C_ib) + frak_f(q0 * Mb, mm)
    out += es * p / (n - 3) * frak_f(s0 * m2 * H + K * h + Psi, h)
    out -= es / (n - 3) * (
        frak_f(q0 * S / es / (2 * (n - 2)) * mm, h)
        + frak_f(Om * p * (es * p * h + q0 * mm) / (2 * (n - 2)), h)
        + frak_f(q0 * K * h / es, mm)
    )
    out += q0 / ((n - 3) * p) * frak_f(Psi + (s0 * p * m2 - (n - 3) / es) * H - Om * es * p**2 / (2 * (n - 2)) * h, mm)
    return out


@dataclass
class DeltaReport:
    """Closed-form deltas against the difference oracle.

    Each entry of ``checks`` is ``{value, reference, applicable, note}``; value
    is a relative residual (or a relative norm where the law predicts zero).
    """

    checks: dict = field(default_factory=dict)

    def add(self, name, value, applicable=True, note=""):
        self.checks[name] = {"value": float(value) if applicable else None, "applicable": applicable, "note": note}


def is_beta_conformal(c: chg.ChangeSpec) -> bool:
    return c.family in ("randers", "beta-conformal")


def change_defect_deltas(c: chg.ChangeSpec, base: MetricSpec, x, y) -> DeltaReport:
    rep = DeltaReport()
    n = base.dim
    fb = fundamental(base, x, y, order=4)
    sb = chg.scalars(c, base, x, y, fb)
    tm = chg.transformed_metric(c, base)
    fbar = fundamental(tm, x, y, order=4)
    cb = curvature(base, x, y, fb)
    cbar = curvature(tm, x, y, fbar)
    es, p = sb.es, sb.p
    riem = is_riemannian(fb)
    cbar_norm = _fro(fbar.C)

    if n >= 3:
        d_diff = c_reducible_defect(fbar) - es * p * c_reducible_defect(fb)
        d_cf = d_closed(sb, fb)
        rep.add("d_closed_vs_difference", _fro(d_cf - d_diff) / (1.0 + cbar_norm))
        rep.add("d_literal_vs_difference", _fro(d_closed(sb, fb, literal=True) - d_diff) / (1.0 + cbar_norm))
        if is_beta_conformal(c):
            rep.add("d_norm_beta_conformal", _fro(d_diff) / (1.0 + cbar_norm))
        else:
            rep.add("d_norm_beta_conformal", 0, False, "change is not beta-conformal")
    else:
        rep.add("d_closed_vs_difference", 0, False, "needs n >= 3")

    if riem:
        cf = chg.closed_form_cartan(sb, fb)
        I_diff = c2_like_defect(fbar) - c2_like_defect(fb)
        I_cf = cf.Phi * cf.V - sb.lam**3 * outer(sb.m_lo, sb.m_lo, sb.m_lo)
        rep.add("I_vs_difference", _fro(I_cf - I_diff) / (1.0 + _fro(I_diff)))
    else:
        rep.add("I_vs_difference", 0, False, "base is not Riemannian")

    sc = chg.closed_form_s(sb, fb, cb.S4, cb.S_ric, cb.S_scal)
    sbar_norm = _fro(cbar.S4)
    if n > 3:
        r_diff = s3_like_defect(fbar, cbar.S4, cbar.S_scal) - es * p * s3_like_defect(fb, cb.S4, cb.S_scal)
        rep.add("r_closed_vs_difference", _fro(r_closed(sb, fb, cb, sc) - r_diff) / (1.0 + sbar_norm))
        if is_beta_conformal(c):
            rep.add("r_beta_conformal_vs_difference", _fro(r_beta_conformal(sb, fb) - r_diff) / (1.0 + sbar_norm))
        else:
            rep.add("r_beta_conformal_vs_difference", 0, False, "change is not beta-conformal")
    else:
        rep.add("r_closed_vs_difference", 0, False, "needs n > 3")
    if n > 4:
        zbar = s4_like_defect(fbar, cbar.S4, cbar.S_ric, cbar.S_scal)
        e_diff = zbar - es * p * s4_like_defect(fb, cb.S4, cb.S_ric, cb.S_scal)
        rep.add("eps_closed_vs_difference", _fro(eps_closed(sb, fb, cb, sc) - e_diff) / (1.0 + _fro(zbar)))
        if is_beta_conformal(c):
            # Relative to S-bar: several bases are themselves S4-like, which
            # leaves zeta-bar at rounding level and the ratio meaningless.
            rep.add("eps_norm_beta_conformal", _ratio(_fro(e_diff), sbar_norm))
        else:
            rep.add("eps_norm_beta_conformal", 0, False, "change is not beta-conformal")
    else:
        rep.add("eps_closed_vs_difference", 0, False, "needs n > 4")
    return rep


# -- sample-level suites ----------------------------------------------------


def _points(c, base, samples, seed, **kw):
    pred = (lambda x, y: chg.admissible(c, base, x, y, COND_MAX)) if c is not None else _base_ok(base)
    return sample_points(pred, base.dim, samples, seed, **kw)


def _base_ok(base):
    from .sampling import well_conditioned

    return well_conditioned(base)


@dataclass
class AlphaReport:
    """``max_alpha*`` are raw; ``rel_alpha*`` divide by the size of the cancelling terms."""

    max_alpha1: float
    max_alpha2: float
    samples: int
    passed: bool
    rel_alpha1: float = 0.0
    rel_alpha2: float = 0.0


def alpha_scales(sb: chg.ScalarBundle):
    """Magnitudes of the two terms each alpha is the difference of."""
    n = sb.n
    a1 = max(abs(0.5 * sb.es * sb.p_m1), abs(sb.es * sb.p * sb.lam / (n + 1)))
    a2 = max(abs(sb.p02 / 6), abs(sb.q0 * sb.lam / (n + 1)))
    return a1, a2


def randers_kropina_alpha_check(c: chg.ChangeSpec, base: MetricSpec, samples: int = 20, seed: int = 0, tol: float = 1e-10,
                                **kw) -> AlphaReport:
    pts, _ = _points(c, base, samples, seed, **kw)
    a1 = a2 = r1 = r2 = 0.0
    for x, y in pts:
        fb = fundamental(base, x, y)
        if not is_riemannian(fb):
            raise MisuseError("the alpha check needs a Riemannian base")
        sb = chg.scalars(c, base, x, y, fb)
        s1, s2 = alpha_scales(sb)
        a1, a2 = max(a1, abs(sb.alpha1)), max(a2, abs(sb.alpha2))
        # Kropina-type terms grow like beta^-3 near small beta; only the
        # relative size of alpha survives the cancellation.
        r1, r2 = max(r1, abs(sb.alpha1) / (1.0 + s1)), max(r2, abs(sb.alpha2) / (1.0 + s2))
    return AlphaReport(a1, a2, len(pts), r1 <= tol and r2 <= tol, r1, r2)


def b_contraction(fb: FundamentalBundle, b_lo) -> np.ndarray:
    """b^i C_ijk with b^i = g^ij b_j."""
    return np.einsum("ijk,i->jk", fb.C, fb.g_inv @ b_lo)


def b_vertical_derivative(fb: FundamentalBundle, b_lo) -> np.ndarray:
    """b^i|_h = d(g^ij b_j)/dy^h + b^m C^i_mh, returned as [i, h]."""
    dginv = -2.0 * np.einsum("ia,abh,bj->ijh", fb.g_inv, fb.C, fb.g_inv)
    b_hi = fb.g_inv @ b_lo
    return np.einsum("ijh,j->ih", dginv, b_lo) + np.einsum("m,imh->ih", b_hi, fb.C_mixed)


@dataclass
class BConditionRecord:
    index: int
    b_residual: float
    b_vderiv: float
    t_norm: float
    c_norm: float
    passed: bool


@dataclass
class BConditionReport:
    records: list
    threshold: float
    max_residual: float
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return self.max_residual <= self.threshold


def b_condition_at(m: MetricSpec, b, x, y, threshold: float = THRESHOLD, index: int = 0):
    fb = fundamental(m, x, y, order=4)
    b_lo = np.array([float(v) for v in b(list(x))])
    scale = 1.0 + _fro(fb.C)
    res = _fro(b_contraction(fb, b_lo)) / scale
    vd = _fro(b_vertical_derivative(fb, b_lo)) / (1.0 + _fro(fb.C) * _fro(b_lo))
    cb = curvature(m, x, y, fb)
    t_norm = _fro(cb.T4) / (1.0 + _fro(fb.C) * fb.L)
    c_norm = _fro(fb.C) * fb.L
    return BConditionRecord(index, res, vd, t_norm, c_norm, res <= threshold)


def b_condition(m: MetricSpec, b, samples: int = 20, seed: int = 0, threshold: float = THRESHOLD, points=None, **kw) -> BConditionReport:
    """b^i C_ijk over samples, with the two consequences checked where it passes."""
    if points is None:
        points, _ = sample_points(_base_ok(m), m.dim, samples, seed, **kw)
    recs, viol = [], []
    for k, (x, y) in enumerate(points):
        r = b_condition_at(m, b, x, y, threshold, k)
        recs.append(r)
        if r.passed and r.b_vderiv > max(threshold, 1e-8):
            viol.append(f"sample {k}: b-condition holds but b^i|_h = {r.b_vderiv:.3g}")
        if r.passed and r.t_norm <= threshold and r.c_norm > threshold:
            viol.append(f"sample {k}: b-condition and T = 0 with C != 0")
    worst = max((r.b_residual for r in recs), default=0.0)
    return BConditionReport(recs, threshold, worst, viol)


@dataclass
class EnergyReport:
    applicable: bool
    max_p_m1: float = 0.0
    k_fit: float = float("nan")
    q_residual: float = 0.0
    cartan_residual: float = 0.0
    verdict: str = ""
    trivial: bool = False
    samples: int = 0

    @property
    def consistent(self):
        return self.verdict in ("PASS", "FAIL")


def energy_equivalence(c: chg.ChangeSpec, base: MetricSpec, samples: int = 20, seed: int = 0, tol: float = 1e-9,
                       **kw) -> EnergyReport:
    """Co-vanishing of p_-1, (q - k beta) and (C-bar - e^sigma p C)."""
    if base.dim <= 2:
        return EnergyReport(False, verdict="not applicable: n <= 2")
    pts, _ = _points(c, base, samples, seed, **kw)
    pm1, qs, betas, cres = [], [], [], []
    for x, y in pts:
        fb = fundamental(base, x, y)
        sb = chg.scalars(c, base, x, y, fb)
        fbar = fundamental(chg.transformed_metric(c, base), x, y)
        pm1.append(abs(sb.p_m1) * sb.L)  # scale-free: p_-1 has degree -1
        qs.append(sb.q)
        betas.append(sb.beta_val)
        cres.append(_fro(fbar.C - sb.es * sb.p * fb.C) / (1.0 + _fro(fbar.C)))
    q = np.array(qs)
    beta = np.array(betas)
    denom = float(beta @ beta)
    # beta == 0 identically (pure conformal change): any k fits q = 0
    k = float(beta @ q / denom) if denom > 0.0 else float("nan")
    q_res = float(np.max(np.abs(q - (k * beta if denom > 0.0 else 0.0))) / (1.0 + np.max(np.abs(q))))
    a, b_, cc = max(pm1), q_res, max(cres)
    flags = (a <= tol, b_ <= tol, cc <= tol)
    trivial = bool(np.max(np.abs(q)) <= tol)
    if all(flags):
        verdict = "PASS"
    elif not any(flags):
        verdict = "FAIL"
    else:
        verdict = "INCONSISTENT"
    return EnergyReport(True, a, k, b_, cc, verdict, trivial, len(pts))


# -- the consistency sweep ---------------------------------------------------


@dataclass
class SweepReport:
    checked: dict
    violations: list

    @property
    def passed(self):
        return not self.violations


def consistency_sweep(pairs, samples: int = 20, seed: int = 0, threshold: float = THRESHOLD, **kw) -> SweepReport:
    """Opportunistic implication checks over (label, change, base) triples.

    (i) Riemannian base: the transformed space passes the quasi split where
    |lambda| is above the gate; (ii) no sample passes the b-condition and
    T = 0 while C != 0; (iii) a generalized-Randers transformed space never
    passes the b-condition where its base does.
    """
    checked = {"quasi": 0, "b_t_c": 0, "generalized_randers_b": 0}
    viol = []
    for label, c, base in pairs:
        try:
            pts, _ = _points(c, base, samples, seed, **kw)
        except FinslerLabError:
            continue
        tm = chg.transformed_metric(c, base)
        for k, (x, y) in enumerate(pts):
            fb = fundamental(base, x, y)
            if is_riemannian(fb) and base.dim >= 3:
                d = transformed_defects(c, base, x, y)
                if d.quasi_residual is not None:
                    checked["quasi"] += 1
                    if d.quasi_residual > threshold:
                        viol.append(f"{label} sample {k}: quasi residual {d.quasi_residual:.3g}")
            for metric in (base, tm):
                r = b_condition_at(metric, c.b, x, y, threshold, k)
                checked["b_t_c"] += 1
                if r.passed and r.t_norm <= threshold and r.c_norm > threshold:
                    viol.append(f"{label} sample {k}: b-condition, T = 0, C != 0 on {metric.label}")
            if c.family in ("randers", "generalized-randers", "beta-conformal"):
                r0 = b_condition_at(base, c.b, x, y, threshold, k)
                if r0.passed:
                    checked["generalized_randers_b"] += 1
                    r1 = b_condition_at(tm, c.b, x, y, threshold, k)
                    if r1.passed:
                        viol.append(f"{label} sample {k}: transformed space keeps the b-condition")
    return SweepReport(checked, viol)


# -- classification report ---------------------------------------------------


@dataclass
class ClassificationReport:
    label: str
    threshold: float
    records: list
    verdicts: dict
    absent: dict


def classify(m: MetricSpec, samples: int = 20, seed: int = 0, threshold: float = THRESHOLD,
             change: Optional[chg.ChangeSpec] = None, base: Optional[MetricSpec] = None, **kw) -> ClassificationReport:
    """Per-sample defect norms and flags; with ``change`` the transformed space of ``base`` is classified."""
    if change is not None:
        if base is None:
            raise MisuseError("a change needs its base metric")
        pts, _ = _points(change, base, samples, seed, **kw)
        label = chg.transformed_metric(change, base).label
    else:
        pts, _ = _points(None, m, samples, seed, **kw)
        label = m.label
    records, absent = [], {}
    for k, (x, y) in enumerate(pts):
        d = transformed_defects(change, base, x, y) if change is not None else defects(m, x, y)
        rec = {"index": k, "x": x.tolist(), "y": y.tolist(), "riemannian": d.riemannian, "norms": dict(d.norms)}
        if d.semi is not None:
            rec["semi"] = {"r": d.semi.r, "t": d.semi.t, "residual": d.semi.residual, "method": d.semi.method}
        if d.quasi_residual is not None:
            rec["quasi_residual"] = d.quasi_residual
        rec["flags"] = d.flags(threshold)
        records.append(rec)
        absent.update(d.absent)
    verdicts = {}
    for key in sorted({f for r in records for f in r["flags"]}):
        vals = [r["flags"][key] for r in records if key in r["flags"]]
        verdicts[key] = bool(vals) and all(vals)
    verdicts["riemannian"] = all(r["riemannian"] for r in records)
    for key in verdicts:
        absent.pop(key, None)
    return ClassificationReport(label, threshold, records, verdicts, absent)
