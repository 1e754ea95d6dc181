"""Tensors of a single Finsler space, computed by differentiating L.

Everything here is derived from jets of the fundamental function, so the
only approximation is floating-point rounding.  Index conventions follow
the usual ones: ``g[i, j] = g_ij``, ``C_mixed[i, j, k] = C^i_jk``,
``G3[h, i, j] = G^h_ij`` and so on; upper indices always come first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jets
from .errors import DegenerateMetricError, DomainError
from .jets import Jet, JetConfig, lift_variable, mixed_partials, partials

log = logging.getLogger(__name__)

COND_WARN = 1e8


def _nonzero_y(x, y):
    return bool(np.linalg.norm(y) > 1e-12)


@dataclass(frozen=True)
class MetricSpec:
    """A Finsler fundamental function ``L(x, y)``.

    ``L`` must accept sequences of floats or of :class:`~finslerlab.jets.Jet`
    for both arguments.  ``domain`` is a float predicate; points outside it
    are rejected before any jet is built.
    """

    dim: int
    L: Callable
    domain: Callable = _nonzero_y
    label: str = ""

    def __call__(self, x, y) -> float:
        return float(self.L(list(np.asarray(x, float)), list(np.asarray(y, float))))

    def check_point(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != (self.dim,) or y.shape != (self.dim,):
            raise DomainError(f"{self.label or 'metric'}: point has wrong dimension")
        if not _nonzero_y(x, y) or not self.domain(x, y):
            raise DomainError(f"{self.label or 'metric'}: ({x}, {y}) outside the domain")
        return x, y


def evaluate_jet(m: MetricSpec, x, y, y_order: int, x_order: int = 0) -> Jet:
    """Jet of L at (x, y); x is seeded only when ``x_order`` > 0."""
    x, y = m.check_point(x, y)
    n = m.dim
    if x_order:
        cfg = JetConfig(n, n, x_order, y_order)
        xs = [lift_variable(i, x[i], cfg) for i in range(n)]
    else:
        cfg = JetConfig(0, n, 0, y_order)
        xs = list(x)
    ys = [lift_variable(f"y{i + 1}", y[i], cfg) for i in range(n)]
    out = m.L(xs, ys)
    if not isinstance(out, Jet):
        out = jets.constant(float(out), cfg)
    if out.value <= 0.0:
        raise DomainError(f"{m.label or 'metric'}: L = {out.value} is not positive")
    return out


def invert_metric(g: np.ndarray):
    """Inverse through LU with partial pivoting; warns when badly conditioned."""
    try:
        cond = float(np.linalg.cond(g))
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        raise DegenerateMetricError(f"metric tensor is singular (condition number {cond:.3g})")
    if cond > COND_WARN:
        log.warning("metric tensor condition number %.3g exceeds %.0e", cond, COND_WARN)
    return np.linalg.inv(g), cond


@dataclass(frozen=True)
class FundamentalBundle:
    L: float
    y: np.ndarray
    l_lo: np.ndarray
    l_hi: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    h: np.ndarray
    C: np.ndarray
    C_mixed: np.ndarray
    C_lo: np.ndarray
    C_hi: np.ndarray
    C2: float
    cond: float = 1.0
    dC: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dim(self):
        return self.y.size

    @property
    def y_lo(self):
        return self.g @ self.y


def _bundle_from_jet(Lj: Jet, y) -> FundamentalBundle:
    L2 = Lj * Lj
    L = Lj.value
    g = 0.5 * partials(L2, 2)
    g_inv, cond = invert_metric(g)
    C = 0.25 * partials(L2, 3)
    dC = 0.25 * partials(L2, 4) if Lj.config.max_y_order >= 4 else None
    l_lo = partials(Lj, 1)
    C_mixed = np.einsum("ir,rjk->ijk", g_inv, C)
    C_lo = np.einsum("ijk,jk->i", C, g_inv)
    C_hi = g_inv @ C_lo
    return FundamentalBundle(
        L=L,
        y=np.array(y, dtype=float),
        l_lo=l_lo,
        l_hi=np.asarray(y, dtype=float) / L,
        g=g,
        g_inv=g_inv,
        h=g - np.outer(l_lo, l_lo),
        C=C,
        C_mixed=C_mixed,
        C_lo=C_lo,
        C_hi=C_hi,
        C2=float(C_hi @ C_lo),
        cond=cond,
        dC=dC,
    )


def fundamental(m: MetricSpec, x, y, order: int = 3) -> FundamentalBundle:
    """Point tensors from y-jets of L^2 (``order`` 4 also stores dC = d_k C_hij)."""
    return _bundle_from_jet(evaluate_jet(m, x, y, max(order, 3)), y)


@dataclass(frozen=True)
class ConnectionBundle:
    G: np.ndarray
    N: np.ndarray
    G3: Optional[np.ndarray]
    G4: Optional[np.ndarray]
    Gamma: np.ndarray
    G5: Optional[np.ndarray] = field(default=None, repr=False)


def _solve_jets(A, b):
    """Gaussian elimination with partial pivoting over jet entries."""
    n = len(b)
    A = [list(row) for row in A]
    b = list(b)
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(A[r][col].value))
        if A[piv][col].value == 0.0:
            raise DegenerateMetricError("singular metric while solving for the spray")
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        inv = A[col][col].reciprocal()
        for r in range(col + 1, n):
            fac = A[r][col] * inv
            for c in range(col + 1, n):
                A[r][c] = A[r][c] - fac * A[col][c]
            b[r] = b[r] - fac * b[col]
    out = [None] * n
    for r in reversed(range(n)):
        acc = b[r]
        for c in range(r + 1, n):
            acc = acc - A[r][c] * out[c]
        out[r] = acc * A[r][r].reciprocal()
    return out


def spray_jets(m: MetricSpec, x, y, y_order: int = 3):
    """Spray components G^i as y-jets of order ``y_order``, plus the L^2 jet.

    G^i = 1/4 g^il (y^k d_k dy_l L^2 - d_l L^2)
    """
    n = m.dim
    Lj = evaluate_jet(m, x, y, y_order + 2, x_order=1)
    L2 = Lj * Lj
    cfg0 = JetConfig(n, n, 0, y_order + 2)
    ys = [lift_variable(f"y{k + 1}", y[k], cfg0) for k in range(n)]
    dy = [L2.diff(n + l) for l in range(n)]
    w = []
    for l in range(n):
        acc = -L2.diff(l)
        for k in range(n):
            acc = acc + ys[k] * dy[l].diff(k)
        w.append(acc * 0.25)
    cfg_g = JetConfig(n, n, 0, y_order)
    g = [[(0.5 * dy[i].diff(n + j)).restrict(cfg_g) for j in range(n)] for i in range(n)]
    G = _solve_jets(g, [wl.restrict(cfg_g) for wl in w])
    return G, L2


def spray_connection(m: MetricSpec, x, y, y_order: int = 3) -> ConnectionBundle:
    """Spray, Barthel connection, Berwald coefficients and Cartan Gamma^i_jk.

    Berwald tensors above ``y_order`` are left as None.
    """
    x, y = m.check_point(x, y)
    y_order = max(y_order, 1)
    G, L2 = spray_jets(m, x, y, y_order)
    Gv = np.array([gj.value for gj in G])

    def stacked(k):
        return np.stack([partials(gj, k) for gj in G]) if y_order >= k else None

    N = stacked(1)
    G3, G4, G5 = stacked(2), stacked(3), stacked(4)

    g = 0.5 * mixed_partials(L2, 0, 2)
    g_inv, _ = invert_metric(g)
    C = 0.25 * mixed_partials(L2, 0, 3)
    dxg = 0.5 * mixed_partials(L2, 1, 2)  # dxg[j, k, r] = d_j g_kr
    delta_g = dxg - 2.0 * np.einsum("mj,mkr->jkr", N, C)
    low = 0.5 * (delta_g + delta_g.transpose(1, 0, 2) - delta_g.transpose(1, 2, 0))
    Gamma = np.einsum("ir,jkr->ijk", g_inv, low)
    return ConnectionBundle(G=Gv, N=N, G3=G3, G4=G4, Gamma=Gamma, G5=G5)


def v_curvature(fb: FundamentalBundle):
    """S_lijk = C_lkm C^m_ij - C_ljm C^m_ik, its Ricci trace and scalar."""
    S4 = np.einsum("lkm,mij->lijk", fb.C, fb.C_mixed) - np.einsum("ljm,mik->lijk", fb.C, fb.C_mixed)
    S_ric = np.einsum("lj,lijk->ik", fb.g_inv, S4)
    S_scal = float(np.einsum("ik,ik->", fb.g_inv, S_ric))
    return S4, S_ric, S_scal


def cartan_vertical_derivative(fb: FundamentalBundle) -> np.ndarray:
    """C_hij|_k from a bundle that carries dC."""
    if fb.dC is None:
        raise ValueError("bundle lacks fourth-order data; use fundamental(..., order=4)")
    Cm, C = fb.C_mixed, fb.C
    return (
        fb.dC
        - np.einsum("mhk,mij->hijk", Cm, C)
        - np.einsum("mik,hmj->hijk", Cm, C)
        - np.einsum("mjk,hmi->hijk", Cm, C)
    )


def v_cov_deriv_cartan(m: MetricSpec, x, y) -> np.ndarray:
    return cartan_vertical_derivative(fundamental(m, x, y, order=4))


@dataclass(frozen=True)
class CurvatureBundle:
    S4: np.ndarray
    S_ric: np.ndarray
    S_scal: float
    Cder: np.ndarray
    T4: np.ndarray
    T2: np.ndarray
    T_scal: float


def t_tensor_from_bundle(fb: FundamentalBundle):
    Cder = cartan_vertical_derivative(fb)
    C, l = fb.C, fb.l_lo
    T4 = (
        fb.L * Cder
        + np.einsum("hij,k->hijk", C, l)
        + np.einsum("hik,j->hijk", C, l)
        + np.einsum("hjk,i->hijk", C, l)
        + np.einsum("ijk,h->hijk", C, l)
    )
    T2 = np.einsum("ijhk,hk->ij", T4, fb.g_inv)
    T_scal = float(np.einsum("lj,ik,lijk->", fb.g_inv, fb.g_inv, T4))
    return T4, T2, T_scal, Cder


def t_tensor(m: MetricSpec, x, y):
    """T_hijk = L C_hij|_k + C_hij l_k + C_hik l_j + C_hjk l_i + C_ijk l_h."""
    T4, T2, T_scal, _ = t_tensor_from_bundle(fundamental(m, x, y, order=4))
    return T4, T2, T_scal


def curvature(m: MetricSpec, x, y, fb: Optional[FundamentalBundle] = None) -> CurvatureBundle:
    if fb is None or fb.dC is None:
        fb = fundamental(m, x, y, order=4)
    S4, S_ric, S_scal = v_curvature(fb)
    T4, T2, T_scal, Cder = t_tensor_from_bundle(fb)
    return CurvatureBundle(S4, S_ric, S_scal, Cder, T4, T2, T_scal)


def douglas(m: MetricSpec, x, y) -> np.ndarray:
    """Douglas tensor D^h_ijk from the Berwald hv-curvature G^h_ijk.

    D^h_ijk = G^h_ijk - (y^h dy_k G_ij + d^h_i G_jk + d^h_j G_ki + d^h_k G_ij) / (n + 1),
    with G_ij = G^m_ijm.  Berwald vertical covariant derivatives reduce to
    plain y-derivatives.
    """
    n = m.dim
    con = spray_connection(m, x, y, y_order=4)
    P = np.einsum("mijm->ij", con.G4)
    dP = np.einsum("mijmk->ijk", con.G5)
    eye = np.eye(n)
    y = np.asarray(y, dtype=float)
    trace_part = (
        np.einsum("h,ijk->hijk", y, dP)
        + np.einsum("hi,jk->hijk", eye, P)
        + np.einsum("hj,ki->hijk", eye, P)
        + np.einsum("hk,ij->hijk", eye, P)
    )
    return con.G4 - trace_part / (n + 1)


def oneform_jacobian(b: Callable, x):
    """Values b_i(x) and d_j b_i as an (n, n) array ``db[i, j]``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    cfg = JetConfig(n, 0, 1, 0)
    xs = [lift_variable(i, x[i], cfg) for i in range(n)]
    vals = list(b(xs))
    out_v = np.empty(n)
    out_d = np.zeros((n, n))
    for i, v in enumerate(vals):
        if isinstance(v, Jet):
            out_v[i] = v.value
            out_d[i] = partials(v, 1, part="x")
        else:
            out_v[i] = float(v)
    return out_v, out_d


def scalar_gradient(func: Callable, x):
    """Value and gradient of a scalar function of x (e.g. the conformal factor)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    cfg = JetConfig(n, 0, 1, 0)
    v = func([lift_variable(i, x[i], cfg) for i in range(n)])
    if isinstance(v, Jet):
        return v.value, partials(v, 1, part="x")
    return float(v), np.zeros(n)


def h_cov_deriv_oneform(m: MetricSpec, b: Callable, x, y, con: Optional[ConnectionBundle] = None):
    """b_{i|j} = d_j b_i - b_r Gamma^r_ij, with its symmetric part E and antisymmetric F."""
    if con is None:
        con = spray_connection(m, x, y, y_order=1)
    bv, db = oneform_jacobian(b, x)
    b_cov = db - np.einsum("r,rij->ij", bv, con.Gamma)
    E = 0.5 * (b_cov + b_cov.T)
    F = 0.5 * (b_cov - b_cov.T)
    return b_cov, E, F


def is_riemannian(fb: FundamentalBundle, tol: float = 1e-9) -> bool:
    return float(np.linalg.norm(fb.C)) * fb.L <= tol * (1.0 + float(np.linalg.norm(fb.g)))


# -- built-in metrics -------------------------------------------------------


def euclidean(n: int) -> MetricSpec:
    def L(x, y):
        return jets.sqrt(sum(v * v for v in y))

    return MetricSpec(n, L, label=f"euclidean{n}")


def riemannian_diag(n: int, coeffs=None) -> MetricSpec:
    """L = sqrt(sum_i g_ii(x) y_i^2) with g_ii = 1 + c_i x_{i-1}^2 (cyclic index).

    The default ``c = (0, 1, 1, ...)`` gives diag(1, 1 + x1^2) for n = 2.
    """
    c = diag_coeffs(n, coeffs)

    def L(x, y):
        acc = 0.0
        for i in range(n):
            xi = x[(i - 1) % n]
            acc = acc + (1.0 + c[i] * xi * xi) * y[i] * y[i]
        return jets.sqrt(acc)

    return MetricSpec(n, L, label=f"riemannian-diag{n}")


def diag_coeffs(n, coeffs=None):
    if coeffs is None:
        return (0.0,) + (1.0,) * (n - 1)
    coeffs = tuple(float(v) for v in coeffs)
    if len(coeffs) != n:
        raise ValueError(f"riemannian-diag needs {n} coefficients, got {len(coeffs)}")
    return coeffs


def quartic_minkowski(n: int) -> MetricSpec:
    """L = (sum y_i^4)^(1/4), x-independent and non-Riemannian."""

    def L(x, y):
        return sum(v**4 for v in y) ** 0.25

    return MetricSpec(n, L, label=f"quartic-minkowski{n}")


def from_expression(source: str, dim: int, label: str = "", domain=None) -> MetricSpec:
    from .expr import evaluate, parse

    tree = parse(source, dim)

    def L(x, y):
        return evaluate(tree, x, y)

    return MetricSpec(dim, L, domain or _nonzero_y, label or source)
