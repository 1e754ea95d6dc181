"""Projectivity of a metric change: the vector phi_i, a spray-based criterion,
geodesic integration and the Douglas tensor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import change as chg
from .errors import DomainError, FinslerLabError
from .finsler import MetricSpec, douglas, fundamental, h_cov_deriv_oneform, scalar_gradient, spray_connection, spray_jets


@dataclass(frozen=True)
class BetaDerivatives:
    b_cov: np.ndarray
    E: np.ndarray
    F: np.ndarray
    sigma_grad: np.ndarray
    sigma0: float
    E00: float
    F0: np.ndarray


def beta_derivatives(c: chg.ChangeSpec, m: MetricSpec, x, y) -> BetaDerivatives:
    """Covariant derivatives of b taken with the base Cartan connection."""
    x, y = m.check_point(x, y)
    con = spray_connection(m, x, y, y_order=1)
    b_cov, E, F = h_cov_deriv_oneform(m, c.b, x, y, con)
    _, sg = scalar_gradient(c.sigma, x)
    return BetaDerivatives(b_cov, E, F, sg, float(sg @ y), float(y @ E @ y), y @ F)


def phi(c: chg.ChangeSpec, m: MetricSpec, x, y) -> np.ndarray:
    """phi_i = L^2 e^s p s_i - (p L e^s l_i - q0 beta m_i) s_0 + 2 q F_0i - q0 E_00 m_i."""
    fb = fundamental(m, x, y)
    sb = chg.scalars(c, m, x, y, fb)
    bd = beta_derivatives(c, m, x, y)
    L, es, p, q0 = sb.L, sb.es, sb.p, sb.q0
    return (
        L**2 * es * p * bd.sigma_grad
        - (p * L * es * fb.l_lo - q0 * sb.beta_val * sb.m_lo) * bd.sigma0
        + 2 * sb.q * bd.F0
        - q0 * bd.E00 * sb.m_lo
    )


def spray(m: MetricSpec, x, y) -> np.ndarray:
    G, _ = spray_jets(m, x, y, y_order=0)
    return np.array([g.value for g in G])


def projective_deviation(base: MetricSpec, transformed: MetricSpec, x, y) -> float:
    """Relative g-norm of the part of G-bar - G not along y."""
    x, y = base.check_point(x, y)
    D = spray(transformed, x, y) - spray(base, x, y)
    g = fundamental(base, x, y).g
    along = (D @ g @ y) / (y @ g @ y)
    perp = D - along * y
    nD = float(np.sqrt(max(D @ g @ D, 0.0)))
    return float(np.sqrt(max(perp @ g @ perp, 0.0))) / (1.0 + nD)


@dataclass
class GeodesicPath:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    arc_lengths: np.ndarray
    step: float
    steps: int
    truncated: bool = False
    meta: dict = field(default_factory=dict)


def _rhs(m, x, y):
    return y, -2.0 * spray(m, x, y)


def geodesic(m: MetricSpec, x0, y0, t_end: float, steps: int, length_metric: Optional[MetricSpec] = None) -> GeodesicPath:
    """Fixed-step RK4 for dx/dt = y, dy/dt = -2 G(x, y).

    ``arc_lengths`` accumulate ``length_metric`` (default ``m``) along the
    path with the trapezoid rule; leaving the domain truncates the path.
    """
    if steps <= 0:
        raise ValueError("steps must be positive")
    lm = length_metric or m
    h = t_end / steps
    x = np.array(x0, dtype=float)
    y = np.array(y0, dtype=float)
    ts, xs, ys = [0.0], [x.copy()], [y.copy()]
    truncated = False
    for k in range(steps):
        try:
            k1x, k1y = _rhs(m, x, y)
            k2x, k2y = _rhs(m, x + 0.5 * h * k1x, y + 0.5 * h * k1y)
            k3x, k3y = _rhs(m, x + 0.5 * h * k2x, y + 0.5 * h * k2y)
            k4x, k4y = _rhs(m, x + h * k3x, y + h * k3y)
        except (FinslerLabError, ArithmeticError, ValueError):
            truncated = True
            break
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        y = y + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
        ts.append((k + 1) * h)
        xs.append(x.copy())
        ys.append(y.copy())
    X, Y = np.array(xs), np.array(ys)
    speeds = np.array([lm(a, b) for a, b in zip(X, Y)])
    arc = np.concatenate([[0.0], np.cumsum(0.5 * h * (speeds[1:] + speeds[:-1]))])
    return GeodesicPath(np.array(ts), X, Y, arc, h, steps, truncated)


def position_at_length(path: GeodesicPath, s: np.ndarray) -> np.ndarray:
    return np.stack([np.interp(s, path.arc_lengths, path.x[:, i]) for i in range(path.x.shape[1])], axis=1)


def geodesic_compare(base: MetricSpec, transformed: MetricSpec, x0, y0, t_end: float = 1.0, steps: int = 1000,
                     arc_length: float = 1.0) -> float:
    """Largest coordinate distance between the two geodesics at equal base arc length.

    Both start at (x0, y0) rescaled to unit speed in their own metric; the
    transformed path runs long enough to cover the base path's length.
    """
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    yb = y0 / base(x0, y0) * arc_length / t_end
    pb = geodesic(base, x0, yb, t_end, steps)
    yt = y0 / transformed(x0, y0)
    L_rate = base(x0, yt)
    # same step size as the base path, so identical metrics give identical paths
    n_t = int(np.ceil(pb.arc_lengths[-1] / L_rate * 1.5 / pb.step))
    pt = geodesic(transformed, x0, yt, n_t * pb.step, n_t, length_metric=base)
    s_max = min(pb.arc_lengths[-1], pt.arc_lengths[-1])
    if s_max <= 0.0:
        raise DomainError("geodesics have zero length")
    s = np.linspace(0.0, s_max, steps + 1)
    return float(np.max(np.linalg.norm(position_at_length(pb, s) - position_at_length(pt, s), axis=1)))


def convergence_order(m: MetricSpec, x0, y0, t_end: float = 1.0, steps: int = 20) -> float:
    """Observed RK4 order from endpoint differences at steps, 2 steps and 4 steps."""
    ends = [geodesic(m, x0, y0, t_end, steps * 2**k).x[-1] for k in range(3)]
    e1 = np.linalg.norm(ends[0] - ends[1])
    e2 = np.linalg.norm(ends[1] - ends[2])
    return float(np.log2(e1 / e2))


@dataclass
class ProjectiveReport:
    label: str
    max_phi: float
    max_deviation: float
    geodesic_deviation: float
    douglas_norm: float
    samples: int
    threshold: float
    verdict: str
    table: list = field(default_factory=list)


def projective_suite(c: chg.ChangeSpec, base: MetricSpec, samples: int = 20, seed: int = 0, threshold: float = 1e-7,
                     x0=None, y0=None, t_end: float = 1.0, steps: int = 1000, douglas_points: int = 3,
                     geodesic_tol: float = 1e-4, douglas_tol: float = 1e-6, **kw) -> ProjectiveReport:
    """All four projectivity criteria; PASS when every one holds, FAIL when none does."""
    from .sampling import COND_MAX, sample_points

    tm = chg.transformed_metric(c, base)
    pts, _ = sample_points(lambda x, y: chg.admissible(c, base, x, y, COND_MAX), base.dim, samples, seed, **kw)
    phis = [float(np.linalg.norm(phi(c, base, x, y))) for x, y in pts]
    devs = [projective_deviation(base, tm, x, y) for x, y in pts]
    dnorm = max(float(np.linalg.norm(douglas(tm, x, y))) for x, y in pts[:douglas_points])
    if x0 is None:
        x0 = np.zeros(base.dim)
    if y0 is None:
        y0 = np.eye(base.dim)[0] + 0.5 * np.eye(base.dim)[-1]
    gdev = geodesic_compare(base, tm, x0, y0, t_end, steps)
    flags = (max(phis) <= threshold, max(devs) <= threshold, gdev <= geodesic_tol, dnorm <= douglas_tol)
    verdict = "PASS" if all(flags) else ("FAIL" if not any(flags) else "MIXED")
    table = [
        {"index": k, "phi_norm": f, "deviation": d, "agree": (f <= threshold) == (d <= threshold)}
        for k, (f, d) in enumerate(zip(phis, devs))
    ]
    return ProjectiveReport(tm.label, max(phis), max(devs), gdev, dnorm, len(pts), threshold, verdict, table)
