"""Truncated multivariate Taylor jets.

A :class:`Jet` stores the Taylor coefficients of a scalar function of
position variables ``x`` and direction variables ``y`` around a point,
truncated separately in x-order and y-order.  Arithmetic on jets is exact
truncated polynomial algebra, so mixed partial derivatives of any composite
expression come out to rounding error.

The finite-difference routine :func:`fd_oracle` lives here as well; it is
only ever used by tests and diagnostics to cross-check jets.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from numbers import Real

import numpy as np

from .errors import ConfigError, DomainError, SingularityError

__all__ = [
    "JetConfig",
    "Jet",
    "lift_variable",
    "constant",
    "extract",
    "partials",
    "mixed_partials",
    "sqrt",
    "exp",
    "log",
    "fd_oracle",
]

_KEY_BASE = 16


@dataclass(frozen=True)
class JetConfig:
    """Shape of a jet: variable counts and separate truncation orders."""

    n_x: int
    n_y: int
    max_x_order: int = 0
    max_y_order: int = 3

    def __post_init__(self):
        for name in ("n_x", "n_y", "max_x_order", "max_y_order"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
        if self.max_x_order >= _KEY_BASE or self.max_y_order >= _KEY_BASE:
            raise ConfigError("truncation orders above 15 are not supported")
        if self.n_x + self.n_y == 0:
            raise ConfigError("a jet needs at least one variable")

    @property
    def n_vars(self):
        return self.n_x + self.n_y

    @property
    def size(self):
        return _tables(self).size

    def reduced(self, var, by=1):
        """Config after differentiating ``by`` times w.r.t. combined variable ``var``."""
        if var < self.n_x:
            return JetConfig(self.n_x, self.n_y, max(self.max_x_order - by, 0), self.max_y_order)
        return JetConfig(self.n_x, self.n_y, self.max_x_order, max(self.max_y_order - by, 0))


def _monomials(n, max_degree):
    out = []
    for d in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), d):
            e = [0] * n
            for v in combo:
                e[v] += 1
            out.append(tuple(e))
    return out


class _Tables:
    """Index bookkeeping for one config (built once, cached)."""

    def __init__(self, cfg: JetConfig):
        xs = _monomials(cfg.n_x, cfg.max_x_order) if cfg.n_x else [()]
        ys = _monomials(cfg.n_y, cfg.max_y_order) if cfg.n_y else [()]
        rows = [a + b for a in xs for b in ys]
        rows.sort(key=lambda r: (sum(r), sum(r[: cfg.n_x]), tuple(-v for v in r)))
        self.exps = np.array(rows, dtype=np.int64).reshape(len(rows), cfg.n_vars)
        self.size = len(rows)
        self.xdeg = self.exps[:, : cfg.n_x].sum(axis=1)
        self.ydeg = self.exps[:, cfg.n_x :].sum(axis=1)
        self.total_order = cfg.max_x_order + cfg.max_y_order
        powers = _KEY_BASE ** np.arange(cfg.n_vars, dtype=np.int64)
        self.powers = powers
        self.keys = self.exps @ powers
        self.order = np.argsort(self.keys)
        self.sorted_keys = self.keys[self.order]
        self.fact = np.array(
            [math.prod(math.factorial(int(v)) for v in r) for r in self.exps], dtype=float
        )
        ok = (self.xdeg[:, None] + self.xdeg[None, :] <= cfg.max_x_order) & (
            self.ydeg[:, None] + self.ydeg[None, :] <= cfg.max_y_order
        )
        i, j = np.nonzero(ok)
        self.mul_i = i
        self.mul_j = j
        self.mul_k = self.index_of_keys(self.keys[i] + self.keys[j])
        self.lookup = {tuple(int(v) for v in r): n for n, r in enumerate(self.exps)}

    def index_of_keys(self, keys):
        pos = np.searchsorted(self.sorted_keys, keys)
        pos = np.clip(pos, 0, self.size - 1)
        if not np.all(self.sorted_keys[pos] == keys):
            raise ConfigError("multi-index outside the truncation")
        return self.order[pos]


@lru_cache(maxsize=None)
def _tables(cfg: JetConfig) -> _Tables:
    return _Tables(cfg)


@lru_cache(maxsize=None)
def _restriction(src: JetConfig, dst: JetConfig):
    return _tables(src).index_of_keys(_tables(dst).keys)


@lru_cache(maxsize=None)
def _diff_map(cfg: JetConfig, var: int):
    dst = cfg.reduced(var)
    td, ts = _tables(dst), _tables(cfg)
    src_keys = td.keys + ts.powers[var]
    shifted_x = td.xdeg + (1 if var < cfg.n_x else 0)
    shifted_y = td.ydeg + (0 if var < cfg.n_x else 1)
    valid = (shifted_x <= cfg.max_x_order) & (shifted_y <= cfg.max_y_order)
    src = np.zeros(td.size, dtype=np.int64)
    src[valid] = ts.index_of_keys(src_keys[valid])
    factor = (td.exps[:, var] + 1).astype(float) * valid
    return dst, src, factor


def _common(a: JetConfig, b: JetConfig) -> JetConfig:
    if (a.n_x, a.n_y) != (b.n_x, b.n_y):
        raise ConfigError(f"incompatible jet configs {a} and {b}")
    return JetConfig(a.n_x, a.n_y, min(a.max_x_order, b.max_x_order), min(a.max_y_order, b.max_y_order))


_VAR_RE = re.compile(r"^([xy])([1-9][0-9]*)$")


def _var_index(var, cfg: JetConfig) -> int:
    if isinstance(var, str):
        m = _VAR_RE.match(var)
        if not m:
            raise ConfigError(f"bad variable id {var!r}")
        k = int(m.group(2)) - 1
        if m.group(1) == "x":
            if k >= cfg.n_x:
                raise ConfigError(f"{var} exceeds n_x={cfg.n_x}")
            return k
        if k >= cfg.n_y:
            raise ConfigError(f"{var} exceeds n_y={cfg.n_y}")
        return cfg.n_x + k
    if isinstance(var, (int, np.integer)) and 0 <= var < cfg.n_vars:
        return int(var)
    raise ConfigError(f"bad variable id {var!r}")


class Jet:
    """Immutable truncated Taylor expansion of a scalar.

    ``coeffs[k]`` is the Taylor coefficient (derivative divided by
    ``alpha! beta!``) of the k-th multi-index of ``config``.
    """

    __slots__ = ("config", "coeffs")
    __array_priority__ = 1000

    def __init__(self, config: JetConfig, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (_tables(config).size,):
            raise ConfigError("coefficient vector does not match config")
        coeffs.setflags(write=False)
        object.__setattr__(self, "config", config)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("Jet is immutable")

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def __repr__(self):
        return f"Jet(value={self.value!r}, size={self.coeffs.size})"

    def restrict(self, config: JetConfig) -> "Jet":
        if config == self.config:
            return self
        return Jet(config, self.coeffs[_restriction(self.config, config)])

    def _align(self, other):
        if isinstance(other, Jet):
            if other.config == self.config:
                return self.coeffs, other.coeffs, self.config
            cfg = _common(self.config, other.config)
            return self.restrict(cfg).coeffs, other.restrict(cfg).coeffs, cfg
        return None

    def _shift(self, c):
        out = self.coeffs.copy()
        out[0] += c
        return Jet(self.config, out)

    def __add__(self, other):
        if isinstance(other, Real):
            return self._shift(float(other))
        if not isinstance(other, Jet):
            return NotImplemented
        a, b, cfg = self._align(other)
        return Jet(cfg, a + b)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.config, -self.coeffs)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, Real):
            return self._shift(-float(other))
        if not isinstance(other, Jet):
            return NotImplemented
        a, b, cfg = self._align(other)
        return Jet(cfg, a - b)

    def __rsub__(self, other):
        if isinstance(other, Real):
            return (-self)._shift(float(other))
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Real):
            return Jet(self.config, self.coeffs * float(other))
        if not isinstance(other, Jet):
            return NotImplemented
        a, b, cfg = self._align(other)
        t = _tables(cfg)
        c = np.bincount(t.mul_k, weights=a[t.mul_i] * b[t.mul_j], minlength=t.size)
        return Jet(cfg, c)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Real):
            if other == 0:
                raise SingularityError("division by zero")
            return Jet(self.config, self.coeffs / float(other))
        if not isinstance(other, Jet):
            return NotImplemented
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        if isinstance(other, Real):
            return self.reciprocal() * float(other)
        return NotImplemented

    def __pow__(self, exponent):
        if isinstance(exponent, Jet):
            if not np.any(exponent.coeffs[1:]):
                return self.pow(exponent.value)
            return (exponent * self.log()).exp()
        if isinstance(exponent, Real):
            return self.pow(float(exponent))
        return NotImplemented

    def __rpow__(self, base):
        if isinstance(base, Real):
            if base <= 0:
                raise DomainError("non-positive base raised to a jet power")
            return (self * math.log(base)).exp()
        return NotImplemented

    def _nilpotent(self):
        u = self.coeffs.copy()
        u[0] = 0.0
        return Jet(self.config, u)

    def _compose(self, taylor):
        """Evaluate sum_k taylor[k] * (self - value)^k by Horner's rule."""
        u = self._nilpotent()
        out = Jet(self.config, np.zeros_like(self.coeffs))
        for c in reversed(taylor[1:]):
            out = (out + c) * u
        return out + taylor[0]

    def _order(self):
        return _tables(self.config).total_order

    def reciprocal(self):
        a0 = self.value
        if a0 == 0.0:
            raise SingularityError("reciprocal of a jet with zero value slot")
        return self._compose([(-1.0) ** k / a0 ** (k + 1) for k in range(self._order() + 1)])

    def pow(self, r: float):
        r = float(r)
        if r.is_integer():
            k = int(r)
            if k >= 0:
                return self._int_pow(k)
            return self.reciprocal()._int_pow(-k)
        a0 = self.value
        if a0 <= 0.0:
            raise DomainError(f"non-integer power {r} of a non-positive value {a0}")
        taylor = [a0**r]
        c = 1.0
        for k in range(1, self._order() + 1):
            c *= (r - k + 1) / k
            taylor.append(c * a0 ** (r - k))
        return self._compose(taylor)

    def _int_pow(self, k):
        result = None
        base = self
        while k:
            if k & 1:
                result = base if result is None else result * base
            k >>= 1
            if k:
                base = base * base
        if result is None:
            return constant(1.0, self.config)
        return result

    def sqrt(self):
        a0 = self.value
        if a0 < 0.0:
            raise DomainError(f"sqrt of negative value {a0}")
        if a0 == 0.0:
            if np.any(self.coeffs[1:]):
                raise DomainError("sqrt of a non-constant jet at zero")
            return self
        return self.pow(0.5)

    def exp(self):
        e = math.exp(self.value)
        return self._compose([e / math.factorial(k) for k in range(self._order() + 1)])

    def log(self):
        a0 = self.value
        if a0 <= 0.0:
            raise DomainError(f"log of non-positive value {a0}")
        taylor = [math.log(a0)] + [
            (-1.0) ** (k + 1) / (k * a0**k) for k in range(1, self._order() + 1)
        ]
        return self._compose(taylor)

    def diff(self, var) -> "Jet":
        """Derivative jet w.r.t. one variable; that variable's order drops by one."""
        v = _var_index(var, self.config)
        dst, src, factor = _diff_map(self.config, v)
        return Jet(dst, self.coeffs[src] * factor)

    def derivative(self, alpha=(), beta=()) -> float:
        return extract(self, alpha, beta)


def constant(value: float, config: JetConfig) -> Jet:
    c = np.zeros(_tables(config).size)
    c[0] = value
    return Jet(config, c)


def lift_variable(index, value: float, config: JetConfig) -> Jet:
    """Seed variable ``index`` ("x2", "y1", or combined int id) at ``value``."""
    v = _var_index(index, config)
    if (v < config.n_x and config.max_x_order < 1) or (v >= config.n_x and config.max_y_order < 1):
        c = np.zeros(_tables(config).size)
        c[0] = value
        return Jet(config, c)
    t = _tables(config)
    e = [0] * config.n_vars
    e[v] = 1
    c = np.zeros(t.size)
    c[0] = value
    c[t.lookup[tuple(e)]] = 1.0
    return Jet(config, c)


def _as_multi(alpha, beta, cfg):
    alpha = tuple(int(a) for a in alpha) if len(alpha) else (0,) * cfg.n_x
    beta = tuple(int(b) for b in beta) if len(beta) else (0,) * cfg.n_y
    if len(alpha) != cfg.n_x or len(beta) != cfg.n_y or min(alpha + beta, default=0) < 0:
        raise ConfigError(f"multi-index {alpha}/{beta} does not match {cfg}")
    return alpha + beta


def extract(j: Jet, alpha=(), beta=()) -> float:
    """Mixed partial derivative d^(|alpha|+|beta|) / dx^alpha dy^beta."""
    key = _as_multi(alpha, beta, j.config)
    t = _tables(j.config)
    k = t.lookup.get(key)
    if k is None:
        raise ConfigError(f"multi-index {key} outside truncation of {j.config}")
    return float(j.coeffs[k] * t.fact[k])


@lru_cache(maxsize=None)
def _partials_map(cfg: JetConfig, x_order: int, y_order: int):
    t = _tables(cfg)
    shape = (cfg.n_x,) * x_order + (cfg.n_y,) * y_order
    idx = np.empty(shape, dtype=np.int64)
    ranges = [range(cfg.n_x)] * x_order + [range(cfg.n_y)] * y_order
    for combo in itertools.product(*ranges):
        e = [0] * cfg.n_vars
        for pos, v in enumerate(combo):
            e[v if pos < x_order else cfg.n_x + v] += 1
        k = t.lookup.get(tuple(e))
        if k is None:
            raise ConfigError(f"order ({x_order}, {y_order}) exceeds truncation of {cfg}")
        idx[combo] = k
    return idx, t.fact[idx]


def mixed_partials(j: Jet, x_order: int, y_order: int) -> np.ndarray:
    """All partials of x-order ``x_order`` and y-order ``y_order``; x axes first."""
    if x_order == 0 and y_order == 0:
        return np.asarray(j.value)
    idx, fact = _partials_map(j.config, x_order, y_order)
    return j.coeffs[idx] * fact


def partials(j: Jet, order: int, part: str = "y") -> np.ndarray:
    """Dense array of all order-``order`` partials w.r.t. the x- or y-block."""
    if part == "y":
        return mixed_partials(j, 0, order)
    return mixed_partials(j, order, 0)


def _scalar(fn, name):
    def wrapped(v):
        if isinstance(v, Jet):
            return getattr(v, name)()
        try:
            return fn(float(v))
        except ValueError as exc:
            raise DomainError(f"{name} of {v!r}: {exc}") from None

    wrapped.__name__ = name
    wrapped.__doc__ = f"{name} for floats and jets alike."
    return wrapped


sqrt = _scalar(math.sqrt, "sqrt")
exp = _scalar(math.exp, "exp")
log = _scalar(math.log, "log")


_STENCILS = {
    0: ([0], [1.0]),
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
    4: ([-2, -1, 0, 1, 2], [1.0, -4.0, 6.0, -4.0, 1.0]),
}


# Tuned so rounding (~eps/h^d, amplified by Richardson) and the O(h^4)
# truncation term balance for derivatives of unit-scale functions.
_DEFAULT_STEP = {1: 1e-3, 2: 3e-3, 3: 6e-3, 4: 1e-2}


def _central(func, point, orders, h):
    active = [(v, d) for v, d in enumerate(orders) if d]
    total = 0.0
    grids = [list(zip(*_STENCILS[d])) for _, d in active]
    for combo in itertools.product(*grids):
        p = point.copy()
        w = 1.0
        for (v, _), (off, wt) in zip(active, combo):
            p[v] += off * h
            w *= wt
        total += w * func(p)
    return total / h ** sum(orders)


def fd_oracle(func, x, y, alpha=(), beta=(), step=None) -> float:
    """Central finite-difference estimate of a mixed partial of ``func(x, y)``.

    Tensor-product central stencils (error O(h^2)) followed by one Richardson
    step, giving O(h^4) truncation error.  Total order is limited to 4.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = x.size
    alpha = tuple(alpha) if len(alpha) else (0,) * nx
    beta = tuple(beta) if len(beta) else (0,) * y.size
    orders = alpha + beta
    d = sum(orders)
    if d > 4 or len(alpha) != nx or len(beta) != y.size:
        raise ConfigError("fd_oracle supports total order <= 4 with matching dimensions")
    point = np.concatenate([x, y])
    if d == 0:
        return float(func(x, y))
    if step is None:
        step = _DEFAULT_STEP[d] * max(1.0, float(np.max(np.abs(point))))

    def f(p):
        return float(func(p[:nx], p[nx:]))

    coarse = _central(f, point, orders, step)
    fine = _central(f, point, orders, step / 2)
    return (4.0 * fine - coarse) / 3.0
