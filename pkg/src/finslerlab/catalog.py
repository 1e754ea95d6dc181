"""Declarative catalog of metrics, changes and sampling settings.

The file is YAML; the grammar is described in ``docs/catalog.md``.  Loading
parses every expression and checks each metric for 1-homogeneity, so a
catalog that loads is safe to run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from . import change as chg
from . import finsler
from .errors import CatalogError, ParseError
from .expr import check_homogeneity, evaluate, parse

METRIC_KINDS = ("euclidean", "riemannian-diag", "quartic-minkowski", "expression")
CHANGE_FAMILIES = (
    "randers",
    "kropina",
    "kropina-type",
    "energy",
    "generalized-randers",
    "beta-conformal",
    "conformal",
    "expression",
)
_FAMILY_PARAMS = {
    "energy": ("k", "k_prime"),
    "generalized-randers": ("c1", "c2"),
    "kropina-type": ("c3",),
}


@dataclass(frozen=True)
class Sampling:
    count: int = 20
    seed: int = 0
    x_box: tuple = (-1.0, 1.0)
    y_radius: tuple = (0.5, 2.0)


@dataclass(frozen=True)
class MetricEntry:
    label: str
    dim: int
    kind: str
    params: Optional[tuple] = None
    source: Optional[str] = None

    def build(self, dim: Optional[int] = None) -> finsler.MetricSpec:
        n = dim or self.dim
        if n != self.dim and (self.kind == "expression" or self.params is not None):
            raise CatalogError(f"metric {self.label!r} has fixed dimension {self.dim}")
        if self.kind == "euclidean":
            m = finsler.euclidean(n)
        elif self.kind == "riemannian-diag":
            m = finsler.riemannian_diag(n, self.params)
        elif self.kind == "quartic-minkowski":
            m = finsler.quartic_minkowski(n)
        else:
            m = finsler.from_expression(self.source, n)
        return finsler.MetricSpec(m.dim, m.L, m.domain, self.label if n == self.dim else f"{self.kind}{n}")


@dataclass(frozen=True)
class ChangeEntry:
    label: str
    family: str
    b: tuple = ()
    sigma: str = "0"
    params: dict = field(default_factory=dict)
    source: Optional[str] = None

    def build(self, dim: int) -> chg.ChangeSpec:
        try:
            b_trees = [parse(s, dim) for s in self.b[:dim]]
            s_tree = parse(self.sigma, dim)
        except ParseError as e:
            raise CatalogError(f"change {self.label!r} in dimension {dim}: {e}") from e
        pad = [0.0] * (dim - len(b_trees))

        def b(x):
            return [evaluate(t, x) for t in b_trees] + pad

        def sigma(x):
            return evaluate(s_tree, x)

        sig = chg._zero if self.sigma.strip() == "0" else sigma
        p = self.params
        fam = self.family
        if fam == "randers":
            c = chg.randers(b, sig, self.label)
        elif fam == "beta-conformal":
            c = chg.beta_conformal(b, sig, self.label)
        elif fam == "kropina":
            c = chg.kropina(b, sig, self.label)
        elif fam == "kropina-type":
            c = chg.kropina_type(p["c3"], b, sig, self.label)
        elif fam == "energy":
            c = chg.energy(p["k"], p["k_prime"], b, sig, self.label)
        elif fam == "generalized-randers":
            c = chg.generalized_randers(p["c1"], p["c2"], b, sig, self.label)
        elif fam == "conformal":
            c = chg.ChangeSpec(lambda Lt, beta: Lt, b, sig, "conformal", (), self.label)
        else:
            c = chg.custom(self.source, b, sig, self.label)
        return c


@dataclass(frozen=True)
class Catalog:
    metrics: tuple
    changes: tuple
    sampling: Sampling = Sampling()
    source: str = "<builtin>"

    def metric(self, label: str) -> MetricEntry:
        for m in self.metrics:
            if m.label == label:
                return m
        raise CatalogError(f"unknown metric {label!r}")

    def change(self, label: str) -> ChangeEntry:
        for c in self.changes:
            if c.label == label:
                return c
        raise CatalogError(f"unknown change {label!r}")


def _require(node: dict, key: str, where: str):
    if key not in node:
        raise CatalogError(f"{where}: missing key {key!r}")
    return node[key]


def _pair(v, where):
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise CatalogError(f"{where}: expected a two-element list")
    lo, hi = float(v[0]), float(v[1])
    if not lo < hi:
        raise CatalogError(f"{where}: empty interval")
    return (lo, hi)


def _metric_entry(node, k) -> MetricEntry:
    where = f"metrics[{k}]"
    if not isinstance(node, dict):
        raise CatalogError(f"{where}: expected a mapping")
    label = str(_require(node, "label", where))
    dim = _require(node, "dim", where)
    if not isinstance(dim, int) or dim < 1:
        raise CatalogError(f"{where}: dim must be a positive integer")
    kind = _require(node, "kind", where)
    if kind not in METRIC_KINDS:
        raise CatalogError(f"{where}: unknown kind {kind!r}")
    params = node.get("params")
    if params is not None:
        params = tuple(float(v) for v in params)
    source = node.get("source")
    if kind == "expression":
        source = str(_require(node, "source", where))
    return MetricEntry(label, dim, kind, params, source)


def _change_entry(node, k) -> ChangeEntry:
    where = f"changes[{k}]"
    if not isinstance(node, dict):
        raise CatalogError(f"{where}: expected a mapping")
    label = str(_require(node, "label", where))
    fam = _require(node, "family", where)
    if fam not in CHANGE_FAMILIES:
        raise CatalogError(f"{where}: unknown family {fam!r}")
    params = {}
    for key in _FAMILY_PARAMS.get(fam, ()):
        params[key] = float(_require(node, key, where))
    b = node.get("b", [])
    if not isinstance(b, list):
        raise CatalogError(f"{where}: b must be a list of expressions")
    if fam not in ("conformal",) and not b:
        raise CatalogError(f"{where}: family {fam!r} needs a one-form b")
    source = node.get("source")
    if fam == "expression":
        source = str(_require(node, "source", where))
    return ChangeEntry(label, fam, tuple(str(s) for s in b), str(node.get("sigma", "0")), params, source)


def _check_expressions(c: ChangeEntry):
    dim = max(len(c.b), 1)
    for i, s in enumerate(c.b):
        tree = parse(s, dim)
        if any(n.startswith("y") for n in tree.names()):
            raise CatalogError(f"change {c.label!r}: b[{i}] must not depend on y")
    tree = parse(c.sigma, 64)
    if any(n.startswith("y") for n in tree.names()):
        raise CatalogError(f"change {c.label!r}: sigma must not depend on y")
    if c.source is not None:
        parse(c.source, 0, extra=("Lt", "beta"))


def from_mapping(doc, source: str = "<mapping>", check: bool = True) -> Catalog:
    if not isinstance(doc, dict):
        raise CatalogError("catalog root must be a mapping")
    s = doc.get("sampling", {}) or {}
    sampling = Sampling(
        int(s.get("count", 20)),
        int(s.get("seed", 0)),
        _pair(s.get("x_box", (-1.0, 1.0)), "sampling.x_box"),
        _pair(s.get("y_radius", (0.5, 2.0)), "sampling.y_radius"),
    )
    if sampling.count < 1:
        raise CatalogError("sampling.count must be positive")
    metrics = tuple(_metric_entry(n, k) for k, n in enumerate(doc.get("metrics", []) or []))
    changes = tuple(_change_entry(n, k) for k, n in enumerate(doc.get("changes", []) or []))
    labels = [m.label for m in metrics] + [c.label for c in changes]
    dup = sorted({v for v in labels if labels.count(v) > 1})
    if dup:
        raise CatalogError(f"duplicate labels: {', '.join(dup)}")
    cat = Catalog(metrics, changes, sampling, source)
    if check:
        validate(cat)
    return cat


def validate(cat: Catalog) -> dict:
    """Parse every expression and sample each metric's homogeneity; returns the worst residuals."""
    worst = {}
    try:
        for c in cat.changes:
            _check_expressions(c)
        for entry in cat.metrics:
            m = entry.build()
            rep = check_homogeneity(lambda x, y: m(x, y), 1, dim=m.dim, domain=m.domain)
            if not rep.passed:
                raise CatalogError(f"metric {entry.label!r} is not 1-homogeneous (residual {rep.worst:.3g})")
            worst[entry.label] = rep.worst
    except ParseError as e:
        raise CatalogError(str(e)) from e
    return worst


def load(path=None, check: bool = True) -> Catalog:
    """Load ``path``, or the bundled default catalog when ``path`` is None."""
    if path is None:
        text = resources.files("finslerlab").joinpath("data/catalog.yaml").read_text()
        where = "<builtin>"
    else:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise CatalogError(f"cannot read catalog {path}: {e}") from e
        where = str(path)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise CatalogError(f"{where}: {e}") from e
    return from_mapping(doc, where, check)
