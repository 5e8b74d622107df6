"""Chart-level structure specs, point sampling, and product/metric checks.

A `ManifoldSpec` is a single coordinate chart carrying a product (canonical,
shifted-canonical, or an explicit expression table), a unit field, and
optionally an Euler field and one or two metrics.  `structure_at` evaluates
everything needed downstream at one point: the product to first derivative
order and all other primitive fields to second order.

All residuals are reported normalized as `max|residual| / (1 + scale)` where
`scale` is the largest entry magnitude among the tensors involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import exprjet as ej
from .tensor import lie_from_components

__all__ = [
    "Region", "SamplePlan", "ManifoldSpec", "StructureAt", "Report",
    "RegionEmptyError", "AllEntriesZeroError", "sample_points", "structure_at",
    "check_product_axioms", "check_hertling_manin", "check_metric_invariance",
    "check_killing_unit", "check_homogeneity", "normalized",
]

DEFAULT_TOL = 1e-8


class RegionEmptyError(Exception):
    pass


class AllEntriesZeroError(Exception):
    pass


@dataclass(frozen=True)
class Region:
    """Sampling box with admissibility constraints.

    `guards` are DSL expressions whose magnitude must stay >= `guard_min`
    at every sampled point (used to keep clear of singular loci), and
    `min_sep` is the minimum pairwise coordinate separation (relevant on
    semisimple charts where coordinate collisions are singular).
    """
    box: tuple
    min_sep: float = 0.1
    guards: tuple = ()
    guard_min: float = 0.1

    def to_dict(self) -> dict:
        return {"box": [list(b) for b in self.box], "min_sep": self.min_sep,
                "guards": list(self.guards), "guard_min": self.guard_min}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Region":
        return cls(box=tuple(tuple(b) for b in d["box"]),
                   min_sep=float(d.get("min_sep", 0.1)),
                   guards=tuple(d.get("guards", ())),
                   guard_min=float(d.get("guard_min", 0.1)))


@dataclass(frozen=True)
class SamplePlan:
    seed: int = 0
    count: int = 20
    region: Region | None = None  # overrides the spec region when set


def _scalar_to_json(v: complex):
    v = complex(v)
    return v.real if v.imag == 0 else [v.real, v.imag]


def _scalar_from_json(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


@dataclass
class ManifoldSpec:
    """Chart-level description of a product/metric structure.

    Expression-valued fields are stored as DSL source strings; parsing is
    cached inside the DSL layer so evaluation stays cheap.
    """
    name: str
    n: int
    coords: tuple
    product: object  # "canonical" | "shifted-canonical" | nested expr table
    e: tuple
    E: tuple | None = None
    g: tuple | None = None
    g2: tuple | None = None
    params: dict = field(default_factory=dict)
    region: Region | None = None
    expected: dict = field(default_factory=dict)

    def env(self, overrides: Mapping[str, complex] | None = None) -> dict:
        out = dict(self.params)
        if overrides:
            out.update(overrides)
        return out

    # -- serialization (JSON round-trip must be lossless) --

    def to_dict(self) -> dict:
        product = self.product
        if not isinstance(product, str):
            product = {"table": [[list(row) for row in mat] for mat in product]}
        return {
            "name": self.name,
            "n": self.n,
            "coords": list(self.coords),
            "product": product,
            "e": list(self.e),
            "E": list(self.E) if self.E is not None else None,
            "g": [list(r) for r in self.g] if self.g is not None else None,
            "g2": [list(r) for r in self.g2] if self.g2 is not None else None,
            "params": {k: _scalar_to_json(v) for k, v in sorted(self.params.items())},
            "region": self.region.to_dict() if self.region is not None else None,
            "expected": self.expected,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "ManifoldSpec":
        product = d["product"]
        if isinstance(product, Mapping):
            product = tuple(tuple(tuple(row) for row in mat) for mat in product["table"])
        return cls(
            name=d["name"],
            n=int(d["n"]),
            coords=tuple(d["coords"]),
            product=product,
            e=tuple(d["e"]),
            E=tuple(d["E"]) if d.get("E") is not None else None,
            g=tuple(tuple(r) for r in d["g"]) if d.get("g") is not None else None,
            g2=tuple(tuple(r) for r in d["g2"]) if d.get("g2") is not None else None,
            params={k: _scalar_from_json(v) for k, v in d.get("params", {}).items()},
            region=Region.from_dict(d["region"]) if d.get("region") is not None else None,
            expected=dict(d.get("expected", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "ManifoldSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class StructureAt:
    """All primitive tensors at one point: product to first order, the
    remaining fields to second order."""
    n: int
    point: np.ndarray
    c: np.ndarray
    dc: np.ndarray
    ddc: np.ndarray | None
    e: np.ndarray
    de: np.ndarray
    dde: np.ndarray
    E: np.ndarray | None = None
    dE: np.ndarray | None = None
    ddE: np.ndarray | None = None
    g: np.ndarray | None = None
    dg: np.ndarray | None = None
    ddg: np.ndarray | None = None
    g2: np.ndarray | None = None
    dg2: np.ndarray | None = None
    ddg2: np.ndarray | None = None


@dataclass(frozen=True)
class Report:
    """Residual statistics for one named check."""
    name: str
    residual: float
    tol: float
    passed: bool
    scale: float = 0.0
    npoints: int = 0
    details: dict = field(default_factory=dict)

    @classmethod
    def from_residual(cls, name: str, residual: float, tol: float,
                      scale: float = 0.0, npoints: int = 0,
                      details: dict | None = None) -> "Report":
        residual = float(residual)
        return cls(name=name, residual=residual, tol=float(tol),
                   passed=bool(residual <= tol), scale=float(scale),
                   npoints=int(npoints), details=details or {})

    def to_dict(self) -> dict:
        return {"name": self.name, "residual": self.residual, "tol": self.tol,
                "passed": self.passed, "scale": self.scale,
                "npoints": self.npoints, "details": self.details}


def merge_reports(name: str, reports: Sequence[Report], tol: float) -> Report:
    residual = max((r.residual for r in reports), default=0.0)
    scale = max((r.scale for r in reports), default=0.0)
    return Report.from_residual(name, residual, tol, scale=scale,
                                npoints=sum(r.npoints or 1 for r in reports))


def normalized(raw: float, scale: float) -> float:
    return float(raw) / (1.0 + float(scale))


# ---------------------------------------------------------------------------
# sampling


def sample_points(spec: ManifoldSpec, plan: SamplePlan) -> list:
    """Deterministic rejection sampling inside the admissible region."""
    region = plan.region or spec.region
    if region is None:
        raise ValueError(f"spec {spec.name!r} has no sampling region")
    rng = np.random.Generator(np.random.PCG64(plan.seed))
    lo = np.array([b[0] for b in region.box])
    hi = np.array([b[1] for b in region.box])
    env = spec.env()
    guards = [ej.parse(src) for src in region.guards]
    points = []
    attempts = 0
    while len(points) < plan.count:
        attempts += 1
        if attempts > 100000:
            raise RegionEmptyError(f"rejection sampling exhausted for {spec.name!r}")
        p = lo + rng.random(len(lo)) * (hi - lo)
        if region.min_sep > 0 and len(p) > 1:
            diffs = np.abs(p[:, None] - p[None, :])
            np.fill_diagonal(diffs, np.inf)
            if diffs.min() < region.min_sep:
                continue
        try:
            if any(abs(ej.eval_value(gexpr, p, env)) < region.guard_min for gexpr in guards):
                continue
        except ej.EvalError:
            continue
        points.append(p)
    return points


# ---------------------------------------------------------------------------
# pointwise structure evaluation


def _vector_jets(exprs: Sequence[str], point, env):
    n = len(point)
    vals = np.zeros(len(exprs), dtype=complex)
    d1 = np.zeros((len(exprs), n), dtype=complex)
    d2 = np.zeros((len(exprs), n, n), dtype=complex)
    for i, src in enumerate(exprs):
        jet = ej.eval_jet(ej.parse(src), point, env)
        vals[i], d1[i], d2[i] = jet.val, jet.grad, jet.hess
    return vals, d1, d2


def _matrix_jets(exprs, point, env):
    n = len(point)
    m = len(exprs)
    vals = np.zeros((m, m), dtype=complex)
    d1 = np.zeros((m, m, n), dtype=complex)
    d2 = np.zeros((m, m, n, n), dtype=complex)
    for i, row in enumerate(exprs):
        for j, src in enumerate(row):
            jet = ej.eval_jet(ej.parse(src), point, env)
            vals[i, j], d1[i, j], d2[i, j] = jet.val, jet.grad, jet.hess
    return vals, d1, d2


def product_jets(product, n: int, point, env):
    """Structure constants with first and second derivatives at a point."""
    c = np.zeros((n, n, n), dtype=complex)
    dc = np.zeros((n, n, n, n), dtype=complex)
    ddc = np.zeros((n, n, n, n, n), dtype=complex)
    if product == "canonical":
        for i in range(n):
            c[i, i, i] = 1.0
        return c, dc, ddc
    if product == "shifted-canonical":
        for i in range(n):
            for j in range(n):
                if i + j < n:
                    c[i + j, i, j] = 1.0
        return c, dc, ddc
    for i in range(n):
        for j in range(n):
            for k in range(n):
                jet = ej.eval_jet(ej.parse(product[i][j][k]), point, env)
                c[i, j, k], dc[i, j, k], ddc[i, j, k] = jet.val, jet.grad, jet.hess
    return c, dc, ddc


def structure_at(spec: ManifoldSpec, point, params: Mapping[str, complex] | None = None) -> StructureAt:
    env = spec.env(params)
    point = np.asarray(point, dtype=complex)
    c, dc, ddc = product_jets(spec.product, spec.n, point, env)
    e, de, dde = _vector_jets(spec.e, point, env)
    st = StructureAt(n=spec.n, point=point, c=c, dc=dc, ddc=ddc, e=e, de=de, dde=dde)
    if spec.E is not None:
        st.E, st.dE, st.ddE = _vector_jets(spec.E, point, env)
    if spec.g is not None:
        st.g, st.dg, st.ddg = _matrix_jets(spec.g, point, env)
    if spec.g2 is not None:
        st.g2, st.dg2, st.ddg2 = _matrix_jets(spec.g2, point, env)
    return st


# ---------------------------------------------------------------------------
# checks


def _iter_structures(spec, points, params) -> Iterable[StructureAt]:
    for p in points:
        yield structure_at(spec, p, params)


def check_product_axioms(spec: ManifoldSpec, points, tol: float = DEFAULT_TOL,
                         params=None) -> Report:
    """Commutativity, associativity and the unit axiom of the product."""
    worst, scale = 0.0, 0.0
    for st in _iter_structures(spec, points, params):
        comm = st.c - np.swapaxes(st.c, 1, 2)
        assoc = np.einsum("sjk,isl->ijkl", st.c, st.c) - np.einsum("sjl,isk->ijkl", st.c, st.c)
        unit = np.einsum("ijk,j->ik", st.c, st.e) - np.eye(st.n)
        sc = max(np.max(np.abs(st.c)), np.max(np.abs(st.e)))
        raw = max(np.max(np.abs(comm)), np.max(np.abs(assoc)), np.max(np.abs(unit)))
        worst = max(worst, normalized(raw, sc))
        scale = max(scale, sc)
    return Report.from_residual("product-axioms", worst, tol, scale=scale, npoints=len(points))


def hertling_manin_residual(c: np.ndarray, dc: np.ndarray) -> np.ndarray:
    """Left minus right side of the integrability condition on the product,
    indexed [p,s,k,j,l]."""
    t1 = np.einsum("qjl,pskq->pskjl", c, dc)
    t2 = np.einsum("qsk,pjlq->pskjl", c, dc)
    t3 = np.einsum("pjq,qskl->pskjl", c, dc)
    t4 = np.einsum("pqk,qjls->pskjl", c, dc)
    t5 = np.einsum("plq,qskj->pskjl", c, dc)
    t6 = np.einsum("pqs,qjlk->pskjl", c, dc)
    return t1 - t2 - (t3 - t4 + t5 - t6)


def check_hertling_manin(spec: ManifoldSpec, points, tol: float = DEFAULT_TOL,
                         params=None) -> Report:
    worst, scale = 0.0, 0.0
    for st in _iter_structures(spec, points, params):
        res = hertling_manin_residual(st.c, st.dc)
        sc = max(np.max(np.abs(st.c)), np.max(np.abs(st.dc)))
        worst = max(worst, normalized(np.max(np.abs(res)), sc))
        scale = max(scale, sc)
    return Report.from_residual("hertling-manin", worst, tol, scale=scale, npoints=len(points))


def check_metric_invariance(spec: ManifoldSpec, points, tol: float = DEFAULT_TOL,
                            params=None, second: bool = False) -> Report:
    worst, scale = 0.0, 0.0
    name = "metric-invariance" + ("-g2" if second else "")
    for st in _iter_structures(spec, points, params):
        g = st.g2 if second else st.g
        if g is None:
            raise ValueError("spec has no metric to check")
        res = np.einsum("iq,qlp->ilp", g, st.c) - np.einsum("lq,qip->ilp", g, st.c)
        sc = max(np.max(np.abs(g)), np.max(np.abs(st.c)))
        worst = max(worst, normalized(np.max(np.abs(res)), sc))
        scale = max(scale, sc)
    return Report.from_residual(name, worst, tol, scale=scale, npoints=len(points))


def lie_metric(st: StructureAt, x, dx) -> np.ndarray:
    return lie_from_components(st.g, st.dg, ("d", "d"), x, dx)


def check_killing_unit(spec: ManifoldSpec, points, tol: float = DEFAULT_TOL,
                       params=None) -> Report:
    worst, scale = 0.0, 0.0
    for st in _iter_structures(spec, points, params):
        lg = lie_metric(st, st.e, st.de)
        sc = np.max(np.abs(st.g))
        worst = max(worst, normalized(np.max(np.abs(lg)), sc))
        scale = max(scale, sc)
    return Report.from_residual("killing-unit", worst, tol, scale=scale, npoints=len(points))


def fit_scalar(target: np.ndarray, model: np.ndarray, floor: float = 1e-8) -> complex:
    """Least-squares scalar s minimizing |target - s*model| over entries of
    magnitude above `floor * max|model|`."""
    mask = np.abs(model) > floor * (np.max(np.abs(model)) + 1e-300)
    if not np.any(mask):
        raise ValueError("all entries below the fitting floor")
    num = np.sum(np.conj(model[mask]) * target[mask])
    den = np.sum(np.abs(model[mask]) ** 2)
    return complex(num / den)


def check_homogeneity(spec: ManifoldSpec, points, tol: float = DEFAULT_TOL,
                      params=None) -> Report:
    """Fit D in (L_E g) = D g, check the residual, and check (L_E c) = c."""
    worst, scale = 0.0, 0.0
    fits = []
    for st in _iter_structures(spec, points, params):
        if st.E is None or st.g is None:
            raise ValueError("homogeneity check needs both E and g")
        lg = lie_from_components(st.g, st.dg, ("d", "d"), st.E, st.dE)
        if np.max(np.abs(st.g)) == 0:
            raise AllEntriesZeroError("metric vanishes at a sample point")
        D = fit_scalar(lg, st.g)
        fits.append(D)
        res_g = np.max(np.abs(lg - D * st.g))
        lc = lie_from_components(st.c, st.dc, ("u", "d", "d"), st.E, st.dE)
        res_c = np.max(np.abs(lc - st.c))
        sc = max(np.max(np.abs(st.g)), np.max(np.abs(lg)), np.max(np.abs(st.c)))
        worst = max(worst, normalized(max(res_g, res_c), sc))
        scale = max(scale, sc)
    D_mean = sum(fits) / len(fits)
    spread = max(abs(f - D_mean) for f in fits)
    worst = max(worst, normalized(spread, abs(D_mean)))
    details = {"D_fit": [D_mean.real, D_mean.imag]}
    if "D" in spec.expected:
        details["D_expected"] = spec.expected["D"]
        worst = max(worst, normalized(abs(D_mean - complex(spec.expected["D"])), abs(D_mean)))
    return Report.from_residual("homogeneity", worst, tol, scale=scale,
                                npoints=len(points), details=details)
