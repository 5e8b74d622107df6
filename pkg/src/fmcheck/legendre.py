"""Legendre-type transformations: rebuilding the connection and the metric
through multiplication by an invertible connection-flat field.

The transform hypothesis (the field is flat for the structure connection)
is enforced before any metric is transformed; silently transforming with a
non-flat field would produce meaningless reports.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import exprjet as ej
from .connection import ConnectionAt, natural_connection, riemann_components
from .manifold import (ManifoldSpec, Report, StructureAt, fit_scalar,
                       normalized, structure_at)
from .rotation import rk4_path

__all__ = [
    "NotInvertibleError", "HypothesisViolatedError", "field_jets",
    "check_legendre_field", "transform_connection", "transform_connection_report",
    "transform_metric", "transform_metric_report",
    "transformed_structure", "flat_field_ode", "check_homogeneous_legendre",
    "transform_metric_exprs",
]

DEFAULT_TOL = 1e-8


class NotInvertibleError(Exception):
    def __init__(self, det: complex):
        super().__init__(f"field is not product-invertible (|det| = {abs(det):.3e})")
        self.det = det


class HypothesisViolatedError(Exception):
    pass


def field_jets(exprs: Sequence[str], point, env=None):
    n = len(point)
    x = np.zeros(n, dtype=complex)
    dx = np.zeros((n, n), dtype=complex)
    ddx = np.zeros((n, n, n), dtype=complex)
    for i, src in enumerate(exprs):
        jet = ej.eval_jet(ej.parse(src), point, env or {})
        x[i], dx[i], ddx[i] = jet.val, jet.grad, jet.hess
    return x, dx, ddx


def _mult_operator(st: StructureAt, x, dx, ddx=None):
    """W^l_k = c^l_ks x^s with derivatives; the operator of multiplication
    by the field."""
    w = np.einsum("lks,s->lk", st.c, x)
    dw = np.einsum("lksj,s->lkj", st.dc, x) + np.einsum("lks,sj->lkj", st.c, dx)
    if ddx is None:
        return w, dw, None
    if st.ddc is None:
        raise ValueError("second-order product jets unavailable for this structure")
    ddw = (np.einsum("lksjm,s->lkjm", st.ddc, x)
           + np.einsum("lksj,sm->lkjm", st.dc, dx)
           + np.einsum("lksm,sj->lkjm", st.dc, dx)
           + np.einsum("lks,sjm->lkjm", st.c, ddx))
    return w, dw, ddw


def _inverse_operator(w: np.ndarray):
    det = complex(np.linalg.det(w))
    scale = (1.0 + float(np.max(np.abs(w)))) ** w.shape[0]
    if abs(det) <= 1e-12 * scale:
        raise NotInvertibleError(det)
    return np.linalg.inv(w)


def check_legendre_field(spec: ManifoldSpec, field_exprs, points,
                         tol: float = DEFAULT_TOL, params=None) -> Report:
    """Symmetry of the product-twisted covariant derivative of the field,
    plus product invertibility, with the structure connection."""
    worst, scale = 0.0, 0.0
    det_min = np.inf
    for p in points:
        st = structure_at(spec, p, params)
        conn = natural_connection(st)
        x, dx, _ = field_jets(field_exprs, st.point, spec.env(params))
        nab = dx + np.einsum("lks,s->lk", conn.gamma, x)
        res = np.einsum("ijl,lk->ijk", st.c, nab) - np.einsum("ikl,lj->ijk", st.c, nab)
        w, _, _ = _mult_operator(st, x, dx)
        _inverse_operator(w)
        det_min = min(det_min, abs(np.linalg.det(w)))
        sc = float(np.max(np.abs(st.c))) * (1 + float(np.max(np.abs(nab))))
        worst = max(worst, normalized(np.max(np.abs(res)), sc))
        scale = max(scale, sc)
    return Report.from_residual("legendre-field", worst, tol, scale=scale,
                                npoints=len(points), details={"min_abs_det": float(det_min)})


def transform_connection(conn: ConnectionAt, st: StructureAt, x, dx, ddx) -> ConnectionAt:
    """Conjugated connection: the derivative is taken after multiplying by
    the field and the inverse field is multiplied back afterwards."""
    w, dw, ddw = _mult_operator(st, x, dx, ddx)
    k = _inverse_operator(w)
    dk = -np.einsum("ia,abm,bl->ilm", k, dw, k)
    inner = np.einsum("lkj->ljk", dw) + np.einsum("ljm,mk->ljk", conn.gamma, w)
    gamma = np.einsum("il,ljk->ijk", k, inner)
    dinner = (np.einsum("lkjm->ljkm", ddw)
              + np.einsum("ljam,ak->ljkm", conn.dgamma, w)
              + np.einsum("lja,akm->ljkm", conn.gamma, dw))
    dgamma = np.einsum("ilm,ljk->ijkm", dk, inner) + np.einsum("il,ljkm->ijkm", k, dinner)
    return ConnectionAt(st.n, st.point, gamma, dgamma, provenance="legendre-transformed")


def transform_connection_report(conn: ConnectionAt, st: StructureAt, x, dx, ddx,
                                tol: float = DEFAULT_TOL):
    """Transformed connection plus residuals: torsion, product
    compatibility, and the curvature conjugation identity."""
    from .connection import check_compat_product
    new = transform_connection(conn, st, x, dx, ddx)
    w, _, _ = _mult_operator(st, x, dx)
    k = _inverse_operator(w)
    tors = np.max(np.abs(new.gamma - np.swapaxes(new.gamma, 1, 2)))
    compat = check_compat_product(new, st, tol)
    r_new = riemann_components(new.gamma, new.dgamma)
    r_old = riemann_components(conn.gamma, conn.dgamma)
    conj = np.einsum("ha,abkj,bi->hikj", k, r_old, w)
    sc = max(float(np.max(np.abs(new.gamma))), 1.0)
    res = max(normalized(tors, sc), compat.residual,
              normalized(np.max(np.abs(r_new - conj)), max(float(np.max(np.abs(r_old))), 1.0)))
    return new, Report.from_residual("transform-connection", res, tol, scale=sc, npoints=1)


def transform_metric(st: StructureAt, conn: ConnectionAt, x, dx, ddx,
                     tol: float = DEFAULT_TOL, hypothesis_tol: float = 1e-8):
    """Transformed metric gbar(Y,Z) = g(X o Y, X o Z) with full jets, after
    enforcing flatness of the field for `conn`."""
    nab = dx + np.einsum("lks,s->lk", conn.gamma, x)
    hyp = normalized(np.max(np.abs(nab)), float(np.max(np.abs(x))))
    if hyp > hypothesis_tol:
        raise HypothesisViolatedError(f"field is not connection-flat (residual {hyp:.3e})")
    w, dw, ddw = _mult_operator(st, x, dx, ddx)
    gbar = np.einsum("ki,lj,kl->ij", w, w, st.g)
    dgbar = (np.einsum("kim,lj,kl->ijm", dw, w, st.g)
             + np.einsum("ki,ljm,kl->ijm", w, dw, st.g)
             + np.einsum("ki,lj,klm->ijm", w, w, st.dg))
    ddgbar = (np.einsum("kimp,lj,kl->ijmp", ddw, w, st.g)
              + np.einsum("kim,ljp,kl->ijmp", dw, dw, st.g)
              + np.einsum("kim,lj,klp->ijmp", dw, w, st.dg)
              + np.einsum("kip,ljm,kl->ijmp", dw, dw, st.g)
              + np.einsum("ki,ljmp,kl->ijmp", w, ddw, st.g)
              + np.einsum("ki,ljm,klp->ijmp", w, dw, st.dg)
              + np.einsum("kip,lj,klm->ijmp", dw, w, st.dg)
              + np.einsum("ki,ljp,klm->ijmp", w, dw, st.dg)
              + np.einsum("ki,lj,klmp->ijmp", w, w, st.ddg))
    return gbar, dgbar, ddgbar


def transformed_structure(spec: ManifoldSpec, field_exprs, point, params=None) -> StructureAt:
    """StructureAt with the metric replaced by its Legendre transform."""
    st = structure_at(spec, point, params)
    conn = natural_connection(st)
    x, dx, ddx = field_jets(field_exprs, st.point, spec.env(params))
    gbar, dgbar, ddgbar = transform_metric(st, conn, x, dx, ddx)
    return StructureAt(n=st.n, point=st.point, c=st.c, dc=st.dc, ddc=st.ddc,
                       e=st.e, de=st.de, dde=st.dde,
                       E=st.E, dE=st.dE, ddE=st.ddE,
                       g=gbar, dg=dgbar, ddg=ddgbar)


def transform_metric_report(spec: ManifoldSpec, field_exprs, points,
                            tol: float = DEFAULT_TOL, params=None) -> Report:
    """Theorem-level consequences of the metric transform: invariance,
    unit-Killing property, and agreement of the new structure connection
    with the conjugated connection."""
    from .manifold import lie_metric
    worst, scale = 0.0, 0.0
    for p in points:
        st = structure_at(spec, p, params)
        conn = natural_connection(st)
        x, dx, ddx = field_jets(field_exprs, st.point, spec.env(params))
        st_bar = transformed_structure(spec, field_exprs, p, params)
        inv = (np.einsum("iq,qlp->ilp", st_bar.g, st.c)
               - np.einsum("lq,qip->ilp", st_bar.g, st.c))
        killing = lie_metric(st_bar, st.e, st.de)
        nat_bar = natural_connection(st_bar)
        conj = transform_connection(conn, st, x, dx, ddx)
        sc = max(float(np.max(np.abs(st_bar.g))), 1.0)
        raw = max(normalized(np.max(np.abs(inv)), sc),
                  normalized(np.max(np.abs(killing)), sc),
                  normalized(np.max(np.abs(nat_bar.gamma - conj.gamma)),
                             float(np.max(np.abs(conj.gamma))) + 1.0))
        worst = max(worst, raw)
        scale = max(scale, sc)
    return Report.from_residual("transform-metric", worst, tol, scale=scale,
                                npoints=len(points))


def flat_field_ode(gamma_provider: Callable, x0, path, steps_per_segment: int = 200,
                   endpoint_check: bool = True) -> dict:
    """Integrate the parallel-field system d_j X^i = -Gamma^i_js X^s along a
    polygonal path; for a closed path the return-to-start residual probes
    integrability (flatness) of the connection.  The endpoint gradient is
    re-derived by short two-sided integrations and compared with the
    parallel-transport equation."""

    def segment_rhs(a, b):
        dv = b - a

        def rhs(t, xv):
            gamma = gamma_provider(a + t * dv)
            return -np.einsum("ijs,j,s->i", gamma, dv, xv)

        return rhs

    def transport(xv, a, b, steps):
        return rk4_path(segment_rhs(np.asarray(a, complex), np.asarray(b, complex)),
                        xv, 0.0, 1.0, steps)

    x = np.asarray(x0, dtype=complex)
    for a, b in zip(path[:-1], path[1:]):
        x = transport(x, a, b, steps_per_segment)
    start, end = np.asarray(path[0], complex), np.asarray(path[-1], complex)
    closed = np.allclose(start, end)
    closure = float(np.max(np.abs(x - np.asarray(x0, complex)))) / (1 + float(np.max(np.abs(x0)))) \
        if closed else float("nan")
    out = {"X_end": x, "closure": closure, "closed": closed}
    if endpoint_check:
        n = len(x)
        h = 1e-4
        dx = np.zeros((n, n), dtype=complex)
        for j in range(n):
            step = np.zeros(n)
            step[j] = h
            plus = transport(x, end, end + step, 8)
            minus = transport(x, end, end - step, 8)
            dx[:, j] = (plus - minus) / (2 * h)
        want = -np.einsum("ijs,s->ij", gamma_provider(end), x)
        out["endpoint_gradient_residual"] = float(np.max(np.abs(dx - want))) / \
            (1 + float(np.max(np.abs(want))))
    return out


def check_homogeneous_legendre(spec: ManifoldSpec, field_exprs, points,
                               tol: float = DEFAULT_TOL, params=None) -> Report:
    """Fit the Euler weight of the field and check that the transformed
    metric's homogeneity exponent shifts by twice the weight plus two."""
    from .tensor import lie_from_components
    worst, scale = 0.0, 0.0
    dbars, Ds, Dbars = [], [], []
    for p in points:
        st = structure_at(spec, p, params)
        x, dx, _ = field_jets(field_exprs, st.point, spec.env(params))
        lie_x = np.einsum("k,ik->i", st.E, dx) - np.einsum("k,ki->i", x, st.dE)
        dbar = fit_scalar(lie_x, x)
        dbars.append(dbar)
        res_x = np.max(np.abs(lie_x - dbar * x))
        st_bar = transformed_structure(spec, field_exprs, p, params)
        lg = lie_from_components(st.g, st.dg, ("d", "d"), st.E, st.dE)
        lgbar = lie_from_components(st_bar.g, st_bar.dg, ("d", "d"), st.E, st.dE)
        D = fit_scalar(lg, st.g)
        Dbar = fit_scalar(lgbar, st_bar.g)
        Ds.append(D)
        Dbars.append(Dbar)
        sc = max(float(np.max(np.abs(x))), 1.0)
        worst = max(worst,
                    normalized(res_x, sc),
                    normalized(abs(Dbar - (D + 2 * dbar + 2)), abs(Dbar) + 1.0))
        scale = max(scale, sc)
    db = sum(dbars) / len(dbars)
    worst = max(worst, normalized(max(abs(v - db) for v in dbars), abs(db)))
    D_m = sum(Ds) / len(Ds)
    Db_m = sum(Dbars) / len(Dbars)
    details = {"dbar_fit": [db.real, db.imag],
               "D_fit": [D_m.real, D_m.imag],
               "Dbar_fit": [Db_m.real, Db_m.imag]}
    return Report.from_residual("homogeneous-legendre", worst, tol, scale=scale,
                                npoints=len(points), details=details)


def transform_metric_exprs(spec: ManifoldSpec, field_exprs, name: str | None = None) -> ManifoldSpec:
    """Expression-level metric transform: composes the transformed metric
    as an AST so the result is an ordinary spec (constant structure
    constants only, which covers the canonical and shifted products)."""
    if not isinstance(spec.product, str):
        raise ValueError("expression-level transform needs a constant product table")
    n = spec.n
    c = np.zeros((n, n, n))
    if spec.product == "canonical":
        for i in range(n):
            c[i, i, i] = 1.0
    else:
        for i in range(n):
            for j in range(n):
                if i + j < n:
                    c[i + j, i, j] = 1.0
    xs = [ej.parse(src) for src in field_exprs]
    gs = [[ej.parse(src) for src in row] for row in spec.g]
    gbar = [["0"] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            acc = None
            for k in range(n):
                for s in range(n):
                    if c[k, i, s] == 0:
                        continue
                    for l in range(n):
                        for t in range(n):
                            if c[l, j, t] == 0:
                                continue
                            term = xs[s] * xs[t] * gs[k][l]
                            acc = term if acc is None else acc + term
            gbar[i][j] = ej.to_source(acc) if acc is not None else "0"
    return ManifoldSpec(
        name=name or f"{spec.name}-legendre", n=n, coords=spec.coords,
        product=spec.product, e=spec.e, E=spec.E,
        g=tuple(tuple(r) for r in gbar), g2=None,
        params=dict(spec.params), region=spec.region, expected={})
