"""Semisimple canonical-coordinate machinery: Lame coefficients, rotation
coefficients, and the overdetermined first-order systems they satisfy.

Branch policy for H_i = sqrt(g_ii): when the spec carries closed-form Lame
expressions those are evaluated directly (no square root ambiguity); when H
is derived from the metric, the principal branch is taken at each point and
`rotation_data_along` continues the sign choice along the sampled sequence.
Chosen signs are recorded on the data object.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import exprjet as ej
from .manifold import ManifoldSpec, Report, StructureAt, normalized, structure_at
from .tensor import eigenvalues

__all__ = [
    "RotationData", "NonDiagonalMetricError", "ZeroLameError",
    "rotation_data", "rotation_data_along", "v_matrix",
    "check_darboux_system", "check_lame_system", "check_flatness_constraint",
    "check_algebraic_constraints", "check_potentiality",
    "check_reduction_identity", "integrate_lame", "rk4_path",
]

DEFAULT_TOL = 1e-8


class NonDiagonalMetricError(Exception):
    pass


class ZeroLameError(Exception):
    pass


@dataclass
class RotationData:
    n: int
    point: np.ndarray
    H: np.ndarray        # H[i]
    dH: np.ndarray       # dH[i,j] = d_j H_i
    ddH: np.ndarray      # ddH[i,j,k]
    beta: np.ndarray     # beta[i,j] = d_j H_i / H_j, diagonal zeroed
    dbeta: np.ndarray    # dbeta[i,j,k] = d_k beta_ij
    V: np.ndarray        # V[i,j] = (u^j - u^i) beta_ij
    signs: np.ndarray    # branch signs applied on top of the principal sqrt


def _lame_jets_from_metric(st: StructureAt, signs=None):
    n = st.n
    off = st.g - np.diag(np.diag(st.g))
    if np.max(np.abs(off)) > 1e-12 * (1 + np.max(np.abs(st.g))):
        raise NonDiagonalMetricError("metric is not diagonal at this point")
    H = np.zeros(n, dtype=complex)
    dH = np.zeros((n, n), dtype=complex)
    ddH = np.zeros((n, n, n), dtype=complex)
    signs = np.ones(n) if signs is None else np.asarray(signs)
    for i in range(n):
        if st.g[i, i] == 0:
            raise ZeroLameError(f"g_{i}{i} vanishes at this point")
        jet = ej.Jet2(n, st.g[i, i], st.dg[i, i].copy(), st.ddg[i, i].copy()).sqrt()
        H[i] = signs[i] * jet.val
        dH[i] = signs[i] * jet.grad
        ddH[i] = signs[i] * jet.hess
    return H, dH, ddH, signs


def _lame_jets_from_exprs(exprs, point, env):
    n = len(point)
    H = np.zeros(n, dtype=complex)
    dH = np.zeros((n, n), dtype=complex)
    ddH = np.zeros((n, n, n), dtype=complex)
    for i, src in enumerate(exprs):
        jet = ej.eval_jet(ej.parse(src), point, env)
        H[i], dH[i], ddH[i] = jet.val, jet.grad, jet.hess
    return H, dH, ddH, np.ones(n)


def rotation_data(spec: ManifoldSpec, point, params=None,
                  lame_exprs: Sequence[str] | None = None,
                  signs=None) -> RotationData:
    """Lame coefficients, rotation coefficients and their first derivatives
    at one point of a semisimple chart."""
    point = np.asarray(point, dtype=complex)
    if lame_exprs is not None:
        H, dH, ddH, signs = _lame_jets_from_exprs(lame_exprs, point, spec.env(params))
    else:
        st = structure_at(spec, point, params)
        H, dH, ddH, signs = _lame_jets_from_metric(st, signs)
    n = len(H)
    beta = np.zeros((n, n), dtype=complex)
    dbeta = np.zeros((n, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            beta[i, j] = dH[i, j] / H[j]
            dbeta[i, j] = (ddH[i, j] * H[j] - dH[i, j] * dH[j]) / H[j] ** 2
    u = point
    V = (u[None, :] - u[:, None]) * beta
    return RotationData(n=n, point=point, H=H, dH=dH, ddH=ddH,
                        beta=beta, dbeta=dbeta, V=V, signs=np.asarray(signs))


def rotation_data_along(spec: ManifoldSpec, points, params=None,
                        lame_exprs=None) -> list:
    """Rotation data over a point sequence with sign-continued branches."""
    out = []
    prev = None
    for p in points:
        rd = rotation_data(spec, p, params, lame_exprs=lame_exprs)
        if prev is not None and lame_exprs is None:
            signs = np.where(np.abs(rd.H - prev.H) <= np.abs(rd.H + prev.H), 1.0, -1.0)
            if np.any(signs < 0):
                rd = rotation_data(spec, p, params, signs=signs)
        out.append(rd)
        prev = rd
    return out


def v_matrix(rd: RotationData):
    """V, its sorted eigenvalues, and the homogeneity weight fitted as the
    median of E(H_i)/H_i (robust to one near-zero coefficient)."""
    eig = eigenvalues(rd.V)
    ratios = sorted((np.sum(rd.point * rd.dH[i]) / rd.H[i] for i in range(rd.n)),
                    key=lambda v: (v.real, v.imag))
    d_fit = ratios[len(ratios) // 2]
    return rd.V, eig, d_fit


def _offdiag_pairs(n):
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def check_darboux_system(spec, points, tol: float = DEFAULT_TOL, params=None,
                         lame_exprs=None) -> Report:
    """Residuals of d_k beta_ij = beta_ik beta_kj, e(beta) = 0 and
    E(beta) = -beta on the canonical chart."""
    worst, scale = 0.0, 0.0
    for rd in rotation_data_along(spec, points, params, lame_exprs):
        u = rd.point
        sc = float(np.max(np.abs(rd.beta)))
        raw = 0.0
        for i, j in _offdiag_pairs(rd.n):
            for k in range(rd.n):
                if k in (i, j):
                    continue
                raw = max(raw, abs(rd.dbeta[i, j, k] - rd.beta[i, k] * rd.beta[k, j]))
            raw = max(raw, abs(np.sum(rd.dbeta[i, j])))
            raw = max(raw, abs(np.sum(u * rd.dbeta[i, j]) + rd.beta[i, j]))
        worst = max(worst, normalized(raw, sc + sc * sc))
        scale = max(scale, sc)
    return Report.from_residual("darboux-system", worst, tol, scale=scale, npoints=len(points))


def check_lame_system(spec, points, d=None, beta_source: Callable | None = None,
                      tol: float = DEFAULT_TOL, params=None, lame_exprs=None) -> Report:
    """Residuals of d_j H_i = beta_ij H_j, e(H_i) = 0, E(H_i) = d H_i.

    `beta_source(point) -> beta` supplies externally computed rotation
    coefficients; without it the check of the first equation is vacuous
    (beta is then defined from H itself) but the unit and Euler equations
    remain informative.  With d omitted it is fitted per point and checked
    for consistency.
    """
    worst, scale = 0.0, 0.0
    fits = []
    for rd in rotation_data_along(spec, points, params, lame_exprs):
        u = rd.point
        sc = float(np.max(np.abs(rd.H))) * (1 + float(np.max(np.abs(rd.beta))))
        beta = rd.beta if beta_source is None else beta_source(u)
        raw = 0.0
        for i, j in _offdiag_pairs(rd.n):
            raw = max(raw, abs(rd.dH[i, j] - beta[i, j] * rd.H[j]))
        for i in range(rd.n):
            raw = max(raw, abs(np.sum(rd.dH[i])))
        _, _, d_fit = v_matrix(rd)
        d_point = d if d is not None else d_fit
        fits.append(d_fit)
        for i in range(rd.n):
            raw = max(raw, abs(np.sum(u * rd.dH[i]) - complex(d_point) * rd.H[i]))
        worst = max(worst, normalized(raw, sc))
        scale = max(scale, sc)
    mean = sum(fits) / len(fits)
    worst = max(worst, normalized(max(abs(f - mean) for f in fits), abs(mean)))
    return Report.from_residual("lame-system", worst, tol, scale=scale,
                                npoints=len(points),
                                details={"d_fit": [mean.real, mean.imag]})


def check_flatness_constraint(spec, points, tol: float = DEFAULT_TOL, params=None,
                              lame_exprs=None) -> Report:
    """d_i beta_ji + d_j beta_ij + sum_{k != i,j} beta_ik beta_jk = 0."""
    worst, scale = 0.0, 0.0
    for rd in rotation_data_along(spec, points, params, lame_exprs):
        sc = float(np.max(np.abs(rd.beta)))
        raw = 0.0
        for i, j in _offdiag_pairs(rd.n):
            acc = rd.dbeta[j, i, i] + rd.dbeta[i, j, j]
            for k in range(rd.n):
                if k not in (i, j):
                    acc += rd.beta[i, k] * rd.beta[j, k]
            raw = max(raw, abs(acc))
        worst = max(worst, normalized(raw, sc + sc * sc))
        scale = max(scale, sc)
    return Report.from_residual("flatness-constraint", worst, tol, scale=scale, npoints=len(points))


def check_algebraic_constraints(spec, points, which: str = "ED4bis",
                                tol: float = DEFAULT_TOL, params=None,
                                lame_exprs=None) -> Report:
    """The algebraic reductions of the flatness constraint ("ED4bis") and of
    the second-flat-metric constraint ("ED5b")."""
    worst, scale = 0.0, 0.0
    for rd in rotation_data_along(spec, points, params, lame_exprs):
        u, beta = rd.point, rd.beta
        dbt = beta - beta.T
        sc = float(np.max(np.abs(beta)))
        raw = 0.0
        for i, j in _offdiag_pairs(rd.n):
            acc = 0.0
            for k in range(rd.n):
                if k in (i, j):
                    continue
                if which == "ED4bis":
                    acc += (u[j] - u[k]) * dbt[i, k] * beta[j, k] + (u[k] - u[i]) * dbt[j, k] * beta[i, k]
                else:
                    acc += u[i] * (u[j] - u[k]) * dbt[i, k] * beta[j, k] - u[j] * (u[i] - u[k]) * dbt[j, k] * beta[i, k]
            target = dbt[i, j] if which == "ED4bis" else 0.5 * (u[i] + u[j]) * dbt[i, j]
            raw = max(raw, abs(acc - target))
        worst = max(worst, normalized(raw, sc + sc * sc))
        scale = max(scale, sc)
    return Report.from_residual(f"algebraic-{which}", worst, tol, scale=scale, npoints=len(points))


def check_potentiality(spec, points, tol: float = DEFAULT_TOL, params=None,
                       lame_exprs=None) -> Report:
    """beta_ij beta_jk beta_ki = beta_ji beta_ik beta_kj over distinct triples."""
    worst, scale = 0.0, 0.0
    for rd in rotation_data_along(spec, points, params, lame_exprs):
        b = rd.beta
        sc = float(np.max(np.abs(b))) ** 3
        raw = 0.0
        for i in range(rd.n):
            for j in range(rd.n):
                for k in range(rd.n):
                    if len({i, j, k}) < 3:
                        continue
                    raw = max(raw, abs(b[i, j] * b[j, k] * b[k, i] - b[j, i] * b[i, k] * b[k, j]))
        worst = max(worst, normalized(raw, sc))
        scale = max(scale, sc)
    return Report.from_residual("potentiality", worst, tol, scale=scale, npoints=len(points))


def check_reduction_identity(spec, points, tol: float = DEFAULT_TOL, params=None,
                             lame_exprs=None) -> Report:
    """Identity implied by the unit/Euler equations for beta:
    d_j beta_ij = [sum_{k != i,j} (u^i - u^k) d_k beta_ij - beta_ij] / (u^j - u^i)."""
    worst, scale = 0.0, 0.0
    for rd in rotation_data_along(spec, points, params, lame_exprs):
        u = rd.point
        sc = float(np.max(np.abs(rd.beta)))
        raw = 0.0
        for i, j in _offdiag_pairs(rd.n):
            acc = -rd.beta[i, j]
            for k in range(rd.n):
                if k not in (i, j):
                    acc += (u[i] - u[k]) * rd.dbeta[i, j, k]
            raw = max(raw, abs(rd.dbeta[i, j, j] - acc / (u[j] - u[i])))
        worst = max(worst, normalized(raw, sc + sc * sc))
        scale = max(scale, sc)
    return Report.from_residual("reduction-identity", worst, tol, scale=scale, npoints=len(points))


# ---------------------------------------------------------------------------
# path integration of the Lame system


def rk4_path(rhs: Callable, y0: np.ndarray, t0: float, t1: float, steps: int) -> np.ndarray:
    """Classical fixed-step RK4 for y' = rhs(t, y), deterministic by design."""
    y = np.array(y0, dtype=complex)
    h = (t1 - t0) / steps
    t = t0
    for _ in range(steps):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def _lame_gradient(beta: np.ndarray, H: np.ndarray) -> np.ndarray:
    """grad[i,j] = d_j H_i per the first-order system: beta_ij H_j off the
    diagonal, and the diagonal closed through e(H_i) = 0."""
    grad = beta * H[None, :]
    np.fill_diagonal(grad, 0.0)
    np.fill_diagonal(grad, -grad.sum(axis=1))
    return grad


def eigenspace_projection(V: np.ndarray, d: complex, vec: np.ndarray,
                          tol: float = 1e-6) -> np.ndarray:
    """Project `vec` onto the kernel of (V - d*Id); returns `vec` unchanged
    when d is not an eigenvalue to within `tol`."""
    n = V.shape[0]
    m = V - complex(d) * np.eye(n)
    u_svd, s, vh = np.linalg.svd(m)
    null_mask = s <= tol * max(s.max(), 1.0)
    if not np.any(null_mask):
        return vec
    basis = vh[null_mask].conj().T  # columns span the kernel
    coeff, *_ = np.linalg.lstsq(basis, vec, rcond=None)
    return basis @ coeff


def integrate_lame(beta_provider: Callable, d: complex, u0: np.ndarray,
                   H0: np.ndarray, path=None, steps_per_side: int = 200,
                   loop_side: float = 0.2, project: bool = True,
                   tol: float = 1e-6) -> dict:
    """Integrate the Lame system along a path (default: a closed axis-aligned
    rectangle of side `loop_side` in the (u^1,u^2) plane) and report the loop
    closure together with the Euler-weight residual at the endpoints."""
    u0 = np.asarray(u0, dtype=complex)
    n = len(u0)
    H0 = np.asarray(H0, dtype=complex)
    V0 = (u0[None, :] - u0[:, None]) * beta_provider(u0)
    eig = eigenvalues(V0)
    if project:
        H0 = eigenspace_projection(V0, d, H0)
        if np.max(np.abs(H0)) < 1e-12:
            raise ValueError("initial Lame vector has no component in the requested eigenspace")
    if path is None:
        e1 = np.zeros(n)
        e2 = np.zeros(n)
        e1[0] = 1.0
        e2[1] = 1.0
        s = loop_side
        path = [u0, u0 + s * e1, u0 + s * e1 + s * e2, u0 + s * e2, u0]

    def segment_rhs(a, b):
        dv = b - a

        def rhs(t, H):
            u = a + t * dv
            grad = _lame_gradient(beta_provider(u), H)
            return grad @ dv

        return rhs

    H = H0.copy()
    for a, b in zip(path[:-1], path[1:]):
        H = rk4_path(segment_rhs(np.asarray(a, complex), np.asarray(b, complex)),
                     H, 0.0, 1.0, steps_per_side)
    u_end = np.asarray(path[-1], dtype=complex)
    closed = np.allclose(np.asarray(path[0], complex), u_end)
    scale = 1.0 + float(np.max(np.abs(H0)))
    closure = float(np.max(np.abs(H - H0))) / scale if closed else float("nan")

    def euler_residual(u, Hv):
        V = (u[None, :] - u[:, None]) * beta_provider(u)
        return float(np.max(np.abs(V @ Hv - complex(d) * Hv))) / (1.0 + float(np.max(np.abs(Hv))))

    out = {
        "H_end": H,
        "closure": closure,
        "euler_residual_start": euler_residual(u0, H0),
        "euler_residual_end": euler_residual(u_end, H),
        "eigenvalues": eig,
        "passed": (not closed or closure <= tol),
    }
    return out
