import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import fmcheck.catalog as cat
from fmcheck.exprjet import eval_jet, parse
from fmcheck.manifold import SamplePlan, sample_points, structure_at
from fmcheck.pencil import pencil_at, _delta_jets
from fmcheck.tensor import (SingularMatrixError, Tensor, charpoly_coefficients,
                            cluster_values, contract, eigenvalues, invert_matrix,
                            lie_from_components, symmetrize)


def _canonical_c(n):
    c = np.zeros((n, n, n), dtype=complex)
    for i in range(n):
        c[i, i, i] = 1
    return Tensor(c, ("u", "d", "d"))


def test_contract_unit_axiom():
    c = _canonical_c(2)
    e = Tensor(np.array([1.0, 1.0]), ("u",))
    out = contract(c, 1, e, 0)
    assert np.allclose(out.data, np.eye(2))
    assert out.signature == ("u", "d")


def test_contract_metric_inverse():
    ent = cat.entry("lobachevsky")
    st_ = structure_at(ent.spec, np.array([2.0, 0.0]))
    g = Tensor(st_.g, ("d", "d"))
    ginv = invert_matrix(g)
    out = contract(ginv, 1, g, 0)
    assert np.allclose(out.data, np.eye(2), atol=1e-12)
    assert ginv.signature == ("u", "u")


def test_contract_variance_mismatch():
    c = _canonical_c(2)
    with pytest.raises(ValueError):
        contract(c, 1, c, 2)  # both down


def test_delta_commutation_on_pencil():
    spec = cat.entry("af-pencil-n3").spec
    p = np.array([-2.0, -0.5, 3.0])
    delta, _ = _delta_jets(pencil_at(spec, p))
    t = Tensor(delta, ("u", "u", "d"))
    prod = contract(t, 2, t, 0)          # [j,k,l,m] = Delta^jk_s Delta^slm... Delta^sl_m
    assert prod.signature == ("u", "u", "u", "d")
    # swapping the two inner upper slots leaves the double contraction fixed
    assert np.max(np.abs(prod.data - prod.data.transpose(0, 2, 1, 3))) < 1e-9


def test_invert_examples():
    assert np.allclose(invert_matrix(Tensor(np.eye(3), ("d", "d"))).data, np.eye(3))
    out = invert_matrix(Tensor(np.diag([2.0, -3.0]), ("d", "d")))
    assert np.allclose(out.data, np.diag([0.5, -1 / 3]))


def test_invert_singular_r_operator():
    # the diagonal-pencil recursion operator is rank one, hence singular
    from fmcheck.pencil import r_operator
    spec = cat.entry("af-pencil-n3").spec
    r, _ = r_operator(spec, np.array([1.0, 2.0, 4.0]))
    assert np.allclose(np.diag(r), 0.5)
    with pytest.raises(SingularMatrixError):
        invert_matrix(Tensor(r, ("u", "d")))


def test_eigenvalues_1d_and_charpoly():
    assert eigenvalues(np.array([[5.0]]))[0] == 5.0
    m = np.array([[2.0, 1.0], [0.0, 3.0]])
    coeffs = charpoly_coefficients(m)
    assert np.allclose(coeffs, [1, -5, 6])
    vals = eigenvalues(m)
    assert np.allclose(vals, [2, 3])
    # each root kills the characteristic polynomial
    for v in vals:
        assert abs(np.polyval(coeffs, v)) <= 1e-8 * max(1.0, np.max(np.abs(m)))


def test_eigenvalues_of_state_matrices():
    from fmcheck.rotation import rotation_data, v_matrix

    ent = cat.entry("q0-d-minus1")
    rd = rotation_data(ent.spec, np.array([0.0, 1.0, 3.0]), lame_exprs=ent.companion["lame"])
    _, eig, _ = v_matrix(rd)
    assert np.max(np.abs(eig - np.array([-1.0, 0.0, 1.0]))) < 1e-8

    ent = cat.entry("pencil-63")
    rd = rotation_data(ent.spec, np.array([0.0, 1.0, 3.0]), lame_exprs=ent.companion["lame"])
    _, eig, _ = v_matrix(rd)
    reps = []
    for rep, mult in cluster_values(eig, tol=1e-6):
        reps.extend([rep] * mult)
    reps.sort(key=lambda v: (v.real, v.imag))
    assert np.max(np.abs(np.array(reps) - np.array([-0.5, -0.5, 1.0]))) < 1e-8


def test_symmetrize_idempotent():
    rng = np.random.default_rng(1)
    t = Tensor(rng.random((3, 3, 3)) + 1j * rng.random((3, 3, 3)), ("d", "d", "d"))
    s1 = symmetrize(t)
    s2 = symmetrize(s1)
    assert np.allclose(s1.data, s2.data)


def test_lie_killing_on_half_plane():
    spec = cat.entry("lobachevsky").spec
    st_ = structure_at(spec, np.array([3.0, 1.0]))
    lg = lie_from_components(st_.g, st_.dg, ("d", "d"), st_.e, st_.de)
    assert np.max(np.abs(lg)) < 1e-10


def test_lie_euler_scales_product_and_unit():
    spec = cat.entry("lauricella-eps-minus1-n3").spec
    st_ = structure_at(spec, np.array([0.0, 1.0, 2.0]))
    lc = lie_from_components(st_.c, st_.dc, ("u", "d", "d"), st_.E, st_.dE)
    assert np.max(np.abs(lc - st_.c)) < 1e-9
    le = lie_from_components(st_.e, st_.de, ("u",), st_.E, st_.dE)
    assert np.max(np.abs(le + st_.e)) < 1e-9


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
@settings(max_examples=50, deadline=None)
def test_contract_bilinear(alpha):
    rng = np.random.default_rng(3)
    a = Tensor(rng.random((3, 3)) + 1j * rng.random((3, 3)), ("u", "u"))
    b = Tensor(rng.random((3, 3)), ("d", "d"))
    lhs = contract(Tensor(alpha * a.data, a.signature), 1, b, 0).data
    rhs = alpha * contract(a, 1, b, 0).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))


def test_metric_inverse_over_catalog_points():
    for name in cat.names():
        ent = cat.entry(name)
        if ent.spec.g is None:
            continue
        pts = sample_points(ent.spec, SamplePlan(seed=11, count=20))
        for p in pts:
            st_ = structure_at(ent.spec, p)
            resid = st_.g @ np.linalg.inv(st_.g) - np.eye(ent.spec.n)
            assert np.max(np.abs(resid)) <= 1e-10


def test_lie_leibniz_over_scalar():
    # L_X(f T) = X(f) T + f L_X T for a random scalar expression
    spec = cat.entry("lobachevsky").spec
    f = parse("u1^2*u2+sqrt(u1-u2)")
    p = np.array([1.4, 0.3])
    st_ = structure_at(spec, p)
    jet = eval_jet(f, p)
    ft = jet.val * st_.g
    dft = jet.val * st_.dg + np.einsum("ij,k->ijk", st_.g, jet.grad)
    lhs = lie_from_components(ft, dft, ("d", "d"), st_.e, st_.de)
    xf = np.dot(st_.e, jet.grad)
    rhs = xf * st_.g + jet.val * lie_from_components(st_.g, st_.dg, ("d", "d"), st_.e, st_.de)
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * (1 + np.max(np.abs(rhs)))


def test_lie_derivative_evaluator_form():
    # the evaluator-style entry point agrees with the component form
    spec = cat.entry("lobachevsky").spec
    from fmcheck.tensor import lie_derivative

    def metric_field(point):
        st_ = structure_at(spec, point)
        return Tensor(st_.g, ("d", "d")), st_.dg

    def unit_field(point):
        st_ = structure_at(spec, point)
        return st_.e, st_.de

    out = lie_derivative(metric_field, unit_field, np.array([3.0, 1.0]))
    assert out.signature == ("d", "d")
    assert np.max(np.abs(out.data)) < 1e-10
