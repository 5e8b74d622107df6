import numpy as np
import pytest

import fmcheck.catalog as cat
from fmcheck.catalog import (MissingCompanionDataError, UnknownEntryError,
                             run_suite, verify_flat_coordinates,
                             verify_vector_potential)
from fmcheck.manifold import ManifoldSpec, SamplePlan, sample_points


def test_unknown_entry():
    with pytest.raises(UnknownEntryError):
        cat.entry("nope")


def test_names_cover_families():
    got = set(cat.names())
    assert {"lobachevsky", "nonss2d", "nonss3d", "lauricella-eps-minus1-n3",
            "q0-d-minus1", "q0-d0", "q0-d1", "pencil-63",
            "af-pencil-n3", "af-pencil-n4",
            "case-i", "case-ii", "case-iii", "case-iv", "case-v"} <= got


@pytest.mark.parametrize("name", cat.names())
def test_entry_suite_ok(name):
    res = run_suite(cat.entry(name), seed=0, count=8)
    failed = [r.name for r in res.reports if r.passed == (r.name in res.expected_failures)]
    assert res.ok, f"{name}: unexpected outcomes in {failed}"


def test_expected_constants_reproduced():
    for name in cat.names():
        ent = cat.entry(name)
        if not ent.spec.expected:
            continue
        res = run_suite(ent, seed=3, count=6)
        by_name = {r.name: r for r in res.reports}
        if "D" in ent.spec.expected:
            assert by_name["homogeneity"].passed
        if "V_eigenvalues" in ent.spec.expected:
            assert by_name["v-eigenvalues"].passed
        if "I1" in ent.spec.expected:
            assert by_name["ode-integrals"].passed


def test_missing_companion_data():
    ent = cat.entry("q0-d0")
    pts = sample_points(ent.spec, SamplePlan(seed=0, count=2))
    with pytest.raises(MissingCompanionDataError):
        verify_flat_coordinates(ent, pts)
    with pytest.raises(MissingCompanionDataError):
        verify_vector_potential(ent, pts)


def test_half_plane_potential_unit_components():
    ent = cat.entry("lobachevsky")
    pts = sample_points(ent.spec, SamplePlan(seed=1, count=5))
    assert verify_vector_potential(ent, pts, tol=1e-10).passed
    assert verify_flat_coordinates(ent, pts).passed


@pytest.mark.parametrize("name", ["case-i", "case-ii", "case-iii", "case-iv", "case-v"])
def test_appendix_cases(name):
    ent = cat.entry(name)
    pts = sample_points(ent.spec, SamplePlan(seed=2, count=20))
    assert verify_flat_coordinates(ent, pts).passed
    assert verify_vector_potential(ent, pts, tol=1e-8).passed


def test_family_metric_random_draws():
    # five random parameter draws with degree-two function slots
    ent = cat.entry("nonss3d")
    rng = np.random.default_rng(17)
    for _ in range(5):
        a = float(rng.uniform(0.3, 1.8))  # keeps the exponents moderate
        params = {"a": a, "b": float(rng.uniform(-1, 1)), "c": float(rng.uniform(0.5, 2.0)),
                  "f0": float(rng.uniform(-1, 1)), "f1": float(rng.uniform(-1, 1)),
                  "f2": float(rng.uniform(-1, 1)), "g0": float(rng.uniform(-1, 1)),
                  "g1": float(rng.uniform(-1, 1)), "g2": float(rng.uniform(-1, 1))}
        ent.spec.params.update(params)
        res = run_suite(ent, seed=4, count=5)
        assert res.ok, params


def test_export_roundtrip_all_entries():
    for name in cat.names():
        spec = cat.entry(name).spec
        text = spec.to_json()
        assert ManifoldSpec.from_json(text).to_json() == text
