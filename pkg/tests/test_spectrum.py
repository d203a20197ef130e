"""DeformationSpectrum container semantics."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from critedge.errors import DimensionMismatch, ZeroEigenvalue
from critedge.spectrum import DeformationSpectrum


def test_count_sum_must_match_dimension():
    with pytest.raises(DimensionMismatch):
        DeformationSpectrum(np.array([1.0 + 0j]), np.array([3]), 5)


def test_length_mismatch_rejected():
    with pytest.raises(DimensionMismatch):
        DeformationSpectrum(np.array([1.0 + 0j, 2.0]), np.array([3]), 3)


def test_expand_and_dense_agree(pm_spectrum):
    ev = pm_spectrum.expand()
    assert ev.shape == (100,)
    assert np.array_equal(np.diag(pm_spectrum.dense()), ev)


def test_weights_normalised(pm_spectrum):
    assert pm_spectrum.weights.sum() == pytest.approx(1.0)


def test_require_invertible_raises_on_zero():
    s = DeformationSpectrum(np.array([0.0 + 0j, 1.0]), np.array([1, 4]), 5)
    with pytest.raises(ZeroEigenvalue):
        s.require_invertible()


def test_json_roundtrip_is_exact(tmp_path, pm_spectrum):
    p = tmp_path / "s.json"
    pm_spectrum.save(p)
    back = DeformationSpectrum.load(p)
    assert np.array_equal(back.eigenvalues, pm_spectrum.eigenvalues)
    assert np.array_equal(back.multiplicities, pm_spectrum.multiplicities)
    assert back.n == pm_spectrum.n
    # identical serialisation again: byte-determinism of the file format
    p2 = tmp_path / "s2.json"
    back.save(p2)
    assert p.read_bytes() == p2.read_bytes()


def test_canonical_merges_exact_duplicates_bitwise():
    # repeated identical values must merge without perturbing the value
    v = 0.1 + 0.2j
    s = DeformationSpectrum(np.array([v, v, v]), np.array([2, 3, 5]), 10)
    c = s.canonical(merge_tol=1e-9)
    assert c.eigenvalues.size == 1
    assert c.eigenvalues[0] == v
    assert c.multiplicities[0] == 10


def test_canonical_weighted_mean_for_distinct_values():
    s = DeformationSpectrum(
        np.array([1.0 + 0j, 1.0 + 1e-12j]), np.array([1, 3]), 4
    )
    c = s.canonical(merge_tol=1e-9)
    assert c.eigenvalues.size == 1
    assert c.eigenvalues[0] == pytest.approx(1.0 + 0.75e-12j)


def test_canonical_preserves_moments():
    rng = np.random.default_rng(0)
    vals = rng.normal(size=6) + 1j * rng.normal(size=6)
    vals[3] = vals[0]  # force a duplicate out of sort order
    s = DeformationSpectrum(vals, np.array([1, 2, 3, 4, 5, 5]), 20)
    c = s.canonical(merge_tol=0.0)
    assert c.multiplicities.sum() == 20
    assert np.sum(s.expand()) == pytest.approx(np.sum(c.expand()))


@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=2**32))
def test_canonical_idempotent(k, seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=k) + 1j * rng.normal(size=k)
    mult = rng.integers(1, 5, size=k)
    s = DeformationSpectrum(vals, mult, int(mult.sum()))
    c1 = s.canonical(merge_tol=1e-8)
    c2 = c1.canonical(merge_tol=1e-8)
    assert np.array_equal(c1.eigenvalues, c2.eigenvalues)
    assert np.array_equal(c1.multiplicities, c2.multiplicities)


def test_scaled_and_rotated_act_on_values(pm_spectrum):
    s = pm_spectrum.scaled(2.0)
    assert np.array_equal(s.eigenvalues, 2.0 * pm_spectrum.eigenvalues)
    r = pm_spectrum.rotated(np.pi / 2)
    assert np.allclose(r.eigenvalues, 1j * pm_spectrum.eigenvalues)


def test_operator_norms(pm_spectrum):
    norm, inv_norm = pm_spectrum.operator_norms()
    assert norm == pytest.approx(1.0)
    assert inv_norm == pytest.approx(1.0)


def test_inverse_trace_functionals(pm_spectrum):
    assert pm_spectrum.inv_modulus_power_trace(2) == pytest.approx(1.0)
    assert pm_spectrum.mixed_inverse_trace(2, 1) == pytest.approx(0.0)
    # tr A^-3 A*^-1 = 1 for the +-1 spectrum
    assert pm_spectrum.mixed_inverse_trace(3, 1) == pytest.approx(1.0)
