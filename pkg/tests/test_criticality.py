"""Criticality functionals: Hessian, shape parameter, reports."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critedge.criticality import (
    alpha_from_chi,
    chi,
    density_quadratic,
    hessian_at_origin,
    scaling_gamma,
    shape_alpha,
    verify_criticality,
)
from critedge.errors import ZeroEigenvalue
from critedge.spectrum import DeformationSpectrum
from critedge.synthesis import (
    quartet_deformation,
    random_deformation_critical,
    random_inverse_critical,
    random_real_critical,
    shear_pair_matrix,
    shear_quartet_matrix,
)


def test_pm_spectrum_report(pm_spectrum):
    rep = verify_criticality(pm_spectrum)
    assert rep.is_critical
    assert rep.alpha == pytest.approx(-1.0 / 3.0, abs=1e-12)
    assert rep.beta == pytest.approx(0.0, abs=1e-12)


def test_quartet_alpha_formula():
    for c in (0.0, 0.25, 0.5, 1.0):
        rep = verify_criticality(quartet_deformation(c, 400))
        want = (-1.0 + 3.0 * c * c) / (3.0 - c * c)
        assert rep.is_critical
        assert rep.alpha == pytest.approx(want, abs=1e-10)


def test_quartet_half_value():
    rep = verify_criticality(quartet_deformation(0.5, 8))
    assert rep.alpha == pytest.approx(-1.0 / 11.0, abs=1e-12)


def test_shear_pair_alpha_formula():
    for c in (0.1, 1.0, 10.0):
        alpha = shape_alpha(hessian_at_origin(shear_pair_matrix(c)))
        assert alpha == pytest.approx(-(2 + 2 * c * c) / (6 + 2 * c * c), abs=1e-10)


def test_shear_quartet_alpha_formula():
    for c in (0.1, 1.0, 10.0):
        alpha = shape_alpha(hessian_at_origin(shear_quartet_matrix(c)))
        assert alpha == pytest.approx(-(2 + 4 * c * c) / (6 + 20 * c * c), abs=1e-10)


def test_shear_pair_breaks_normal_lower_bound():
    # non-normal deformations may dip below the normal-case floor -1/3
    for c in (1.0, 2.0, 10.0):
        alpha = shape_alpha(hessian_at_origin(shear_pair_matrix(c)))
        assert alpha < -1.0 / 3.0


def test_shear_families_are_critical():
    for c in (0.1, 1.0, 10.0):
        for m in (shear_pair_matrix(c), shear_quartet_matrix(c)):
            mi = np.linalg.inv(m)
            n = m.shape[0]
            inv2 = float(np.real(np.trace(mi @ mi.conj().T)) / n)
            skew = complex(np.trace(mi @ mi @ mi.conj().T) / n)
            assert inv2 == pytest.approx(1.0, abs=1e-12)
            assert abs(skew) <= 1e-12


def test_chi_alpha_closed_form():
    # inverse of the quartet family: chi = (1-c^2)/(1+c^2)
    for c in (0.1, 0.4, 0.9):
        d = quartet_deformation(c, 8)
        b = d.with_eigenvalues(1.0 / d.eigenvalues)
        chi_val, chi_imag = chi(b)
        assert chi_val == pytest.approx((1 - c * c) / (1 + c * c), abs=1e-12)
        assert abs(chi_imag) <= 1e-12
        want_alpha = (3 * c * c - 1) / (3 - c * c)
        assert alpha_from_chi(chi_val) == pytest.approx(want_alpha, abs=1e-12)


def test_alpha_from_chi_endpoints():
    assert alpha_from_chi(1.0) == pytest.approx(-1.0 / 3.0)
    assert alpha_from_chi(0.0) == pytest.approx(1.0)


def test_non_critical_when_rescaled(pm_spectrum):
    rep = verify_criticality(pm_spectrum.scaled(2.0))
    assert not rep.is_critical


def test_zero_eigenvalue_raises():
    s = DeformationSpectrum(np.array([0.0 + 0j, 1.0]), np.array([1, 9]), 10)
    with pytest.raises(ZeroEigenvalue):
        verify_criticality(s)


def test_report_json_fields(pm_spectrum):
    d = verify_criticality(pm_spectrum).to_json_dict()
    for key in ("alpha", "chi", "is_critical", "gamma_re", "norm_a"):
        assert key in d


def test_hessian_rotation_covariance(pm_spectrum):
    # rotating the spectrum rotates the Hessian eigenframe, not the spectrum
    # of the Hessian itself
    h0 = hessian_at_origin(pm_spectrum)
    h1 = hessian_at_origin(pm_spectrum.rotated(0.3))
    e0 = np.sort(np.linalg.eigvalsh(h0))
    e1 = np.sort(np.linalg.eigvalsh(h1))
    assert np.allclose(e0, e1, atol=1e-12)


def test_scaling_gamma_finite_and_phase(pm_spectrum):
    g = scaling_gamma(pm_spectrum)
    assert np.isfinite(g.real) and np.isfinite(g.imag)
    assert abs(g) > 0


def test_density_quadratic_nonnegative(pm_spectrum):
    rep = verify_criticality(pm_spectrum)
    for z in (0.05 + 0.02j, -0.03 + 0.04j, 0.1j):
        assert density_quadratic(rep, pm_spectrum, z) >= 0.0


@given(st.integers(min_value=0, max_value=10**6))
@settings(max_examples=30)
def test_random_hermitian_alpha_is_minus_third(seed):
    b = random_real_critical(seed, n=200)
    s = float(np.sqrt(np.sum(b.weights * np.abs(b.eigenvalues) ** 2)))
    a = b.with_eigenvalues(s / b.eigenvalues)
    rep = verify_criticality(a, tol=1e-9)
    assert rep.is_critical
    assert rep.alpha == pytest.approx(-1.0 / 3.0, abs=1e-9)


@given(st.integers(min_value=0, max_value=10**6))
@settings(max_examples=30)
def test_random_normal_alpha_range(seed):
    a = random_deformation_critical(seed, n=400)
    rep = verify_criticality(a, tol=1e-9)
    assert rep.is_critical
    assert -1.0 / 3.0 - 1e-9 <= rep.alpha <= 1.0 + 1e-12


@given(st.integers(min_value=0, max_value=10**6))
@settings(max_examples=15)
def test_alpha_consistent_with_chi_route(seed):
    b = random_inverse_critical(seed, n=400)
    chi_val, _ = chi(b)
    a = b.with_eigenvalues(1.0 / b.eigenvalues)
    rep = verify_criticality(a, tol=1e-9)
    assert rep.alpha == pytest.approx(alpha_from_chi(chi_val), abs=1e-8)
