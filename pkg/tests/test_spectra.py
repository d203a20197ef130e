"""Monte Carlo layer: ensembles, statistics, Girko checks, tails."""

import csv

import numpy as np
import pytest

from critedge.criticality import verify_criticality
from critedge.dyson import flow_scalings
from critedge.errors import ConditionViolated, UnknownModel
from critedge.spectra import (
    GaussianField,
    anisotropic_bump,
    deformed_eigenvalues,
    estimate_statistic,
    eta_log_identity,
    girko_check,
    hermitize,
    local_law_dispersion,
    log_det_statistic,
    radial_bump,
    rescale,
    rescale_inverse,
    sample_ensemble,
    sample_matrix,
    save_cloud_csv,
    save_trials_csv,
    smallest_sv_tail,
)
from critedge.synthesis import quartet_deformation

MODELS = ("ginibre", "iid-bernoulli-like", "iid-custom")


@pytest.mark.parametrize("model", MODELS)
def test_entry_moments(model):
    n = 2000
    x = sample_matrix(model, n, seed=0)
    second_abs = float(np.mean(np.abs(x) ** 2)) * n
    second_plain = complex(np.mean(x**2)) * n
    assert abs(second_abs - 1.0) < 0.05
    assert abs(second_plain) < 0.05


def test_models_are_deterministic_and_distinct():
    a = sample_matrix("ginibre", 64, seed=5)
    b = sample_matrix("ginibre", 64, seed=5)
    assert np.array_equal(a, b)
    c = sample_matrix("iid-custom", 64, seed=5)
    assert not np.allclose(a, c)


def test_unknown_model_and_small_n():
    with pytest.raises(UnknownModel):
        sample_matrix("wishart", 32, seed=0)
    with pytest.raises(ConditionViolated):
        sample_matrix("ginibre", 1, seed=0)


def test_deformed_eigenvalues_shift_only_the_diagonal():
    spec = quartet_deformation(0.5, n=64)
    x = sample_matrix("ginibre", 64, seed=1)
    ev = deformed_eigenvalues(spec, x)
    dense = x + np.diag(spec.expand())
    assert np.allclose(np.sort_complex(ev), np.sort_complex(np.linalg.eigvals(dense)))


def test_rescale_roundtrip():
    pts = np.array([0.3 + 0.1j, -1.2 + 2.0j, 0.05 - 0.4j])
    gamma = 0.8 * np.exp(0.3j)
    back = rescale_inverse(rescale(pts, 400, gamma), 400, gamma)
    assert np.max(np.abs(back - pts)) < 1e-12


def test_hermitization_spectrum_is_symmetric_pm_singular_values():
    spec = quartet_deformation(0.5, n=48)
    x = sample_matrix("ginibre", 48, seed=3)
    op = hermitize(spec, x, z=0.2 + 0.1j)
    ev = np.sort(op.eigenvalues())
    svs = op.singular_values()
    merged = np.sort(np.concatenate([svs, -svs]))
    assert np.max(np.abs(ev - merged)) < 1e-10
    assert op.log_abs_det() == pytest.approx(2.0 * np.sum(np.log(svs)))


def test_sample_ensemble_carries_sorted_singular_values():
    spec = quartet_deformation(0.5, n=40)
    s = sample_ensemble(spec, "ginibre", seed=2, z=0.1)
    assert s.eigenvalues.size == 40
    assert np.all(np.diff(s.singular_values) >= 0)
    again = sample_ensemble(spec, "ginibre", seed=2, z=0.1)
    assert np.array_equal(s.eigenvalues, again.eigenvalues)


# ---------------------------------------------------------------- bumps


def test_radial_bump_support_and_smoothness():
    assert radial_bump(np.array([3.0 + 0j]))[0] == 0.0
    assert radial_bump(np.array([0.0 + 0j]))[0] == pytest.approx(1.0)
    # value decays smoothly toward the rim
    r = radial_bump(np.array([0.5, 1.5, 2.4], dtype=complex))
    assert np.all(np.diff(r) < 0)


def test_anisotropic_bump_quadrupole_symmetry():
    w = np.array([1.0 + 0j, 1j, 0.7 + 0.7j])
    v = anisotropic_bump(w)
    assert v[0] > 0 and v[1] < 0
    assert abs(v[0] + v[1]) < 1e-15  # x and y axes have opposite sign
    assert abs(v[2]) < 1e-15  # the diagonal is a node


# ----------------------------------------------------------- statistics


def test_estimate_statistic_reproducible_and_error_scales():
    spec = quartet_deformation(0.3, n=64)
    a = estimate_statistic(spec, "ginibre", 1, "radial-bump", trials=40, seed0=7)
    b = estimate_statistic(spec, "ginibre", 1, "radial-bump", trials=40, seed0=7)
    assert a.value == b.value and a.std_error == b.std_error
    assert a.per_trial.shape == (40,)
    wide = estimate_statistic(spec, "ginibre", 1, "radial-bump", trials=160, seed0=7)
    # quadrupling the trials should halve the error, up to sampling noise
    assert wide.std_error < a.std_error * 0.75
    # the first 40 trials are shared: the estimator extends, never reshuffles
    assert np.array_equal(wide.per_trial[:40], a.per_trial)


def test_estimate_statistic_custom_callable_and_k2():
    spec = quartet_deformation(0.3, n=32)

    def ones(w):
        return np.ones_like(np.asarray(w, dtype=complex), dtype=float)

    est1 = estimate_statistic(spec, "ginibre", 1, ones, trials=3, seed0=0)
    assert est1.value == pytest.approx(32.0)  # sum over all eigenvalues of 1

    def pair_ones(w1, w2):
        return np.ones(np.shape(w1), dtype=float)

    est2 = estimate_statistic(spec, "ginibre", 2, pair_ones, trials=3, seed0=0)
    assert est2.value == pytest.approx(32.0 * 31.0)  # ordered distinct pairs


def test_local_law_dispersion_shrinks_with_eta():
    spec = quartet_deformation(0.5, n=64)
    rough = local_law_dispersion(spec, "ginibre", eta=0.05, trials=12, z=0.1)
    fine = local_law_dispersion(spec, "ginibre", eta=0.5, trials=12, z=0.1)
    assert fine < rough


def test_smallest_sv_tail_limits():
    spec = quartet_deformation(0.5, n=32)
    high = smallest_sv_tail(spec, "ginibre", z=0.1, eta=10.0, trials=8)
    low = smallest_sv_tail(spec, "ginibre", z=0.1, eta=1e-12, trials=8)
    assert high.probability == 1.0
    assert low.probability == 0.0
    assert high.std_error > 0


# --------------------------------------------------- Girko and eta integral


def test_gaussian_field_laplacian_matches_finite_differences():
    f = GaussianField(center=0.3 + 0.2j, sigma=0.6)
    w = 0.7 - 0.1j
    h = 1e-4
    num = (
        f.value(np.array([w + h]))[0]
        + f.value(np.array([w - h]))[0]
        + f.value(np.array([w + 1j * h]))[0]
        + f.value(np.array([w - 1j * h]))[0]
        - 4.0 * f.value(np.array([w]))[0]
    ) / h**2
    assert num == pytest.approx(f.laplacian(np.array([w]))[0], abs=1e-5)


def test_girko_identity_small_case():
    # quadrature error is not monotone in the node count at this size, so
    # only the magnitude is gated; the systematic refinement study lives in
    # the acceptance suite
    spec = quartet_deformation(0.5, n=24)
    x = sample_matrix("ginibre", 24, seed=4)
    f = GaussianField(center=0.2 + 0.1j, sigma=0.5)
    coarse = girko_check(spec, x, f, quad_points=64)
    fine = girko_check(spec, x, f, quad_points=128)
    assert coarse.gap < 1e-3
    assert fine.gap < 1e-3
    assert coarse.lhs == pytest.approx(fine.lhs)  # lhs has no quadrature


def test_girko_far_field_vanishes():
    spec = quartet_deformation(0.5, n=24)
    x = sample_matrix("ginibre", 24, seed=4)
    f = GaussianField(center=30.0 + 0j, sigma=0.5)
    rep = girko_check(spec, x, f, quad_points=64)
    assert abs(rep.lhs) < 1e-12 and abs(rep.rhs) < 1e-6


def test_eta_log_identity_matches_closed_form():
    svs = np.array([0.03, 0.4, 1.0, 2.7])
    numeric, analytic = eta_log_identity(svs)
    assert np.max(np.abs(numeric - analytic)) < 1e-10
    assert np.max(np.abs(analytic + 2.0 * np.log(svs))) == 0.0


def test_log_det_statistic_finite_and_deterministic():
    spec = quartet_deformation(0.4, n=48)
    rep = verify_criticality(spec)
    sc = flow_scalings(spec, 48)
    x = sample_matrix("ginibre", 48, seed=6)
    a = log_det_statistic(spec, x, w=0.3 + 0.2j, scalings=sc)
    b = log_det_statistic(spec, x, w=0.3 + 0.2j, scalings=sc)
    assert np.isfinite(a) and a == b
    assert rep.is_critical


# ------------------------------------------------------------------ files


def test_csv_outputs(tmp_path):
    pts = np.array([0.1 + 0.2j, -0.3 + 0.4j])
    cloud = tmp_path / "cloud.csv"
    save_cloud_csv(cloud, pts)
    rows = list(csv.reader(cloud.open()))
    assert rows[0] == ["re", "im"]
    assert len(rows) == 3 and float(rows[1][0]) == 0.1

    spec = quartet_deformation(0.3, n=16)
    est = estimate_statistic(spec, "ginibre", 1, "radial-bump", trials=4)
    trials = tmp_path / "trials.csv"
    save_trials_csv(trials, est)
    rows = list(csv.reader(trials.open()))
    assert rows[0][0] == "trial"
    assert len(rows) == 7  # header + 4 trials + mean + std_error
    assert rows[-2][0] == "mean" and rows[-1][0] == "std_error"
