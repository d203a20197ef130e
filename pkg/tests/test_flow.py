"""End-to-end flow construction: shrinks, pipelines, lifts, audits."""

import numpy as np
import pytest
import scipy.optimize

from critedge.criticality import chi as chi_of
from critedge.errors import (
    ConditionViolated,
    NotReal,
    ResidualExceeded,
)
from critedge.flow import (
    FlowConfig,
    FlowPath,
    derive_b0,
    finite_support_flow,
    fix_spectrum_flow,
    half_plane_mass_constant,
    hermitian_flow,
    independent_count_target,
    lift_to_deformation,
    shrink_clusters,
    validate_assumption,
)
from critedge.flow.maps import realify, weighted_pair_trace
from critedge.spectrum import DeformationSpectrum
from critedge.synthesis import (
    random_deformation_critical,
    random_inverse_critical,
    random_real_critical,
)


# ---------------------------------------------------------------- shrink


def cluster_pair(h):
    rng = np.random.default_rng(42)
    z1, z2 = 1.0 + 0.2j, -1.1 + 0.15j
    v1 = z1 + h * (rng.standard_normal(3) + 1j * rng.standard_normal(3)) / 3
    v2 = z2 + h * (rng.standard_normal(2) + 1j * rng.standard_normal(2)) / 3
    return v1, v2, z1, z2


def test_shrink_conserves_both_traces_along_the_whole_flow():
    v1, v2, z1, z2 = cluster_pair(0.05)
    chi = 0.3
    res = shrink_clusters(v1, v2, z1, z2, chi)
    f1_0, f2_0 = weighted_pair_trace(v1, np.ones(3), v2, np.ones(2), chi)
    for k in range(len(res.times)):
        f1, f2 = weighted_pair_trace(
            res.flow1[k], np.ones(3), res.flow2[k], np.ones(2), chi
        )
        assert abs(f1 - f1_0) < 1e-12
        assert abs(f2 - f2_0) < 1e-12
    assert res.drift_crit < 1e-12 and res.drift_chi < 1e-12
    # endpoints: entries start where given and end at the corrected centers
    assert np.allclose(res.flow1[0], v1) and np.allclose(res.flow2[0], v2)
    assert np.abs(res.flow1[-1] - res.z1_tilde).max() < 1e-13
    assert np.abs(res.flow2[-1] - res.z2_tilde).max() < 1e-13


def test_shrink_center_correction_is_second_order_in_the_radius():
    # zero-mean offsets: with z the exact cluster mean the first-order
    # term cancels and the corrective shift is quadratic in the spread
    z1, z2 = 1.0 + 0.2j, -1.1 + 0.15j
    off1 = np.array([0.9 + 0.3j, -0.5 + 0.6j, 0.3 - 0.8j]) / 3
    off2 = np.array([0.7 - 0.4j, -0.6 + 0.5j]) / 3
    off1 -= off1.mean()
    off2 -= off2.mean()
    sizes = []
    for h in (0.08, 0.04):
        res = shrink_clusters(z1 + h * off1, z2 + h * off2, z1, z2, 0.3)
        sizes.append(max(abs(res.z1_tilde - z1), abs(res.z2_tilde - z2)))
    assert sizes[1] < sizes[0] / 3.5


def test_shrink_final_centers_match_independent_root_solve():
    v1, v2, z1, z2 = cluster_pair(0.05)
    chi = 0.3
    res = shrink_clusters(v1, v2, z1, z2, chi)
    target = realify(*weighted_pair_trace(v1, np.ones(3), v2, np.ones(2), chi))

    def equations(w):
        f1, f2 = weighted_pair_trace(
            [complex(w[0], w[1])], [3.0], [complex(w[2], w[3])], [2.0], chi
        )
        return realify(f1, f2) - target

    sol = scipy.optimize.root(equations, realify(z1, z2), tol=1e-13)
    assert sol.success
    assert abs(complex(sol.x[0], sol.x[1]) - res.z1_tilde) < 1e-9
    assert abs(complex(sol.x[2], sol.x[3]) - res.z2_tilde) < 1e-9


def test_shrink_respects_weighted_counts():
    v1 = np.array([0.98 + 0.19j, 1.02 + 0.21j])
    v2 = np.array([-1.0 + 0.2j])
    c1, c2 = np.array([5.0, 3.0]), np.array([7.0])
    chi = 0.4
    res = shrink_clusters(v1, v2, 1.0 + 0.2j, -1.0 + 0.2j, chi, counts1=c1, counts2=c2)
    f0 = weighted_pair_trace(v1, c1, v2, c2, chi)
    f1 = weighted_pair_trace(res.flow1[-1], c1, res.flow2[-1], c2, chi)
    assert abs(f0[0] - f1[0]) < 1e-12 and abs(f0[1] - f1[1]) < 1e-12


def test_shrink_rejects_empty_cluster_and_bad_grid():
    with pytest.raises(ConditionViolated):
        shrink_clusters([], [1.0], 0.5, -0.5, 0.2)
    with pytest.raises(ConditionViolated):
        shrink_clusters([1.0], [-1.0], 1.0, -1.0, 0.2, grid=[0.0, 0.4, 0.3, 1.0])


# ------------------------------------------------- finite support pipeline


@pytest.mark.parametrize("seed", [3, 17])
def test_finite_support_flow_conserves_and_bounds(seed):
    frak_c = 6.0
    b = random_inverse_critical(seed, n=400)
    path = finite_support_flow(b, frak_c)
    assert max(path.residual_crit) < 1e-8
    assert max(path.residual_chi) < 1e-8
    frak_c1 = path.meta["frak_c1"]
    path.audit(frak_c1)  # moduli + residual gates, raises on violation
    assert path.final.eigenvalues.size <= path.meta["m_bound"]
    assert path.initial.eigenvalues.size == b.eigenvalues.size
    # chi is conserved along this segment, not just drifting slowly
    chi0 = chi_of(b)[0]
    chi1 = chi_of(path.final)[0]
    assert abs(chi1 - chi0) < 1e-8


def test_half_plane_mass_constant_bounds():
    b = random_inverse_critical(5, n=400)
    frak_c = 6.0
    hp = half_plane_mass_constant(b, frak_c)
    assert 0.0 < hp.c < 1.0 / (2.0 * frak_c)
    re = b.expand().real
    assert hp.count_left == int((re < -hp.c).sum())
    assert hp.count_right == int((re > hp.c).sum())
    # both half planes carry more than cN units beyond the strip
    assert hp.count_left > hp.c * hp.n
    assert hp.count_right > hp.c * hp.n


def test_finite_support_flow_rejects_non_critical_input():
    # a rigid translation breaks tr B^2 B* = 0 (scaling would not: the
    # gated invariants chi and the skew direction are scale-covariant)
    b = random_inverse_critical(8, n=400)
    bad = b.with_eigenvalues(b.eigenvalues + 0.3)
    with pytest.raises(ConditionViolated):
        finite_support_flow(bad, 6.0)


# ----------------------------------------------------- count target + fix


def test_independent_count_target_snaps_and_stays_critical():
    denominator = 40
    b = random_inverse_critical(11, n=400)
    b0 = finite_support_flow(b, 6.0).final
    target = independent_count_target(b0, denominator)
    units = target.multiplicities * denominator
    assert np.all(units % target.n == 0)  # fractions are multiples of 1/40
    assert int(target.multiplicities.sum()) == target.n
    # exact skew conservation; the quadratic normalisation is deliberately
    # left to the deformation-side lift, which renormalises tr |A|^-2 = 1
    w = target.weights
    ev = target.eigenvalues
    assert abs(complex(np.sum(w * ev**2 * np.conj(ev)))) < 1e-12
    assert abs(chi_of(target)[1]) < 1e-10
    assert abs(chi_of(target)[0] - chi_of(b0)[0]) < 0.05


def test_independent_count_target_pins_requested_chi():
    b = random_inverse_critical(12, n=400)
    b0 = finite_support_flow(b, 6.0).final
    target = independent_count_target(b0, 40, chi_target=0.35)
    chi, chi_im = chi_of(target)
    assert abs(chi - 0.35) < 1e-10 and abs(chi_im) < 1e-10


def test_fix_spectrum_flow_hits_target_exactly_with_linear_chi():
    b = random_inverse_critical(11, n=400)
    b0 = finite_support_flow(b, 6.0).final
    target = independent_count_target(b0, 40)
    path = fix_spectrum_flow(b0, target)
    end = path.final.canonical(0.0)
    want = target.canonical(0.0)
    assert np.array_equal(end.eigenvalues, want.eigenvalues)
    assert np.array_equal(end.multiplicities, want.multiplicities)
    assert max(path.residual_crit) < 1e-8
    # chi(B_t) interpolates the endpoint values linearly in t
    c_start, c_end = chi_of(path.initial)[0], chi_of(path.final)[0]
    for t, s in zip(path.grid[:: len(path.grid) // 8], path.states[:: len(path.grid) // 8]):
        line = (1 - t) * c_start + t * c_end
        assert abs(chi_of(s)[0] - line) < 1e-8
    assert "fix_certificates" in path.meta or "pair_certificates" in path.meta or path.meta


def test_fix_spectrum_flow_dimension_mismatch():
    b0 = random_inverse_critical(1, n=400)
    b1 = random_inverse_critical(1, n=200)
    with pytest.raises(ConditionViolated):
        fix_spectrum_flow(b0, b1)


# ------------------------------------------------------------- hermitian


def test_hermitian_flow_collapses_to_two_points():
    b = random_real_critical(7)
    path = hermitian_flow(b, 6.0)
    final = path.final.canonical(1e-10)
    assert final.eigenvalues.size == 2
    x = np.sort(final.eigenvalues.real)
    n_pos = float(b.multiplicities[b.eigenvalues.real > 0].sum())
    n_neg = float(b.n - n_pos)
    assert abs(x[1] - 1.0) < 1e-10
    assert abs(x[0] + (n_pos / n_neg) ** (1.0 / 3.0)) < 1e-10
    assert max(path.residual_crit) < 1e-10
    assert np.max(np.abs(final.eigenvalues.imag)) == 0.0


def test_hermitian_flow_rejects_complex_input():
    b = random_inverse_critical(2, n=400)
    with pytest.raises(NotReal):
        hermitian_flow(b, 6.0)


# ------------------------------------------------------- lift and audits


def test_derive_b0_then_lift_recovers_the_deformation():
    a = random_deformation_critical(21, n=400)
    b, phi = derive_b0(a)
    # tr B^3 B* lands on the nonnegative real axis
    skew3 = complex(np.sum(b.weights * b.eigenvalues**3 * np.conj(b.eigenvalues)))
    assert abs(skew3.imag) < 1e-10 * max(1.0, abs(skew3))
    assert skew3.real > -1e-12
    path = finite_support_flow(b, 6.0)
    lifted = lift_to_deformation(path, phi)
    a0 = lifted.initial.canonical(0.0)
    aa = a.canonical(0.0)
    assert np.max(np.abs(a0.eigenvalues - aa.eigenvalues)) < 1e-10
    # every lifted state keeps tr |A_t|^-2 = 1
    for s in lifted.states[:: max(1, len(lifted.states) // 16)]:
        inv2 = float(np.sum(s.weights / np.abs(s.eigenvalues) ** 2))
        assert abs(inv2 - 1.0) < 1e-12
    assert lifted.meta["phi"] == phi


def test_validate_assumption_passes_on_a_built_path():
    a = random_deformation_critical(23, n=400)
    b, phi = derive_b0(a)
    lifted = lift_to_deformation(finite_support_flow(b, 6.0), phi)
    report = validate_assumption(lifted, frak_c1=lifted.meta["frak_c1"], frak_c_small=0.05)
    assert report.passed
    assert report.criticality_failures == ()
    assert any("overall: pass" in ln for ln in report.lines())


def test_validate_assumption_locates_a_corrupted_state():
    a = random_deformation_critical(23, n=400)
    b, phi = derive_b0(a)
    lifted = lift_to_deformation(finite_support_flow(b, 6.0), phi)
    k = len(lifted.states) // 2
    bad_state = lifted.states[k].with_eigenvalues(lifted.states[k].eigenvalues * 1.05)
    states = lifted.states[:k] + (bad_state,) + lifted.states[k + 1 :]
    broken = FlowPath(
        grid=lifted.grid,
        states=states,
        derivatives=lifted.derivatives,
        residual_crit=lifted.residual_crit,
        residual_chi=lifted.residual_chi,
        segment_kind=lifted.segment_kind,
        meta=lifted.meta,
    )
    report = validate_assumption(broken, frak_c1=lifted.meta["frak_c1"], frak_c_small=0.05)
    assert not report.passed
    t_bad = lifted.grid[k]
    assert any(f"t={t_bad:.4f}" in msg for msg in report.criticality_failures)


# ------------------------------------------------------ path plumbing


def test_path_jsonl_roundtrip_and_concat():
    b = random_inverse_critical(31, n=400)
    p1 = finite_support_flow(b, 6.0)
    target = independent_count_target(p1.final, 40)
    p2 = fix_spectrum_flow(p1.final, target)
    joined = p1.concat(p2)
    assert joined.grid[0] == 0.0 and joined.grid[-1] == 1.0
    assert "concat-junction" in joined.segment_kind
    assert joined.final.canonical(0.0).eigenvalues.size == target.canonical(0.0).eigenvalues.size

    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        fn = os.path.join(d, "path.jsonl")
        joined.save_jsonl(fn)
        back = FlowPath.load_jsonl(fn)
    assert back.grid == joined.grid
    assert back.segment_kind == joined.segment_kind
    for s, t in zip(back.states, joined.states):
        assert np.array_equal(s.eigenvalues, t.eigenvalues)
        assert np.array_equal(s.multiplicities, t.multiplicities)
    assert back.residual_crit == joined.residual_crit


def test_concat_refuses_mismatched_junction():
    b = random_inverse_critical(31, n=400)
    p1 = finite_support_flow(b, 6.0)
    other = random_inverse_critical(32, n=400)
    p3 = finite_support_flow(other, 6.0)
    with pytest.raises(ResidualExceeded, match="junction"):
        p1.concat(p3)


def test_path_validation_rejects_malformed_grids():
    b = random_inverse_critical(1, n=400)
    s = (b, b)
    with pytest.raises(ValueError):
        FlowPath(
            grid=(0.0, 0.5),
            states=s,
            derivatives=(0.0, 0.0),
            residual_crit=(0.0, 0.0),
            residual_chi=(0.0, 0.0),
            segment_kind=("shrink",),
        )


def test_flow_config_h0_override_changes_the_mesh():
    b = random_inverse_critical(3, n=400)
    default = finite_support_flow(b, 6.0)
    finer = finite_support_flow(b, 6.0, FlowConfig(h0=0.05 / 6.0))
    assert finer.meta["h"] <= default.meta["h"] / 2 + 1e-15
    assert max(finer.residual_crit) < 1e-8
