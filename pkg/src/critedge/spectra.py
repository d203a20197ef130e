"""Monte Carlo layer: random matrix sampling and spectral statistics.

Samples i.i.d. and Ginibre ensembles, computes eigenvalue clouds and
singular values of deformed matrices, checks the Girko identity, and
evaluates the regularized log-determinant statistic against its
deterministic counterpart from the Dyson module.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .criticality import scaling_gamma
from .dyson import FlowScalings, solve_v_scalar
from .errors import (
    DimensionMismatch,
    ConditionViolated,
    QuadratureUnstable,
    UnknownModel,
)
from .spectrum import DeformationSpectrum

__all__ = [
    "MODELS",
    "EnsembleSample",
    "CorrelationEstimate",
    "HermitizedOperator",
    "GirkoReport",
    "TailEstimate",
    "sample_matrix",
    "deformed_eigenvalues",
    "rescale",
    "rescale_inverse",
    "sample_ensemble",
    "hermitize",
    "estimate_statistic",
    "radial_bump",
    "anisotropic_bump",
    "GaussianField",
    "girko_check",
    "eta_log_identity",
    "log_det_statistic",
    "smallest_sv_tail",
    "local_law_dispersion",
    "save_cloud_csv",
    "save_trials_csv",
]

MODELS = ("ginibre", "iid-bernoulli-like", "iid-custom")


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class EnsembleSample:
    """One draw of a deformed random matrix and its spectral data.

    ``eigenvalues`` belong to A + X; ``singular_values`` (ascending) belong
    to A + X - z for the stored base point.
    """

    seed: int
    n: int
    model: str
    eigenvalues: np.ndarray
    singular_values: np.ndarray | None = None
    base_point: complex = 0.0


@dataclass(frozen=True)
class CorrelationEstimate:
    """Monte Carlo estimate of a k-point test-function integral."""

    k: int
    test_function_id: str
    value: float
    std_error: float
    trials: int
    n: int
    gamma: complex
    per_trial: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class HermitizedOperator:
    """2N x 2N Hermitization of A + X - z with its base point.

    The off-diagonal block is stored; the full matrix and both spectral
    routes (Hermitian eigensolve, direct SVD) are derived from it.
    """

    z: complex
    block: np.ndarray
    eta_grid: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.block.shape[0]

    def matrix(self) -> np.ndarray:
        n = self.n
        h = np.zeros((2 * n, 2 * n), dtype=complex)
        h[:n, n:] = self.block
        h[n:, :n] = self.block.conj().T
        return h

    def eigenvalues(self) -> np.ndarray:
        """All 2N eigenvalues, ascending; symmetric about 0."""
        return np.linalg.eigvalsh(self.matrix())

    def singular_values(self) -> np.ndarray:
        """The N singular values of the block, ascending."""
        return np.sort(np.linalg.svd(self.block, compute_uv=False))

    def log_abs_det(self) -> float:
        # |det H^z| = |det(A+X-z)|^2
        return 2.0 * float(np.sum(np.log(self.singular_values())))


@dataclass(frozen=True)
class GirkoReport:
    lhs: float
    rhs: float
    gap: float
    quad_points: int
    jittered_nodes: int


@dataclass(frozen=True)
class TailEstimate:
    probability: float
    std_error: float
    trials: int
    eta: float


# ---------------------------------------------------------------------------
# sampling


def sample_matrix(model: str, n: int, seed: int) -> np.ndarray:
    """Draw one N x N random matrix with E|X_ij|^2 = 1/N and EX_ij^2 = 0.

    ginibre: complex Gaussian entries.  iid-bernoulli-like: independent
    signs on both components.  iid-custom: independent uniform components,
    half-width sqrt(3/(2N)).  Bit-identical for identical (model, n, seed).
    """
    if model not in MODELS:
        raise UnknownModel(f"unknown ensemble model {model!r}; choose from {MODELS}")
    if n < 2:
        raise ConditionViolated(f"matrix dimension must be at least 2, got {n}")
    rng = np.random.default_rng((int(seed), MODELS.index(model)))
    scale = 1.0 / np.sqrt(2.0 * n)
    if model == "ginibre":
        re = rng.standard_normal((n, n))
        im = rng.standard_normal((n, n))
    elif model == "iid-bernoulli-like":
        re = 2.0 * rng.integers(0, 2, size=(n, n)).astype(float) - 1.0
        im = 2.0 * rng.integers(0, 2, size=(n, n)).astype(float) - 1.0
    else:
        # uniform component variance a^2/3 must equal 1/(2N)
        a = np.sqrt(3.0)
        re = rng.uniform(-a, a, size=(n, n))
        im = rng.uniform(-a, a, size=(n, n))
    return scale * (re + 1j * im)


def deformed_eigenvalues(spec: DeformationSpectrum, x: np.ndarray) -> np.ndarray:
    """Eigenvalues of diag(spec) + X."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (spec.n, spec.n):
        raise DimensionMismatch(
            f"sample is {x.shape}, deformation dimension is {spec.n}"
        )
    y = x.copy()
    idx = np.arange(spec.n)
    y[idx, idx] += spec.expand()
    return np.linalg.eigvals(y)


def rescale(points, n: int, gamma: complex) -> np.ndarray:
    """Map eigenvalues into the local frame, z -> N^(1/4) gamma z."""
    return np.asarray(points, dtype=complex) * (float(n) ** 0.25 * gamma)


def rescale_inverse(points, n: int, gamma: complex) -> np.ndarray:
    return np.asarray(points, dtype=complex) / (float(n) ** 0.25 * gamma)


def sample_ensemble(
    spec: DeformationSpectrum,
    model: str,
    seed: int,
    z: complex = 0.0,
    with_singular_values: bool = True,
) -> EnsembleSample:
    """One trial: eigenvalues of A + X, singular values of A + X - z."""
    x = sample_matrix(model, spec.n, seed)
    eigs = deformed_eigenvalues(spec, x)
    svs = None
    if with_singular_values:
        svs = hermitize(spec, x, z).singular_values()
    return EnsembleSample(
        seed=int(seed),
        n=spec.n,
        model=model,
        eigenvalues=eigs,
        singular_values=svs,
        base_point=complex(z),
    )


def hermitize(spec: DeformationSpectrum, x: np.ndarray, z: complex = 0.0) -> HermitizedOperator:
    x = np.asarray(x, dtype=complex)
    if x.shape != (spec.n, spec.n):
        raise DimensionMismatch(
            f"sample is {x.shape}, deformation dimension is {spec.n}"
        )
    block = x.copy()
    idx = np.arange(spec.n)
    block[idx, idx] += spec.expand() - complex(z)
    return HermitizedOperator(z=complex(z), block=block)


# ---------------------------------------------------------------------------
# correlation statistics


def radial_bump(w, radius: float = 2.5):
    """Smooth compactly supported bump of |w|; insensitive to the shape
    parameter at leading order since the quadratic density integrates
    isotropically against radial weights."""
    w = np.asarray(w, dtype=complex)
    r2 = (np.abs(w) / radius) ** 2
    out = np.zeros(w.shape, dtype=float)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def anisotropic_bump(w, radius: float = 2.5):
    """Quadrupole-weighted bump; its mean responds to the cone opening of
    the limiting density, which makes it a shape-sensitive probe."""
    w = np.asarray(w, dtype=complex)
    quad_weight = (w.real**2 - w.imag**2) / radius**2
    return radial_bump(w, radius) * quad_weight


_NAMED_TEST_FUNCTIONS = {
    "radial-bump": radial_bump,
    "anisotropic-bump": anisotropic_bump,
}


def _statistic_one_trial(spec, model, k, test_function, n, gamma, seed):
    x = sample_matrix(model, n, seed)
    w = rescale(deformed_eigenvalues(spec, x), n, gamma)
    if k == 1:
        return float(np.sum(np.asarray(test_function(w), dtype=float)))
    # distinct ordered k-tuples; only small k is practical here
    total = 0.0
    for tup in permutations(range(w.size), k):
        total += float(test_function(*(w[i] for i in tup)))
    return total


def estimate_statistic(
    spec: DeformationSpectrum,
    model: str,
    k: int,
    test_function,
    trials: int,
    n: int | None = None,
    seed0: int = 0,
    jobs: int = 1,
    precision: float | None = None,
) -> CorrelationEstimate:
    """Monte Carlo estimate of E sum over distinct k-tuples of F(w_i1..wik).

    Eigenvalues are rescaled by N^(1/4) gamma(A) before evaluation.  Trial j
    uses seed0 + j, so the estimate is reproducible and extendable; the
    reduction is a plain mean regardless of scheduling.
    """
    if isinstance(test_function, str):
        fn_id = test_function
        test_function = _NAMED_TEST_FUNCTIONS[test_function]
    else:
        fn_id = getattr(test_function, "__name__", "custom")
    if n is None:
        n = spec.n
    if k < 1:
        raise ConditionViolated(f"tuple order must be positive, got {k}")
    gamma = scaling_gamma(spec)
    seeds = [int(seed0) + j for j in range(int(trials))]
    args = [(spec, model, k, test_function, n, gamma, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_trial = list(pool.map(_statistic_one_trial, *zip(*args)))
    else:
        per_trial = [_statistic_one_trial(*a) for a in args]
    per_trial = np.asarray(per_trial, dtype=float)
    value = float(np.mean(per_trial))
    if trials > 1:
        std_error = float(np.std(per_trial, ddof=1) / np.sqrt(trials))
    else:
        std_error = float("inf")
    if precision is not None and std_error > precision:
        warnings.warn(
            f"std_error {std_error:.3e} above requested precision {precision:.3e}",
            stacklevel=2,
        )
    return CorrelationEstimate(
        k=int(k),
        test_function_id=fn_id,
        value=value,
        std_error=std_error,
        trials=int(trials),
        n=int(n),
        gamma=complex(gamma),
        per_trial=per_trial,
    )


# ---------------------------------------------------------------------------
# Girko identity


@dataclass(frozen=True)
class GaussianField:
    """Gaussian bump test field with closed-form Laplacian."""

    center: complex = 0.0
    sigma: float = 0.5
    cutoff: float = 8.0  # integration half-width in units of sigma

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        r2 = np.abs(z - self.center) ** 2
        return np.exp(-r2 / (2.0 * self.sigma**2))

    def laplacian(self, z):
        z = np.asarray(z, dtype=complex)
        r2 = np.abs(z - self.center) ** 2
        s2 = self.sigma**2
        return (r2 / s2**2 - 2.0 / s2) * np.exp(-r2 / (2.0 * s2))

    @property
    def half_width(self) -> float:
        return self.cutoff * self.sigma


def girko_check(
    spec: DeformationSpectrum,
    x: np.ndarray,
    f,
    quad_points: int = 128,
    sv_floor: float = 1e-12,
    jitter: float = 1e-8,
    max_retries: int = 5,
) -> GirkoReport:
    """Both sides of the spectral-average identity for one sample.

    lhs is the empirical average of f over the eigenvalues of A + X; rhs is
    (1/4piN) integral of Laplacian(f) * log|det H^z| over a tensor
    Gauss-Legendre grid centered on the field.  The sign follows from
    moving the Laplacian onto log|det| by two integrations by parts.
    Nodes landing within sv_floor of the spectrum are jittered and retried.
    """
    x = np.asarray(x, dtype=complex)
    eigs = deformed_eigenvalues(spec, x)
    lhs = float(np.mean(np.asarray(f.value(eigs), dtype=float)))

    half = f.half_width
    nodes, weights = leggauss(quad_points)
    gx = f.center.real + half * nodes
    gy = f.center.imag + half * nodes
    w2 = np.outer(weights, weights) * half * half

    base = x.copy()
    idx = np.arange(spec.n)
    base[idx, idx] += spec.expand()

    total = 0.0
    jittered = 0
    for i in range(quad_points):
        for j in range(quad_points):
            z = complex(gx[i], gy[j])
            for attempt in range(max_retries + 1):
                shifted = base.copy()
                shifted[idx, idx] -= z
                svs = np.linalg.svd(shifted, compute_uv=False)
                if svs[-1] > sv_floor:
                    break
                jittered += 1
                z += jitter * (attempt + 1) * (1.0 + 1.0j)
            else:
                raise QuadratureUnstable(
                    f"quadrature node {z} pinned to the spectrum after "
                    f"{max_retries} jitters"
                )
            logdet = 2.0 * float(np.sum(np.log(svs)))
            total += w2[i, j] * float(f.laplacian(z)) * logdet
    rhs = float(total / (4.0 * np.pi * spec.n))
    return GirkoReport(
        lhs=lhs,
        rhs=rhs,
        gap=abs(lhs - rhs),
        quad_points=quad_points,
        jittered_nodes=jittered,
    )


def eta_log_identity(singular_values, split: float = 1.0):
    """Per singular value: the regularized eta-integral against -2 log(sv).

    Integrates 2 eta/(sv^2+eta^2) - 2 eta/(1+eta^2) numerically below
    ``split`` and in closed form above it; summed over singular values this
    reproduces -log|det H^z|.  Returns (numeric, analytic) arrays.
    """
    svs = np.asarray(singular_values, dtype=float)
    numeric = np.empty_like(svs)
    for i, lam in enumerate(svs):
        def integrand(eta, lam=lam):
            return 2.0 * eta / (lam * lam + eta * eta) - 2.0 * eta / (1.0 + eta * eta)

        # the integrand turns over at eta ~ sv; hint the adaptive rule
        hint = [min(lam, split)] if 0.0 < lam < split else None
        low, _ = quad(integrand, 0.0, split, points=hint, epsabs=1e-12, limit=200)
        # closed-form tail of the same integrand on [split, infinity)
        tail = np.log((1.0 + split**2) / (lam * lam + split**2))
        numeric[i] = low + tail
    analytic = -2.0 * np.log(svs)
    return numeric, analytic


# ---------------------------------------------------------------------------
# log-determinant statistic


def log_det_statistic(
    spec_t: DeformationSpectrum,
    x: np.ndarray,
    w: complex,
    scalings: FlowScalings,
    eta_upper: float = 1e4,
    panels: int = 48,
    panel_nodes: int = 10,
) -> float:
    """Centered log-determinant of the Hermitization at a rescaled point.

    Tr log|H - i eta_t| minus its deterministic counterpart, evaluated as
    the eta-integral of Im Tr G - 2N Im<M> from eta_t upward on log-spaced
    Gauss-Legendre panels.  The 1/eta leading terms cancel exactly, so the
    truncation at eta_upper costs O(1/eta_upper^2).
    """
    if scalings.eta_t <= 0.0:
        raise ConditionViolated("regularization scale eta_t must be positive")
    n = spec_t.n
    z_w = complex(w) / (scalings.gamma_t * float(n) ** 0.25)
    svs = hermitize(spec_t, x, z_w).singular_values()
    sv2 = svs * svs

    def integrand(eta: float) -> float:
        im_tr_g = float(np.sum(2.0 * eta / (sv2 + eta * eta)))
        sol = solve_v_scalar(spec_t, z=z_w, eta=eta)
        return im_tr_g - 2.0 * n * (sol.v - eta)

    edges = np.geomspace(scalings.eta_t, eta_upper, panels + 1)
    nodes, weights = leggauss(panel_nodes)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mid, rad = 0.5 * (a + b), 0.5 * (b - a)
        for u, wt in zip(nodes, weights):
            total += rad * wt * integrand(mid + rad * u)
    return total


# ---------------------------------------------------------------------------
# smallest singular value and local-law gates


def smallest_sv_tail(
    spec: DeformationSpectrum,
    model: str,
    z: complex,
    eta: float,
    trials: int,
    seed0: int = 0,
) -> TailEstimate:
    """Fraction of trials whose smallest singular value of A + X - z falls
    below eta, with binomial error bars."""
    hits = 0
    for j in range(int(trials)):
        sample = sample_ensemble(spec, model, seed0 + j, z=z)
        if float(sample.singular_values[0]) < eta:
            hits += 1
    p = hits / trials
    err = float(np.sqrt(max(p * (1.0 - p), 1.0 / trials) / trials))
    return TailEstimate(probability=p, std_error=err, trials=int(trials), eta=float(eta))


def local_law_dispersion(
    spec: DeformationSpectrum,
    model: str,
    eta: float,
    trials: int,
    z: complex = 0.0,
    seed0: int = 0,
) -> float:
    """Sample standard deviation of <G^z(i eta) - M(i eta)> across trials.

    Both traces are purely imaginary on the imaginary axis, so the spread
    of the imaginary part is the full fluctuation.
    """
    sol = solve_v_scalar(spec, z=z, eta=eta)
    im_m = sol.v - eta
    gaps = np.empty(int(trials))
    for j in range(int(trials)):
        svs = sample_ensemble(spec, model, seed0 + j, z=z).singular_values
        im_g = float(np.mean(2.0 * eta / (svs * svs + eta * eta))) / 2.0
        gaps[j] = im_g - im_m
    return float(np.std(gaps, ddof=1))


# ---------------------------------------------------------------------------
# plain-file outputs


def save_cloud_csv(path, points) -> None:
    """Eigenvalue cloud as re,im rows for external plotting."""
    points = np.asarray(points, dtype=complex)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re", "im"])
        for p in points:
            writer.writerow([repr(float(p.real)), repr(float(p.imag))])


def save_trials_csv(path, estimate: CorrelationEstimate) -> None:
    """One row per trial plus the pooled summary row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "value"])
        for j, v in enumerate(estimate.per_trial):
            writer.writerow([j, repr(float(v))])
        writer.writerow(["mean", repr(estimate.value)])
        writer.writerow(["std_error", repr(estimate.std_error)])
