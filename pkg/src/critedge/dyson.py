"""Matrix Dyson equation solvers on the imaginary axis.

For a deformation A and spectral parameter i*eta the self-consistent
equation for the Hermitized resolvent surrogate M reads

    1/M = S_H - i eta - tr(M),      Im M > 0,

with S_H the Hermitization of A - z.  The self-energy is the scalar tr(M),
so the full 2n x 2n problem closes over one complex number; for normal A it
further reduces to a positive scalar v = Im tr(M) + eta solving

    v = eta + v * mean_i  m_i / (|lambda_i - z|^2 + v^2).

Both routes are implemented independently and cross-checked in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criticality import hessian_at_origin, scaling_gamma, _eigs_of_hessian
from .errors import InvalidEta, NoConvergence, SingularIterate
from .spectrum import DeformationSpectrum

__all__ = [
    "MdeSolution",
    "FullMdeSolution",
    "FlowScalings",
    "solve_v_scalar",
    "solve_mde_full",
    "cubic_residual",
    "rescaled_cubic_residual",
    "flow_scalings",
    "solve_batch",
    "BATCH_FIELDS",
]

# column order of the batch CSV interface
BATCH_FIELDS = ("z_re", "z_im", "eta", "v", "residual", "iterations")


@dataclass(frozen=True)
class MdeSolution:
    """Scalar Dyson solution at one (z, eta) point."""

    z: complex
    eta: float
    v: float
    m_trace: complex
    residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class FullMdeSolution:
    """Full-matrix Dyson solution; `im_min` certifies Im M > 0."""

    z: complex
    eta: float
    m: np.ndarray
    m_trace: complex
    residual: float
    iterations: int
    converged: bool
    im_min: float


@dataclass(frozen=True)
class FlowScalings:
    """Rescaling constants attached to one flow time.

    i4 and i4_tilde agree for normal deformations; both are kept to mirror
    the two distinct inverse fourth-moment traces they evaluate.
    """

    n: int
    delta: float
    i4: float
    i4_tilde: float
    c_t: float
    gamma_t: complex
    theta: float
    eta_infinity: float
    eta_t: float


def _scalar_defect(v: float, eta: float, d: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    """Defect g(v) = v - eta - v*S(v) and derivative g'(v)."""
    den = d + v * v
    s = float(np.sum(w / den))
    sp = float(np.sum(w * (d - v * v) / (den * den)))
    return v - eta - v * s, 1.0 - sp


def solve_v_scalar(
    spec: DeformationSpectrum,
    z: complex = 0.0,
    eta: float = 1e-6,
    tol: float = 1e-12,
    max_iter: int = 800,
) -> MdeSolution:
    """Solve the scalar reduced Dyson equation for a normal deformation.

    Damped fixed-point iteration with the damping halved on oscillation,
    followed by a Newton polish pushed to the numerical noise floor; a
    bracketed bisection rescue covers pathological inputs.

    Parameters
    ----------
    spec : DeformationSpectrum
        Spectrum of A; zero eigenvalues are allowed here (only criticality
        checks require invertibility).
    z, eta : evaluation point; ``eta`` must be positive.
    tol : absolute tolerance on the scalar defect.

    Returns
    -------
    MdeSolution with ``v > 0`` and ``m_trace = i(v - eta)``.
    """
    if not (eta > 0.0) or not np.isfinite(eta):
        raise InvalidEta(f"eta must be positive and finite, got {eta}")
    d = np.abs(spec.eigenvalues - z) ** 2
    w = spec.weights

    # initial guess balancing the cubic regime against the trivial one
    nz = d > 0.0
    guesses = [eta]
    if np.any(nz):
        i4z = float(np.sum(w[nz] / d[nz] ** 2))
        if i4z > 0.0:
            guesses.append((eta / i4z) ** (1.0 / 3.0))
    if np.any(~nz):
        guesses.append(float(np.sqrt(np.sum(w[~nz]))))
    v = max(guesses)

    omega = 1.0
    last_step = 0.0
    iterations = 0
    g, _ = _scalar_defect(v, eta, d, w)
    for _ in range(max_iter):
        if abs(g) < 1e-4:
            break
        target = eta + v * float(np.sum(w / (d + v * v)))
        step = target - v
        if step * last_step < 0.0:
            omega = max(omega / 2.0, 1.0 / 64.0)
        last_step = step
        v_new = (1.0 - omega) * v + omega * target
        if v_new <= 0.0:
            v_new = v / 2.0
        v = v_new
        iterations += 1
        g, _ = _scalar_defect(v, eta, d, w)

    # Newton polish down to the floating-point noise floor
    best_v, best_g = v, abs(g)
    for _ in range(120):
        g, gp = _scalar_defect(v, eta, d, w)
        if abs(g) < best_g:
            best_v, best_g = v, abs(g)
        if gp == 0.0:
            break
        step = -g / gp
        v_next = v + step
        while v_next <= 0.0:
            step /= 2.0
            v_next = v + step
        if v_next == v:
            break
        v = v_next
        iterations += 1
    v, g = best_v, best_g

    if g > tol:
        v, g, extra = _bisection_rescue(eta, d, w, tol)
        iterations += extra
    converged = g <= tol
    return MdeSolution(
        z=complex(z),
        eta=float(eta),
        v=float(v),
        m_trace=1j * (v - eta),
        residual=float(g),
        iterations=iterations,
        converged=bool(converged),
    )


def _bisection_rescue(eta, d, w, tol, max_iter=200):
    lo, hi = eta * (1.0 - 1e-12), max(1.0, 2.0 * eta)
    glo, _ = _scalar_defect(lo, eta, d, w)
    ghi, _ = _scalar_defect(hi, eta, d, w)
    it = 0
    while ghi < 0.0 and it < 80:
        hi *= 2.0
        ghi, _ = _scalar_defect(hi, eta, d, w)
        it += 1
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm, _ = _scalar_defect(mid, eta, d, w)
        it += 1
        if abs(gm) <= tol or hi - lo < 1e-17 * max(1.0, mid):
            return mid, abs(gm), it
        if gm * glo <= 0.0:
            hi = mid
        else:
            lo, glo = mid, gm
    mid = 0.5 * (lo + hi)
    gm, _ = _scalar_defect(mid, eta, d, w)
    return mid, abs(gm), it


def _hermitization(a, z: complex) -> np.ndarray:
    if isinstance(a, DeformationSpectrum):
        y = a.dense() - z * np.eye(a.n)
    else:
        y = np.asarray(a, dtype=complex) - z * np.eye(np.asarray(a).shape[0])
    n = y.shape[0]
    h = np.zeros((2 * n, 2 * n), dtype=complex)
    h[:n, n:] = y
    h[n:, :n] = y.conj().T
    return h


def solve_mde_full(
    a,
    z: complex = 0.0,
    eta: float = 1e-6,
    tol: float = 1e-10,
    max_iter: int = 5000,
) -> FullMdeSolution:
    """Solve the full matrix Dyson equation for the Hermitization of A - z.

    The iteration runs on the complex scalar self-energy s = tr(M) through
    the spectral decomposition of the Hermitization (computed once), without
    assuming any symmetry of s.  A singular iterate (Im(i eta + s) <= 0)
    restarts the loop with stronger damping.

    Parameters
    ----------
    a : DeformationSpectrum or dense square matrix.
    tol : tolerance on |tr((S_H - i eta - s)^-1) - s|, the trace-norm defect
        of the fixed point.
    """
    if not (eta > 0.0) or not np.isfinite(eta):
        raise InvalidEta(f"eta must be positive and finite, got {eta}")
    h = _hermitization(a, z)
    evals, vecs = np.linalg.eigh(h)
    two_n = evals.size

    omega = 0.5
    for attempt in range(6):
        s = 1j * eta
        ok = True
        iterations = 0
        for it in range(max_iter):
            shift = evals - 1j * eta - s
            if np.any(np.abs(shift) < 1e-300):
                ok = False
                break
            s_map = complex(np.mean(1.0 / shift))
            if (eta + s_map.imag) <= 0.0:
                ok = False
                break
            s_new = (1.0 - omega) * s + omega * s_map
            iterations = it + 1
            if abs(s_new - s) <= 0.1 * tol and abs(s_map - s_new) <= tol:
                s = s_new
                break
            s = s_new
        if ok:
            break
        omega /= 2.0
    else:
        raise SingularIterate("full Dyson iteration kept leaving the upper half plane")
    if not ok:
        raise SingularIterate("full Dyson iteration kept leaving the upper half plane")

    # Newton polish: the damped map contracts like 1 - O(eta^(2/3)) near a
    # criticality, too slowly for tight tolerances
    for _ in range(60):
        shift = evals - 1j * eta - s
        g = complex(np.mean(1.0 / shift)) - s
        if abs(g) <= 1e-16:
            break
        gp = complex(np.mean(shift**-2.0)) - 1.0
        if gp == 0:
            break
        step = g / gp
        trial = s - step
        lam = 1.0
        while lam > 1e-4 and (eta + trial.imag) <= 0.0:
            lam /= 2.0
            trial = s - lam * step
        if (eta + trial.imag) <= 0.0:
            break
        new_g = complex(np.mean(1.0 / (evals - 1j * eta - trial))) - trial
        if abs(new_g) >= abs(g):
            break
        s = trial
        iterations += 1

    diag = 1.0 / (evals - 1j * eta - s)
    residual = abs(complex(np.mean(diag)) - s)
    converged = residual <= tol
    if not converged:
        raise NoConvergence(f"full Dyson solve defect {residual:.3e} exceeds tol {tol}")
    m = (vecs * diag) @ vecs.conj().T
    im_min = float(np.min((1.0 / (evals - 1j * eta - s)).imag))
    return FullMdeSolution(
        z=complex(z),
        eta=float(eta),
        m=m,
        m_trace=complex(np.mean(diag)),
        residual=float(residual),
        iterations=iterations,
        converged=bool(converged),
        im_min=im_min,
    )


def solve_batch(spec: DeformationSpectrum, points) -> list[dict]:
    """Solve the scalar equation on a grid of (z, eta) points.

    ``points`` is an iterable of mappings with keys z_re, z_im, eta (the
    JSON batch format); returns one dict per point in BATCH_FIELDS order.
    """
    rows = []
    for p in points:
        z = complex(float(p["z_re"]), float(p["z_im"]))
        eta = float(p["eta"])
        sol = solve_v_scalar(spec, z, eta)
        rows.append(
            {
                "z_re": z.real,
                "z_im": z.imag,
                "eta": eta,
                "v": sol.v,
                "residual": sol.residual,
                "iterations": sol.iterations,
            }
        )
    return rows


def cubic_residual(
    spec: DeformationSpectrum,
    report=None,
    z: complex = 0.0,
    eta: float = 1e-6,
    v: float | None = None,
) -> float:
    """Defect of the approximate cubic law for v near a critical origin.

    Evaluates |I4 v^3 - (1/2) z^T Hess z * v - eta| where I4 = tr |A|^-4 and
    the Hessian is taken at the origin (from ``report`` when supplied).
    The documented bound is O(|z|^4 + eta^(4/3)).
    """
    if v is None:
        v = solve_v_scalar(spec, z, eta).v
    i4 = spec.inv_modulus_power_trace(4)
    h = report.hessian if report is not None else hessian_at_origin(spec)
    xy = np.array([complex(z).real, complex(z).imag])
    quad = 0.5 * float(xy @ np.asarray(h, dtype=float) @ xy)
    return abs(i4 * v**3 - quad * v - eta)


def flow_scalings(spec: DeformationSpectrum, n: int | None = None, delta: float = 0.05) -> FlowScalings:
    """Evaluate the flow rescaling constants for one deformation.

    ``eta_infinity = n^(-3/4-delta)`` and ``eta_t = eta_infinity / c_t`` with
    ``c_t = I4^(-1/4)``.  The phase of gamma_t aligns the large Hessian
    eigendirection, matching the scaling factor used for eigenvalue clouds.
    """
    if n is None:
        n = spec.n
    spec.require_invertible()
    i4 = spec.inv_modulus_power_trace(4)
    i4_tilde = float(np.real(spec.mixed_inverse_trace(2, 2)))
    _, _, theta = _eigs_of_hessian(hessian_at_origin(spec))
    c_t = i4 ** (-0.25)
    gamma_t = complex(i4 ** (-0.25) * np.sqrt(i4_tilde) * np.exp(1j * theta))
    eta_inf = float(n) ** (-0.75 - delta)
    return FlowScalings(
        n=int(n),
        delta=float(delta),
        i4=float(i4),
        i4_tilde=i4_tilde,
        c_t=float(c_t),
        gamma_t=gamma_t,
        theta=float(theta),
        eta_infinity=eta_inf,
        eta_t=float(eta_inf / c_t),
    )


def rescaled_cubic_residual(
    spec: DeformationSpectrum,
    w: complex,
    t_scalings: FlowScalings | None = None,
    n: int | None = None,
    alpha: float | None = None,
) -> float:
    """Defect of the flow-normalised cubic law at a rescaled point w.

    Evaluates
    ``|(I4^(1/4) v)^3 - n^(-1/2)/2 * ((Re w)^2 + alpha (Im w)^2)/(1+alpha)
    * (I4^(1/4) v) - eta_inf|``
    with ``v`` solved at the shifted point and at ``eta = eta_t``.

    The shift uses the density scaling factor (twice the flow factor in
    modulus); with the flow factor alone the quadratic coefficient would be
    off by four and the documented O(1/n) bound would fail.
    """
    if t_scalings is None:
        t_scalings = flow_scalings(spec, n)
    n_eff = t_scalings.n if n is None else n
    if alpha is None:
        h = hessian_at_origin(spec)
        lam1, lam2, _ = _eigs_of_hessian(h)
        alpha = lam2 / lam1
    gamma_density = 2.0 * t_scalings.gamma_t
    z_w = complex(w / (gamma_density * n_eff**0.25))
    sol = solve_v_scalar(spec, z_w, t_scalings.eta_t)
    u = t_scalings.i4**0.25 * sol.v
    quad = 0.5 * ((w.real**2 + alpha * w.imag**2) / (1.0 + alpha))
    return abs(u**3 - quad * u / np.sqrt(n_eff) - t_scalings.eta_infinity)
