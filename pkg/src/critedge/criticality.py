"""Criticality functionals of a deformation at the origin.

A deformation A is critical at the origin when its norm and inverse norm are
bounded, the normalised trace of |A|^-2 equals one, and the mixed trace of
A^-2 (A*)^-1 vanishes.  The local geometry of the pseudospectral landscape is
then captured by the 2x2 Hessian of (x, y) -> tr |A - x - iy|^-2 at zero,
whose eigenvalue ratio (the shape parameter) and trace (through the scaling
factor) control the eigenvalue density of A + X near the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHessian, ZeroEigenvalue
from .spectrum import DeformationSpectrum

__all__ = [
    "CriticalityReport",
    "verify_criticality",
    "hessian_at_origin",
    "shape_alpha",
    "scaling_gamma",
    "beta_offset",
    "density_quadratic",
    "chi",
    "alpha_from_chi",
]

#: Relative tolerance used when none is supplied.
DEFAULT_TOL = 1e-8

#: Relative eigenvalue gap below which the Hessian counts as rotationally tied.
TIE_TOL = 1e-9


def _mixed_traces(a) -> tuple[complex, float, float]:
    """Return (R, T, I4) with R = tr A^-3 (A*)^-1, T = tr A^-2 (A*)^-2,
    I4 = tr |A|^-4, all normalised.

    Accepts a DeformationSpectrum (normal case, computed eigenvalue-wise) or
    a square complex matrix (dense escape hatch for non-normal examples).
    """
    if isinstance(a, DeformationSpectrum):
        a.require_invertible()
        ev = a.eigenvalues
        w = a.weights
        r = complex(np.sum(w * ev ** (-3) * np.conj(ev) ** (-1)))
        t = float(np.sum(w * np.abs(ev) ** (-4)).real)
        return r, t, t
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("dense input must be a square matrix")
    n = m.shape[0]
    try:
        mi = np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise ZeroEigenvalue("dense deformation is singular") from exc
    mi2 = mi @ mi
    mih = mi.conj().T
    r = complex(np.trace(mi2 @ mi @ mih) / n)
    t = float(np.real(np.trace(mi2 @ mih @ mih) / n))
    i4 = float(np.real(np.trace((mi @ mih) @ (mi @ mih).conj().T) / n))
    return r, t, i4


def hessian_at_origin(a) -> np.ndarray:
    """Hessian of (x, y) -> tr |A - x - iy|^-2 at the origin.

    Parameters
    ----------
    a:
        Normal deformation given as a :class:`DeformationSpectrum`, or a
        dense square matrix for the non-normal examples.

    Returns
    -------
    2x2 symmetric ndarray with entries
    ``[[4 Re R + 2 T, -4 Im R], [-4 Im R, -4 Re R + 2 T]]``.
    """
    r, t, _ = _mixed_traces(a)
    h11 = 4.0 * r.real + 2.0 * t
    h22 = -4.0 * r.real + 2.0 * t
    h12 = -4.0 * r.imag
    return np.array([[h11, h12], [h12, h22]])


def _eigs_of_hessian(h: np.ndarray) -> tuple[float, float, float]:
    """Closed-form (lambda1 >= lambda2, theta) of a symmetric 2x2 matrix.

    theta in [0, pi) is the angle of the lambda1 eigendirection; exact ties
    (relative gap below TIE_TOL) report theta = 0.
    """
    h = np.asarray(h, dtype=float)
    mean = 0.5 * (h[0, 0] + h[1, 1])
    b = 0.5 * (h[0, 0] - h[1, 1])
    c = h[0, 1]
    dev = float(np.hypot(b, c))
    lam1 = mean + dev
    lam2 = mean - dev
    if lam1 - lam2 <= TIE_TOL * max(abs(lam1), 1e-300):
        theta = 0.0
    else:
        theta = 0.5 * np.arctan2(c, b)
        if theta < 0.0:
            theta += np.pi
        if theta >= np.pi:  # fold the half-open interval
            theta -= np.pi
    return lam1, lam2, theta + 0.0  # normalises -0.0


def shape_alpha(hessian: np.ndarray) -> float:
    """Shape parameter: ratio of the small to the large Hessian eigenvalue."""
    lam1, lam2, _ = _eigs_of_hessian(hessian)
    if lam1 <= 0.0:
        raise DegenerateHessian(f"largest Hessian eigenvalue {lam1:.3e} <= 0")
    return lam2 / lam1


def scaling_gamma(a) -> complex:
    """Scaling factor: sqrt(trace of Hessian) / tr(|A|^-4)^(1/4) * exp(i theta).

    The phase aligns the large Hessian eigendirection with the real axis;
    rotational ties use phase zero.
    """
    r, t, i4 = _mixed_traces(a)
    h = hessian_at_origin(a)
    lam1, lam2, theta = _eigs_of_hessian(h)
    if lam1 <= 0.0:
        raise DegenerateHessian(f"largest Hessian eigenvalue {lam1:.3e} <= 0")
    tr_h = lam1 + lam2
    if tr_h <= 0.0:
        raise DegenerateHessian(f"Hessian trace {tr_h:.3e} <= 0")
    return complex(np.sqrt(tr_h) / i4**0.25 * np.exp(1j * theta))


def beta_offset(spec: DeformationSpectrum, z: complex) -> float:
    """Edge offset sqrt(n) * (1 - tr |A - z|^-2) at the point z."""
    return float(np.sqrt(spec.n) * (1.0 - spec.inv_modulus_power_trace(2, z)))


def chi(spec: DeformationSpectrum) -> tuple[float, float]:
    """Normalised ratio tr(B^3 B*) / tr(|B^2|^2) for a normal matrix B.

    Returns ``(real part, imaginary residual)``.  For spectra produced by the
    inverse-and-rotate transform the imaginary part vanishes; it is exposed
    as a diagnostic rather than silently dropped.
    """
    ev = spec.eigenvalues
    w = spec.weights
    num = complex(np.sum(w * ev**3 * np.conj(ev)))
    den = float(np.sum(w * np.abs(ev) ** 4))
    val = num / den
    return float(val.real), float(val.imag)


def alpha_from_chi(chi_value: float) -> float:
    """Shape parameter from the cubic trace ratio: (1 - 2 chi) / (1 + 2 chi)."""
    return (1.0 - 2.0 * chi_value) / (1.0 + 2.0 * chi_value)


@dataclass(frozen=True)
class CriticalityReport:
    """Full diagnostic record of a criticality check."""

    n: int
    inv2: float
    skew: complex
    hessian: np.ndarray
    lambda1: float
    lambda2: float
    alpha: float
    theta: float
    gamma: complex
    beta: float
    chi: float
    chi_imag: float
    norm_a: float
    norm_a_inv: float
    is_critical: bool
    frak_c: float
    tol: float

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "inv2": self.inv2,
            "skew_re": self.skew.real,
            "skew_im": self.skew.imag,
            "h11": float(self.hessian[0, 0]),
            "h12": float(self.hessian[0, 1]),
            "h22": float(self.hessian[1, 1]),
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "alpha": self.alpha,
            "theta": self.theta,
            "gamma_re": self.gamma.real,
            "gamma_im": self.gamma.imag,
            "beta": self.beta,
            "chi": self.chi,
            "chi_imag": self.chi_imag,
            "norm_a": self.norm_a,
            "norm_a_inv": self.norm_a_inv,
            "is_critical": self.is_critical,
            "frak_c": self.frak_c,
            "tol": self.tol,
        }


def verify_criticality(
    spec: DeformationSpectrum,
    frak_c: float = 10.0,
    tol: float = DEFAULT_TOL,
) -> CriticalityReport:
    """Check the three criticality conditions and assemble the report.

    Critical means: operator norm and inverse norm at most ``frak_c``,
    |tr |A|^-2 - 1| <= tol and |tr A^-2 (A*)^-1| <= tol.  The tolerance is
    interpreted relative to the unit normalisation, so it is applied as an
    absolute bound on both defects.
    """
    spec.require_invertible()
    norm_a, norm_a_inv = spec.operator_norms()
    inv2 = spec.inv_modulus_power_trace(2)
    skew = spec.mixed_inverse_trace(2, 1)

    h = hessian_at_origin(spec)
    lam1, lam2, theta = _eigs_of_hessian(h)
    if lam1 <= 0.0:
        raise DegenerateHessian(f"largest Hessian eigenvalue {lam1:.3e} <= 0")
    alpha = lam2 / lam1
    gamma = scaling_gamma(spec)
    beta = float(np.sqrt(spec.n) * (1.0 - inv2))

    # chi of the inverse-side spectrum obtained by the inverse-and-rotate map
    r = spec.mixed_inverse_trace(3, 1)
    i4 = spec.inv_modulus_power_trace(4)
    chi_b = abs(r) / i4

    critical = (
        norm_a <= frak_c
        and norm_a_inv <= frak_c
        and abs(inv2 - 1.0) <= tol
        and abs(skew) <= tol
    )
    return CriticalityReport(
        n=spec.n,
        inv2=inv2,
        skew=skew,
        hessian=h,
        lambda1=lam1,
        lambda2=lam2,
        alpha=alpha,
        theta=theta,
        gamma=gamma,
        beta=beta,
        chi=chi_b,
        chi_imag=0.0,
        norm_a=norm_a,
        norm_a_inv=norm_a_inv,
        is_critical=bool(critical),
        frak_c=frak_c,
        tol=tol,
    )


def density_quadratic(report: CriticalityReport, spec: DeformationSpectrum, z: complex) -> float:
    """Leading rescaled eigenvalue density near a critical origin.

    Evaluates the quadratic profile
    ``[ (x^2 + alpha y^2)/(1+alpha) + 2 (x^2 + alpha^2 y^2)/(1+alpha)^2 ] / (8 pi)``
    at ``z = x + iy`` (rescaled coordinates), gated by the inside-support
    indicator ``tr |A - z/gamma|^-2 >= 1``.
    """
    alpha = report.alpha
    gamma = report.gamma
    x, y = z.real, z.imag
    inside = spec.inv_modulus_power_trace(2, z / gamma) >= 1.0
    if not inside:
        return 0.0
    one = (x * x + alpha * y * y) / (1.0 + alpha)
    two = 2.0 * (x * x + alpha * alpha * y * y) / (1.0 + alpha) ** 2
    return (one + two) / (8.0 * np.pi)
