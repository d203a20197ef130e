"""Trace maps steering two-cluster flows.

The scalar model map sends a weighted pair of points (z1, z2) to the two
normalised traces that must vanish along every flow segment:

    F1 = p z1^2 conj(z1) + (1-p) z2^2 conj(z2)
    F2 = p z1^3 conj(z1) + (1-p) z2^3 conj(z2)
         - chi (p |z1|^4 + (1-p) |z2|^4)

Its realified 4x4 Jacobian is invertible on the admissible cone (separated
real parts, moduli bounded by c and 1/c, chi <= 1-c, p in [c, 1-c]), which
is what lets the implicit-function solver trade point positions for small
corrective shifts.  The weighted variants act on whole clusters sharing a
common shift, normalised by total mass.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import ConditionViolated, SingularJacobian

__all__ = [
    "PointMapValue",
    "check_z1z2",
    "f_chi_p",
    "det_quartet",
    "weighted_pair_trace",
    "weighted_pair_jacobian",
    "weighted_entry_jacobian",
    "realify",
    "unrealify",
]


def realify(f1: complex, f2: complex) -> np.ndarray:
    return np.array([f1.real, f1.imag, f2.real, f2.imag], dtype=float)


def unrealify(v: np.ndarray) -> tuple[complex, complex]:
    return complex(v[0], v[1]), complex(v[2], v[3])


def _h_derivatives(z: np.ndarray, chi: float):
    """Column pair (d/dx, d/dy) of both trace kernels at z, as complex numbers.

    For a complex-valued kernel H the realified 2x2 block is
    [[Re fx, Re fy], [Im fx, Im fy]] with fx = H_z + H_zbar and
    fy = i(H_z - H_zbar).
    """
    zb = np.conj(z)
    f1z = 2.0 * z * zb
    f1zb = z * z
    f2z = 3.0 * z * z * zb - 2.0 * chi * z * zb * zb
    f2zb = z * z * z - 2.0 * chi * z * z * zb
    return (f1z + f1zb, 1j * (f1z - f1zb), f2z + f2zb, 1j * (f2z - f2zb))


def _block(fx: complex, fy: complex) -> np.ndarray:
    return np.array([[fx.real, fy.real], [fx.imag, fy.imag]], dtype=float)


def check_z1z2(z1: complex, z2: complex, chi: float, p: float, c: float,
               tol: float = 1e-12) -> list:
    """Return the list of violated admissibility conditions (empty if none)."""
    failures = []
    for label, z in (("z1", z1), ("z2", z2)):
        m = abs(z)
        if not (c - tol <= m <= 1.0 / c + tol):
            failures.append(f"|{label}| = {m:.6g} outside [{c:.3g}, {1.0 / c:.3g}]")
    if z1.real * z2.real > tol:
        failures.append("Re z1 and Re z2 have the same sign")
    if abs(z1.real) + abs(z2.real) < c - tol:
        failures.append(f"|Re z1| + |Re z2| = {abs(z1.real) + abs(z2.real):.6g} < {c:.3g}")
    if not (-tol <= chi <= 1.0 - c + tol):
        failures.append(f"chi = {chi:.6g} outside [0, {1.0 - c:.3g}]")
    if not (c - tol <= p <= 1.0 - c + tol):
        failures.append(f"p = {p:.6g} outside [{c:.3g}, {1.0 - c:.3g}]")
    return failures


class PointMapValue(NamedTuple):
    f: tuple
    jacobian: np.ndarray
    inv_norm: float


def f_chi_p(z1: complex, z2: complex, chi: float, p: float,
            c: float | None = None) -> PointMapValue:
    """Two-point trace map, its realified Jacobian, and inverse norm.

    With ``c`` given the admissibility conditions are enforced first
    (ConditionViolated lists every failure) and a singular Jacobian on the
    admissible set raises SingularJacobian.  Without ``c`` the map is
    evaluated unconditionally and a singular Jacobian reports inv_norm =
    inf, which is how degenerate corners (chi = 1 with both points real)
    are probed.
    """
    z1 = complex(z1)
    z2 = complex(z2)
    if c is not None:
        failures = check_z1z2(z1, z2, chi, p, c)
        if failures:
            raise ConditionViolated(failures)
    q = 1.0 - p
    f1 = p * z1 * z1 * np.conj(z1) + q * z2 * z2 * np.conj(z2)
    f2 = (
        p * z1**3 * np.conj(z1)
        + q * z2**3 * np.conj(z2)
        - chi * (p * abs(z1) ** 4 + q * abs(z2) ** 4)
    )
    a1x, a1y, a2x, a2y = _h_derivatives(np.asarray(z1), chi)
    b1x, b1y, b2x, b2y = _h_derivatives(np.asarray(z2), chi)
    jac = np.zeros((4, 4))
    jac[0:2, 0:2] = p * _block(a1x, a1y)
    jac[0:2, 2:4] = q * _block(b1x, b1y)
    jac[2:4, 0:2] = p * _block(a2x, a2y)
    jac[2:4, 2:4] = q * _block(b2x, b2y)
    try:
        inv_norm = float(np.linalg.norm(np.linalg.inv(jac), 2))
    except np.linalg.LinAlgError:
        inv_norm = np.inf
    if not np.isfinite(inv_norm) and c is not None:
        raise SingularJacobian(
            f"trace-map Jacobian singular at z1={z1}, z2={z2}, chi={chi}, p={p}"
        )
    return PointMapValue((complex(f1), complex(f2)), jac, inv_norm)


def det_quartet(z1, z2, chi):
    """Vectorised determinant of the p-stripped 4x4 Jacobian.

    det DF_{chi,p} = p^2 (1-p)^2 * det_quartet(z1, z2, chi): columns 1-2 of
    the Jacobian carry a factor p and columns 3-4 a factor 1-p, so the
    weight only rescales.  Evaluated by block elimination; the top-left
    block has determinant 3|z1|^4 and is invertible whenever z1 != 0.
    Arrays broadcast elementwise.
    """
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    a1x, a1y, a2x, a2y = _h_derivatives(z1, chi)
    b1x, b1y, b2x, b2y = _h_derivatives(z2, chi)

    # 2x2 blocks as (m11, m12, m21, m22) scalar arrays.
    def blk(fx, fy):
        return fx.real, fy.real, fx.imag, fy.imag

    A = blk(a1x, a1y)       # dH1(z1)
    B = blk(b1x, b1y)       # dH1(z2)
    C = blk(a2x, a2y)       # dH2(z1)
    D = blk(b2x, b2y)       # dH2(z2)

    det_a = A[0] * A[3] - A[1] * A[2]
    # inv(A) = adj(A)/det_a; S = D - C inv(A) B computed without stacking.
    ia = (A[3], -A[1], -A[2], A[0])
    # T = inv(A) @ B (times det_a)
    t11 = ia[0] * B[0] + ia[1] * B[2]
    t12 = ia[0] * B[1] + ia[1] * B[3]
    t21 = ia[2] * B[0] + ia[3] * B[2]
    t22 = ia[2] * B[1] + ia[3] * B[3]
    s11 = D[0] - (C[0] * t11 + C[1] * t21) / det_a
    s12 = D[1] - (C[0] * t12 + C[1] * t22) / det_a
    s21 = D[2] - (C[2] * t11 + C[3] * t21) / det_a
    s22 = D[3] - (C[2] * t12 + C[3] * t22) / det_a
    return det_a * (s11 * s22 - s12 * s21)


def weighted_pair_trace(u1, c1, u2, c2, chi: float) -> tuple:
    """Mass-normalised traces of a weighted two-cluster configuration."""
    u1 = np.asarray(u1, dtype=complex)
    u2 = np.asarray(u2, dtype=complex)
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    mass = c1.sum() + c2.sum()
    f1 = (np.sum(c1 * u1 * u1 * np.conj(u1)) + np.sum(c2 * u2 * u2 * np.conj(u2))) / mass
    f2 = (
        np.sum(c1 * (u1**3 * np.conj(u1) - chi * np.abs(u1) ** 4))
        + np.sum(c2 * (u2**3 * np.conj(u2) - chi * np.abs(u2) ** 4))
    ) / mass
    return complex(f1), complex(f2)


def weighted_entry_jacobian(u1, c1, u2, c2, chi: float) -> np.ndarray:
    """Realified 4 x 2(k1+k2) Jacobian with respect to individual entries.

    Column pair 2j, 2j+1 belongs to the j-th entry of the concatenated
    configuration (cluster 1 first).  Summing column pairs within a cluster
    recovers the corresponding shift block of weighted_pair_jacobian.
    """
    u = np.concatenate([np.asarray(u1, dtype=complex), np.asarray(u2, dtype=complex)])
    w = np.concatenate([np.asarray(c1, dtype=float), np.asarray(c2, dtype=float)])
    mass = w.sum()
    f1x, f1y, f2x, f2y = _h_derivatives(u, chi)
    jac = np.empty((4, 2 * u.size))
    q = w / mass
    jac[0, 0::2] = q * f1x.real
    jac[0, 1::2] = q * f1y.real
    jac[1, 0::2] = q * f1x.imag
    jac[1, 1::2] = q * f1y.imag
    jac[2, 0::2] = q * f2x.real
    jac[2, 1::2] = q * f2y.real
    jac[3, 0::2] = q * f2x.imag
    jac[3, 1::2] = q * f2y.imag
    return jac


def weighted_pair_jacobian(u1, c1, u2, c2, chi: float) -> np.ndarray:
    """Realified 4x4 Jacobian with respect to the two common shifts."""
    u1 = np.asarray(u1, dtype=complex)
    u2 = np.asarray(u2, dtype=complex)
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    mass = c1.sum() + c2.sum()
    jac = np.zeros((4, 4))
    for col, (u, w) in enumerate(((u1, c1), (u2, c2))):
        f1x, f1y, f2x, f2y = _h_derivatives(u, chi)
        jac[0:2, 2 * col : 2 * col + 2] = _block(
            complex(np.sum(w * f1x)), complex(np.sum(w * f1y))
        )
        jac[2:4, 2 * col : 2 * col + 2] = _block(
            complex(np.sum(w * f2x)), complex(np.sum(w * f2y))
        )
    return jac / mass
