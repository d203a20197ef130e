"""Spectral description of a normal deformation.

A deformation is a normal matrix known through its spectrum: distinct
eigenvalues with integer multiplicities.  All trace functionals in this
package are multiplicity-weighted sums over that list, so the ambient
dimension enters only through the weights and through scaling laws.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroEigenvalue

__all__ = ["DeformationSpectrum"]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DeformationSpectrum:
    """Eigenvalues and multiplicities of a normal deformation matrix.

    Parameters
    ----------
    eigenvalues:
        Complex eigenvalues, one entry per distinct value.  Repeated values
        are tolerated (useful mid-flow when blocks collide); use
        :meth:`canonical` to merge them.
    multiplicities:
        Positive integers, same length as ``eigenvalues``, summing to ``n``.
    n:
        Ambient matrix dimension.
    basis_id:
        Optional label of the diagonalising basis.  Purely bookkeeping; trace
        functionals do not depend on it.
    """

    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    n: int
    basis_id: str | None = field(default=None)

    def __post_init__(self) -> None:
        ev = np.asarray(self.eigenvalues, dtype=complex).reshape(-1)
        mult = np.asarray(self.multiplicities, dtype=np.int64).reshape(-1)
        if ev.shape != mult.shape:
            raise DimensionMismatch(
                f"{ev.size} eigenvalues vs {mult.size} multiplicities"
            )
        if ev.size == 0:
            raise DimensionMismatch("spectrum must contain at least one eigenvalue")
        if not np.all(np.isfinite(ev.view(float))):
            raise DimensionMismatch("eigenvalues must be finite")
        if np.any(mult <= 0):
            raise DimensionMismatch("multiplicities must be positive")
        total = int(mult.sum())
        if total != self.n:
            raise DimensionMismatch(
                f"multiplicities sum to {total}, expected n={self.n}"
            )
        object.__setattr__(self, "eigenvalues", _readonly(ev))
        object.__setattr__(self, "multiplicities", _readonly(mult))

    # -- constructors -------------------------------------------------

    @classmethod
    def from_values(
        cls,
        values: Iterable[complex],
        multiplicities: Iterable[int] | None = None,
        n: int | None = None,
        basis_id: str | None = None,
    ) -> "DeformationSpectrum":
        """Build a spectrum, defaulting every multiplicity to one."""
        ev = np.asarray(list(values), dtype=complex)
        if multiplicities is None:
            mult = np.ones(ev.size, dtype=np.int64)
        else:
            mult = np.asarray(list(multiplicities), dtype=np.int64)
        if n is None:
            n = int(mult.sum())
        return cls(ev, mult, n, basis_id)

    # -- serialisation ------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "n": int(self.n),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "multiplicities": [int(m) for m in self.multiplicities],
            **({"basis_id": self.basis_id} if self.basis_id is not None else {}),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DeformationSpectrum":
        try:
            n = int(data["n"])
            ev = np.array([complex(re, im) for re, im in data["eigenvalues"]])
            mult = np.asarray(data["multiplicities"], dtype=np.int64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DimensionMismatch(f"malformed spectrum record: {exc}") from exc
        return cls(ev, mult, n, data.get("basis_id"))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DeformationSpectrum":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    # -- weighted trace calculus --------------------------------------

    @property
    def weights(self) -> np.ndarray:
        """Multiplicities normalised to sum to one."""
        return self.multiplicities / float(self.n)

    def trace(self, values: np.ndarray | Sequence[complex]) -> complex:
        """Normalised trace of a diagonal function given entrywise values."""
        return complex(np.sum(np.asarray(values) * self.weights))

    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)

    def require_invertible(self, tol: float = 0.0) -> None:
        m = self.moduli()
        if np.any(m <= tol):
            raise ZeroEigenvalue(
                f"smallest eigenvalue modulus {m.min():.3e} is not invertible"
            )

    def inv_modulus_power_trace(self, power: int, shift: complex = 0.0) -> float:
        """Normalised trace of |A - shift|^(-power); raises on exact zeros."""
        d = np.abs(self.eigenvalues - shift)
        if np.any(d == 0.0):
            raise ZeroEigenvalue(f"shift {shift} coincides with an eigenvalue")
        return float(np.sum(self.weights * d ** (-power)))

    def mixed_inverse_trace(self, k: int, kbar: int) -> complex:
        """Normalised trace of A^(-k) conj(A)^(-kbar) for a normal matrix."""
        self.require_invertible()
        ev = self.eigenvalues
        vals = ev ** (-k) * np.conj(ev) ** (-kbar)
        return self.trace(vals)

    def operator_norms(self) -> tuple[float, float]:
        """(norm of A, norm of A inverse) for a normal matrix."""
        m = self.moduli()
        if np.any(m == 0.0):
            raise ZeroEigenvalue("zero eigenvalue has no inverse norm")
        return float(m.max()), float(1.0 / m.min())

    # -- elementary transforms ----------------------------------------

    def scaled(self, s: complex) -> "DeformationSpectrum":
        return DeformationSpectrum(self.eigenvalues * s, self.multiplicities, self.n, self.basis_id)

    def rotated(self, phase: float) -> "DeformationSpectrum":
        return self.scaled(np.exp(1j * phase))

    def with_eigenvalues(self, ev: np.ndarray) -> "DeformationSpectrum":
        return DeformationSpectrum(ev, self.multiplicities, self.n, self.basis_id)

    def canonical(self, merge_tol: float = 0.0) -> "DeformationSpectrum":
        """Sort lexicographically and merge duplicate eigenvalues.

        ``merge_tol`` is an absolute distance below which consecutive sorted
        values are considered equal.
        """
        order = np.lexsort((self.eigenvalues.imag, self.eigenvalues.real))
        ev = self.eigenvalues[order]
        mult = self.multiplicities[order]
        out_ev: list[complex] = []
        out_m: list[int] = []
        run_vals: list[complex] = []
        run_m: list[int] = []

        def flush() -> None:
            if not run_vals:
                return
            if all(v == run_vals[0] for v in run_vals):
                # exact duplicates must merge without touching the value
                z = run_vals[0]
            else:
                tot = sum(run_m)
                z = sum(v * m for v, m in zip(run_vals, run_m)) / tot
            out_ev.append(complex(z))
            out_m.append(int(sum(run_m)))
            run_vals.clear()
            run_m.clear()

        for z, m in zip(ev, mult):
            if run_vals and abs(z - run_vals[-1]) > merge_tol:
                flush()
            run_vals.append(complex(z))
            run_m.append(int(m))
        flush()
        return DeformationSpectrum(np.array(out_ev), np.array(out_m), self.n, self.basis_id)

    def support_size(self, merge_tol: float = 1e-9) -> int:
        return self.canonical(merge_tol=merge_tol).eigenvalues.size

    def expand(self) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity (length n)."""
        return np.repeat(self.eigenvalues, self.multiplicities)

    def dense(self) -> np.ndarray:
        """Diagonal dense representative in the diagonalising basis."""
        return np.diag(self.expand())
