"""Dense complex linear algebra kernels shared by the whole package.

Everything here is a pure function of its arguments.  Determinants are
carried as :class:`LogDet` (log-magnitude plus unit phase) because the
determinants appearing downstream grow or shrink exponentially with chain
size and time; they are only ever exponentiated after being combined with
other log-scale terms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack


class LinalgError(Exception):
    """Numerical failure in one of the dense kernels."""


class SingularMatrixError(LinalgError):
    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is exactly singular (zero pivot at index {pivot})")


@dataclass(frozen=True)
class LogDet:
    """Determinant in polar log form: det = exp(log_abs) * phase, |phase| = 1."""

    log_abs: float
    phase: complex

    @property
    def value(self) -> complex:
        return np.exp(self.log_abs) * self.phase

    def __mul__(self, other: "LogDet") -> "LogDet":
        return LogDet(self.log_abs + other.log_abs, self.phase * other.phase)

    def __truediv__(self, other: "LogDet") -> "LogDet":
        return LogDet(self.log_abs - other.log_abs, self.phase / other.phase)

    @classmethod
    def from_value(cls, z: complex) -> "LogDet":
        a = abs(z)
        if a == 0.0:
            raise ValueError("zero has no log-determinant representation")
        return cls(float(np.log(a)), z / a)


class LUFactors(NamedTuple):
    """Partial-pivoting LU factorization, reusable for solves."""

    lu: np.ndarray
    piv: np.ndarray


class EigResult(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray
    vector_cond: float


def _as_square(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with Pade approximation.

    Uses the standard double-precision order/scaling constants.  Raises
    :class:`LinalgError` if the squaring phase overflows.
    """
    a = _as_square(a)
    e = sla.expm(a)
    if not np.all(np.isfinite(e)):
        raise LinalgError(
            f"overflow in matrix exponential (input 1-norm {np.linalg.norm(a, 1):.3e})"
        )
    return e


def lu_logdet(a) -> tuple[LUFactors, LogDet]:
    """LU-factorize ``a`` and assemble its determinant in log space.

    The determinant is the product of the U pivots times the permutation
    sign; accumulating log-magnitudes and phase angles separately keeps it
    exact even when the plain determinant would over/underflow.
    """
    a = _as_square(a)
    with warnings.catch_warnings():
        # singularity is detected from the pivots below and raised properly
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    diag = np.diagonal(lu)
    zero = np.nonzero(diag == 0.0)[0]
    if zero.size:
        raise SingularMatrixError(int(zero[0]))
    sign = 1.0 if np.count_nonzero(piv != np.arange(len(piv))) % 2 == 0 else -1.0
    log_abs = float(np.sum(np.log(np.abs(diag))))
    phase = sign * np.exp(1j * np.sum(np.angle(diag)))
    return LUFactors(lu, piv), LogDet(log_abs, complex(phase))


def solve_factored(factors: LUFactors, b, trans: int = 0) -> np.ndarray:
    """Solve A X = B (or A^H X = B for trans=2) from an existing factorization."""
    b = np.asarray(b, dtype=complex)
    return sla.lu_solve((factors.lu, factors.piv), b, trans=trans, check_finite=False)


def solve(a, b) -> np.ndarray:
    """One-shot linear solve A X = B through LU with partial pivoting."""
    factors, _ = lu_logdet(a)
    return solve_factored(factors, b)


def condition_estimate(factors: LUFactors, anorm: float) -> float:
    """1-norm condition number estimate from LU factors (LAPACK gecon)."""
    rcond, info = lapack.zgecon(factors.lu, anorm, norm="1")
    if info != 0 or rcond == 0.0:
        return np.inf
    return 1.0 / rcond


def eig(a) -> EigResult:
    """Eigendecomposition A V = V diag(w) with an eigenvector condition estimate.

    ``vector_cond`` is the 2-norm condition number of the eigenvector
    matrix; a large value flags a near-defective input.
    """
    a = _as_square(a)
    w, v = np.linalg.eig(a)
    cond = float(np.linalg.cond(v))
    return EigResult(w, v, cond)


def lyapunov_solve(w, f, cond_threshold: float = 1e8) -> np.ndarray:
    """Solve W C + C W^dag = F for Hermitian C.

    Eigendecompose W = S diag(lam) S^-1, transform F into the eigenbasis,
    divide entrywise by lam_a + conj(lam_b), and transform back (O(n^3)).
    When the eigenvector matrix is ill-conditioned beyond
    ``cond_threshold`` the O(n^6) Kronecker-vectorized linear solve is
    used instead.  Requires every pair sum lam_a + conj(lam_b) to be
    nonzero, which holds when the spectrum of W lies strictly in the
    right half plane.
    """
    w = _as_square(w, "W")
    f = _as_square(f, "F")
    if w.shape != f.shape:
        raise ValueError(f"shape mismatch: W {w.shape} vs F {f.shape}")
    n = w.shape[0]

    lam, s, s_cond = eig(w)
    denom = lam[:, None] + lam[None, :].conj()
    bad = np.abs(denom) < 1e-14 * max(1.0, float(np.abs(lam).max()))
    if np.any(bad):
        a, b = np.argwhere(bad)[0]
        raise LinalgError(
            "no unique Lyapunov solution: eigenvalue pair "
            f"lam[{a}]={lam[a]:.6g} and conj(lam[{b}])={np.conj(lam[b]):.6g} sum to ~0"
        )

    if s_cond <= cond_threshold:
        ft = np.linalg.solve(s, np.linalg.solve(s, f.conj().T).conj().T)
        c = s @ (ft / denom) @ s.conj().T
    else:
        eye = np.eye(n)
        big = np.kron(w, eye) + np.kron(eye, w.conj())
        c = np.linalg.solve(big, f.reshape(-1)).reshape(n, n)

    c = 0.5 * (c + c.conj().T)
    resid = np.linalg.norm(w @ c + c @ w.conj().T - f)
    fnorm = np.linalg.norm(f)
    if resid > 1e-10 * max(fnorm, 1e-300):
        raise LinalgError(
            f"Lyapunov residual {resid:.3e} exceeds 1e-10 * ||F|| = {1e-10 * fnorm:.3e}"
        )
    return c
