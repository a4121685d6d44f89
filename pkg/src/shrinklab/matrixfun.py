"""Speed functions extended to symmetric matrices through their spectrum."""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .symfun import DEGENERATE_GAP, DomainError, SpeedFunction, derivs, divided_difference, eval

__all__ = ["SymMatrix", "F_of", "dF", "d2F_action", "ic_matrix_margin"]


class SymMatrix:
    """Symmetric matrix with lazily computed, reproducible spectral data.

    Eigenvalues are ascending; each eigenvector is signed so that its
    largest-magnitude entry is positive.
    """

    def __init__(self, entries, check: bool = True):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        if check:
            scale = max(np.abs(a).max(), 1e-300)
            if np.abs(a - a.T).max() > 1e-14 * scale:
                raise ValueError("matrix is not symmetric")
        self.entries = 0.5 * (a + a.T)
        self.entries.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def _eig(self):
        w, q = np.linalg.eigh(self.entries)
        pick = np.argmax(np.abs(q), axis=0)
        sign = np.sign(q[pick, np.arange(q.shape[1])])
        sign[sign == 0] = 1.0
        return w, q * sign

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eig[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._eig[1]

    def positive_spectrum(self) -> np.ndarray:
        w = self.eigenvalues
        if np.any(w <= 0):
            raise DomainError(f"matrix has non-positive eigenvalue {w.min():.3g}")
        return w


def _sym(A) -> SymMatrix:
    return A if isinstance(A, SymMatrix) else SymMatrix(A)


def F_of(f: SpeedFunction, A) -> float:
    """F(A) = f(eigenvalues of A)."""
    return float(eval(f, _sym(A).positive_spectrum()))


def dF(f: SpeedFunction, A) -> np.ndarray:
    """Gradient of F at A: Q diag(f^i) Q^T."""
    A = _sym(A)
    b = derivs(f, A.positive_spectrum())
    q = A.eigenvectors
    return (q * b.grad) @ q.T


def d2F_action(f: SpeedFunction, A, B) -> float:
    """Second derivative of F at A in direction B.

    In the eigenbasis of A this is ``sum f^ik B_ii B_kk`` plus
    ``2 sum_{i>k} (f^i - f^k)/(k_i - k_k) B_ik^2``; nearly coincident
    eigenvalues use the limit of the divided difference.
    """
    A = _sym(A)
    kappa = A.positive_spectrum()
    q = A.eigenvectors
    Bt = q.T @ np.asarray(B, dtype=float) @ q
    Bt = 0.5 * (Bt + Bt.T)
    b = derivs(f, kappa)
    d = np.diag(Bt)
    dd = divided_difference(b.grad, b.hess, kappa, DEGENERATE_GAP)
    off = np.tril(dd * Bt**2, k=-1).sum()
    return float(d @ b.hess @ d + 2.0 * off)


def ic_matrix_margin(f: SpeedFunction, A, B) -> float:
    """d2F(A)[B,B] + 2 tr(dF B A^-1 B) - 2 <dF, B>^2 / F; >= 0 for inverse-concave f."""
    A = _sym(A)
    G = dF(f, A)
    B = np.asarray(B, dtype=float)
    Ainv = np.linalg.inv(A.entries)
    lin = float(np.sum(G * B))
    return d2F_action(f, A, B) + 2.0 * float(np.trace(G @ B @ Ainv @ B)) - 2.0 * lin**2 / F_of(f, A)
