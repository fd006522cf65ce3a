"""Infinite-horizon discrete LQR by fixed-point iteration of the Riccati map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LinearSystem, as_matrix, is_pd, is_psd


class DareDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class LqrResult:
    """Stabilizing gain ``K`` (so that ``u = K x``), cost matrix ``P`` and ``A_K = A + B K``."""

    K: np.ndarray
    P: np.ndarray
    A_K: np.ndarray
    iterations: int = 0

    def residual(self, Q: np.ndarray, R: np.ndarray) -> float:
        """Relative Frobenius residual of ``Q + K'RK + A_K'PA_K - P``."""
        E = Q + self.K.T @ R @ self.K + self.A_K.T @ self.P @ self.A_K - self.P
        return float(np.linalg.norm(E) / max(np.linalg.norm(self.P), 1e-300))


def spectral_radius(M) -> float:
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got {M.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


def solve_lqr(sys: LinearSystem, Q, R, *, rtol: float = 1e-12, max_iter: int = 10000) -> LqrResult:
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Iterates ``P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA`` from ``P = Q`` until
    the relative Frobenius change drops below ``rtol``.
    """
    A, B = sys.A, sys.B
    Q = as_matrix(Q, "Q")
    R = as_matrix(R, "R")
    if Q.shape != (sys.n, sys.n) or R.shape != (sys.m, sys.m):
        raise ValueError(f"weights have shapes Q{Q.shape} R{R.shape} for n={sys.n}, m={sys.m}")
    if not is_psd(Q):
        raise ValueError("Q must be positive semidefinite")
    if not is_pd(R):
        raise ValueError("R must be positive definite (singular R)")

    P = Q.copy()
    for it in range(1, max_iter + 1):
        BtPA = B.T @ P @ A
        S = R + B.T @ P @ B
        P_next = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(S, BtPA)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise DareDivergence("DARE divergence: iterate became non-finite")
        delta = np.linalg.norm(P_next - P)
        P = P_next
        if delta <= rtol * max(np.linalg.norm(P), 1e-300):
            break
    else:
        raise DareDivergence(f"DARE divergence: no convergence in {max_iter} iterations")

    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    A_K = A + B @ K
    if spectral_radius(A_K) >= 1.0:
        raise DareDivergence("DARE divergence: converged gain is not stabilizing")
    return LqrResult(K=K, P=P, A_K=A_K, iterations=it)
