"""Geometric and dynamical primitives: the linear plant, polytopes, ellipsoids.

An ellipsoid of shape ``W`` and radius ``r`` is the set
``{x : x^T W^{-1} x <= r^2}``. Every set used by the controllers is either a
polytope ``{x : H x <= h}`` containing the origin or such an ellipsoid
centred at the origin, so the arithmetic needed here is small and exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PD_REL_TOL = 1e-12
SYM_REL_TOL = 1e-12
CONTAINS_REL_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when array shapes do not fit together."""


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a float 2-D array, promoting scalars and vectors."""
    arr = np.array(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def is_symmetric(M: np.ndarray, rel_tol: float = SYM_REL_TOL) -> bool:
    scale = max(np.abs(M).max(initial=0.0), 1.0)
    return bool(np.abs(M - M.T).max(initial=0.0) <= rel_tol * scale)


def min_eig(M: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of ``M``."""
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def is_pd(M: np.ndarray, rel_tol: float = PD_REL_TOL) -> bool:
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    return bool(ev[-1] > 0 and ev[0] > rel_tol * ev[-1])


def is_psd(M: np.ndarray, rel_tol: float = PD_REL_TOL) -> bool:
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    scale = max(abs(ev[-1]), abs(ev[0]), 0.0)
    return bool(ev[0] >= -rel_tol * scale)


def inv_sqrt(W: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root of a positive definite matrix."""
    ev, V = np.linalg.eigh(0.5 * (W + W.T))
    if ev[0] <= 0:
        raise ValueError("matrix is not positive definite")
    return (V / np.sqrt(ev)) @ V.T


@dataclass(frozen=True)
class LinearSystem:
    """Plant ``x+ = A x + B u + w`` with zero-mean i.i.d. noise of covariance ``Gamma_w``."""

    A: np.ndarray
    B: np.ndarray
    Gamma_w: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        G = as_matrix(self.Gamma_w, "Gamma_w")
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or G.shape != (n, n):
            raise DimensionError(
                f"inconsistent plant dimensions A{A.shape} B{B.shape} Gamma_w{G.shape}"
            )
        if not is_symmetric(G):
            raise ValueError("Gamma_w must be symmetric")
        if not is_psd(G):
            raise ValueError("Gamma_w must be positive semidefinite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Gamma_w", G)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def noise_free(self) -> bool:
        return not np.any(self.Gamma_w)


@dataclass(frozen=True)
class Polytope:
    """Halfspace description ``{x : H x <= h}`` of a set containing the origin strictly."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = as_matrix(self.H, "H")
        h = as_vector(self.h, "h")
        if H.shape[0] != h.shape[0]:
            raise DimensionError(f"H has {H.shape[0]} rows but h has {h.shape[0]} entries")
        if np.any(h <= 0):
            raise ValueError("polytope must contain the origin strictly (h > 0)")
        if np.any(np.abs(H).max(axis=1) == 0):
            raise ValueError("polytope has a zero row")
        h.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @classmethod
    def box(cls, bounds) -> "Polytope":
        """Symmetric box ``|x_i| <= bounds_i``."""
        b = as_vector(bounds)
        d = b.size
        H = np.vstack([np.eye(d), -np.eye(d)])
        return cls(H, np.concatenate([b, b]))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = as_vector(x)
        if x.size != self.dim:
            raise DimensionError(f"point has dimension {x.size}, polytope {self.dim}")
        return bool(np.all(self.H @ x <= self.h + tol))

    def scaled(self, gamma: float) -> "Polytope":
        return Polytope(self.H, gamma * self.h)


@dataclass(frozen=True)
class Ellipsoid:
    """Origin-centred ellipsoid ``{x : x^T W^{-1} x <= r^2}``."""

    W: np.ndarray
    r: float

    def __post_init__(self):
        W = as_matrix(self.W, "W")
        if W.shape[0] != W.shape[1]:
            raise DimensionError(f"shape matrix must be square, got {W.shape}")
        if not is_symmetric(W, 1e-9):
            raise ValueError("shape matrix must be symmetric")
        if not is_pd(W):
            raise ValueError("shape matrix must be positive definite")
        r = float(self.r)
        if not r >= 0:
            raise ValueError(f"radius must be nonnegative, got {r}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "r", r)

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    def norm(self, x) -> float:
        """Shape norm ``sqrt(x^T W^{-1} x)``."""
        x = as_vector(x)
        if x.size != self.dim:
            raise DimensionError(f"point has dimension {x.size}, ellipsoid {self.dim}")
        return float(np.sqrt(max(x @ np.linalg.solve(self.W, x), 0.0)))

    def contains(self, x) -> bool:
        return ellipsoid_contains(self, x)

    def scaled(self, gamma: float) -> "Ellipsoid":
        return Ellipsoid(self.W, gamma * self.r)


def shape_norm(W: np.ndarray, x: np.ndarray) -> float:
    return float(np.sqrt(max(float(x @ np.linalg.solve(W, x)), 0.0)))


def ellipsoid_contains(E: Ellipsoid, x) -> bool:
    """Membership ``x^T W^{-1} x <= r^2`` with relative slack 1e-9."""
    x = as_vector(x)
    if x.size != E.dim:
        raise DimensionError(f"point has dimension {x.size}, ellipsoid {E.dim}")
    q = float(x @ np.linalg.solve(E.W, x))
    return q <= E.r**2 * (1.0 + CONTAINS_REL_TOL)


def inscribed_radius(W, P: Polytope) -> float:
    """Largest ``r`` with ``E_W(r)`` inside ``P``.

    The support function of ``E_W(r)`` along row ``H_i`` is
    ``r * sqrt(H_i W H_i^T)``, so the answer is ``min_i h_i / sqrt(H_i W H_i^T)``.
    Rows need not be normalized.
    """
    W = as_matrix(W, "W")
    if W.shape != (P.dim, P.dim):
        raise DimensionError(f"shape {W.shape} does not match polytope dimension {P.dim}")
    if not is_pd(W):
        raise ValueError("shape matrix must be positive definite")
    support = np.sqrt(np.einsum("ij,jk,ik->i", P.H, W, P.H))
    return float(np.min(P.h / support))


def support_widths(W: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``sqrt(H_i W H_i^T)`` for each row, i.e. the support of ``E_W(1)`` along ``H_i``."""
    return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", H, W, H), 0.0))


def same_shape_difference(r1: float, r2: float) -> float:
    """Radius of ``E_W(r1) - E_W(r2)`` (Pontryagin difference), clamped at zero.

    An empty difference (``r1 < r2``) returns 0; callers that care must
    check the radii themselves.
    """
    if r1 < 0 or r2 < 0:
        raise ValueError(f"radii must be nonnegative, got {r1}, {r2}")
    return max(r1 - r2, 0.0)


def simulate_step(sys: LinearSystem, x, u, w) -> np.ndarray:
    x = as_vector(x, "x")
    u = as_vector(u, "u")
    w = as_vector(w, "w")
    if x.size != sys.n or u.size != sys.m or w.size != sys.n:
        raise DimensionError(
            f"expected x,w in R^{sys.n} and u in R^{sys.m}, got {x.size}, {u.size}, {w.size}"
        )
    return sys.A @ x + sys.B @ u + w
