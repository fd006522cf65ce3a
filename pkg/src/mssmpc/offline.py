"""Offline design: ellipsoidal PRS shape, contraction rate, radii and certificates.

The error ``e = x - z`` under ``u = v + K e`` obeys ``e+ = A_K e + w``. A
shape ``W_x`` and rate ``lam`` with

    lam^2 W_x >= A_K W_x A_K'       and       (1 - lam)^2 W_x >= Gamma_w

make ``E_{W_x}(rho (1 - lam^l))`` a probabilistic reachable set for step ``l``
at level ``1 - eps``, where ``rho`` depends only on ``eps`` and the noise
family. Tightened nominal sets follow by radius subtraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .lqr import LqrResult, solve_lqr, spectral_radius
from .model import LinearSystem, Polytope, as_matrix, inscribed_radius, inv_sqrt, min_eig
from .special import chi2_radius

log = logging.getLogger(__name__)

FAMILIES = ("generic", "gaussian")
DEFAULT_ETA = 1e5
DEFAULT_CHECK_TOL = 1e-9
MU_GRID_SIZE = 2000
CERT_TOL = 1e-6


class DesignInfeasible(ValueError):
    """No admissible (lambda, W_x) for the given noise and constraints."""


def rho_from_eps(eps: float, n: int, family: str = "gaussian") -> float:
    """Probability radius with ``Pr{e' W^{-1} e <= rho^2} >= 1 - eps``.

    ``generic`` uses the Chebyshev bound ``sqrt(n / eps)`` valid for any
    distribution with the given covariance; ``gaussian`` inverts the
    chi-square CDF with ``n`` degrees of freedom.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"violation level must lie in (0, 1), got {eps}")
    if family == "generic":
        return math.sqrt(n / eps)
    if family == "gaussian":
        return chi2_radius(1.0 - eps, n)
    raise ValueError(f"unknown noise family {family!r}; expected one of {FAMILIES}")


def prs_radius(rho: float, lam: float, ell) -> float | np.ndarray:
    """Radius ``rho (1 - lam^ell)`` of the step-``ell`` reachable set."""
    ell = np.asarray(ell)
    if np.any(ell < 0):
        raise ValueError("step index must be nonnegative")
    out = rho * (1.0 - lam ** ell.astype(float))
    return float(out) if out.ndim == 0 else out


def design_shape(sys: LinearSystem, A_K, lam: float, Gamma=None, rtol: float = 1e-12,
                 max_iter: int = 200) -> np.ndarray:
    """Fixed point of ``W = A_K W A_K' / lam^2 + Gamma / (1 - lam)^2``.

    Summed by doubling: with ``M = A_K / lam`` the fixed point is the series
    ``sum_j M^j Gamma M^j' / (1 - lam)^2``, and ``S <- S + M S M'``,
    ``M <- M^2`` adds twice as many terms per pass. ``Gamma`` defaults to the
    plant noise covariance.
    """
    A_K = as_matrix(A_K, "A_K")
    if not 0.0 < lam < 1.0:
        raise ValueError(f"contraction rate must lie in (0, 1), got {lam}")
    if lam <= spectral_radius(A_K):
        raise ValueError(
            f"contraction infeasible: lambda={lam} does not exceed spectral radius "
            f"{spectral_radius(A_K):.6g}"
        )
    G = sys.Gamma_w if Gamma is None else as_matrix(Gamma, "Gamma")
    S = G / (1.0 - lam) ** 2
    M = A_K / lam
    for _ in range(max_iter):
        step = M @ S @ M.T
        S = S + step
        M = M @ M
        if np.linalg.norm(step) <= rtol * max(np.linalg.norm(S), 1e-300):
            break
    else:
        raise ValueError("shape series did not converge")
    return 0.5 * (S + S.T)


def design_input_shape(K, W_x) -> np.ndarray:
    """Tightest input shape ``W_u = K W_x K'`` compatible with ``W_x``.

    For this choice ``W_x^{1/2} K' W_u^{-1} K W_x^{1/2}`` is an orthogonal
    projection, so ``W_x^{-1} - K' W_u^{-1} K`` is positive semidefinite.
    """
    K = as_matrix(K, "K")
    W_x = as_matrix(W_x, "W_x")
    if not np.any(K):
        raise ValueError("input shape undefined for a zero gain")
    W_u = K @ W_x @ K.T
    W_u = 0.5 * (W_u + W_u.T)
    if W_u.shape[0] > 1 and min_eig(W_u) <= 1e-12 * np.abs(W_u).max():
        W_u = W_u + 1e-12 * np.eye(W_u.shape[0])
    return W_u


@dataclass(frozen=True)
class Certificate:
    """Pair ``(mu, beta)`` for the geometric drift bound on the expected cost."""

    mu: float
    beta: float


@dataclass(frozen=True)
class CertificateCheck:
    mu: float
    beta: float
    margin_a: float
    margin_b: float
    passed: bool


def certificate_beta(P, Q, Gamma, mu: float) -> float:
    """Smallest ``b`` with ``P / b <= (Q - mu P) / tr(P Gamma)``; inf if ``Q - mu P`` is not PD."""
    M = Q - mu * P
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    if ev[0] <= 1e-12 * max(abs(ev[-1]), 1e-300):
        return math.inf
    # largest generalized eigenvalue of (P, Q - mu P)
    Lc = np.linalg.cholesky(M)
    S = np.linalg.solve(Lc, np.linalg.solve(Lc, P).T)
    return float(np.trace(P @ Gamma) * np.linalg.eigvalsh(0.5 * (S + S.T))[-1])


def check_certificate(W_x, r_xu: float, P, Q, Gamma, mu: float, beta: float,
                      tol: float = CERT_TOL) -> CertificateCheck:
    """Test both matrix inequalities of the convergence certificate.

    ``W_x^{-1} / r_xu^2 <= (Q - mu P) / tr(P Gamma)`` (within ``tol``) and
    ``W_x^{-1} / r_xu^2 < mu P / beta`` (strict).
    """
    trPG = float(np.trace(P @ Gamma))
    Winv = np.linalg.inv(W_x) / r_xu**2
    if trPG <= 0.0 or beta <= 0.0 or not 0.0 < mu < 1.0:
        return CertificateCheck(mu, beta, -math.inf, -math.inf, False)
    a = min_eig((Q - mu * P) / trPG - Winv)
    b = min_eig(mu * P / beta - Winv)
    return CertificateCheck(mu, beta, a, b, bool(a >= -tol and b > 0.0))


@dataclass(frozen=True)
class Check:
    name: str
    margin: float
    passed: bool
    applicable: bool = True


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.applicable)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list:
        return [c for c in self.checks if c.applicable and not c.passed]

    def format(self) -> str:
        lines = []
        for c in self.checks:
            verdict = "n/a " if not c.applicable else ("pass" if c.passed else "FAIL")
            lines.append(f"{verdict}  {c.name:<18s} margin {c.margin: .6e}")
        return "\n".join(lines)


@dataclass(frozen=True)
class DesignArtifacts:
    """Everything the online controller needs, fixed offline.

    ``lam`` is the contraction rate (``lambda`` in the usual notation).
    ``check_tol`` is the relative eigenvalue tolerance used by
    :func:`verify_design`; the default suits designs computed here, a looser
    value suits matrices copied from printed tables.
    """

    sys: LinearSystem
    X: Polytope
    U: Polytope
    Q: np.ndarray
    R: np.ndarray
    lqr: LqrResult
    W_x: np.ndarray
    W_u: np.ndarray
    lam: float
    rho: float
    r_x: float
    r_u: float
    eps: float
    N: int
    eta: float = DEFAULT_ETA
    family: str = "gaussian"
    certificate: Certificate | None = None
    check_tol: float = DEFAULT_CHECK_TOL

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"horizon must be >= 1, got {self.N}")
        if self.eta <= 0:
            raise ValueError(f"relaxation weight must be positive, got {self.eta}")

    @property
    def r_xu(self) -> float:
        return min(self.r_x, self.r_u)

    @property
    def n(self) -> int:
        return self.sys.n

    @property
    def m(self) -> int:
        return self.sys.m

    @property
    def K(self) -> np.ndarray:
        return self.lqr.K

    @property
    def P(self) -> np.ndarray:
        return self.lqr.P

    def tightening(self, ell) -> float | np.ndarray:
        return prs_radius(self.rho, self.lam, ell)

    @cached_property
    def report(self) -> ValidationReport:
        return verify_design(self)

    @cached_property
    def W_x_inv_sqrt(self) -> np.ndarray:
        return inv_sqrt(self.W_x)

    @cached_property
    def W_u_inv_sqrt(self) -> np.ndarray:
        return inv_sqrt(self.W_u)


def verify_design(art: DesignArtifacts, tol: float | None = None) -> ValidationReport:
    """Margins of every design condition; never raises.

    Eigenvalue margins are divided by the spectral norm of the matrix they are
    stated against, so ``tol`` is relative. Noise-dependent conditions are
    marked not applicable for a noise-free plant.
    """
    tol = art.check_tol if tol is None else tol
    n = art.n
    A_K = art.lqr.A_K
    K = art.lqr.K
    lam, rho = art.lam, art.rho
    Wn = np.linalg.norm(art.W_x, 2)
    noisy = not art.sys.noise_free
    checks = []

    m_con = min_eig(lam**2 * art.W_x - A_K @ art.W_x @ A_K.T) / Wn
    checks.append(Check("contraction", m_con, m_con >= -tol))
    m_noise = min_eig((1.0 - lam) ** 2 * art.W_x - art.sys.Gamma_w) / Wn
    checks.append(Check("noise_absorption", m_noise, m_noise >= -tol, noisy))

    Winv = np.linalg.inv(art.W_x)
    m_in = min_eig(Winv - K.T @ np.linalg.solve(art.W_u, K)) / np.linalg.norm(Winv, 2)
    checks.append(Check("input_shape", m_in, m_in >= -tol))

    slack = art.r_xu - rho
    checks.append(Check("rho_le_r_xu", slack, slack >= 0.0))
    m_rho = rho - math.sqrt(n * (1.0 - lam) / (1.0 + lam))
    checks.append(Check("rho_lower_bound", m_rho, m_rho >= 0.0, noisy))

    ells = np.arange(1, art.N + 1)
    tight = prs_radius(rho, lam, ells)
    mx = float(np.min(art.r_x - tight))
    mu_ = float(np.min(art.r_u - tight))
    checks.append(Check("nonempty_x", mx, mx > 0.0))
    checks.append(Check("nonempty_u", mu_, mu_ > 0.0))
    return ValidationReport(tuple(checks))


def certify_convergence(art: DesignArtifacts, P=None, Q=None, grid_size: int = MU_GRID_SIZE,
                        tol: float = CERT_TOL) -> Certificate | None:
    """First ``(mu, beta)`` on an increasing ``mu`` grid passing :func:`check_certificate`."""
    P = art.lqr.P if P is None else as_matrix(P, "P")
    Q = art.Q if Q is None else as_matrix(Q, "Q")
    Gamma = art.sys.Gamma_w
    if float(np.trace(P @ Gamma)) <= 0.0 or art.r_xu <= 0.0:
        return None
    for mu in np.arange(1, grid_size + 1) / (grid_size + 1):
        beta = certificate_beta(P, Q, Gamma, mu)
        if not math.isfinite(beta):
            continue
        if check_certificate(art.W_x, art.r_xu, P, Q, Gamma, mu, beta, tol).passed:
            return Certificate(float(mu), beta)
    return None


def _surrogate_noise(sys: LinearSystem) -> np.ndarray:
    # a noise-free plant has a zero reachable set; any PD shape will do
    return sys.Gamma_w if not sys.noise_free else np.eye(sys.n)


def _radii(sys, lqr, X, U, W_x):
    W_u = design_input_shape(lqr.K, W_x)
    return W_u, inscribed_radius(W_x, X), inscribed_radius(W_u, U)


def select_lambda(sys: LinearSystem, lqr: LqrResult, X: Polytope, U: Polytope, eps: float,
                  N: int, family: str = "gaussian", grid_size: int = 200):
    """Grid search for the rate maximizing the terminal margin ``r_xu - rho (1 - lam^N)``.

    Only rates with ``rho <= r_xu``, the lower bound on ``rho`` and nonempty
    tightened sets qualify; ties go to the smallest rate. Returns
    ``(lam, W_x)``.
    """
    if grid_size < 10:
        raise ValueError("grid_size must be at least 10")
    lo = spectral_radius(lqr.A_K) + 1e-3
    hi = 1.0 - 1e-3
    if lo >= hi:
        raise DesignInfeasible("design infeasible: closed loop contracts too slowly")
    noisy = not sys.noise_free
    rho = rho_from_eps(eps, sys.n, family) if noisy else 0.0
    Gamma = _surrogate_noise(sys)
    best = None
    for lam in np.linspace(lo, hi, grid_size):
        W_x = design_shape(sys, lqr.A_K, lam, Gamma)
        _, r_x, r_u = _radii(sys, lqr, X, U, W_x)
        r_xu = min(r_x, r_u)
        if noisy and (rho > r_xu or rho < math.sqrt(sys.n * (1 - lam) / (1 + lam))):
            continue
        margin = r_xu - rho * (1.0 - lam**N)
        if margin <= 0.0:
            continue
        if best is None or margin > best[0]:
            best = (margin, float(lam), W_x)
    if best is None:
        raise DesignInfeasible("design infeasible: noise too large for constraints")
    return best[1], best[2]


def design(sys: LinearSystem, X: Polytope, U: Polytope, Q, R, *, eps: float, N: int,
           eta: float = DEFAULT_ETA, family: str = "gaussian", lam: float | None = None,
           W_x=None, W_u=None, check_tol: float = DEFAULT_CHECK_TOL,
           grid_size: int = 200, certify: bool = True) -> DesignArtifacts:
    """Run the whole offline pipeline.

    ``W_x`` and ``lam`` may be supplied (verify-only path); a rate without a
    shape builds the shape by :func:`design_shape`; neither triggers
    :func:`select_lambda`. ``W_u`` defaults to ``K W_x K'``. Raises
    :class:`DesignInfeasible` if the resulting design fails verification.
    """
    Q = as_matrix(Q, "Q")
    R = as_matrix(R, "R")
    if X.dim != sys.n or U.dim != sys.m:
        raise ValueError(f"constraint dimensions ({X.dim}, {U.dim}) do not match plant "
                         f"({sys.n}, {sys.m})")
    lqr = solve_lqr(sys, Q, R)
    if W_x is not None:
        if lam is None:
            raise ValueError("a supplied W_x needs its contraction rate")
        W_x = as_matrix(W_x, "W_x")
    elif lam is not None:
        W_x = design_shape(sys, lqr.A_K, lam, _surrogate_noise(sys))
    else:
        lam, W_x = select_lambda(sys, lqr, X, U, eps, N, family, grid_size)
    W_u = design_input_shape(lqr.K, W_x) if W_u is None else as_matrix(W_u, "W_u")
    rho = rho_from_eps(eps, sys.n, family) if not sys.noise_free else 0.0
    art = DesignArtifacts(
        sys=sys, X=X, U=U, Q=Q, R=R, lqr=lqr, W_x=W_x, W_u=W_u, lam=float(lam), rho=rho,
        r_x=inscribed_radius(W_x, X), r_u=inscribed_radius(W_u, U), eps=float(eps), N=int(N),
        eta=float(eta), family=family, check_tol=check_tol,
    )
    if not art.report.passed:
        raise DesignInfeasible("design infeasible:\n" + art.report.format())
    if certify:
        cert = certify_convergence(art)
        if cert is None:
            log.info("no convergence certificate on the mu grid")
        art = replace(art, certificate=cert)
    return art

