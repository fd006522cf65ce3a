"""Barrier kernels in numpy; reference twin of ``_kernels_ext.pyx``.

Data layout shared by both backends (all float64, C-contiguous):

    Q  (nu, nu)      cost Hessian          c  (nu,)   linear cost
    A  (K, p, nu)    cone rows, zero padded b  (K, p)
    cc (K, nu)       cone scalar part       d  (K,)
    G  (L, nu)       halfspaces             g  (L,)

The merit is ``t * f(y) + phi(y)`` with the log barrier
``phi = -sum log((cc_k y + d_k)^2 - ||A_k y + b_k||^2) - sum log(g - G y)``.
"""

from __future__ import annotations

import numpy as np

INFEASIBLE = np.inf


def _cone_parts(y, A, b, cc, d):
    u = A @ y + b
    s = cc @ y + d
    D = s * s - np.einsum("kp,kp->k", u, u)
    return u, s, D


def newton_step(y, t, Q, c, A, b, cc, d, G, g):
    """Newton direction for the merit at ``y``.

    Returns ``(dy, dec2, ok)`` where ``dec2 = -grad . dy`` is the squared
    Newton decrement; ``ok`` is False when ``y`` is not strictly interior or
    the Hessian is numerically singular.
    """
    u, s, D = _cone_parts(y, A, b, cc, d)
    if A.shape[0] and (np.any(s <= 0.0) or np.any(D <= 0.0)):
        return None, 0.0, False
    grad = t * (Q @ y + c)
    H = t * Q
    if A.shape[0]:
        q = s[:, None] * cc - np.einsum("kpv,kp->kv", A, u)
        invD = 1.0 / D
        grad = grad - 2.0 * (q * invD[:, None]).sum(axis=0)
        H = (
            H
            - 2.0 * (cc.T * invD) @ cc
            + 2.0 * np.einsum("kpv,kpw,k->vw", A, A, invD)
            + 4.0 * (q.T * invD**2) @ q
        )
    if G.shape[0]:
        sl = g - G @ y
        if np.any(sl <= 0.0):
            return None, 0.0, False
        inv = 1.0 / sl
        grad = grad + G.T @ inv
        H = H + (G.T * inv**2) @ G
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return None, 0.0, False
    z = np.linalg.solve(L, -grad)
    dy = np.linalg.solve(L.T, z)
    return dy, float(z @ z), True


def merit_delta(y, dy, step, t, Q, c, A, b, cc, d, G, g):
    """``merit(y + step*dy) - merit(y)``, evaluated without cancellation; inf if infeasible."""
    delta = step * dy
    df = c @ delta + y @ Q @ delta + 0.5 * delta @ Q @ delta
    total = t * df
    if A.shape[0]:
        u, s, D = _cone_parts(y, A, b, cc, d)
        du = A @ delta
        ds = cc @ delta
        s_new = s + ds
        u_new = u + du
        D_new = s_new * s_new - np.einsum("kp,kp->k", u_new, u_new)
        if np.any(s_new <= 0.0) or np.any(D_new <= 0.0):
            return INFEASIBLE
        dD = 2.0 * s * ds + ds * ds - 2.0 * np.einsum("kp,kp->k", u, du) - np.einsum("kp,kp->k", du, du)
        ratio = dD / D
        if np.any(ratio <= -1.0):
            return INFEASIBLE
        total -= float(np.sum(np.log1p(ratio)))
    if G.shape[0]:
        sl = g - G @ y
        dsl = -(G @ delta)
        ratio = dsl / sl
        if np.any(ratio <= -1.0):
            return INFEASIBLE
        total -= float(np.sum(np.log1p(ratio)))
    return float(total)


def is_interior(y, A, b, cc, d, G, g) -> bool:
    if A.shape[0]:
        u, s, D = _cone_parts(y, A, b, cc, d)
        if np.any(s <= 0.0) or np.any(D <= 0.0):
            return False
    if G.shape[0] and np.any(g - G @ y <= 0.0):
        return False
    return True
