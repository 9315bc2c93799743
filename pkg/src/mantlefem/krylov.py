"""Krylov solvers used by the Stokes and energy solves.

Flexible GMRES allows a preconditioner that changes between iterations,
which is the case when the preconditioner itself contains inner iterative
solves.  Both solvers count iterations so callers can report them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SolverError(RuntimeError):
    """Raised on stagnation or when the iteration cap is reached; carries a report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    residual: float  # final relative residual
    converged: bool
    history: list = field(default_factory=list)


def _as_operator(A):
    return A if callable(A) else (lambda v: A @ v)


def pcg(A, b, M=None, rtol=1e-2, maxiter=1000, x0=None, atol=0.0) -> KrylovResult:
    """Preconditioned conjugate gradients for symmetric positive definite ``A``.

    Stops when ``||r|| <= max(rtol * ||b||, atol)``.
    """
    matvec = _as_operator(A)
    prec = (lambda r: r) if M is None else _as_operator(M)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return KrylovResult(np.zeros_like(b), 0, 0.0, True)
    r = b - matvec(x) if x0 is not None else b.copy()
    target = max(rtol * bnorm, atol)
    rn = np.linalg.norm(r)
    if rn <= target:
        return KrylovResult(x, 0, rn / bnorm, True)
    z = prec(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = matvec(p)
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError(f"CG breakdown: non-positive curvature {pAp:.3e}")
        a = rz / pAp
        x += a * p
        r -= a * Ap
        rn = np.linalg.norm(r)
        if rn <= target:
            return KrylovResult(x, it, rn / bnorm, True)
        z = prec(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return KrylovResult(x, maxiter, rn / bnorm, False)


def fgmres(A, b, M=None, rtol=1e-8, restart=50, maxiter=1000, x0=None,
           callback=None) -> KrylovResult:
    """Right-preconditioned flexible GMRES(``restart``).

    ``M`` may be any callable; the preconditioned directions are stored, so
    it is allowed to change from one application to the next.  Convergence
    is declared on the true relative residual ``||b - A x|| / ||b||``.
    """
    matvec = _as_operator(A)
    prec = (lambda r: r) if M is None else _as_operator(M)
    b = np.asarray(b, dtype=float)
    n = len(b)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return KrylovResult(np.zeros(n), 0, 0.0, True)
    history = []
    total = 0
    r = b - matvec(x)
    beta = np.linalg.norm(r)
    history.append(beta / bnorm)
    if beta <= rtol * bnorm:
        return KrylovResult(x, 0, beta / bnorm, True, history)
    while total < maxiter:
        m = min(restart, maxiter - total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_used = 0
        for k in range(m):
            Z[k] = prec(V[k])
            w = matvec(Z[k])
            # modified Gram-Schmidt with one reorthogonalization pass
            for _ in range(2):
                h = V[: k + 1] @ w
                w = w - h @ V[: k + 1]
                H[: k + 1, k] += h
            hn = np.linalg.norm(w)
            H[k + 1, k] = hn
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            cs[k], sn[k] = (1.0, 0.0) if denom == 0 else (H[k, k] / denom, H[k + 1, k] / denom)
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_used = k + 1
            est = abs(g[k + 1]) / bnorm
            history.append(est)
            if callback is not None:
                callback(total, est)
            if est <= rtol or hn == 0.0:
                break
            V[k + 1] = w / hn
        y = np.linalg.solve(np.triu(H[:k_used, :k_used]), g[:k_used]) if k_used else np.zeros(0)
        x = x + y @ Z[:k_used]
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        if beta <= rtol * bnorm * (1 + 1e-8):
            return KrylovResult(x, total, beta / bnorm, True, history)
        if k_used == 0 or (len(history) > 2 * restart and beta / bnorm >= 0.999999 * history[-k_used - 1]):
            break  # stagnation over a full cycle
    return KrylovResult(x, total, beta / bnorm, False, history)
