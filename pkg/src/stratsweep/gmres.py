"""Full (non-restarted) GMRES with right preconditioning.

Arnoldi with modified Gram-Schmidt (one reorthogonalization pass when the
orthogonality defect exceeds 1e-8) and Givens-rotation least squares. The
residual history holds relative true residuals; with right preconditioning
the rotation recurrence tracks them directly, and the final residual is
recomputed explicitly.
"""

from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import linalg as sla


@dataclass(frozen=True)
class GmresReport:
    iterations: int
    residual_history: List[float]
    converged: bool
    tolerance: float

    @property
    def final_relres(self):
        return self.residual_history[-1]


def _as_callable(op):
    if callable(op):
        return op
    return lambda x: op @ x


def gmres(apply_A, apply_M, b, tol=1e-7, maxit=200):
    """Solve A x = b with right preconditioner M (x = M y).

    Returns (x, GmresReport). Reaching maxit is reported through
    converged=False, not an exception. b = 0 returns zeros in 0 iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if maxit < 1:
        raise ValueError("maxit must be >= 1")
    A = _as_callable(apply_A)
    M = _as_callable(apply_M) if apply_M is not None else (lambda x: x)
    b = np.asarray(b, dtype=np.complex128).ravel()
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n, dtype=np.complex128), GmresReport(
            iterations=0, residual_history=[0.0], converged=True, tolerance=tol)

    V = np.zeros((maxit + 1, n), dtype=np.complex128)
    H = np.zeros((maxit + 1, maxit), dtype=np.complex128)
    cs = np.zeros(maxit, dtype=np.complex128)
    sn = np.zeros(maxit, dtype=np.complex128)
    g = np.zeros(maxit + 1, dtype=np.complex128)

    V[0] = b / bnorm
    g[0] = bnorm
    history = [1.0]
    k = 0
    while k < maxit:
        # copy: operators may return their input (e.g. identity) and the
        # Gram-Schmidt updates below must not touch the stored basis
        w = np.array(A(M(V[k])), dtype=np.complex128)
        wnorm0 = np.linalg.norm(w)
        for i in range(k + 1):
            H[i, k] = np.vdot(V[i], w)
            w -= H[i, k] * V[i]
        # one reorthogonalization pass if orthogonality degraded
        wnorm = np.linalg.norm(w)
        defect = 0.0
        if wnorm > 0:
            defect = max(abs(np.vdot(V[i], w)) for i in range(k + 1)) / wnorm
        if wnorm < 1e-8 * wnorm0 or defect > 1e-8:
            for i in range(k + 1):
                h = np.vdot(V[i], w)
                H[i, k] += h
                w -= h * V[i]
            wnorm = np.linalg.norm(w)
        H[k + 1, k] = wnorm
        if wnorm > 0:
            V[k + 1] = w / wnorm

        # apply accumulated rotations, then a new one
        for i in range(k):
            t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -np.conj(sn[i]) * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = t
        a, bb = H[k, k], H[k + 1, k]
        rho = np.sqrt(abs(a) ** 2 + abs(bb) ** 2)
        if rho == 0.0:
            cs[k], sn[k] = 1.0, 0.0
        elif a == 0.0:
            cs[k], sn[k] = 0.0, 1.0
        else:
            cs[k] = abs(a) / rho
            sn[k] = (a / abs(a)) * np.conj(bb) / rho
        H[k, k] = cs[k] * a + sn[k] * bb
        H[k + 1, k] = 0.0
        g[k + 1] = -np.conj(sn[k]) * g[k]
        g[k] = cs[k] * g[k]
        k += 1
        history.append(float(abs(g[k]) / bnorm))
        if history[-1] <= tol or wnorm == 0.0:
            break

    y = sla.solve_triangular(H[:k, :k], g[:k]) if k else np.zeros(0, dtype=np.complex128)
    x = M(V[:k].T @ y) if k else np.zeros(n, dtype=np.complex128)
    true_res = float(np.linalg.norm(b - A(x)) / bnorm)
    converged = history[-1] <= tol
    if converged:
        # replace the rotation estimate by the recomputed true residual
        history[-1] = true_res
        converged = true_res <= tol
    return x, GmresReport(iterations=k, residual_history=history,
                          converged=converged, tolerance=tol)
