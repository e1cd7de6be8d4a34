"""Small dense symmetric eigen-solvers.

Agent counts and per-agent dimensions are small, so a cyclic Jacobi sweep is
cheap and gives bit-reproducible spectra independent of the LAPACK build.
"""

import numpy as np


def jacobi_eigenvalues(S, tol=1e-14, max_sweeps=100):
    """Eigenvalues of the symmetric matrix `S` by cyclic Jacobi rotations.

    Returns the eigenvalues in ascending order.
    """
    a = np.array(S, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 1:
        return a.diagonal().copy()

    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                cs = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * cs
                # rotate rows/cols p and q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = cs * ap - sn * aq
                a[:, q] = sn * ap + cs * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = cs * ap - sn * aq
                a[q, :] = sn * ap + cs * aq
                a[p, q] = a[q, p] = 0.0
    else:
        raise RuntimeError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    return np.sort(a.diagonal())


def power_iteration_max(S, tol=1e-10, max_iter=20000):
    """Largest eigenvalue of a symmetric positive semidefinite matrix `S`.

    Uses power iteration from a fixed start vector. Stops once the eigen-
    residual ``||S v - r v||`` drops below ``100 * tol * r`` (r the Rayleigh
    quotient); the eigenvalue error is then of order ``(100 * tol * r)**2 / gap``.
    Falls back to :func:`jacobi_eigenvalues` if the budget runs out.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if n == 0 or not np.any(S):
        return 0.0
    # deterministic start with no special alignment to coordinate axes
    v = np.cos(np.arange(1, n + 1) * 0.7) + 1.5
    v /= np.linalg.norm(v)
    rtol = 100.0 * tol
    for _ in range(max_iter):
        w = S @ v
        lam = float(v @ w)
        if lam <= 0.0:
            break
        if np.linalg.norm(w - lam * v) <= rtol * lam:
            return lam
        v = w / np.linalg.norm(w)
    return float(jacobi_eigenvalues(S)[-1])
