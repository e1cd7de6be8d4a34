"""Pure-numpy implementations of the hot kernels.

Signatures mirror ``_kernels.pyx`` exactly; :mod:`admmnet.backend` picks one
of the two at import time.
"""

import math

import numpy as np

LOSS_NONE, LOSS_LOGISTIC, LOSS_QUADRATIC = 0, 1, 2


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _loss_grad(kind, data, u):
    if kind == LOSS_LOGISTIC:
        return -data * _sigmoid(-data * u)
    if kind == LOSS_QUADRATIC:
        return 2.0 * (u - data)
    raise ValueError(f"unknown loss kind {kind}")


def prox_l1_box(s, gamma, l1w, bound):
    t = l1w / gamma
    return np.minimum(np.maximum(np.maximum(s - t, 0.0) - np.maximum(-s - t, 0.0), -bound), bound)


def structured_gradient(kind, A, data, E, r, w, mu, h, y):
    """Gradient of ``f(A y) + (w/2)||E y - r||^2 + (mu/2)||y||^2 + h^T y``."""
    g = mu * y + h
    if kind != LOSS_NONE:
        g = g + A.T @ _loss_grad(kind, data, A @ y)
    if w != 0.0:
        g = g + w * (E.T @ (E @ y - r))
    return g


def fista_structured(kind, A, data, E, r, w, mu, h, l1w, bound, start, step, tol, max_iter):
    """FISTA with momentum ``(l-1)/(l+2)`` and a constant step.

    Returns ``(y, iterations, pgr, converged)``; `pgr` is
    ``||z_prev - y|| / (step * sqrt(K))`` at the last iteration.
    """
    K = start.size
    y_prev = np.array(start, dtype=float)
    z = y_prev.copy()
    gamma = 1.0 / step
    scale = step * math.sqrt(K)
    pgr = math.inf
    y = y_prev
    for it in range(1, max_iter + 1):
        g = structured_gradient(kind, A, data, E, r, w, mu, h, z)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient at inner iteration {it}")
        y = prox_l1_box(z - step * g, gamma, l1w, bound)
        d = z - y
        pgr = math.sqrt(float(d @ d)) / scale
        if pgr < tol:
            return y, it, pgr, True
        z = y + ((it - 1.0) / (it + 2.0)) * (y - y_prev)
        y_prev = y
    return y, max_iter, pgr, False


def ic_round(kind, A3, data, Y, P, indptr, indices, c, beta, l1w, bound):
    """One IC-ADMM round for all agents from the snapshot ``(Y, P)``."""
    N, K = Y.shape
    P_new = np.empty_like(P)
    Y_new = np.empty_like(Y)
    for i in range(N):
        nb = indices[indptr[i]:indptr[i + 1]]
        d = nb.size
        yi = Y[i]
        nsum = Y[nb].sum(axis=0)
        P_new[i] = P[i] + c * (d * yi - nsum)
        grad = A3[i].T @ _loss_grad(kind, data[i], A3[i] @ yi)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient at agent {i}")
        gamma = beta[i] + 2.0 * c * d
        s = (beta[i] * yi - grad - P_new[i] + c * (d * yi + nsum)) / gamma
        Y_new[i] = prox_l1_box(s, gamma, l1w[i], bound[i])
    return Y_new, P_new
