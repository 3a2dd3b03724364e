"""Pure numpy backend for the mixed-model hot kernels.

Both backends share the same contract. Children are independent, so the
penalized least-squares system is block diagonal: given the relative
random-effect factor `lam` (q x q lower triangular) and per-child
cross-products, each child contributes

    A_i = lam' ZtZ_i lam + I  (Cholesky factor L_i)
    W_i = L_i^{-1} lam' [ZtX_i | Zty_i]

and the kernels return the log-determinant sum and the accumulated
Gram matrix of the W_i blocks, from which the caller profiles out the
fixed effects and the residual variance.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def pls_components(lam, ztz, ztx, zty):
    """Absorb the random effects for every child.

    Args:
        lam: (q, q) lower-triangular relative covariance factor.
        ztz: (m, q, q) per-child Z'Z.
        ztx: (m, q, p) per-child Z'X.
        zty: (m, q) per-child Z'y.

    Returns:
        (logdet, s) where logdet = sum_i log|A_i| and s is the
        (p+1, p+1) sum of W_i' W_i with the response column appended to
        X. Returns (inf, None) if any A_i fails to factor.
    """
    m, q, p = ztx.shape
    a = lam.T @ ztz @ lam
    a[:, np.arange(q), np.arange(q)] += 1.0
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return np.inf, None
    g = np.concatenate([ztx, zty[:, :, None]], axis=2)
    w = np.linalg.solve(chol, lam.T @ g)
    s = np.einsum("mij,mik->jk", w, w)
    diag = np.diagonal(chol, axis1=1, axis2=2)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        return np.inf, None
    logdet = 2.0 * float(np.sum(np.log(diag)))
    if not np.isfinite(logdet):
        return np.inf, None
    return logdet, s


def ranef_means(lam, ztz, ztx, zty, beta):
    """Conditional means of the per-child random-effect deviations.

    Solves A_i x_i = lam'(Zty_i - ZtX_i beta) per child and returns
    lam x_i stacked as an (m, q) array.
    """
    m, q, p = ztx.shape
    a = lam.T @ ztz @ lam
    a[:, np.arange(q), np.arange(q)] += 1.0
    resid = zty - ztx @ beta
    rhs = (lam.T @ resid[:, :, None])
    x = np.linalg.solve(a, rhs)
    return (lam @ x)[:, :, 0]
