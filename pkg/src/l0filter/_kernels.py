"""Compiled pair loops shared by the objective/derivative oracles.

Pairs are visited in packed upper-triangular order (i < j, row major), the
same order as ``scipy.spatial.distance.pdist``. Every loop is serial, so
sums are reproducible bit for bit.
"""

import numba
import numpy as np

_jit = numba.njit(cache=True, fastmath=False)


@_jit
def sq_dists(z):
    m, n = z.shape
    out = np.empty(m * (m - 1) // 2)
    p = 0
    for i in range(m):
        for j in range(i + 1, m):
            s = 0.0
            for h in range(n):
                d = z[i, h] - z[j, h]
                s += d * d
            out[p] = s
            p += 1
    return out


@_jit
def fit_term(x, z):
    s = 0.0
    for i in range(x.shape[0]):
        for h in range(x.shape[1]):
            d = x[i, h] - z[i, h]
            s += d * d
    return s


@_jit
def smooth_penalty(z, w, alpha):
    """sum_{i<j} w_ij (1 - exp(-alpha ||z_i - z_j||^2))."""
    m, n = z.shape
    s = 0.0
    p = 0
    for i in range(m):
        for j in range(i + 1, m):
            d2 = 0.0
            for h in range(n):
                d = z[i, h] - z[j, h]
                d2 += d * d
            s += w[p] * -np.expm1(-alpha * d2)
            p += 1
    return s


@_jit
def l0_penalty(z, w):
    m, n = z.shape
    s = 0.0
    p = 0
    for i in range(m):
        for j in range(i + 1, m):
            equal = True
            for h in range(n):
                if z[i, h] != z[j, h]:
                    equal = False
                    break
            if not equal:
                s += w[p]
            p += 1
    return s


@_jit
def smooth_value_grad(x, z, w, lam, alpha, coef):
    """Value and gradient of the smoothed objective.

    ``coef`` (length m(m-1)/2) receives 2*lam*alpha*w_ij*exp(-alpha d_ij^2),
    the per-pair factor reused by the Hessian-vector product.
    """
    m, n = z.shape
    g = np.empty((m, n))
    f = 0.0
    for i in range(m):
        for h in range(n):
            r = z[i, h] - x[i, h]
            f += r * r
            g[i, h] = 2.0 * r
    pen = 0.0
    u = np.empty(n)
    p = 0
    for i in range(m):
        for j in range(i + 1, m):
            d2 = 0.0
            for h in range(n):
                u[h] = z[i, h] - z[j, h]
                d2 += u[h] * u[h]
            e = np.exp(-alpha * d2)
            pen += w[p] * -np.expm1(-alpha * d2)
            c = 2.0 * lam * alpha * w[p] * e
            coef[p] = c
            if c != 0.0:
                for h in range(n):
                    t = c * u[h]
                    g[i, h] += t
                    g[j, h] -= t
            p += 1
    return f + lam * pen, g


@_jit
def pair_row_sums(c, m):
    """out_i = sum_{j != i} c_ij for a packed pair vector ``c``."""
    out = np.zeros(m)
    p = 0
    for i in range(m):
        for j in range(i + 1, m):
            out[i] += c[p]
            out[j] += c[p]
            p += 1
    return out


@_jit
def smooth_hessvec(z, coef, alpha, d):
    m, n = z.shape
    out = 2.0 * d
    u = np.empty(n)
    v = np.empty(n)
    p = 0
    for i in range(m):
        for j in range(i + 1, m):
            c = coef[p]
            p += 1
            if c == 0.0:
                continue
            uv = 0.0
            for h in range(n):
                u[h] = z[i, h] - z[j, h]
                v[h] = d[i, h] - d[j, h]
                uv += u[h] * v[h]
            s = 2.0 * alpha * uv
            for h in range(n):
                t = c * (v[h] - s * u[h])
                out[i, h] += t
                out[j, h] -= t
    return out


@_jit
def ridge_value_grad(x, z, w, lam):
    m, n = z.shape
    g = np.empty((m, n))
    f = 0.0
    for i in range(m):
        for h in range(n):
            r = z[i, h] - x[i, h]
            f += r * r
            g[i, h] = 2.0 * r
    pen = 0.0
    u = np.empty(n)
    p = 0
    for i in range(m):
        for j in range(i + 1, m):
            d2 = 0.0
            for h in range(n):
                u[h] = z[i, h] - z[j, h]
                d2 += u[h] * u[h]
            pen += w[p] * d2
            c = 2.0 * lam * w[p]
            for h in range(n):
                t = c * u[h]
                g[i, h] += t
                g[j, h] -= t
            p += 1
    return f + lam * pen, g
