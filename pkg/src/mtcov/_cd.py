"""Compiled block coordinate-descent sweeps for the multi-task elastic-net."""

import numba
import numpy as np

# norms within this relative distance of the threshold are treated as on the
# boundary; absorbs summation-order rounding so that lam = alpha_max is exactly zero
BOUNDARY_RTOL = 1e-12


@numba.njit(cache=True, nogil=True)
def bst_inplace(v, threshold):
    nrm = 0.0
    for t in range(v.shape[0]):
        nrm += v[t] * v[t]
    nrm = np.sqrt(nrm)
    if nrm <= threshold:
        for t in range(v.shape[0]):
            v[t] = 0.0
    else:
        scale = 1.0 - threshold / nrm
        for t in range(v.shape[0]):
            v[t] *= scale


@numba.njit(cache=True, nogil=True, fastmath={"reassoc", "contract"})
def sweep(X, R, B, colsq, rows, lam, tau):
    """One pass of exact block updates over ``rows``; updates ``B`` and ``R`` in place.

    ``X`` and ``R`` must be Fortran-ordered so that columns are contiguous.
    ``colsq[j]`` is ||x_j||^2 / n. Returns the largest absolute coefficient change.
    """
    n = X.shape[0]
    T = R.shape[1]
    v = np.empty(T)
    delta = np.empty(T)
    dmax = 0.0
    inv_n = 1.0 / n
    for jj in range(rows.shape[0]):
        j = rows[jj]
        cj = colsq[j]
        xj = X[:, j]
        for t in range(T):
            rt = R[:, t]
            acc = 0.0
            for i in range(n):
                acc += xj[i] * rt[i]
            v[t] = acc * inv_n + cj * B[j, t]
        nrm = 0.0
        for t in range(T):
            nrm += v[t] * v[t]
        nrm = np.sqrt(nrm)
        if nrm <= lam * (1.0 + BOUNDARY_RTOL):
            for t in range(T):
                v[t] = 0.0
        else:
            shrink = 1.0 - lam / nrm
            for t in range(T):
                v[t] *= shrink
        denom = cj + tau
        changed = False
        for t in range(T):
            v[t] /= denom
            d = v[t] - B[j, t]
            delta[t] = d
            if d != 0.0:
                changed = True
            ad = abs(d)
            if ad > dmax:
                dmax = ad
        if changed:
            for t in range(T):
                B[j, t] = v[t]
                d = delta[t]
                if d != 0.0:
                    rt = R[:, t]
                    for i in range(n):
                        rt[i] -= xj[i] * d
    return dmax


@numba.njit(cache=True, nogil=True)
def objective(R, B, lam, tau):
    n = R.shape[0]
    T = R.shape[1]
    loss = 0.0
    for i in range(n):
        for t in range(T):
            loss += R[i, t] * R[i, t]
    l21 = 0.0
    fro = 0.0
    for j in range(B.shape[0]):
        s = 0.0
        for t in range(T):
            s += B[j, t] * B[j, t]
        fro += s
        l21 += np.sqrt(s)
    return 0.5 * loss / n + lam * l21 + 0.5 * tau * fro
