"""Finite-difference weights and fourth-order differentiation on uniform grids."""
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

ORDER = 4


def fornberg_weights(x0, x, m):
    """Weights for derivatives 0..m at ``x0`` from values at nodes ``x``.

    Returns an array of shape (len(x), m + 1); column k holds the weights of
    the k-th derivative (Fornberg's recursion).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def stencil_window(i, n, k, order=ORDER):
    """Node indices used for the k-th derivative at node ``i`` of ``n``."""
    half = (k + order - 1) // 2
    if i - half >= 0 and i + half < n:
        return np.arange(i - half, i + half + 1)
    width = k + order
    lo = 0 if i - half < 0 else n - width
    return np.arange(lo, lo + width)


@lru_cache(maxsize=64)
def _unit_matrix(n, k, order=ORDER):
    rows, cols, vals = [], [], []
    for i in range(n):
        idx = stencil_window(i, n, k, order)
        wts = fornberg_weights(float(i), idx.astype(float), k)[:, k]
        rows.extend([i] * len(idx))
        cols.extend(idx.tolist())
        vals.extend(wts.tolist())
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.eliminate_zeros()
    return mat


def diff_matrix(n, k, h, order=ORDER):
    """Sparse k-th derivative matrix on ``n`` uniform nodes with spacing ``h``."""
    if n < k + order:
        raise ValueError(f"need at least {k + order} nodes for derivative order {k}")
    return _unit_matrix(n, k, order) * (1.0 / h**k)


def derivative(values, h, k, order=ORDER):
    """k-th derivative of grid samples, accurate to ``order`` up to the ends."""
    values = np.asarray(values)
    return diff_matrix(len(values), k, h, order) @ values


def boundary_weights(n, k, h, end, order=ORDER):
    """Dense weight row for the k-th derivative at the left (0) or right (1) end."""
    i = 0 if end == 0 else n - 1
    idx = stencil_window(i, n, k, order)
    wts = fornberg_weights(float(i), idx.astype(float), k)[:, k] / h**k
    return idx, wts


@lru_cache(maxsize=128)
def _interval_weights(offset, points):
    """Weights integrating the interpolant through ``points`` nodes over one cell.

    Nodes sit at ``offset, offset + 1, ...`` in units of h relative to the left
    end of the cell [0, 1].
    """
    x = np.arange(offset, offset + points, dtype=float)
    powers = np.arange(points)
    vander = x[None, :] ** powers[:, None]
    moments = 1.0 / (powers + 1.0)
    return np.linalg.solve(vander, moments)


def cumulative_integral(values, h, points=8):
    """Running integral from the first node, using local ``points``-node interpolants.

    Every cell uses a window centred on it where possible, so the error is a
    smooth function of position rather than alternating between cells.
    """
    f = np.asarray(values)
    n = len(f)
    if n < points:
        raise ValueError(f"need at least {points} nodes, got {n}")
    inc = np.zeros(n - 1, dtype=np.result_type(f, float))
    _, offsets = _cell_windows(n, points)
    for offset in np.unique(offsets):
        cells = np.nonzero(offsets == offset)[0]
        wts = _interval_weights(int(offset), points)
        for j, wj in enumerate(wts):
            inc[cells] += wj * f[cells + offset + j]
    out = np.empty(n, dtype=inc.dtype)
    out[0] = 0.0
    np.cumsum(inc * h, out=out[1:])
    return out


def _cell_windows(n, points):
    """Window start of each cell and the distinct offsets relative to the cell."""
    lead = points // 2 - 1
    cells = np.arange(n - 1)
    starts = np.clip(cells - lead, 0, n - points)
    return starts, starts - cells


def cumulative_sinh_convolution(values, k, h, points=8):
    """``int_0^s sinh(k (s - r)) f(r) dr`` and its s-derivative at every node.

    The pair is advanced cell by cell with the exact hyperbolic propagator,
    so no large cancelling sinh/cosh products appear.
    """
    f = np.asarray(values, dtype=float)
    n = len(f)
    starts, offsets = _cell_windows(n, points)
    nodes = starts[:, None] + np.arange(points)[None, :]
    weights = np.array([_interval_weights(int(o), points) for o in offsets])
    lag = (np.arange(1, n)[:, None] - nodes) * h
    local_sinh = h * np.sum(weights * np.sinh(k * lag) * f[nodes], axis=1)
    local_cosh = h * np.sum(weights * np.cosh(k * lag) * f[nodes], axis=1)
    ch, sh = np.cosh(k * h), np.sinh(k * h)
    conv = np.zeros(n)
    slope = np.zeros(n)
    for i in range(n - 1):
        conv[i + 1] = ch * conv[i] + sh / k * slope[i] + local_sinh[i]
        slope[i + 1] = k * sh * conv[i] + ch * slope[i] + k * local_cosh[i]
    return conv, slope


_SBP_NORM = np.array([17 / 48, 59 / 48, 43 / 48, 49 / 48])
_SBP_BLOCK = np.array([
    [-24 / 17, 59 / 34, -4 / 17, -3 / 34, 0.0, 0.0],
    [-1 / 2, 0.0, 1 / 2, 0.0, 0.0, 0.0],
    [4 / 43, -59 / 86, 0.0, 59 / 86, -4 / 43, 0.0],
    [3 / 98, 0.0, -59 / 98, 0.0, 32 / 49, -4 / 49],
])


def sbp_first_derivative(n, h):
    """Diagonal-norm summation-by-parts first derivative (interior order 4).

    Returns ``(D, H)`` with ``H D + (H D)^T = diag(-1, 0, ..., 0, 1)``, so the
    discrete flux of ``v D v`` is exactly ``(v_end^2 - v_0^2) / 2``.
    """
    if n < 12:
        raise ValueError(f"need at least 12 nodes, got {n}")
    D = sp.lil_matrix((n, n))
    centred = np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12])
    for i in range(4, n - 4):
        D[i, i - 2:i + 3] = centred
    for i in range(4):
        D[i, :6] = _SBP_BLOCK[i]
        D[n - 1 - i, n - 6:] = -_SBP_BLOCK[i][::-1]
    norm = np.ones(n)
    norm[:4] = _SBP_NORM
    norm[-4:] = _SBP_NORM[::-1]
    return D.tocsr() / h, sp.diags(norm * h)
