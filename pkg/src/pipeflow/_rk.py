"""Dormand-Prince 5(4) integration of linear constant-coefficient complex systems.

The right-hand side is ``Y' = M @ Y`` with a constant complex matrix ``M`` and a
matrix-valued state ``Y`` (one column per solution). Accepted step sizes are
recorded so that a nearby system can be replayed on the identical mesh, which
keeps finite-difference derivatives with respect to parameters smooth.
"""
import numpy as np
from numba import njit

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2
STATUS_MAXSTEPS = 3


@njit(cache=True, nogil=True)
def _matmul(M, Y, out):
    n, k = Y.shape
    for i in range(n):
        for j in range(k):
            acc = 0j
            for m in range(n):
                acc += M[i, m] * Y[m, j]
            out[i, j] = acc


@njit(cache=True, nogil=True)
def _step(M, Y, h, K, A, B5, E, Ynew, Err, tmp):
    """One DP54 step; K[0] must hold M @ Y on entry (first-same-as-last)."""
    n, k = Y.shape
    for st in range(1, 7):
        for i in range(n):
            for j in range(k):
                acc = Y[i, j]
                for q in range(st):
                    if A[st, q] != 0.0:
                        acc += h * A[st, q] * K[q, i, j]
                tmp[i, j] = acc
        _matmul(M, tmp, K[st])
    for i in range(n):
        for j in range(k):
            acc = Y[i, j]
            err = 0j
            for q in range(7):
                acc += h * B5[q] * K[q, i, j]
                err += h * E[q] * K[q, i, j]
            Ynew[i, j] = acc
            Err[i, j] = err


@njit(cache=True, nogil=True)
def _sup(Y):
    m = 0.0
    for v in Y.ravel():
        a = abs(v)
        if a > m:
            m = a
    return m


@njit(cache=True, nogil=True)
def _column_max(Y, out):
    n, k = Y.shape
    for j in range(k):
        for i in range(n):
            a = abs(Y[i, j])
            if a > out[j]:
                out[j] = a


@njit(cache=True, nogil=True)
def _integrate(M, Y0, stops, rtol, atol, h0, max_steps, A, B5, E):
    n, k = Y0.shape
    Y = Y0.copy()
    K = np.empty((7, n, k), dtype=np.complex128)
    Ynew = np.empty_like(Y)
    Err = np.empty_like(Y)
    tmp = np.empty_like(Y)
    mesh = np.empty(max_steps)
    at_stops = np.empty((len(stops), n, k), dtype=np.complex128)
    runmax = np.zeros(k)
    _column_max(Y, runmax)
    _matmul(M, Y, K[0])
    t = 0.0
    h = h0
    nacc = 0
    ntried = 0
    for si in range(len(stops)):
        target = stops[si]
        while t < target:
            if ntried >= max_steps or nacc >= max_steps:
                return Y, mesh[:nacc], at_stops, runmax, STATUS_MAXSTEPS
            last = False
            h_free = h
            if t + h >= target:
                h = target - t
                last = True
            ntried += 1
            _step(M, Y, h, K, A, B5, E, Ynew, Err, tmp)
            scale = atol + rtol * max(_sup(Y), _sup(Ynew))
            err = _sup(Err) / scale
            if not np.isfinite(err):
                if h < 1e-14:
                    return Y, mesh[:nacc], at_stops, runmax, STATUS_NONFINITE
                h *= 0.1
                continue
            if err <= 1.0:
                mesh[nacc] = h
                nacc += 1
                t = target if last else t + h
                Y[:, :] = Ynew
                _column_max(Y, runmax)
                K[0] = K[6]
                fac = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
                h = h_free if last else h * fac
            else:
                h *= max(0.1, 0.9 * err ** -0.2)
            if h < 1e-14 * max(1.0, t):
                return Y, mesh[:nacc], at_stops, runmax, STATUS_UNDERFLOW
        at_stops[si] = Y
    return Y, mesh[:nacc], at_stops, runmax, STATUS_OK


@njit(cache=True, nogil=True)
def _replay(M, Y0, mesh, A, B5, E):
    n, k = Y0.shape
    Y = Y0.copy()
    K = np.empty((7, n, k), dtype=np.complex128)
    Ynew = np.empty_like(Y)
    Err = np.empty_like(Y)
    tmp = np.empty_like(Y)
    runmax = np.zeros(k)
    _column_max(Y, runmax)
    for h in mesh:
        _matmul(M, Y, K[0])
        _step(M, Y, h, K, A, B5, E, Ynew, Err, tmp)
        Y[:, :] = Ynew
        _column_max(Y, runmax)
    return Y, runmax


def integrate(M, Y0, stops=(1.0,), rtol=1e-11, atol=1e-13, h0=None, max_steps=200_000):
    """Integrate ``Y' = M Y`` from 0 through each point of ``stops``.

    Returns ``(Y_end, mesh, Y_at_stops, column_runmax, status)``. The error
    estimate is measured against the sup-norm of the whole state.
    """
    M = np.ascontiguousarray(M, dtype=np.complex128)
    Y0 = np.ascontiguousarray(np.atleast_2d(Y0), dtype=np.complex128)
    stops = np.ascontiguousarray(np.asarray(stops, dtype=float))
    if h0 is None:
        h0 = 0.1 / max(1.0, np.abs(M).sum(axis=1).max()) ** 0.5
    return _integrate(M, Y0, stops, rtol, atol, float(h0), int(max_steps), _A, _B5, _E)


def replay(M, Y0, mesh):
    """Advance ``Y0`` with the fifth-order formula over a fixed list of steps."""
    M = np.ascontiguousarray(M, dtype=np.complex128)
    Y0 = np.ascontiguousarray(np.atleast_2d(Y0), dtype=np.complex128)
    return _replay(M, Y0, np.ascontiguousarray(mesh, dtype=float), _A, _B5, _E)
