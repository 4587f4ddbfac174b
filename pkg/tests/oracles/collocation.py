"""Chebyshev collocation eigenvalues of the tube problem, independent of the determinant code.

The fourth-order equation is split into two second-order ones with
u = w'':

    u'' - c u + 2 lambda beta eta w' + lambda^2 w = 0,    w'' - u = 0,

which keeps the differentiation matrices at second order and avoids the
roundoff of collocated fourth derivatives. Boundary conditions replace the
collocation equations at the end nodes, and the quadratic pencil is
linearised into a generalized eigenproblem.
"""
import numpy as np
import scipy.linalg as sla


def cheb(n):
    """Chebyshev differentiation matrix and nodes x_j = cos(j pi / n) on [-1, 1]."""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def collocation_eigenvalues(gamma, eta, kappa, beta, n=64):
    """All finite eigenvalues of the discretised pencil, unsorted."""
    c = gamma - eta**2
    D1, _ = cheb(n)
    D1 = 2.0 * D1  # d/ds with s = (x + 1) / 2; node 0 is s=1, node n is s=0
    D2 = D1 @ D1
    m = n + 1
    I = np.eye(m)
    Z = np.zeros((m, m))
    # unknowns (w, u); first block row is the u-equation, second the w-equation
    K = np.block([[Z, D2 - c * I], [D2, -I]])
    C = np.block([[2.0 * beta * eta * D1, Z], [Z, Z]])
    M = np.block([[I, Z], [Z, Z]])
    e0, en = I[0], I[n]
    bc = {
        n: (np.r_[np.zeros(m), en], np.zeros(2 * m)),                 # u(0) = 0
        0: (np.r_[-c * D1[0], D1[0]], np.zeros(2 * m)),               # u'(1) - c w'(1) = 0
        m + n: (np.r_[en, np.zeros(m)], np.zeros(2 * m)),             # w(0) = 0
        m: (np.r_[np.zeros(m), e0], np.r_[kappa * D1[0], np.zeros(m)]),  # u(1) + lambda kappa w'(1) = 0
    }
    for i, (k_row, c_row) in bc.items():
        K[i] = k_row
        C[i] = c_row
        M[i] = 0.0
    # lambda = sigma * mu balances the pencil (norm-based scaling)
    sigma = np.sqrt(np.linalg.norm(K, 1) / np.linalg.norm(M, 1))
    N2 = 2 * m
    I2 = np.eye(N2)
    Z2 = np.zeros((N2, N2))
    A = np.block([[Z2, I2], [-K / sigma**2, -C / sigma]])
    B = np.block([[I2, Z2], [Z2, M]])
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = sla.eig(A, B, right=False) * sigma
    return vals[np.isfinite(vals)]


def oracle_spectrum(gamma, eta, kappa, beta, sizes=(64, 96), rel_tol=1e-7, im_max=None):
    """Eigenvalues that agree between two resolutions, sorted by imaginary part."""
    a = collocation_eigenvalues(gamma, eta, kappa, beta, sizes[0])
    b = collocation_eigenvalues(gamma, eta, kappa, beta, sizes[1])
    kept = []
    for z in a:
        if im_max is not None and abs(z.imag) > im_max:
            continue
        nearest = b[np.argmin(np.abs(b - z))]
        if abs(nearest - z) <= rel_tol * max(1.0, abs(z)):
            kept.append(nearest)
    return np.array(sorted(kept, key=lambda z: (z.imag, -z.real)))
