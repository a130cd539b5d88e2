"""Guarded least-squares projections shared by the detectors."""

import numpy as np
from scipy.linalg import solve_triangular

COND_LIMIT = 1e12
LOADING = 1e-10
# below this Gram condition number the normal equations are as accurate as QR
_DIRECT_LIMIT = 1e4


def ls_fit(g, cols):
    """Least-squares coefficients and residual of ``g`` on the columns of ``cols``.

    Well-conditioned supports solve the (small) normal equations directly,
    moderately conditioned ones go through QR. If the Gram matrix condition
    number exceeds ``COND_LIMIT`` the normal equations are solved with
    diagonal loading ``LOADING * N`` instead. Returns ``(coef, residual, cond)``
    where ``cond`` is the condition number of the matrix actually solved.
    """
    g = np.asarray(g)
    cols = np.asarray(cols)
    if cols.ndim == 1:
        cols = cols[:, None]
    n, k = cols.shape
    if k == 0:
        return np.zeros(0, dtype=complex), g.astype(complex), 1.0
    adj = cols.conj().T
    gram = adj @ cols
    rhs = adj @ g
    if k == 1:
        d = gram[0, 0].real
        if d > 0:
            coef = rhs / d
            return coef, g - cols[:, 0] * coef[0], 1.0
        cond = np.inf
    elif k == 2:
        # closed-form eigenvalues of a 2x2 Hermitian matrix
        a, c = gram[0, 0].real, gram[1, 1].real
        half = 0.5 * (a + c)
        rad = np.sqrt(0.25 * (a - c) ** 2 + abs(gram[0, 1]) ** 2)
        lo = half - rad
        cond = (half + rad) / lo if lo > 0 else np.inf
    else:
        w = np.linalg.eigvalsh(gram)
        cond = w[-1] / w[0] if w[0] > 0 else np.inf
    if cond <= _DIRECT_LIMIT and k == 2:
        # Cramer's rule; exact enough at this conditioning and far cheaper than LAPACK
        det = a * c - abs(gram[0, 1]) ** 2
        coef = np.array([c * rhs[0] - gram[0, 1] * rhs[1],
                         a * rhs[1] - gram[1, 0] * rhs[0]]) / det
    elif cond <= _DIRECT_LIMIT:
        coef = np.linalg.solve(gram, rhs)
    elif cond <= COND_LIMIT:
        q, r = np.linalg.qr(cols)
        coef = solve_triangular(r, q.conj().T @ g)
    else:
        loaded = gram + LOADING * n * np.eye(k)
        w = np.linalg.eigvalsh(loaded)
        cond = w[-1] / w[0]
        coef = np.linalg.solve(loaded, rhs)
    return coef, g - cols @ coef, cond
