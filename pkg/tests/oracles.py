"""Independent reference implementations used to freeze expected values.

These deliberately avoid the package's own numerics: plain loops,
``numpy.linalg.lstsq`` and textbook formulas.
"""

from itertools import combinations
from math import log

import numpy as np


def residual_energy(g, cols):
    if cols.shape[1] == 0:
        return float(np.vdot(g, g).real)
    coef = np.linalg.lstsq(cols, g, rcond=None)[0]
    r = g - cols @ coef
    return float(np.vdot(r, r).real)


def eta(rule, n, k):
    return {"AIC": 1.0, "BIC": 0.5 * log(n), "AICc": n / (n - 3 * k - 1) if k else 0.0}[rule]


def brute_force_order(g, entries, k_max, rule="BIC", noise_var=None, early_stop=True):
    """Enumerate every subset of every order; returns (k_hat, support tuple, eps list)."""
    n, m = entries.shape
    energy = float(np.vdot(g, g).real)
    eps, sup = [energy], [()]
    for k in range(1, k_max + 1):
        best, best_s = np.inf, None
        for s in combinations(range(m), k):
            e = residual_energy(g, entries[:, list(s)])
            if e < best - 1e-12 * energy:
                best, best_s = e, s
        eps.append(max(best, 0.0))
        sup.append(best_s)

    def f(x):
        if noise_var is not None:
            return x / noise_var
        return n * np.log(max(x, 1e-12 * energy + 1e-300) / n)

    J = [f(e) + (eta(rule, n, k) * 3 * k if k else 0.0) for k, e in enumerate(eps)]
    if early_stop:
        k_hat = next((k for k in range(k_max) if J[k] <= J[k + 1]), None)
        if k_hat is None:
            k_hat = k_max
    else:
        k_hat = int(np.argmin(J))
    return k_hat, sup[k_hat], eps, J


def cd_lasso(g, entries, lam, sweeps=20000, tol=1e-14):
    """Cyclic coordinate descent for ||g - A x||^2 + lam ||x||_1 over complex x."""
    m = entries.shape[1]
    x = np.zeros(m, dtype=complex)
    r = g.astype(complex).copy()
    norms = np.sum(np.abs(entries) ** 2, axis=0)
    prev = np.inf
    for _ in range(sweeps):
        for j in range(m):
            a = entries[:, j]
            r += a * x[j]
            z = np.vdot(a, r)
            mag = abs(z)
            x[j] = 0.0 if mag <= lam / 2 else (mag - lam / 2) / norms[j] * z / mag
            r -= a * x[j]
        obj = float(np.vdot(r, r).real + lam * np.sum(np.abs(x)))
        if prev - obj <= tol * abs(obj):
            break
        prev = obj
    return x, obj


def explicit_vartheta(alpha, dphi, n, geometry_factory):
    """||r||^2 / N for a unit pair fitted by one scatterer at its midpoint.

    ``geometry_factory(n)`` returns baselines and lambda*R0; steering vectors
    are evaluated directly from the spatial frequencies.
    """
    b, lr0 = geometry_factory(n)
    xi = 2.0 * np.asarray(b) / lr0
    rho = lr0 / (2.0 * (np.max(b) - np.min(b)))
    s1 = 100.0
    s2 = s1 + alpha * rho
    mid = 0.5 * (s1 + s2)
    a1 = np.exp(2j * np.pi * xi * s1)
    a2 = np.exp(2j * np.pi * xi * s2)
    am = np.exp(2j * np.pi * xi * mid)
    g = a1 + np.exp(1j * dphi) * a2
    gamma = np.vdot(am, g) / n
    r = g - gamma * am
    return float(np.vdot(r, r).real) / n
