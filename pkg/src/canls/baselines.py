"""
Reference detectors.

* SGLRTC: the successive-cancellation CFAR stage alone, with the detected
  peaks taken as the target locations.
* Exhaustive NLS: order selection with the subset search over the full grid.
* SL1MMER-style: l1-regularized reconstruction (BPDN), a scale-down to the
  strongest entries, then order selection and least-squares debiasing on
  that reduced support.
"""

from __future__ import annotations

import time
import weakref
from dataclasses import dataclass
from math import comb

import numpy as np

from .coarse import coarse_detect
from .fine import Detection, ModelSelectionConfig, estimate_reflectivity, model_order_select
from .signal_model import SteeringMatrix

__all__ = [
    "SEARCH_BUDGET",
    "BPDNResult",
    "sglrtc_detect",
    "exhaustive_nls_detect",
    "bpdn_lambda_max",
    "default_bpdn_lambda",
    "bpdn_objective",
    "bpdn_solve",
    "sl1mmer_support",
    "sl1mmer_detect",
    "sl1mmer_detect_multi",
]

SEARCH_BUDGET = 10 ** 8


def sglrtc_detect(g, A: SteeringMatrix, T: float, rho_s: float | None = None,
                  k_max: int = 2) -> Detection:
    """Successive GLRT with cancellation: the coarse peaks are the answer."""
    t0 = time.perf_counter()
    g = np.asarray(getattr(g, "g", g))
    rho_s = A.geometry.rayleigh_resolution if rho_s is None else rho_s
    coarse = coarse_detect(g, A, rho_s, k_max, T)
    peaks = list(coarse.detected_peaks)
    if peaks:
        coef = estimate_reflectivity(g, A.columns(peaks))
        resid = g - A.columns(peaks) @ coef
        eps = float(np.vdot(resid, resid).real)
    else:
        coef = np.zeros(0, dtype=complex)
        eps = float(np.vdot(g, g).real)
    return Detection(
        n_targets=len(peaks),
        indices=tuple(peaks),
        elevations=A.grid[peaks],
        reflectivities=coef,
        residual_energy=eps,
        cost_trace=coarse.statistics.copy(),
        method="sglrtc",
        elapsed=time.perf_counter() - t0,
        coarse=coarse,
    )


def exhaustive_nls_detect(g, A: SteeringMatrix, cfg: ModelSelectionConfig) -> Detection:
    """Order selection with every grid point a candidate (the slow reference)."""
    m = A.grid_size
    need = sum(comb(m, k) for k in range(1, cfg.k_max + 1))
    if need > SEARCH_BUDGET:
        raise ValueError(f"search space too large: {need} subsets > {SEARCH_BUDGET}")
    return model_order_select(g, A, np.arange(m), cfg, method="nls")


def bpdn_lambda_max(g, A: SteeringMatrix) -> float:
    """Smallest ``lambda`` for which the BPDN minimizer is zero: ``2 ||A^H g||_inf``."""
    g = np.asarray(getattr(g, "g", g))
    return 2.0 * float(np.max(np.abs(A.adjoint @ g)))


def default_bpdn_lambda(sigma_n: float, m: int, c: float = 2.0) -> float:
    """Universal-threshold style regularization ``c sigma sqrt(2 ln M)``."""
    return c * sigma_n * np.sqrt(2.0 * np.log(m))


def bpdn_objective(g, A, gamma, lam) -> float:
    entries = getattr(A, "entries", A)
    r = g - entries @ gamma
    return float(np.vdot(r, r).real + lam * np.sum(np.abs(gamma)))


@dataclass
class BPDNResult:
    coef: np.ndarray
    converged: bool
    n_iter: int
    objective: float
    history: np.ndarray


def _spectral_norm_sq(entries, rng_seed=0, iters=100, tol=1e-10) -> float:
    """Largest eigenvalue of ``A^H A`` by power iteration."""
    rng = np.random.default_rng(rng_seed)
    v = rng.standard_normal(entries.shape[1]) + 1j * rng.standard_normal(entries.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = entries.conj().T @ (entries @ v)
        new = np.linalg.norm(w)
        v = w / new
        if abs(new - lam) <= tol * new:
            break
        lam = new
    return float(new)


def _soft(z, t):
    mag = np.abs(z)
    scale = np.maximum(mag - t, 0.0) / np.where(mag > 0, mag, 1.0)
    return z * scale


def bpdn_solve(g, A, lam: float, max_iter: int = 2000, tol: float = 1e-8,
               lipschitz: float | None = None) -> BPDNResult:
    """Minimize ``||g - A gamma||^2 + lam ||gamma||_1`` over complex ``gamma``.

    Accelerated proximal gradient (FISTA) with step ``1 / L``,
    ``L = 2 lambda_max(A^H A)``, complex soft-thresholding of magnitudes, and a
    momentum restart whenever the objective would increase, so the accepted
    iterates are monotone. Stops when the relative objective decrease falls
    below ``tol``.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    g = np.asarray(getattr(g, "g", g), dtype=complex)
    entries = getattr(A, "entries", np.asarray(A))
    adj = entries.conj().T
    m = entries.shape[1]
    if lipschitz is None:
        lipschitz = 2.0 * _spectral_norm_sq(entries)
    step = 1.0 / lipschitz
    x = np.zeros(m, dtype=complex)
    if not np.any(g):
        return BPDNResult(x, True, 0, 0.0, np.zeros(1))
    y = x.copy()
    t = 1.0
    f_prev = bpdn_objective(g, entries, x, lam)
    hist = [f_prev]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * (adj @ (entries @ y - g))
        x_new = _soft(y - step * grad, lam * step)
        f_new = bpdn_objective(g, entries, x_new, lam)
        if f_new > f_prev:
            # restart from the last accepted iterate with a plain proximal step
            t = 1.0
            grad = 2.0 * (adj @ (entries @ x - g))
            x_new = _soft(x - step * grad, lam * step)
            f_new = bpdn_objective(g, entries, x_new, lam)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        dec = f_prev - f_new
        x, t = x_new, t_new
        hist.append(f_new)
        if 0 <= dec <= tol * max(abs(f_prev), 1e-300):
            converged = True
            f_prev = f_new
            break
        f_prev = f_new
    return BPDNResult(x, converged, it, f_prev, np.array(hist))


def sl1mmer_support(g, A: SteeringMatrix, noise_var: float | None = None,
                    lam: float | None = None, lam_factor: float = 2.0, keep: int = 6,
                    max_iter: int = 2000, tol: float = 1e-8):
    """BPDN reconstruction and scale-down to the ``keep`` strongest entries.

    Returns ``(support, result, lam)``. ``lam`` defaults to
    ``lam_factor * sigma * sqrt(2 ln M)``; without ``noise_var``, ``sigma`` is
    estimated from the residual of the best single-column fit. Entries below
    ``1e-6`` of the peak magnitude are dropped.
    """
    g = np.asarray(getattr(g, "g", g))
    n, m = A.shape
    if lam is None:
        if noise_var is not None:
            sigma = np.sqrt(noise_var)
        else:
            c = np.abs(A.adjoint @ g) ** 2 / n
            sigma = np.sqrt(max(np.vdot(g, g).real - c.max(), 0.0) / (n - 1))
        lam = default_bpdn_lambda(sigma, m, lam_factor)
        if lam == 0:
            lam = np.finfo(float).tiny
    sol = bpdn_solve(g, A, lam, max_iter=max_iter, tol=tol, lipschitz=_lipschitz(A))
    mag = np.abs(sol.coef)
    peak = mag.max() if mag.size else 0.0
    if peak == 0:
        return np.zeros(0, dtype=int), sol, lam
    order = np.argsort(-mag, kind="stable")[:keep]
    return np.sort(order[mag[order] > 1e-6 * peak]), sol, lam


def _sl1mmer_finish(g, A, support, sol, lam, cfg, t0) -> Detection:
    n = A.n_passes
    if support.size == 0:
        energy = float(np.vdot(g, g).real)
        det = Detection(0, (), np.zeros(0), np.zeros(0, dtype=complex), energy,
                        np.array([cfg.cost(energy, n, energy)]), "sl1mmer",
                        eps_trace=np.array([energy]))
    else:
        det = model_order_select(g, A, support, cfg, method="sl1mmer")
    det.elapsed = time.perf_counter() - t0
    det.diagnostics.update(bpdn_converged=sol.converged, bpdn_iter=sol.n_iter, lam=lam)
    return det


def sl1mmer_detect(g, A: SteeringMatrix, cfg: ModelSelectionConfig, lam: float | None = None,
                   lam_factor: float = 2.0, keep: int | None = None,
                   max_iter: int = 2000, tol: float = 1e-8) -> Detection:
    """Sparse reconstruction, scale-down, model selection and LS debiasing.

    ``keep`` defaults to ``3 * k_max``; see :func:`sl1mmer_support` for the
    regularization default.
    """
    t0 = time.perf_counter()
    g = np.asarray(getattr(g, "g", g))
    cfg.check(g.size)
    keep = 3 * cfg.k_max if keep is None else keep
    support, sol, lam = sl1mmer_support(g, A, cfg.noise_var, lam, lam_factor, keep,
                                        max_iter, tol)
    return _sl1mmer_finish(g, A, support, sol, lam, cfg, t0)


def sl1mmer_detect_multi(g, A: SteeringMatrix, cfgs, **kw) -> list:
    """:func:`sl1mmer_detect` for several selection rules sharing one BPDN solve.

    All configs must agree on the noise model and ``k_max``.
    """
    cfgs = list(cfgs)
    if len({(c.noise_var, c.k_max) for c in cfgs}) != 1:
        raise ValueError("configs must share noise_var and k_max")
    t0 = time.perf_counter()
    g = np.asarray(getattr(g, "g", g))
    keep = kw.pop("keep", None) or 3 * cfgs[0].k_max
    support, sol, lam = sl1mmer_support(g, A, cfgs[0].noise_var, keep=keep, **kw)
    return [_sl1mmer_finish(g, A, support, sol, lam, cfg, t0) for cfg in cfgs]


_LIP_CACHE: "weakref.WeakKeyDictionary[SteeringMatrix, float]" = weakref.WeakKeyDictionary()


def _lipschitz(A: SteeringMatrix) -> float:
    try:
        return _LIP_CACHE[A]
    except KeyError:
        val = _LIP_CACHE[A] = 2.0 * _spectral_norm_sq(A.entries)
        return val
