"""
Fine detection: exhaustive NLS over a reduced support and penalized model order selection.

For each candidate order ``k`` the support minimizing ``g^H P_perp g`` is found
by enumerating every ``k``-subset of the candidate set; the order is then
chosen by minimizing ``J_k = f(eps(k)) + eta * 3k`` where ``f`` is
``x / sigma^2`` for a known noise variance and ``N ln(x / N)`` otherwise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb, log

import numpy as np

from ._linalg import COND_LIMIT, LOADING, ls_fit
from .coarse import CoarseResult, coarse_detect
from .signal_model import SteeringMatrix, steering_vectors

__all__ = [
    "PENALTY_RULES",
    "ModelSelectionConfig",
    "Detection",
    "CandidateSet",
    "estimate_reflectivity",
    "nls_search",
    "penalty",
    "penalty_factor",
    "model_order_select",
    "detect_pixel",
    "detect_pixel_multi",
]

PENALTY_RULES = ("AIC", "BIC", "AICc")
_CHUNK = 200_000
_TIE_RTOL = 1e-12


def penalty_factor(rule: str, n: int, k: int) -> float:
    """Per-parameter penalty ``eta`` for ``k`` targets (``K = 3k`` parameters)."""
    if rule == "AIC":
        return 1.0
    if rule == "BIC":
        return 0.5 * log(n)
    if rule == "AICc":
        dof = n - 3 * k - 1
        if dof <= 0:
            raise ValueError(f"AICc undefined for N = {n}, k = {k}")
        return n / dof
    raise ValueError(f"unknown penalty rule {rule!r}; expected one of {PENALTY_RULES}")


def penalty(k: int, n: int, rule: str) -> float:
    """Information-criterion penalty ``eta * 3k``."""
    if k == 0:
        return 0.0
    return penalty_factor(rule, n, k) * 3 * k


@dataclass(frozen=True)
class ModelSelectionConfig:
    """Order-selection settings.

    ``noise_var`` set means the known-variance cost ``eps / sigma^2``;
    ``None`` selects the unknown-variance cost ``N ln(eps / N)``.
    """

    penalty_rule: str = "BIC"
    noise_var: float | None = None
    k_max: int = 2
    early_stop: bool = True

    def __post_init__(self):
        if self.penalty_rule not in PENALTY_RULES:
            raise ValueError(f"penalty_rule must be one of {PENALTY_RULES}")
        if self.noise_var is not None and not self.noise_var > 0:
            raise ValueError("noise_var must be positive when known")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")

    @property
    def known_noise(self) -> bool:
        return self.noise_var is not None

    def check(self, n: int):
        if self.penalty_rule == "AICc" and n - 3 * self.k_max - 1 <= 0:
            raise ValueError(f"AICc undefined for N = {n}, k_max = {self.k_max}")

    def cost(self, eps: float, n: int, energy: float) -> float:
        if self.known_noise:
            return eps / self.noise_var
        floor = 1e-12 * energy + 1e-300
        return n * np.log(max(eps, floor) / n)


@dataclass
class Detection:
    """A detector's verdict for one pixel."""

    n_targets: int
    indices: tuple
    elevations: np.ndarray
    reflectivities: np.ndarray
    residual_energy: float
    cost_trace: np.ndarray
    method: str
    elapsed: float = 0.0
    eps_trace: np.ndarray = field(default=None, repr=False)
    n_subsets: int = 0
    fast_path: bool = False
    coarse: CoarseResult | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Columns available to the subset search, with their Gram matrix."""

    columns: np.ndarray
    gram: np.ndarray
    elevations: np.ndarray
    labels: tuple

    @classmethod
    def from_grid(cls, A: SteeringMatrix, indices) -> "CandidateSet":
        idx = np.asarray(indices, dtype=np.intp)
        if idx.ndim != 1 or np.any(idx[1:] <= idx[:-1]):
            idx = np.unique(idx)
        if idx.size and idx[-1] - idx[0] + 1 == idx.size:
            # contiguous run (the usual coarse support): views, no copies
            sl = slice(int(idx[0]), int(idx[-1]) + 1)
            return cls(A.entries[:, sl], A.gram[sl, sl], A.grid[sl], tuple(idx.tolist()))
        return cls(A.entries[:, idx], A.gram[np.ix_(idx, idx)], A.grid[idx],
                   tuple(idx.tolist()))

    @classmethod
    def from_elevations(cls, geometry, elevations, labels=None) -> "CandidateSet":
        s = np.asarray(elevations, dtype=float)
        cols = steering_vectors(geometry, s)
        labels = tuple(labels) if labels is not None else tuple(float(x) for x in s)
        return cls(cols, cols.conj().T @ cols, s, labels)

    def __len__(self):
        return self.elevations.size


@lru_cache(maxsize=256)
def _combos(n: int, k: int) -> np.ndarray:
    """All ``k``-subsets of ``range(n)`` as rows, in lexicographic order."""
    if k == 1:
        out = np.arange(n, dtype=np.intp)[:, None]
        out.setflags(write=False)
        return out
    if k == 2:
        out = np.stack(np.triu_indices(n, 1), axis=1).astype(np.intp)
        out.setflags(write=False)
        return out
    flat = np.fromiter((i for c in combinations(range(n), k) for i in c),
                       dtype=np.intp, count=comb(n, k) * k)
    out = flat.reshape(-1, k)
    out.setflags(write=False)
    return out


def _projected_energy(c: np.ndarray, G: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """``c_S^H (G_SS)^-1 c_S`` for each row ``S`` of ``idx``."""
    k = idx.shape[1]
    d = G.diagonal().real
    if k == 1:
        i = idx[:, 0]
        return np.abs(c[i]) ** 2 / d[i]
    if k == 2:
        i, j = np.ascontiguousarray(idx[:, 0]), np.ascontiguousarray(idx[:, 1])
        return _pair_energy(c, G, d, i, j)

    Gs = G[idx[:, :, None], idx[:, None, :]]
    cs = c[idx]
    # Hadamard ratio det/prod(diag) flags near-singular subsets for loading
    sign, logdet = np.linalg.slogdet(Gs)
    ratio = np.exp(logdet - np.sum(np.log(d[idx]), axis=1))
    bad = ratio <= 1.0 / COND_LIMIT
    if np.any(bad):
        Gs = Gs.copy()
        Gs[bad] += LOADING * np.max(d) * np.eye(k)
    x = np.linalg.solve(Gs, cs[:, :, None])[:, :, 0]
    return np.real(np.sum(np.conj(cs) * x, axis=1))


def _pair_energy(c, G, d, i, j, flat=None) -> np.ndarray:
    """Closed-form 2x2 projected energy for the pairs ``(i[t], j[t])``."""
    g12 = G[i, j] if flat is None else np.ravel(G)[flat]
    p = c.real ** 2 + c.imag ** 2
    di, dj = d[i], d[j]
    mag = g12.real ** 2 + g12.imag ** 2
    det = di * dj - mag
    cross = np.real(g12 * (np.conj(c)[i] * c[j]))
    num = dj * p[i] + di * p[j] - 2.0 * cross
    bad = det <= di * dj / COND_LIMIT
    if np.any(bad):
        ld = LOADING * np.max(d)
        det = np.where(bad, (di + ld) * (dj + ld) - mag, det)
        num = np.where(bad, (dj + ld) * p[i] + (di + ld) * p[j] - 2.0 * cross, num)
    return num / det


@lru_cache(maxsize=64)
def _pair_index(n: int):
    """Contiguous row/column arrays of all pairs ``i < j`` and their flat offsets."""
    i, j = np.triu_indices(n, 1)
    out = (i.astype(np.intp), j.astype(np.intp), (i * n + j).astype(np.intp))
    for a in out:
        a.setflags(write=False)
    return out


def _best_subset(g, cand: CandidateSet, k: int, energy: float):
    """Exhaustive minimizer of the residual energy over ``k``-subsets of ``cand``."""
    n_cand = len(cand)
    if n_cand < k:
        raise ValueError(f"support too small: |S| = {n_cand} < k = {k}")
    c = cand.columns.conj().T @ g
    total = comb(n_cand, k)
    if k == 2 and total <= _CHUNK:
        i, j, flat = _pair_index(n_cand)
        G = cand.gram if cand.gram.flags.c_contiguous else np.ascontiguousarray(cand.gram)
        eps = energy - _pair_energy(c, G, G.diagonal().real, i, j, flat)
        best = _first_min(eps, energy)
        return (int(i[best]), int(j[best])), float(max(eps[best], 0.0)), total
    if total <= _CHUNK:
        idx = _combos(n_cand, k)
        eps = energy - _projected_energy(c, cand.gram, idx)
        best = _first_min(eps, energy)
        return tuple(int(i) for i in idx[best]), float(max(eps[best], 0.0)), total
    best_val, best_combo = np.inf, None
    it = combinations(range(n_cand), k)
    while True:
        block = np.fromiter((i for cc in _take(it, _CHUNK) for i in cc), dtype=np.intp)
        if block.size == 0:
            break
        idx = block.reshape(-1, k)
        eps = energy - _projected_energy(c, cand.gram, idx)
        b = _first_min(eps, energy)
        if eps[b] < best_val - _TIE_RTOL * energy:
            best_val, best_combo = eps[b], idx[b]
    return tuple(int(i) for i in best_combo), float(max(best_val, 0.0)), total


def _take(it, n):
    for _ in range(n):
        try:
            yield next(it)
        except StopIteration:
            return


def _first_min(eps, energy) -> int:
    """Index of the first value within a relative tie tolerance of the minimum."""
    lo = eps.min()
    return int(np.argmax(eps <= lo + _TIE_RTOL * max(energy, 1e-300)))


def _window_search(windows, radius: int = 2):
    """Subset search restricted to one point per disjoint window.

    ``windows`` holds, per coarse window, its candidate positions in grid
    order with the coarse peak's position first. Each choice of ``k`` windows
    is solved by coordinate ascent on the projected energy starting from the
    peaks, alternated with a joint search over every combination within
    ``radius`` cells of the current point, until neither step moves.
    """
    windows = [(int(w[0]), np.sort(np.asarray(w, dtype=np.intp))) for w in windows]

    def search(g, cand, k, energy):
        if k == 1 or k > len(windows):
            return _best_subset(g, cand, k, energy)
        c = cand.columns.conj().T @ g
        tol = _TIE_RTOL * energy
        best_val, best_sel, count = np.inf, None, 0
        for chosen in combinations(range(len(windows)), k):
            sel = [windows[w][0] for w in chosen]
            cur = _projected_energy(c, cand.gram, np.array([sel]))[0]
            for _ in range(100):
                moved = False
                for pos, w in enumerate(chosen):
                    opts = windows[w][1]
                    idx = np.tile(np.asarray(sel, dtype=np.intp), (opts.size, 1))
                    idx[:, pos] = opts
                    proj = _projected_energy(c, cand.gram, idx)
                    count += opts.size
                    j = int(np.argmax(proj))
                    if proj[j] > cur + tol:
                        sel[pos], cur, moved = int(opts[j]), proj[j], True
                near = []
                for pos, w in enumerate(chosen):
                    opts = windows[w][1]
                    at = int(np.searchsorted(opts, sel[pos]))
                    near.append(opts[max(at - radius, 0):at + radius + 1])
                idx = np.stack([m.ravel() for m in np.meshgrid(*near, indexing="ij")], axis=1)
                proj = _projected_energy(c, cand.gram, idx)
                count += len(idx)
                j = int(np.argmax(proj))
                if proj[j] > cur + tol:
                    sel, cur, moved = [int(v) for v in idx[j]], proj[j], True
                if not moved:
                    break
            order = tuple(sorted(sel))
            val = energy - cur
            if val < best_val - tol or (abs(val - best_val) <= tol and order < best_sel):
                best_val, best_sel = val, order
        return best_sel, float(max(best_val, 0.0)), count

    return search


def estimate_reflectivity(g, cols) -> np.ndarray:
    """Least-squares reflectivities of ``g`` on the selected steering columns."""
    coef, _, cond = ls_fit(np.asarray(getattr(g, "g", g)), cols)
    if cond > COND_LIMIT:
        raise ValueError("degenerate support")
    return coef


def nls_search(g, A: SteeringMatrix, S, k: int):
    """Exhaustive NLS support over grid indices ``S``.

    Returns ``(indices, eps)``: the lexicographically first ``k``-subset of the
    sorted ``S`` minimizing ``g^H P_perp g``, and that residual energy.
    ``k = 0`` returns ``((), ||g||^2)``.
    """
    g = np.asarray(getattr(g, "g", g))
    energy = float(np.vdot(g, g).real)
    if k == 0:
        return (), energy
    cand = CandidateSet.from_grid(A, S)
    best, eps, _ = _best_subset(g, cand, k, energy)
    return tuple(cand.labels[i] for i in best), eps


def _select(g, cand: CandidateSet, cfg: ModelSelectionConfig, n: int, search=None):
    energy = float(np.vdot(g, g).real)
    if search is None:
        search = _best_subset
    k_lim = min(cfg.k_max, len(cand))
    eps = [energy]
    costs = [cfg.cost(energy, n, energy)]
    supports = [()]
    n_eval = 0
    k_hat = None
    for k in range(1, k_lim + 1):
        best, e, cnt = search(g, cand, k, energy)
        n_eval += cnt
        eps.append(e)
        costs.append(cfg.cost(e, n, energy) + penalty(k, n, cfg.penalty_rule))
        supports.append(best)
        if cfg.early_stop and costs[k - 1] <= costs[k]:
            k_hat = k - 1
            break
    if k_hat is None:
        k_hat = int(np.argmin(costs))
    return k_hat, supports, np.array(eps), np.array(costs), n_eval


def _memoized(search):
    """Cache the per-order search so several selection rules can share it."""
    cache = {}

    def wrapped(g, cand, k, energy):
        if k not in cache:
            cache[k] = search(g, cand, k, energy)
        return cache[k]

    return wrapped


def _finish(g, cand, k_hat, supports, eps, costs, n_eval, method, t0, **extra) -> Detection:
    sel = supports[k_hat]
    if k_hat:
        gamma = estimate_reflectivity(g, cand.columns[:, list(sel)])
    else:
        gamma = np.zeros(0, dtype=complex)
    return Detection(
        n_targets=k_hat,
        indices=tuple(cand.labels[i] for i in sel),
        elevations=cand.elevations[list(sel)],
        reflectivities=gamma,
        residual_energy=float(eps[k_hat]),
        cost_trace=costs,
        method=method,
        elapsed=time.perf_counter() - t0,
        eps_trace=eps,
        n_subsets=n_eval,
        **extra,
    )


def model_order_select(g, A: SteeringMatrix, S, cfg: ModelSelectionConfig,
                       method: str = "nls") -> Detection:
    """Choose the number of targets over candidate grid indices ``S``."""
    t0 = time.perf_counter()
    g = np.asarray(getattr(g, "g", g))
    cfg.check(g.size)
    cand = CandidateSet.from_grid(A, S)
    return _finish(g, cand, *_select(g, cand, cfg, g.size), method, t0)


def _refined_candidates(A: SteeringMatrix, support, factor: int) -> CandidateSet:
    """Subdivide every grid step inside the support ``factor`` times."""
    idx = np.unique(np.asarray(support, dtype=int))
    pos = [idx.astype(float)]
    runs = np.split(idx, np.flatnonzero(np.diff(idx) != 1) + 1)
    for run in runs:
        for j in range(1, factor):
            pos.append(run[:-1] + j / factor)
    pos = np.unique(np.concatenate(pos))
    s = pos * A.geometry.grid_spacing
    return CandidateSet.from_elevations(A.geometry, s, labels=tuple(float(p) for p in pos))


def detect_pixel(g, A: SteeringMatrix, rho_s: float, threshold: float,
                 cfg: ModelSelectionConfig, k_max: int | None = None,
                 fast_path="windows", refine: int = 1) -> Detection:
    """Two-step detection of one pixel: coarse CFAR supports, then reduced-space NLS.

    Parameters
    ----------
    g : ndarray or Measurement
    A : SteeringMatrix
    rho_s : float
        Rayleigh resolution; half-width of the coarse support windows.
    threshold : float
        CFAR threshold of the coarse stage.
    cfg : ModelSelectionConfig
    k_max : int, optional
        Coarse iterations; defaults to ``cfg.k_max``.
    fast_path : {"windows", "peaks", False}
        Shortcut taken when two or more kept coarse windows are pairwise
        disjoint. ``"windows"`` searches one point per window by coordinate
        ascent (same answer as the full search, linear cost); ``"peaks"``
        restricts the search to the coarse peaks themselves, which is only
        exact when the peaks are mutually orthogonal; ``False`` always runs
        the full subset search over the support.
    refine : int
        Subdivide the grid inside the support ``refine`` times (1 = coarse grid).
        Ignored on the fast path.
    """
    return detect_pixel_multi(g, A, rho_s, threshold, [cfg], k_max, fast_path, refine)[0]


def detect_pixel_multi(g, A: SteeringMatrix, rho_s: float, threshold: float, cfgs,
                       k_max: int | None = None, fast_path="windows",
                       refine: int = 1) -> list:
    """:func:`detect_pixel` for several selection rules sharing one coarse pass.

    The subset search for each order is run once and reused by every
    configuration in ``cfgs``; the coarse stage uses ``k_max`` (default: the
    largest ``cfg.k_max``). Each returned :class:`Detection` reports the
    elapsed time of the shared work plus its own selection.
    """
    if fast_path is True:
        fast_path = "windows"
    if fast_path not in ("windows", "peaks", False, None):
        raise ValueError(f"unknown fast_path mode {fast_path!r}")
    cfgs = list(cfgs)
    if not cfgs:
        raise ValueError("need at least one selection config")
    t0 = time.perf_counter()
    g = np.asarray(getattr(g, "g", g))
    n = g.size
    for cfg in cfgs:
        cfg.check(n)
    k_max = k_max or max(cfg.k_max for cfg in cfgs)
    coarse = coarse_detect(g, A, rho_s, k_max, threshold)
    if coarse.n_detected == 0:
        energy = float(np.vdot(g, g).real)
        el = time.perf_counter() - t0
        return [Detection(0, (), np.zeros(0), np.zeros(0, dtype=complex), energy,
                          np.array([cfg.cost(energy, n, energy)]), "ca-nls",
                          el, np.array([energy]), 0, False, coarse) for cfg in cfgs]
    use_fast = bool(fast_path) and coarse.n_detected >= 2 and coarse.supports_disjoint()
    search = _best_subset
    if use_fast and fast_path == "peaks":
        cand = CandidateSet.from_grid(A, sorted(coarse.detected_peaks))
    elif use_fast:
        cand = CandidateSet.from_grid(A, coarse.support)
        pos = {lab: i for i, lab in enumerate(cand.labels)}
        windows = []
        for p, (lo, hi) in zip(coarse.detected_peaks, coarse.kept_supports):
            others = [pos[i] for i in range(lo, hi + 1) if i != p]
            windows.append(np.array([pos[p]] + others, dtype=np.intp))
        search = _window_search(windows)
    elif refine > 1:
        cand = _refined_candidates(A, coarse.support, refine)
    else:
        cand = CandidateSet.from_grid(A, coarse.support)
    search = _memoized(search)
    out = []
    for cfg in cfgs:
        out.append(_finish(g, cand, *_select(g, cand, cfg, n, search), "ca-nls", t0,
                           fast_path=use_fast, coarse=coarse))
    return out
