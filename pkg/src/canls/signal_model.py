"""
Acquisition geometry, steering matrices and synthetic pixel observations.

A range-azimuth pixel observed over ``N`` passes is modelled as

    g = A @ gamma + n,    A[n, m] = exp(j 2 pi xi_n s_m),    xi_n = 2 b_n / (lambda R0)

with circular complex Gaussian noise of covariance ``sigma_n**2 * I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "TomoGeometry",
    "SteeringMatrix",
    "SceneTargets",
    "Measurement",
    "reference_geometry",
    "rayleigh_resolution",
    "steering_vectors",
    "build_steering_matrix",
    "synthesize_pixel",
    "correlation_coefficient",
    "dirichlet",
    "make_rng",
]

#: Wavelength (m) used to split the lambda*R0 product of the reference geometry.
REFERENCE_WAVELENGTH = 0.031
#: lambda*R0 product (m^2) giving rho_s = 26 m at a 903 m baseline extent.
REFERENCE_LAMBDA_R0 = 46956.0

_UNIFORM_RTOL = 1e-9


def make_rng(seed=None) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a sequence of ints (spawn key)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def dirichlet(x, n):
    """Normalized digital sinc ``sin(n x) / (n sin x)`` with its removable singularities."""
    x = np.asarray(x, dtype=float)
    den = n * np.sin(x)
    small = np.abs(den) < 1e-12
    safe = np.where(small, 1.0, den)
    out = np.sin(n * x) / safe
    # limit at x = k*pi is cos(n x) / cos(x) = +-1
    lim = np.cos(n * x) / np.cos(x)
    return np.where(small, lim, out)


@dataclass(frozen=True)
class TomoGeometry:
    """Multipass acquisition geometry.

    Parameters
    ----------
    wavelength : float
        Radar wavelength (m).
    range_to_scene : float
        Distance from the master track to scene centre (m).
    baselines : array_like
        Orthogonal baselines of the ``N`` passes (m).
    elevation_extent : float
        Height of the elevation search window (m).
    grid_size : int
        Number ``M`` of elevation samples, equispaced over ``[0, elevation_extent]``.
    """

    wavelength: float
    range_to_scene: float
    baselines: np.ndarray
    elevation_extent: float
    grid_size: int

    def __post_init__(self):
        b = np.array(self.baselines, dtype=float).ravel()
        b.setflags(write=False)
        object.__setattr__(self, "baselines", b)
        if b.size < 2:
            raise ValueError(f"baselines: need N >= 2 passes, got N = {b.size}")
        if int(self.grid_size) != self.grid_size or self.grid_size < 2:
            raise ValueError(f"grid_size: need M >= 2, got M = {self.grid_size}")
        object.__setattr__(self, "grid_size", int(self.grid_size))
        if not self.elevation_extent > 0:
            raise ValueError("elevation_extent: must be positive")
        lr = self.wavelength * self.range_to_scene
        if not (np.isfinite(lr) and lr > 0):
            raise ValueError("wavelength * range_to_scene must be finite and positive")
        if not np.all(np.isfinite(b)):
            raise ValueError("baselines: all entries must be finite")

    @property
    def n_passes(self) -> int:
        return self.baselines.size

    @property
    def lambda_r0(self) -> float:
        return self.wavelength * self.range_to_scene

    @property
    def baseline_extent(self) -> float:
        return float(self.baselines.max() - self.baselines.min())

    @cached_property
    def grid(self) -> np.ndarray:
        s = np.linspace(0.0, self.elevation_extent, self.grid_size)
        s.setflags(write=False)
        return s

    @property
    def grid_spacing(self) -> float:
        return self.elevation_extent / (self.grid_size - 1)

    @cached_property
    def spatial_frequencies(self) -> np.ndarray:
        xi = 2.0 * self.baselines / self.lambda_r0
        xi.setflags(write=False)
        return xi

    @property
    def rayleigh_resolution(self) -> float:
        return rayleigh_resolution(self)

    @cached_property
    def is_uniform(self) -> bool:
        """True when the baselines are equispaced, ``b_i = b_0 + i db / (N-1)``."""
        b = self.baselines
        db = b[-1] - b[0]
        if db == 0:
            return False
        ideal = b[0] + np.arange(b.size) / (b.size - 1) * db
        return bool(np.allclose(b, ideal, rtol=0.0, atol=_UNIFORM_RTOL * abs(db)))

    @classmethod
    def uniform(
        cls,
        n_passes: int,
        baseline_extent: float,
        wavelength: float,
        range_to_scene: float,
        elevation_extent: float,
        grid_size: int,
        centered: bool = True,
    ) -> "TomoGeometry":
        """Equispaced baselines spanning ``baseline_extent``.

        With ``centered`` the baselines are symmetric about the master track, so
        the correlation between two steering vectors is real and phase
        differences are referenced to the aperture centre. Otherwise they run
        from 0 to ``baseline_extent``.
        """
        if n_passes < 2:
            raise ValueError(f"n_passes: need N >= 2, got N = {n_passes}")
        frac = np.arange(n_passes) / (n_passes - 1)
        if centered:
            frac = frac - 0.5
        return cls(wavelength, range_to_scene, frac * baseline_extent,
                   elevation_extent, grid_size)

    def with_grid(self, grid_size: int | None = None, elevation_extent: float | None = None):
        return TomoGeometry(
            self.wavelength,
            self.range_to_scene,
            self.baselines,
            self.elevation_extent if elevation_extent is None else elevation_extent,
            self.grid_size if grid_size is None else grid_size,
        )


def reference_geometry(
    n_passes: int = 20,
    baseline_extent: float = 903.0,
    elevation_extent: float = 360.0,
    grid_size: int = 234,
    lambda_r0: float = REFERENCE_LAMBDA_R0,
    centered: bool = True,
) -> TomoGeometry:
    """Default simulation geometry: N = 20, rho_s = 26 m, 360 m extent, 234 grid points."""
    return TomoGeometry.uniform(
        n_passes,
        baseline_extent,
        REFERENCE_WAVELENGTH,
        lambda_r0 / REFERENCE_WAVELENGTH,
        elevation_extent,
        grid_size,
        centered=centered,
    )


def rayleigh_resolution(geometry: TomoGeometry) -> float:
    """Elevation Rayleigh resolution ``lambda R0 / (2 db)`` in metres."""
    db = geometry.baseline_extent
    if not db > 0:
        raise ValueError("degenerate geometry: baseline extent is zero")
    return geometry.lambda_r0 / (2.0 * db)


def steering_vectors(geometry: TomoGeometry, elevations) -> np.ndarray:
    """``N x K`` steering vectors evaluated at arbitrary (off-grid) elevations."""
    s = np.atleast_1d(np.asarray(elevations, dtype=float))
    return np.exp(2j * np.pi * np.outer(geometry.spatial_frequencies, s))


@dataclass(frozen=True, eq=False)
class SteeringMatrix:
    """Steering matrix sampled on the geometry grid."""

    entries: np.ndarray
    geometry: TomoGeometry

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n_passes(self) -> int:
        return self.entries.shape[0]

    @property
    def grid_size(self) -> int:
        return self.entries.shape[1]

    @property
    def grid(self) -> np.ndarray:
        return self.geometry.grid

    @cached_property
    def gram(self) -> np.ndarray:
        """Full ``A^H A``; shared by every subset search on this grid."""
        G = self.entries.conj().T @ self.entries
        G.setflags(write=False)
        return G

    @cached_property
    def adjoint(self) -> np.ndarray:
        H = np.ascontiguousarray(self.entries.conj().T)
        H.setflags(write=False)
        return H

    def columns(self, indices) -> np.ndarray:
        return self.entries[:, np.asarray(indices, dtype=int)]


def build_steering_matrix(geometry: TomoGeometry) -> SteeringMatrix:
    return SteeringMatrix(steering_vectors(geometry, geometry.grid), geometry)


@dataclass(frozen=True)
class SceneTargets:
    """Point scatterers in one pixel plus the noise level."""

    elevations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))
    noise_sigma: float = 0.0

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.elevations, dtype=float))
        a = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        p = np.atleast_1d(np.asarray(self.phases, dtype=float))
        if not (s.shape == a.shape == p.shape):
            raise ValueError("elevations, amplitudes and phases must have equal length")
        if np.any(a < 0):
            raise ValueError("amplitudes must be non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        object.__setattr__(self, "elevations", s)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "phases", p)

    @property
    def n_targets(self) -> int:
        return self.elevations.size

    @property
    def reflectivities(self) -> np.ndarray:
        return self.amplitudes * np.exp(1j * self.phases)

    @classmethod
    def two_targets(cls, s1, alpha, rho_s, sigma_s, dphi, noise_sigma=1.0, phase1=0.0):
        """Equal-amplitude pair at ``s1`` and ``s1 + alpha * rho_s`` with phase gap ``dphi``."""
        return cls([s1, s1 + alpha * rho_s], [sigma_s, sigma_s],
                   [phase1, phase1 + dphi], noise_sigma)


@dataclass(frozen=True)
class Measurement:
    g: np.ndarray
    true_targets: SceneTargets | None = None

    def __len__(self):
        return self.g.size


def synthesize_pixel(targets: SceneTargets, A: SteeringMatrix, rng: np.random.Generator) -> Measurement:
    """Draw ``g = sum_i gamma_i a(s_i) + n`` with steering vectors evaluated off-grid."""
    geom = A.geometry
    n = geom.n_passes
    g = np.zeros(n, dtype=complex)
    if targets.n_targets:
        g += steering_vectors(geom, targets.elevations) @ targets.reflectivities
    if targets.noise_sigma > 0:
        noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        g += targets.noise_sigma / np.sqrt(2.0) * noise
    return Measurement(g, targets)


def correlation_coefficient(d, geometry: TomoGeometry):
    """Normalized correlation ``a(s_m)^H a(s_{m+d}) / N`` between grid columns.

    ``d`` is a (possibly fractional) grid-index offset. For equispaced
    baselines with mean ``b_bar`` the sum collapses to

        exp(j 4 pi b_bar d ds / ((M-1) lambda R0)) * sin(N L d) / (N sin(L d))

    with ``L = 2 pi ds db / ((M-1)(N-1) lambda R0)``. The phase term vanishes
    for baselines centred on the master track.
    """
    if not geometry.is_uniform:
        raise ValueError("analytic correlation requires uniform baselines")
    n = geometry.n_passes
    m = geometry.grid_size
    L = correlation_step(geometry)
    b_bar = float(np.mean(geometry.baselines))
    d = np.asarray(d, dtype=float)
    phase = 4.0 * np.pi * b_bar * d * geometry.elevation_extent / ((m - 1) * geometry.lambda_r0)
    out = np.exp(1j * phase) * dirichlet(L * d, n)
    return out[()] if out.ndim == 0 else out


def correlation_step(geometry: TomoGeometry) -> float:
    """Dirichlet-kernel argument per grid index, ``L = 2 pi ds db / ((M-1)(N-1) lambda R0)``."""
    n = geometry.n_passes
    m = geometry.grid_size
    return (2.0 * np.pi * geometry.elevation_extent * geometry.baseline_extent
            / ((m - 1) * (n - 1) * geometry.lambda_r0))
