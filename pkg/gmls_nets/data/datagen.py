"""
Synthetic data sources.

- Gaussian random periodic fields u(x) = sum_k xi_k exp(i 2 pi k.x / L) with
  Hermitian coefficients, and their exact operator images.
- The translating and spreading Gaussian solving 1D advection-diffusion.
- Brownian particles in a periodic box, binned into density histograms.

Every random sample draws from `np.random.default_rng([seed, sample_index])`,
so a sample never depends on how many others are generated or in what order.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.special import erf

from gmls_nets.geometry.point_cloud import PointCloud
from gmls_nets.utils.constants import (
    BROWNIAN_DOMAIN,
    BROWNIAN_INITIAL_EXTENT,
    DEFAULT_BURGERS_VISCOSITY,
    DEFAULT_SPECTRAL_DECAY,
    FILTER_WIDTH_IN_BINS,
)
from gmls_nets.utils.errors_utils import DataGenError
from gmls_nets.utils.tasks import TaskPool

logger = logging.getLogger(__name__)

SpectralOperator = Literal["identity", "d/dx", "laplacian", "burgers"]


@dataclass(frozen=True)
class RandomFieldConfig:
    """
    Parameters
    ----------
    dim : int
        1 or 2.
    length : float
        Period L of every axis.
    max_wavenumber : int
        K; modes k in [-K, K]^dim.
    alpha : float
        Spectral decay; mode k has amplitude std exp(-alpha |k|^2).
    seed : int
        Master seed.
    """

    dim: int = 1
    length: float = 1.0
    max_wavenumber: int = 6
    alpha: float = DEFAULT_SPECTRAL_DECAY
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise DataGenError(f"Random fields are 1D or 2D, got dim={self.dim}")
        if self.max_wavenumber < 0:
            raise DataGenError("max_wavenumber must be >= 0")
        if not self.alpha > 0:
            raise DataGenError("alpha must be > 0")
        if not self.length > 0:
            raise DataGenError("length must be > 0")

    def wavenumbers(self) -> np.ndarray:
        """All modes of [-K, K]^dim in lexicographic order, shape (M, dim)."""
        axis = range(-self.max_wavenumber, self.max_wavenumber + 1)
        return np.array(list(itertools.product(axis, repeat=self.dim)), dtype=np.int64).reshape(-1, self.dim)

    def point_variance(self) -> float:
        """Variance of u at any point: sum_k exp(-2 alpha |k|^2)."""
        k2 = np.sum(self.wavenumbers() ** 2, axis=1)
        return float(np.sum(np.exp(-2.0 * self.alpha * k2)))


def _positive_half(k: np.ndarray) -> np.ndarray:
    """Mask of modes whose first nonzero component is positive."""
    mask = np.zeros(k.shape[0], dtype=bool)
    decided = np.zeros(k.shape[0], dtype=bool)
    for axis in range(k.shape[1]):
        mask |= ~decided & (k[:, axis] > 0)
        decided |= k[:, axis] != 0
    return mask


@dataclass
class FieldSpectrum:
    """
    Fourier coefficients of one or many real fields.

    Parameters
    ----------
    wavenumbers : np.ndarray
        Integer modes, shape (M, dim).
    coefficients : np.ndarray
        Complex coefficients, shape (n, M), Hermitian in k.
    length : float
        Period.
    """

    wavenumbers: np.ndarray
    coefficients: np.ndarray
    length: float

    def phases(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.wavenumbers.shape[1])
        return np.exp(2j * np.pi * points @ self.wavenumbers.T / self.length)

    def evaluate(self, points: np.ndarray, multiplier: np.ndarray | None = None) -> np.ndarray:
        """
        Values of the fields (optionally with every mode multiplied by
        `multiplier`) at the points, shape (n, N).
        """
        coefficients = self.coefficients if multiplier is None else self.coefficients * multiplier
        return (coefficients @ self.phases(points).T).real

    def derivative_multiplier(self, axis: int, order: int) -> np.ndarray:
        return (2j * np.pi * self.wavenumbers[:, axis] / self.length) ** order

    def laplacian_multiplier(self) -> np.ndarray:
        k2 = np.sum(self.wavenumbers.astype(float) ** 2, axis=1)
        return -((2.0 * np.pi / self.length) ** 2) * k2

    def energy(self) -> np.ndarray:
        """Integral of u^2 over the periodic box, by Parseval."""
        volume = self.length ** self.wavenumbers.shape[1]
        return volume * np.sum(np.abs(self.coefficients) ** 2, axis=1)


def sample_spectrum(cfg: RandomFieldConfig, sample_indices: Sequence[int]) -> FieldSpectrum:
    """
    Draws the Hermitian spectrum of each requested sample.

    xi_0 is standard normal; for every mode k of the positive half-space
    xi_k = exp(-alpha |k|^2) (eta_r + i eta_i) / sqrt(2) and xi_{-k} = conj(xi_k).
    """
    k = cfg.wavenumbers()
    half = np.nonzero(_positive_half(k))[0]
    lookup = {tuple(row): i for i, row in enumerate(k)}
    mirror = np.array([lookup[tuple(-k[i])] for i in half], dtype=np.int64)
    zero = lookup[(0,) * cfg.dim]
    decay = np.exp(-cfg.alpha * np.sum(k[half] ** 2, axis=1))

    def draw(index: int) -> np.ndarray:
        rng = np.random.default_rng([cfg.seed, int(index)])
        eta = rng.standard_normal(1 + 2 * half.size)
        xi = np.zeros(k.shape[0], dtype=complex)
        xi[zero] = eta[0]
        values = decay * (eta[1::2] + 1j * eta[2::2]) / np.sqrt(2.0)
        xi[half] = values
        xi[mirror] = np.conj(values)
        return xi

    coefficients = np.array(TaskPool.map(draw, sample_indices)).reshape(len(sample_indices), k.shape[0])
    return FieldSpectrum(k, coefficients, cfg.length)


def sample_random_field(cfg: RandomFieldConfig, cloud: PointCloud, sample_index: int = 0) -> np.ndarray:
    """
    Values of random sample `sample_index` at the points of `cloud`, shape (N,).
    The same (config, index) gives the same function on any cloud.
    """
    if cloud.dim != cfg.dim:
        raise DataGenError(f"Cloud is {cloud.dim}D, field config is {cfg.dim}D")
    return sample_spectrum(cfg, [sample_index]).evaluate(cloud.points)[0]


def apply_spectral_operator(
    spectrum: FieldSpectrum,
    op: SpectralOperator,
    points: np.ndarray,
    viscosity: float = DEFAULT_BURGERS_VISCOSITY,
) -> np.ndarray:
    """
    Exact operator images of the sampled fields at `points`, shape (n, N).

    laplacian multiplies mode k by -(2 pi |k| / L)^2; burgers is
    -u du/dx + viscosity * laplacian(u), derivatives taken spectrally and the
    product pointwise.
    """
    if op == "identity":
        return spectrum.evaluate(points)
    if op == "d/dx":
        return spectrum.evaluate(points, spectrum.derivative_multiplier(0, 1))
    if op == "laplacian":
        return spectrum.evaluate(points, spectrum.laplacian_multiplier())
    if op == "burgers":
        phases = spectrum.phases(points).T
        u = (spectrum.coefficients @ phases).real
        u_x = ((spectrum.coefficients * spectrum.derivative_multiplier(0, 1)) @ phases).real
        lap = ((spectrum.coefficients * spectrum.laplacian_multiplier()) @ phases).real
        return -u * u_x + viscosity * lap
    raise DataGenError(f"Unknown spectral operator '{op}'")


@dataclass(frozen=True)
class AdvDiffConfig:
    """
    Parameters
    ----------
    a : float
        Advection speed.
    nu : float
        Diffusivity.
    x0 : float
        Initial pulse center.
    domain : Tuple[float, float]
        Interval.
    n_cells : int
        Number of cells; nodes are the n_cells + 1 cell edges.
    dt_ratio : float
        Time step as a multiple of the CFL step.
    """

    a: float = 1.0
    nu: float = 0.1
    x0: float = 5.0
    domain: Tuple[float, float] = (0.0, 30.0)
    n_cells: int = 100
    dt_ratio: float = 1.0

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.nu > 0):
            raise DataGenError("Advection speed and diffusivity must be positive")
        if self.n_cells < 2 or not self.domain[1] > self.domain[0]:
            raise DataGenError("Advection-diffusion mesh needs at least two cells on a nonempty interval")


def advdiff_exact(x: np.ndarray | float, t: float, cfg: AdvDiffConfig) -> np.ndarray:
    """
    u(x, t) = exp(-(x - (x0 + a t))^2 / (4 nu t)) / (a sqrt(4 pi nu t)).

    Raises
    ------
    DataGenError
        t <= 0.
    """
    if not t > 0:
        raise DataGenError(f"The exact solution is defined for t > 0, got t={t}")
    x = np.asarray(x, dtype=float)
    center = cfg.x0 + cfg.a * t
    return np.exp(-((x - center) ** 2) / (4.0 * cfg.nu * t)) / (cfg.a * np.sqrt(4.0 * np.pi * cfg.nu * t))


def advdiff_cell_averages(edges: np.ndarray, t: float, cfg: AdvDiffConfig) -> np.ndarray:
    """Exact averages of `advdiff_exact` over the cells [edges[i], edges[i+1]]."""
    if not t > 0:
        raise DataGenError(f"The exact solution is defined for t > 0, got t={t}")
    edges = np.asarray(edges, dtype=float)
    center = cfg.x0 + cfg.a * t
    cumulative = 0.5 * erf((edges - center) / np.sqrt(4.0 * cfg.nu * t)) / cfg.a
    return np.diff(cumulative) / np.diff(edges)


@dataclass(frozen=True)
class BrownianConfig:
    """
    Parameters
    ----------
    n_particles : int
        Particle count N_p.
    n_cells : int
        Histogram bins along x.
    diffusivity : float
        D; increments are N(0, 2 D dt) per axis.
    dt : float
        Time step.
    domain : Tuple[float, float]
        Periodic box.
    seed : int
        Seed of the particle stream.
    """

    n_particles: int = 100_000
    n_cells: int = 50
    diffusivity: float = 1.0
    dt: float = 1e-4
    domain: Tuple[float, float] = BROWNIAN_DOMAIN
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_particles < 1 or self.n_cells < 1:
            raise DataGenError("Particle and cell counts must be positive")
        if self.diffusivity < 0 or not self.dt > 0:
            raise DataGenError("Diffusivity must be >= 0 and dt > 0")


@dataclass
class BrownianTrajectory:
    """
    Parameters
    ----------
    steps : List[int]
        Recorded step numbers.
    positions : List[np.ndarray]
        Wrapped positions at each recorded step, (N_p, 2).
    displacement : np.ndarray
        Unwrapped displacement from the initial positions at the last step.
    """

    steps: List[int]
    positions: List[np.ndarray]
    displacement: np.ndarray
    dt: float = 0.0

    def at(self, step: int) -> np.ndarray:
        return self.positions[self.steps.index(step)]


def simulate_brownian(cfg: BrownianConfig, n_steps: int, record_steps: Sequence[int] | None = None) -> BrownianTrajectory:
    """
    Advances independent Brownian particles with periodic wrapping on both axes.

    Initial positions are uniform on [0, 0.5] x [0, 0.1].

    Parameters
    ----------
    cfg : BrownianConfig
        Particle system.
    n_steps : int
        Number of steps.
    record_steps : Sequence[int] | None
        Steps whose positions are kept (default: only the last).
    """
    if n_steps < 0:
        raise DataGenError("n_steps must be >= 0")
    record = sorted(set(record_steps)) if record_steps is not None else [n_steps]
    if record and (record[0] < 0 or record[-1] > n_steps):
        raise DataGenError(f"Recorded steps must lie in [0, {n_steps}]")
    rng = np.random.default_rng(cfg.seed)
    box = np.asarray(cfg.domain, dtype=float)
    initial = rng.uniform(0.0, 1.0, size=(cfg.n_particles, 2)) * np.asarray(BROWNIAN_INITIAL_EXTENT)
    wrapped = initial.copy()
    displacement = np.zeros_like(initial)
    sigma = np.sqrt(2.0 * cfg.diffusivity * cfg.dt)
    positions = []
    if 0 in record:
        positions.append(wrapped.copy())
    for step in range(1, n_steps + 1):
        increment = rng.normal(0.0, sigma, size=initial.shape)
        displacement += increment
        wrapped = np.mod(wrapped + increment, box)
        if step in record:
            positions.append(wrapped.copy())
    logger.debug("Simulated %d particles for %d steps", cfg.n_particles, n_steps)
    return BrownianTrajectory(record, positions, displacement, cfg.dt)


def density_histogram(particles: np.ndarray, n_cells: int, length: float = BROWNIAN_DOMAIN[0]) -> np.ndarray:
    """Particle counts per uniform cell along x on [0, length)."""
    x = np.asarray(particles, dtype=float)
    if x.ndim == 2:
        x = x[:, 0]
    counts, _ = np.histogram(x, bins=n_cells, range=(0.0, length))
    return counts.astype(float)


def gaussian_filter(rho: np.ndarray, width: float = FILTER_WIDTH_IN_BINS) -> np.ndarray:
    """Periodic Gaussian smoothing with standard deviation `width` bins; preserves the sum."""
    return gaussian_filter1d(np.asarray(rho, dtype=float), sigma=width, mode="wrap")
