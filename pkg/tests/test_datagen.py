import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid

from gmls_nets.data.datagen import (
    AdvDiffConfig,
    BrownianConfig,
    FieldSpectrum,
    RandomFieldConfig,
    advdiff_cell_averages,
    advdiff_exact,
    apply_spectral_operator,
    density_histogram,
    gaussian_filter,
    sample_random_field,
    sample_spectrum,
    simulate_brownian,
)
from gmls_nets.geometry.point_cloud import random_cloud, uniform_cloud
from gmls_nets.utils.errors_utils import DataGenError


def _cosine() -> FieldSpectrum:
    return FieldSpectrum(np.array([[-1], [0], [1]]), np.array([[0.5, 0.0, 0.5]], dtype=complex), 1.0)


def test_point_variance_matches_monte_carlo():
    cfg = RandomFieldConfig(dim=1, max_wavenumber=4, alpha=0.1, seed=2)
    values = sample_spectrum(cfg, range(10_000)).evaluate(np.array([0.3]))[:, 0]
    assert np.var(values) == pytest.approx(cfg.point_variance(), rel=0.05)
    assert abs(np.mean(values)) < 4 * np.sqrt(cfg.point_variance() / values.size)


def test_samples_do_not_depend_on_the_requested_set():
    cfg = RandomFieldConfig(dim=2, max_wavenumber=3, seed=7)
    together = sample_spectrum(cfg, [3, 7, 11]).coefficients
    np.testing.assert_array_equal(together[1], sample_spectrum(cfg, [7]).coefficients[0])
    fine = uniform_cloud(8, 2)
    coarse = random_cloud(30, 2, 1.0, seed=1)
    both = sample_spectrum(cfg, [5])
    np.testing.assert_allclose(sample_random_field(cfg, fine, 5), both.evaluate(fine.points)[0], rtol=1e-14)
    np.testing.assert_allclose(sample_random_field(cfg, coarse, 5), both.evaluate(coarse.points)[0], rtol=1e-14)


def test_sampled_fields_are_real():
    cfg = RandomFieldConfig(dim=2, max_wavenumber=3, seed=1)
    spectrum = sample_spectrum(cfg, [0, 1])
    points = random_cloud(20, 2, 1.0, seed=3).points
    complex_values = spectrum.coefficients @ spectrum.phases(points).T
    np.testing.assert_allclose(complex_values.imag, 0.0, atol=1e-12)


def test_spectral_operators_on_a_cosine():
    x = np.linspace(0.0, 1.0, 17)
    spectrum = _cosine()
    c, s = np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)
    np.testing.assert_allclose(apply_spectral_operator(spectrum, "identity", x)[0], c, atol=1e-14)
    np.testing.assert_allclose(apply_spectral_operator(spectrum, "d/dx", x)[0], -2 * np.pi * s, atol=1e-12)
    np.testing.assert_allclose(apply_spectral_operator(spectrum, "laplacian", x)[0], -4 * np.pi**2 * c, atol=1e-12)
    burgers = apply_spectral_operator(spectrum, "burgers", x, viscosity=0.05)[0]
    np.testing.assert_allclose(burgers, 2 * np.pi * s * c - 0.05 * 4 * np.pi**2 * c, atol=1e-12)
    with pytest.raises(DataGenError):
        apply_spectral_operator(spectrum, "curl", x)


def test_energy_satisfies_parseval():
    cfg = RandomFieldConfig(dim=1, max_wavenumber=6, seed=4)
    spectrum = sample_spectrum(cfg, [0, 1, 2])
    grid = np.arange(1000) / 1000
    u = spectrum.evaluate(grid)
    np.testing.assert_allclose(spectrum.energy(), np.mean(u * u, axis=1), rtol=1e-10)


def test_random_field_config_validation():
    with pytest.raises(DataGenError):
        RandomFieldConfig(dim=3)
    with pytest.raises(DataGenError):
        RandomFieldConfig(alpha=0.0)
    with pytest.raises(DataGenError):
        sample_random_field(RandomFieldConfig(dim=2), uniform_cloud(10, 1))


def test_advdiff_solution_has_mass_one_over_a():
    cfg = AdvDiffConfig(a=2.0, nu=0.1, x0=5.0)
    x = np.linspace(0.0, 30.0, 30_001)
    u = advdiff_exact(x, 1.0, cfg)
    assert trapezoid(u, x) == pytest.approx(0.5, rel=1e-8)
    assert x[np.argmax(u)] == pytest.approx(7.0)

    edges = np.linspace(0.0, 30.0, 101)
    averages = advdiff_cell_averages(edges, 1.0, cfg)
    assert np.sum(averages * np.diff(edges)) == pytest.approx(0.5, rel=1e-10)
    np.testing.assert_allclose(averages[:5], 0.0, atol=1e-15)


def test_advdiff_rejects_nonpositive_time():
    cfg = AdvDiffConfig()
    with pytest.raises(DataGenError):
        advdiff_exact(np.array([1.0]), 0.0, cfg)
    with pytest.raises(DataGenError):
        advdiff_cell_averages(np.array([0.0, 1.0]), -1.0, cfg)
    with pytest.raises(DataGenError):
        AdvDiffConfig(nu=0.0)


def test_brownian_increments_are_gaussian():
    cfg = BrownianConfig(n_particles=20_000, diffusivity=1.0, dt=1e-4, seed=3)
    trajectory = simulate_brownian(cfg, 10, record_steps=[0, 10])
    sigma = np.sqrt(2.0 * cfg.diffusivity * cfg.dt * 10)
    assert stats.kstest(trajectory.displacement.ravel() / sigma, "norm").pvalue > 1e-3
    np.testing.assert_allclose(np.mod(trajectory.at(0) + trajectory.displacement, cfg.domain), trajectory.at(10), atol=1e-12)
    assert np.all(trajectory.at(0) <= np.array([0.5, 0.1]))


def test_histogram_and_filter_preserve_particle_count():
    cfg = BrownianConfig(n_particles=5_000, n_cells=50, seed=1)
    trajectory = simulate_brownian(cfg, 5)
    rho = density_histogram(trajectory.at(5), cfg.n_cells)
    assert rho.shape == (50,)
    assert rho.sum() == cfg.n_particles
    smooth = gaussian_filter(rho)
    assert smooth.sum() == pytest.approx(cfg.n_particles, rel=1e-12)
    assert smooth.max() <= rho.max()


def test_brownian_validation():
    cfg = BrownianConfig(n_particles=10)
    with pytest.raises(DataGenError):
        simulate_brownian(cfg, 5, record_steps=[6])
    with pytest.raises(DataGenError):
        simulate_brownian(cfg, -1)
    with pytest.raises(DataGenError):
        BrownianConfig(dt=0.0)
