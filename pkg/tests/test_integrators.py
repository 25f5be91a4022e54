import numpy as np
import pytest

from gmls_nets.data.datagen import AdvDiffConfig, advdiff_cell_averages
from gmls_nets.dynamics.integrators import (
    Mesh1D,
    build_time_model,
    cfl_timestep,
    fdm_residual,
    fvm_residual,
    implicit_step,
    l2_error,
    reference_map,
    rollout,
    write_trajectory,
)
from gmls_nets.nets.layer import FunctionalMap
from gmls_nets.utils.errors_utils import GeometryError, IntegratorError
from gmls_nets.utils.file_utils import FileUtils


def _small_map(rng, order: int) -> FunctionalMap:
    return FunctionalMap("linear", order + 1, 1, [0.01 * rng.normal(size=(1, order + 1))])


@pytest.mark.parametrize("periodic", [True, False])
def test_divergence_columns_sum_to_zero(periodic):
    mesh = Mesh1D(np.cumsum(np.r_[0.0, np.linspace(0.5, 1.5, 12)]), periodic)
    divergence = mesh.divergence()
    np.testing.assert_allclose(mesh.measures @ divergence.toarray(), 0.0, atol=1e-14)


def test_periodic_fvm_conserves_mass(rng):
    mesh = Mesh1D.uniform(0.0, 1.0, 40, periodic=True)
    epsilon = 3.5 * mesh.spacing
    model = build_time_model("fvm", mesh, 1e-3, epsilon, 2, _small_map(rng, 2))
    u_0 = 1.0 + rng.uniform(size=mesh.n_cells)
    trajectory = rollout(model, u_0, 100)
    assert trajectory.shape == (101, 40)
    masses = trajectory @ mesh.measures
    np.testing.assert_allclose(masses, masses[0], rtol=1e-10)
    assert not np.allclose(trajectory[-1], u_0)


def test_implicit_step_zeroes_the_residual(rng):
    mesh = Mesh1D.uniform(0.0, 2.0, 50)
    fvm = build_time_model("fvm", mesh, 1e-3, 4.0 * mesh.spacing, 3, _small_map(rng, 3))
    u_n = np.sin(np.pi * mesh.centers)
    u_np1 = implicit_step(fvm, u_n)
    scale = np.abs(u_np1 - u_n).max() / fvm.dt
    np.testing.assert_allclose(fvm_residual(fvm, u_n, u_np1), 0.0, atol=1e-9 * scale)

    fdm = build_time_model("fdm", mesh, 1e-3, 3.5 * mesh.spacing, 3, _small_map(rng, 3))
    v_n = np.sin(np.pi * mesh.node_positions)
    v_np1 = implicit_step(fdm, v_n)
    np.testing.assert_allclose(fdm_residual(fdm, v_n, v_np1), 0.0, atol=1e-9 * np.abs(v_np1 - v_n).max() / fdm.dt)
    # Dirichlet ends are held fixed
    np.testing.assert_allclose(v_np1[[0, -1]], v_n[[0, -1]], atol=1e-12)

    with pytest.raises(GeometryError):
        fdm_residual(fvm, u_n, u_np1)
    with pytest.raises(GeometryError):
        fvm_residual(fvm, u_n, u_np1[:-1])


def test_exact_flux_model_converges_with_time_step():
    cfg = AdvDiffConfig(n_cells=300)
    mesh = Mesh1D.uniform(*cfg.domain, cfg.n_cells)
    cfl = cfl_timestep(mesh, cfg.a, cfg.nu)
    epsilon = 4.0 * mesh.spacing
    u_0 = advdiff_cell_averages(mesh.nodes, 1.0, cfg)
    reference = advdiff_cell_averages(mesh.nodes, 1.0 + 10 * cfl, cfg)
    weights = mesh.norm_weights("fvm")

    errors = []
    for ratio, steps in ((0.1, 100), (10.0, 1)):
        model = build_time_model("fvm", mesh, ratio * cfl, epsilon, 4, reference_map("fvm", 4, epsilon, cfg.a, cfg.nu))
        final = rollout(model, u_0, steps)[-1]
        errors.append(l2_error(final, reference, weights) / l2_error(reference, 0.0, weights))
        assert final @ mesh.measures == pytest.approx(1.0 / cfg.a, rel=1e-8)
    fine, coarse = errors
    assert fine < 0.1
    assert fine < coarse


def test_exact_node_model_transports_pulse():
    cfg = AdvDiffConfig()
    mesh = Mesh1D.uniform(*cfg.domain, cfg.n_cells)
    epsilon = 3.5 * mesh.spacing
    dt = 0.1 * cfl_timestep(mesh, cfg.a, cfg.nu)
    model = build_time_model("fdm", mesh, dt, epsilon, 3, reference_map("fdm", 3, epsilon, cfg.a, cfg.nu))
    u_0 = advdiff_cell_averages(mesh.nodes, 1.0, cfg)
    start = mesh.node_positions[np.argmax(np.interp(mesh.node_positions, mesh.centers, u_0))]
    final = rollout(model, np.interp(mesh.node_positions, mesh.centers, u_0), 200)[-1]
    moved = mesh.node_positions[np.argmax(final)] - start
    assert moved == pytest.approx(cfg.a * 200 * dt, abs=2 * mesh.spacing)


def test_cfl_timestep():
    mesh = Mesh1D.uniform(0.0, 3.0, 10)
    assert cfl_timestep(mesh, 1.0, 0.1) == pytest.approx(0.15)
    assert cfl_timestep(mesh, 0.0, 0.1) == pytest.approx(0.225)
    assert cfl_timestep(mesh, -2.0, 0.0) == pytest.approx(0.075)
    with pytest.raises(ValueError):
        cfl_timestep(mesh, 0.0, 0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_weights_raise_integrator_error():
    mesh = Mesh1D.uniform(0.0, 1.0, 20)
    broken = FunctionalMap("linear", 3, 1, [np.full((1, 3), np.nan)])
    model = build_time_model("fdm", mesh, 1e-3, 3.5 * mesh.spacing, 2, broken)
    with pytest.raises(IntegratorError):
        implicit_step(model, np.ones(model.size))


def test_mesh_validation_and_layout():
    with pytest.raises(GeometryError):
        Mesh1D(np.array([0.0, 1.0]))
    with pytest.raises(GeometryError):
        Mesh1D(np.array([0.0, 2.0, 1.0]))
    mesh = Mesh1D.uniform(0.0, 1.0, 4)
    np.testing.assert_allclose(mesh.centers, [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(mesh.face_positions, [0.25, 0.5, 0.75])
    np.testing.assert_allclose(mesh.norm_weights("fdm"), [0.125, 0.25, 0.25, 0.25, 0.125])
    periodic = Mesh1D.uniform(0.0, 1.0, 4, periodic=True)
    assert periodic.node_positions.size == 4
    assert periodic.face_cloud().size == 4
    with pytest.raises(GeometryError):
        build_time_model("spectral", mesh, 0.1, 0.6, 1)


def test_trajectory_file(tmp_path):
    times = np.array([0.0, 0.5])
    path = write_trajectory(str(tmp_path / "traj.csv"), times, np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([0.25, 0.75]))
    header, rows = FileUtils.read_csv(path)
    assert header == ["time", "u@0.25", "u@0.75"]
    np.testing.assert_array_equal(rows, [[0.0, 1.0, 2.0], [0.5, 3.0, 4.0]])
