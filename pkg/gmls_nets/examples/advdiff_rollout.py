import numpy as np

from gmls_nets.data.datagen import AdvDiffConfig, advdiff_cell_averages
from gmls_nets.dynamics.integrators import Mesh1D, build_time_model, cfl_timestep, l2_error, reference_map, rollout

if __name__ == "__main__":
    cfg = AdvDiffConfig(a=1.0, nu=0.1, x0=5.0, domain=(0.0, 30.0), n_cells=100)
    mesh = Mesh1D.uniform(*cfg.domain, cfg.n_cells)

    # Exact-operator finite volume model at ten CFL steps
    dt = 10 * cfl_timestep(mesh, cfg.a, cfg.nu)
    fmap = reference_map("fvm", order=4, epsilon=1.2, a=cfg.a, nu=cfg.nu)
    model = build_time_model("fvm", mesh, dt, epsilon=1.2, order=4, functional_map=fmap)

    t0, n_steps = 1.0, 20
    trajectory = rollout(model, advdiff_cell_averages(mesh.nodes, t0, cfg), n_steps)
    reference = advdiff_cell_averages(mesh.nodes, t0 + n_steps * dt, cfg)
    weights = mesh.norm_weights("fvm")

    print(f"dt = {dt:.4f}, final time {t0 + n_steps * dt:.3f}")
    print("Mass at start / end:", weights @ trajectory[0], weights @ trajectory[-1])
    print("l2 error against the exact cell averages:", l2_error(trajectory[-1], reference, weights))
