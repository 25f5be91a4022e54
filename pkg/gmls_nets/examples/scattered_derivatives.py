import numpy as np

from gmls_nets.geometry.basis import MonomialBasis, apply_operator_to_basis
from gmls_nets.geometry.point_cloud import WeightKernel, random_cloud
from gmls_nets.gmls.estimator import GMLSGeometry, apply_known_functional

if __name__ == "__main__":
    # Scattered samples of a smooth periodic field on the unit square
    cloud = random_cloud(900, dim=2, length=1.0, seed=7, periodic=True)
    kernel = WeightKernel(epsilon=0.12)
    basis = MonomialBasis(dim=2, order=4, scale=kernel.epsilon)
    geometry = GMLSGeometry.build(cloud, cloud, kernel, basis)

    x, y = cloud.points[:, 0], cloud.points[:, 1]
    u = np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    field = geometry.encode(u[:, None])
    a = field.coefficients[:, 0, :]

    exact = {
        "identity": u,
        "d/dx": 2 * np.pi * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y),
        "d/dy": -2 * np.pi * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y),
        "laplacian": -8 * np.pi**2 * u,
    }
    for op, reference in exact.items():
        estimate = apply_known_functional(a, apply_operator_to_basis(basis, op))
        error = np.abs(estimate - reference).max() / np.abs(reference).max()
        print(f"{op:>10}: max relative error {error:.2e}")
