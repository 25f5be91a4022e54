"""
Data-driven implicit Euler time models on a 1D mesh.

The FDM model advances node values, (u^{n+1} - u^n) / dt = L[u^{n+1}], with L a
GMLS layer from nodes to nodes. The FVM model advances cell averages,
(u^{n+1}_i - u^n_i) / dt = (G_{i+1} - G_i) / mu_i, with face fluxes G
predicted by a GMLS layer from cell centers to faces; total mass can then only
change through boundary faces.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from gmls_nets.geometry.basis import MonomialBasis
from gmls_nets.geometry.point_cloud import PointCloud, WeightKernel
from gmls_nets.gmls.estimator import reference_weights
from gmls_nets.nets.layer import FixedLinearStage, FunctionalMap, GMLSLayer, GMLSNetwork
from gmls_nets.utils.errors_utils import GeometryError, IntegratorError
from gmls_nets.utils.file_utils import FileUtils

logger = logging.getLogger(__name__)

ModelKind = Literal["fdm", "fvm"]


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """
    Nodes x_0 < ... < x_N of an interval, cells c_i = [x_i, x_{i+1}].

    With `periodic`, x_N is identified with x_0; the faces are x_0 ... x_{N-1}.
    Otherwise the faces x_1 ... x_{N-1} are interior and the two end nodes are
    boundary faces.
    """

    nodes: np.ndarray
    periodic: bool = False

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise GeometryError("A mesh needs at least three nodes")
        if np.any(np.diff(nodes) <= 0):
            raise GeometryError("Mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @staticmethod
    def uniform(start: float, stop: float, n_cells: int, periodic: bool = False) -> "Mesh1D":
        return Mesh1D(np.linspace(start, stop, n_cells + 1), periodic)

    @property
    def length(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def measures(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def spacing(self) -> float:
        return float(self.measures.min())

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def node_positions(self) -> np.ndarray:
        """Positions of the FDM unknowns (the last node is dropped when periodic)."""
        return self.nodes[:-1] if self.periodic else self.nodes

    @property
    def face_positions(self) -> np.ndarray:
        return self.nodes[:-1] if self.periodic else self.nodes[1:-1]

    def _cloud(self, x: np.ndarray) -> PointCloud:
        local = x - self.nodes[0]
        if self.periodic:
            return PointCloud(np.mod(local, self.length), np.array([self.length]))
        return PointCloud(local)

    def node_cloud(self) -> PointCloud:
        return self._cloud(self.node_positions)

    def center_cloud(self) -> PointCloud:
        return self._cloud(self.centers)

    def face_cloud(self) -> PointCloud:
        return self._cloud(self.face_positions)

    def divergence(self) -> sp.csr_matrix:
        """
        Flux difference per unit measure: row i gives (G_{i+1} - G_i) / mu_i,
        boundary fluxes set to zero.
        """
        n = self.n_cells
        inverse = 1.0 / self.measures
        rows, cols, data = [], [], []
        for i in range(n):
            if self.periodic:
                right, left = (i + 1) % n, i
            else:
                right = i if i + 1 < n else None
                left = i - 1 if i > 0 else None
            if right is not None:
                rows.append(i)
                cols.append(right)
                data.append(inverse[i])
            if left is not None:
                rows.append(i)
                cols.append(left)
                data.append(-inverse[i])
        n_faces = self.face_positions.size
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n_faces))

    def norm_weights(self, kind: ModelKind) -> np.ndarray:
        """Cell measures for FVM, trapezoidal node weights for FDM."""
        if kind == "fvm":
            return self.measures
        mu = self.measures
        if self.periodic:
            return 0.5 * (mu + np.roll(mu, 1))
        weights = np.zeros(self.nodes.size)
        weights[:-1] += 0.5 * mu
        weights[1:] += 0.5 * mu
        return weights


@dataclass
class TimeModel:
    """
    Implicit Euler model wrapping a GMLS network as L[u; xi].

    Parameters
    ----------
    kind : ModelKind
        "fdm" or "fvm".
    mesh : Mesh1D
        Mesh of the unknowns.
    net : GMLSNetwork
        fdm: GMLS layer nodes -> nodes (plus a Dirichlet mask when not periodic);
        fvm: GMLS layer centers -> faces followed by the divergence stage.
    dt : float
        Time step.
    """

    kind: ModelKind
    mesh: Mesh1D
    net: GMLSNetwork
    dt: float
    _solver: Dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def layer(self) -> GMLSLayer:
        return self.net.stages[0]

    @property
    def size(self) -> int:
        return self.mesh.n_cells if self.kind == "fvm" else self.mesh.node_positions.size

    def rate(self, u: np.ndarray) -> np.ndarray:
        """L[u] on the unknowns, shape (..., size)."""
        u = np.asarray(u, dtype=float)
        return self.net.forward(u[..., None])[..., 0]

    def operator_matrix(self) -> sp.csr_matrix:
        """
        Sparse matrix A with L[u] = A u; the stencil of the layer composed with
        the fixed stages after it.

        Raises
        ------
        StencilError
            The layer's functional map is not linear.
        """
        matrix = self.layer.stencil().matrix
        for stage in self.net.stages[1:]:
            if not isinstance(stage, FixedLinearStage):
                raise GeometryError(f"Time model stage {type(stage).__name__} is not linear")
            matrix = stage.matrix @ matrix
        return sp.csr_matrix(matrix)

    def system_matrix(self) -> sp.csc_matrix:
        return (sp.identity(self.size, format="csc") - self.dt * self.operator_matrix()).tocsc()


def _check_shapes(model: TimeModel, u_n: np.ndarray, u_np1: np.ndarray) -> None:
    if np.shape(u_n) != np.shape(u_np1) or np.shape(u_n)[-1] != model.size:
        raise GeometryError(f"States of shape {np.shape(u_n)} and {np.shape(u_np1)} for a model of size {model.size}")


def increment_residual(model: TimeModel, u_n: np.ndarray, u_np1: np.ndarray, steps: int = 1) -> np.ndarray:
    """(u_np1 - u_n) / (steps * dt) - L[u_np1]; `steps` > 1 spans a multi-step window."""
    _check_shapes(model, u_n, u_np1)
    return (np.asarray(u_np1) - u_n) / (steps * model.dt) - model.rate(u_np1)


def fdm_residual(model: TimeModel, u_n: np.ndarray, u_np1: np.ndarray) -> np.ndarray:
    if model.kind != "fdm":
        raise GeometryError("fdm_residual needs an FDM model")
    return increment_residual(model, u_n, u_np1)


def fvm_residual(model: TimeModel, u_n: np.ndarray, u_np1: np.ndarray) -> np.ndarray:
    """(u_np1 - u_n) / dt - (G_{i+1} - G_i) / mu_i with G the predicted face fluxes."""
    if model.kind != "fvm":
        raise GeometryError("fvm_residual needs an FVM model")
    return increment_residual(model, u_n, u_np1)


def implicit_step(model: TimeModel, u_n: np.ndarray) -> np.ndarray:
    """
    Solves (I - dt A) u_np1 = u_n.

    The factorization is cached until the network parameters change.

    Raises
    ------
    IntegratorError
        The system is singular; carries a condition number estimate.
    """
    u_n = np.asarray(u_n, dtype=float)
    if u_n.shape != (model.size,):
        raise GeometryError(f"State of shape {u_n.shape} for a model of size {model.size}")
    cached = model._solver
    if cached.get("generation") != model.net.generation or cached.get("dt") != model.dt:
        system = model.system_matrix()
        try:
            solve = factorized(system)
        except RuntimeError as e:
            raise IntegratorError(f"Implicit system is singular: {e}", _condition(system)) from e
        cached.clear()
        cached.update(generation=model.net.generation, dt=model.dt, solve=solve, system=system)
    u_np1 = cached["solve"](u_n)
    if not np.all(np.isfinite(u_np1)):
        raise IntegratorError("Implicit solve produced non-finite values", _condition(cached["system"]))
    return u_np1


def _condition(system: sp.spmatrix) -> float:
    dense = system.toarray()
    if not np.all(np.isfinite(dense)):
        return float("inf")
    with np.errstate(all="ignore"):
        try:
            return float(np.linalg.cond(dense))
        except np.linalg.LinAlgError:
            return float("inf")


def rollout(model: TimeModel, u_0: np.ndarray, n_steps: int) -> np.ndarray:
    """States after 0 ... n_steps implicit steps, shape (n_steps + 1, size)."""
    trajectory = [np.asarray(u_0, dtype=float)]
    for _ in range(n_steps):
        trajectory.append(implicit_step(model, trajectory[-1]))
    return np.stack(trajectory)


def l2_error(u: np.ndarray, reference: np.ndarray, weights: np.ndarray) -> float:
    """sqrt(sum_i w_i (u_i - ref_i)^2) with cell measures or trapezoidal weights."""
    diff = np.asarray(u, dtype=float) - reference
    return float(np.sqrt(np.sum(weights * diff * diff)))


def cfl_timestep(mesh: Mesh1D, a: float, nu: float) -> float:
    """
    min(dx / (2a), dx^2 / (4 nu)); a vanishing a or nu removes its bound.

    Raises
    ------
    ValueError
        Both a and nu vanish.
    """
    dx = mesh.spacing
    advective = 0.5 * dx / abs(a) if a else np.inf
    diffusive = 0.25 * dx * dx / nu if nu else np.inf
    dt = min(advective, diffusive)
    if not np.isfinite(dt):
        raise ValueError("CFL time step needs a nonzero advection speed or diffusivity")
    return float(dt)


def _dirichlet_mask(mesh: Mesh1D) -> sp.csr_matrix:
    diagonal = np.ones(mesh.node_positions.size)
    diagonal[[0, -1]] = 0.0
    return sp.diags(diagonal, format="csr")


def build_time_model(
    kind: ModelKind,
    mesh: Mesh1D,
    dt: float,
    epsilon: float,
    order: int,
    functional_map: FunctionalMap | None = None,
    power: int | None = None,
) -> TimeModel:
    """
    Assembles an FDM (nodes -> nodes) or FVM (centers -> faces -> cells) model.

    Parameters
    ----------
    kind : ModelKind
        Model family.
    mesh : Mesh1D
        Mesh.
    dt : float
        Time step.
    epsilon : float
        Kernel radius.
    order : int
        Polynomial order (3 for FDM and 4 for FVM by default in the experiments).
    functional_map : FunctionalMap | None
        Single-channel map; zeros when omitted.
    power : int | None
        Kernel power; the kernel default when omitted.
    """
    kernel = WeightKernel(epsilon) if power is None else WeightKernel(epsilon, power)
    basis = MonomialBasis(1, order, epsilon)
    if functional_map is None:
        functional_map = FunctionalMap.linear(basis.size, 1)
    if kind == "fdm":
        nodes = mesh.node_cloud()
        stages: List[Any] = [GMLSLayer(nodes, nodes, kernel, basis, functional_map)]
        if not mesh.periodic:
            stages.append(FixedLinearStage(_dirichlet_mask(mesh), nodes, nodes))
    elif kind == "fvm":
        centers, faces = mesh.center_cloud(), mesh.face_cloud()
        stages = [
            GMLSLayer(centers, faces, kernel, basis, functional_map),
            FixedLinearStage(mesh.divergence(), faces, centers),
        ]
    else:
        raise GeometryError(f"Unknown time model kind '{kind}'")
    return TimeModel(kind, mesh, GMLSNetwork(stages), dt)


def reference_map(kind: ModelKind, order: int, epsilon: float, a: float, nu: float) -> FunctionalMap:
    """
    Linear map of the exact operator for transport with velocity a and
    diffusivity nu: -a du/dx + nu d2u/dx2 (fdm), or the face flux
    -a u + nu du/dx (fvm).
    """
    basis = MonomialBasis(1, order, epsilon)
    op = "advdiff" if kind == "fdm" else "flux_advdiff"
    xi = reference_weights(basis, op, a=-a, nu=nu)
    return FunctionalMap("linear", basis.size, 1, [xi])


def write_trajectory(path: str, times: np.ndarray, trajectory: np.ndarray, positions: np.ndarray) -> str:
    """Trajectory CSV: one row per time, columns `time, u@<position>...`."""
    header = ["time"] + [f"u@{x:.17g}" for x in positions]
    return FileUtils.write_csv(path, header, np.column_stack([times, trajectory]))
