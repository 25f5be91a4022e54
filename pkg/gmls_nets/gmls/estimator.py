"""
Local weighted least-squares problems of generalized moving least squares.

For every target point x_i the samples u_j at its neighbors x_j are fitted by a
polynomial p(x) = Phi(x - x_i)^T a minimizing sum_j w_ij (u_j - p(x_j))^2. The
coefficient vector a is linear in the samples, a = S_i u, with the solve operator
S_i depending only on geometry. `GMLSGeometry` stacks all S_i into one sparse
matrix so encoding a field is a single sparse product.
"""

import logging
import weakref
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from gmls_nets.geometry.basis import MonomialBasis, apply_operator_to_basis
from gmls_nets.geometry.point_cloud import NeighborList, PointCloud, WeightKernel, build_neighbors, weight
from gmls_nets.utils.constants import QR_DIAGONAL_RCOND, RIDGE_FACTOR, RIDGE_REFINEMENT_SWEEPS, SVD_RCOND
from gmls_nets.utils.data_converter import DataConverter
from gmls_nets.utils.errors_utils import EmptyNeighborhoodError, GeometryError, StencilError, UnisolvencyError
from gmls_nets.utils.file_utils import FileUtils
from gmls_nets.utils.tasks import TaskPool

logger = logging.getLogger(__name__)


@dataclass
class LocalProblem:
    """
    Weighted least-squares problem of one target point.

    Parameters
    ----------
    target_index : int
        Index of the target point.
    neighbor_indices : np.ndarray
        Source indices, sorted.
    displacements : np.ndarray
        x_j - x_i, shape (K, dim).
    weights : np.ndarray
        w_ij, shape (K,).
    design : np.ndarray
        Phi(x_j - x_i) row by row, shape (K, Q).
    normal_matrix : np.ndarray
        M = sum_j w_ij Phi_j Phi_j^T, shape (Q, Q).
    condition : float
        2-norm condition number of M (inf when singular).
    moments : np.ndarray | None
        r = sum_j w_ij Phi_j u_j, shape (Q, C), when a field was given.
    """

    target_index: int
    neighbor_indices: np.ndarray
    displacements: np.ndarray
    weights: np.ndarray
    design: np.ndarray
    normal_matrix: np.ndarray
    condition: float
    moments: np.ndarray | None = None
    _solve_operator: List[np.ndarray] = field(default_factory=list, repr=False)
    _cholesky: List[Any] = field(default_factory=list, repr=False)

    @property
    def neighbor_count(self) -> int:
        return len(self.neighbor_indices)

    @property
    def basis_size(self) -> int:
        return self.design.shape[1]


def assemble_local(
    cloud_src: PointCloud,
    cloud_tgt: PointCloud,
    neighbors: NeighborList,
    kernel: WeightKernel,
    basis: MonomialBasis,
    i: int,
    values: np.ndarray | None = None,
) -> LocalProblem:
    """
    Builds the normal matrix (and optionally the moments) of target `i`.

    Parameters
    ----------
    cloud_src, cloud_tgt : PointCloud
        Source and target clouds the neighbor list was built on.
    neighbors : NeighborList
        Neighbor list from `build_neighbors`.
    kernel : WeightKernel
        Weight kernel.
    basis : MonomialBasis
        Polynomial basis.
    i : int
        Target index.
    values : np.ndarray | None
        Field on the source cloud, shape (N_src,) or (N_src, C).

    Returns
    -------
    LocalProblem

    Raises
    ------
    EmptyNeighborhoodError
        Target `i` has no neighbor.
    """
    idx = neighbors.indices[i]
    if idx.size == 0:
        raise EmptyNeighborhoodError(i, neighbors.epsilon)
    displacements = cloud_tgt.displacements(cloud_src, i, idx)
    w = weight(neighbors.distances[i], kernel)
    design = basis.evaluate(displacements)
    normal = design.T @ (w[:, None] * design)
    normal = 0.5 * (normal + normal.T)
    sigma = la.svdvals(normal)
    condition = float(sigma[0] / sigma[-1]) if sigma[-1] > 0 else float("inf")
    moments = None
    if values is not None:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        moments = design.T @ (w[:, None] * values[idx])
    return LocalProblem(i, idx, displacements, w, design, normal, condition, moments)


def solve_operator(problem: LocalProblem) -> np.ndarray:
    """
    Returns S_i, shape (Q, K), with a = S_i u for samples u at the neighbors.

    The square-root-weighted design matrix is factored by QR; when its R factor
    is numerically rank deficient a truncated SVD is used instead.

    Raises
    ------
    UnisolvencyError
        Fewer neighbors than basis terms, or rank deficiency beyond the SVD cutoff.
    """
    if problem._solve_operator:
        return problem._solve_operator[0]
    K, Q = problem.design.shape
    if K < Q:
        raise UnisolvencyError(problem.target_index, K, Q)
    sqrt_w = np.sqrt(problem.weights)
    weighted = sqrt_w[:, None] * problem.design
    q_factor, r_factor = la.qr(weighted, mode="economic")
    diagonal = np.abs(np.diag(r_factor))
    if diagonal.min() > QR_DIAGONAL_RCOND * diagonal.max():
        operator = la.solve_triangular(r_factor, q_factor.T) * sqrt_w[None, :]
    else:
        u, s, vt = la.svd(weighted, full_matrices=False)
        if s[-1] <= SVD_RCOND * s[0]:
            raise UnisolvencyError(problem.target_index, K, Q)
        logger.warning(
            "Target %d: QR factor near singular, using SVD (smallest/largest singular value %.2e)",
            problem.target_index, s[-1] / s[0],
        )
        operator = (vt.T / s[None, :]) @ u.T * sqrt_w[None, :]
    problem._solve_operator.append(operator)
    return operator


def solve_coefficients(problem: LocalProblem, values: np.ndarray) -> np.ndarray:
    """
    Optimal coefficient vector(s) for samples at the neighbors of the problem.

    Parameters
    ----------
    problem : LocalProblem
        Assembled problem.
    values : np.ndarray
        Samples at the K neighbors, shape (K,) or (K, C).

    Returns
    -------
    np.ndarray
        Shape (Q,) or (Q, C).
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] != problem.neighbor_count:
        raise GeometryError(
            f"Target {problem.target_index}: {values.shape[0]} samples for {problem.neighbor_count} neighbors"
        )
    return solve_operator(problem) @ values


def normal_solve(problem: LocalProblem, rhs: np.ndarray) -> np.ndarray:
    """
    Solves M x = rhs through a ridge-regularized Cholesky factor of M followed
    by iterative refinement against the unregularized M.

    The ridge is 1e-10 * trace(M) / Q.
    """
    K, Q = problem.design.shape
    if K < Q:
        raise UnisolvencyError(problem.target_index, K, Q)
    normal = problem.normal_matrix
    if not problem._cholesky:
        ridge = RIDGE_FACTOR * np.trace(normal) / Q
        try:
            problem._cholesky.append(la.cho_factor(normal + ridge * np.eye(Q)))
        except la.LinAlgError:
            raise UnisolvencyError(problem.target_index, K, Q) from None
    factor = problem._cholesky[0]
    x = la.cho_solve(factor, rhs)
    for _ in range(RIDGE_REFINEMENT_SWEEPS):
        x = x + la.cho_solve(factor, rhs - normal @ x)
    return x


def solve_coefficients_normal(problem: LocalProblem, values: np.ndarray) -> np.ndarray:
    """Normal-equations solve a = M^-1 r; agrees with `solve_coefficients` to roundoff."""
    values = np.asarray(values, dtype=float)
    rhs = problem.design.T @ (problem.weights.reshape((-1,) + (1,) * (values.ndim - 1)) * values)
    return normal_solve(problem, rhs)


def apply_known_functional(a: np.ndarray, tau_of_basis: np.ndarray) -> np.ndarray | float:
    """
    Reference GMLS estimate tau(Phi)^T a.

    Parameters
    ----------
    a : np.ndarray
        Coefficient vector of length Q, or any array whose last axis has length Q.
    tau_of_basis : np.ndarray
        Operator image from `apply_operator_to_basis`.
    """
    a = np.asarray(a, dtype=float)
    tau = np.asarray(tau_of_basis, dtype=float)
    if tau.ndim != 1 or a.shape[-1] != tau.shape[0]:
        raise GeometryError(f"Coefficient length {a.shape[-1]} does not match functional length {tau.shape}")
    result = a @ tau
    return float(result) if np.ndim(result) == 0 else result


def reference_weights(
    basis: MonomialBasis,
    op_tag: str,
    in_channels: int = 1,
    channel: int = 0,
    a: float = 0.0,
    nu: float = 0.0,
) -> np.ndarray:
    """
    Linear functional-map weights, shape (1, in_channels * Q), applying a known
    operator to one input channel.
    """
    xi = np.zeros((1, in_channels * basis.size))
    xi[0, channel * basis.size : (channel + 1) * basis.size] = apply_operator_to_basis(basis, op_tag, a=a, nu=nu)
    return xi


@dataclass
class CoefficientField:
    """
    GMLS coefficients of a multi-channel field on a target cloud.

    Parameters
    ----------
    coefficients : np.ndarray
        Shape (N_tgt, C, Q).
    basis : MonomialBasis
        Basis the coefficients refer to.
    provenance : str
        Fingerprint of the geometry that produced them.
    """

    coefficients: np.ndarray
    basis: MonomialBasis
    provenance: str

    def __post_init__(self) -> None:
        if self.coefficients.ndim != 3 or self.coefficients.shape[2] != self.basis.size:
            raise GeometryError(f"Coefficient field must have shape (N, C, {self.basis.size})")
        if not np.all(np.isfinite(self.coefficients)):
            raise GeometryError("Coefficient field contains non-finite entries")

    @property
    def channels(self) -> int:
        return self.coefficients.shape[1]

    def to_json(self) -> Dict[str, Any]:
        n_tgt, channels, q = self.coefficients.shape
        return {
            "n_targets": n_tgt,
            "channels": channels,
            "basis": self.basis.to_dict(),
            "terms": [list(t) for t in self.basis.terms],
            "provenance": self.provenance,
            "coefficients": self.coefficients.reshape(-1),
        }


class GMLSGeometry:
    """
    Everything about a (source, target, kernel, basis) combination that does
    not depend on field values: neighbor lists, local problems and the stacked
    solve operator.

    Instances are cached by content fingerprint, so layers built on the same
    clouds share one factorization. The cache holds weak references: an entry
    lives as long as some layer or caller still uses it. Use
    `GMLSGeometry.build` instead of the constructor.

    Methods
    -------
    coefficients(values)
        Coefficient arrays of one field or a batch of fields.
    coefficients_adjoint(cotangent)
        Transpose action, used by reverse-mode gradients.
    encode(values)
        `CoefficientField` of a single field.
    """

    _cache: "weakref.WeakValueDictionary[Tuple, GMLSGeometry]" = weakref.WeakValueDictionary()

    def __init__(
        self,
        source: PointCloud,
        target: PointCloud,
        kernel: WeightKernel,
        basis: MonomialBasis,
        method: Literal["grid", "brute"] = "grid",
    ) -> None:
        self.source = source
        self.target = target
        self.kernel = kernel
        self.basis = basis
        self.neighbors = build_neighbors(source, target, kernel.epsilon, method=method)
        self.problems: List[LocalProblem] = TaskPool.map(
            lambda i: assemble_local(source, target, self.neighbors, kernel, basis, i),
            range(target.size),
        )
        operators = TaskPool.map(solve_operator, self.problems)
        q = basis.size
        rows, cols, data = [], [], []
        for problem, operator in zip(self.problems, operators):
            k = problem.neighbor_count
            rows.append(problem.target_index * q + np.repeat(np.arange(q), k))
            cols.append(np.tile(problem.neighbor_indices, q))
            data.append(operator.reshape(-1))
        self.operator = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(target.size * q, source.size),
        )
        self.provenance = DataConverter.array_fingerprint(
            np.frombuffer((source.fingerprint() + target.fingerprint()).encode(), dtype=np.uint8),
            np.array([kernel.epsilon, kernel.power, basis.scale, basis.order, basis.dim], dtype=float),
        )
        conditions = np.array([p.condition for p in self.problems])
        logger.debug(
            "GMLS geometry %s: %d -> %d points, Q=%d, max condition %.3e",
            self.provenance[:8], source.size, target.size, q, conditions.max(),
        )

    @staticmethod
    def build(
        source: PointCloud,
        target: PointCloud,
        kernel: WeightKernel,
        basis: MonomialBasis,
        method: Literal["grid", "brute"] = "grid",
    ) -> "GMLSGeometry":
        key = (source.fingerprint(), target.fingerprint(), kernel, basis, method)
        geometry = GMLSGeometry._cache.get(key)
        if geometry is None:
            geometry = GMLSGeometry(source, target, kernel, basis, method)
            GMLSGeometry._cache[key] = geometry
        return geometry

    @staticmethod
    def clear_cache() -> None:
        GMLSGeometry._cache.clear()

    @staticmethod
    def cache_size() -> int:
        return len(GMLSGeometry._cache)

    @property
    def basis_size(self) -> int:
        return self.basis.size

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """
        Parameters
        ----------
        values : np.ndarray
            Field on the source cloud, shape (N_src, C) or (B, N_src, C).

        Returns
        -------
        np.ndarray
            Shape (N_tgt, C, Q) or (B, N_tgt, C, Q).
        """
        values = np.asarray(values, dtype=float)
        single = values.ndim == 2
        batch = values[None] if single else values
        b, n, c = batch.shape
        if n != self.source.size:
            raise GeometryError(f"Field has {n} points, source cloud has {self.source.size}")
        flat = self.operator @ batch.transpose(1, 0, 2).reshape(n, b * c)
        out = flat.reshape(self.target.size, self.basis.size, b, c).transpose(2, 0, 3, 1)
        return out[0] if single else out

    def coefficients_adjoint(self, cotangent: np.ndarray) -> np.ndarray:
        """
        Transpose of `coefficients`: maps (B, N_tgt, C, Q) to (B, N_src, C).
        """
        b, n_tgt, c, q = cotangent.shape
        flat = cotangent.transpose(1, 3, 0, 2).reshape(n_tgt * q, b * c)
        out = self.operator.T @ flat
        return np.asarray(out).reshape(self.source.size, b, c).transpose(1, 0, 2)

    def encode(self, values: np.ndarray) -> CoefficientField:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return CoefficientField(self.coefficients(values), self.basis, self.provenance)


@dataclass
class StencilMatrix:
    """
    Explicit stencil c_ij of a linear GMLS layer, tau_i[u] = sum_j c_ij u_j.

    Parameters
    ----------
    matrix : scipy.sparse.csr_matrix
        Shape (N_tgt * C_out, N_src * C_in); row i*C_out + o, column j*C_in + c.
    n_targets, n_sources : int
        Cloud sizes.
    out_channels, in_channels : int
        Channel counts.
    target_in_source : np.ndarray | None
        Position of each target point in the source cloud, when the target
        cloud is a subset of the source cloud.
    """

    matrix: sp.csr_matrix
    n_targets: int
    n_sources: int
    out_channels: int = 1
    in_channels: int = 1
    target_in_source: np.ndarray | None = None

    def apply(self, values: np.ndarray) -> np.ndarray:
        """
        Applies the stencil to a field of shape (N_src, C_in) or (B, N_src, C_in).
        """
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        single = values.ndim == 2
        batch = values[None] if single else values
        flat = batch.reshape(batch.shape[0], -1)
        out = (self.matrix @ flat.T).T.reshape(batch.shape[0], self.n_targets, self.out_channels)
        return out[0] if single else out

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def differenced(self) -> Tuple["StencilMatrix", np.ndarray]:
        """
        Rewrites the stencil in the differenced sampling form
        tau_i[u] = sum_j c_ij (u_j - u_i) + s_i u_i.

        Returns
        -------
        Tuple[StencilMatrix, np.ndarray]
            The operator u -> sum_j c_ij (u_j - u_i) and the row sums s_i
            (the constant-mode remainder; zero for derivative functionals).
        """
        if self.target_in_source is None or self.in_channels != 1 or self.out_channels != 1:
            raise StencilError("Differenced stencils need single-channel maps with targets on the source cloud")
        sums = self.row_sums()
        diagonal = sp.csr_matrix(
            (sums, (np.arange(self.n_targets), self.target_in_source)),
            shape=self.matrix.shape,
        )
        differenced = (self.matrix - diagonal).tocsr()
        differenced.sort_indices()
        return (
            StencilMatrix(differenced, self.n_targets, self.n_sources, 1, 1, self.target_in_source),
            sums,
        )

    def entries(self) -> np.ndarray:
        """Rows (target, out_channel, source, in_channel, coefficient)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        row, col, val = coo.row[order], coo.col[order], coo.data[order]
        return np.column_stack(
            [row // self.out_channels, row % self.out_channels, col // self.in_channels, col % self.in_channels, val]
        )

    def to_csv(self, path: str) -> str:
        return FileUtils.write_csv(
            path, ("target", "out_channel", "source", "in_channel", "coefficient"), self.entries()
        )

    def to_json(self) -> Dict[str, Any]:
        return {
            "n_targets": self.n_targets,
            "n_sources": self.n_sources,
            "out_channels": self.out_channels,
            "in_channels": self.in_channels,
            "matrix": DataConverter.sparse_to_dict(self.matrix),
        }


def _locate_targets(geometry: GMLSGeometry) -> np.ndarray | None:
    positions = np.full(geometry.target.size, -1, dtype=np.int64)
    for i, (idx, dist) in enumerate(zip(geometry.neighbors.indices, geometry.neighbors.distances)):
        hits = idx[dist == 0.0]
        if hits.size == 0:
            return None
        positions[i] = hits[0]
    return positions


def export_stencil(weights: Any, geometry: GMLSGeometry, in_channels: int = 1) -> StencilMatrix:
    """
    Explicit stencil of a linear functional map on a geometry.

    Parameters
    ----------
    weights : np.ndarray | FunctionalMap
        Linear weights xi of shape (C_out, C_in * Q), or a functional map
        exposing `as_linear()`.
    geometry : GMLSGeometry
        Geometry shared by all input channels.
    in_channels : int
        Number of input channels C_in.

    Returns
    -------
    StencilMatrix

    Raises
    ------
    StencilError
        The map is nonlinear or the weight shape does not fit the geometry.
    """
    if hasattr(weights, "as_linear"):
        weights = weights.as_linear()
    xi = np.asarray(weights, dtype=float)
    if xi.ndim == 1:
        xi = xi[None, :]
    q = geometry.basis_size
    if xi.shape[1] != in_channels * q:
        raise StencilError(f"Weights of width {xi.shape[1]} do not match {in_channels} channels x Q={q}")
    out_channels = xi.shape[0]
    xi3 = xi.reshape(out_channels, in_channels, q)

    def rows_of(problem: LocalProblem):
        block = np.einsum("ocq,qk->okc", xi3, solve_operator(problem))
        k = problem.neighbor_count
        o_idx, k_idx, c_idx = np.meshgrid(np.arange(out_channels), np.arange(k), np.arange(in_channels), indexing="ij")
        rows = problem.target_index * out_channels + o_idx
        cols = problem.neighbor_indices[k_idx] * in_channels + c_idx
        return rows.ravel(), cols.ravel(), block.ravel()

    parts = TaskPool.map(rows_of, geometry.problems)
    matrix = sp.csr_matrix(
        (
            np.concatenate([p[2] for p in parts]),
            (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])),
        ),
        shape=(geometry.target.size * out_channels, geometry.source.size * in_channels),
    )
    matrix.sort_indices()
    return StencilMatrix(
        matrix,
        geometry.target.size,
        geometry.source.size,
        out_channels,
        in_channels,
        _locate_targets(geometry),
    )
