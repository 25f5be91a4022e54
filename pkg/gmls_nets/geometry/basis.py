"""
Shifted and scaled monomial basis of the polynomials of total degree <= m in
1 or 2 dimensions, and the exact action of known differential operators on it.

A term with multi-index alpha evaluates to prod_k ((x - center)_k / scale)^alpha_k.
Terms are listed degree by degree; inside a degree the exponent of the first
axis decreases, so the 2D quadratic basis reads 1, x, y, x^2, xy, y^2.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Literal, Tuple

import numpy as np

from gmls_nets.utils.errors_utils import GeometryError

MultiIndex = Tuple[int, ...]

OperatorName = Literal[
    "identity", "d/dx", "d/dy", "d2/dx2", "laplacian", "laplacian_2d", "advdiff", "flux_advdiff"
]

OPERATOR_ALIASES = {"d²/dx²": "d2/dx2", "laplacian_2d": "laplacian"}


def graded_lex_terms(dim: int, order: int) -> Tuple[MultiIndex, ...]:
    if dim not in (1, 2):
        raise GeometryError(f"Basis dimension must be 1 or 2, got {dim}")
    if order < 0:
        raise GeometryError(f"Basis order must be >= 0, got {order}")
    if dim == 1:
        return tuple((n,) for n in range(order + 1))
    return tuple((a, n - a) for n in range(order + 1) for a in range(n, -1, -1))


@dataclass(frozen=True)
class MonomialBasis:
    """
    Monomials of total degree <= `order` centered at a point and divided by `scale`.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    order : int
        Maximal total degree m.
    scale : float
        Length dividing the displacement, usually the kernel radius.

    Methods
    -------
    evaluate(displacements)
        Basis values at many displacements x - center.
    center_gradient(displacements)
        Derivatives of every term with respect to the center.
    """

    dim: int
    order: int
    scale: float = 1.0
    terms: Tuple[MultiIndex, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise GeometryError(f"Basis scale must be positive, got {self.scale}")
        object.__setattr__(self, "terms", graded_lex_terms(self.dim, self.order))

    @property
    def size(self) -> int:
        return len(self.terms)

    def index_of(self, alpha: MultiIndex) -> int:
        try:
            return self.terms.index(tuple(alpha))
        except ValueError:
            raise GeometryError(f"Multi-index {alpha} is not in the degree-{self.order} basis") from None

    def _scaled(self, displacements: np.ndarray) -> np.ndarray:
        d = np.asarray(displacements, dtype=float)
        if d.ndim == 1:
            d = d[None, :] if d.shape[0] == self.dim else d[:, None]
        if d.shape[-1] != self.dim:
            raise GeometryError(f"Expected {self.dim}D displacements, got shape {d.shape}")
        return d / self.scale

    def _powers(self, t: np.ndarray) -> np.ndarray:
        # powers[k, axis, e] = t[k, axis] ** e
        exps = np.arange(self.order + 1)
        return t[:, :, None] ** exps[None, None, :]

    def evaluate(self, displacements: np.ndarray) -> np.ndarray:
        """
        Parameters
        ----------
        displacements : np.ndarray
            Vectors x - center, shape (K, dim).

        Returns
        -------
        np.ndarray
            Basis matrix, shape (K, Q).
        """
        t = self._scaled(displacements)
        powers = self._powers(t)
        out = np.ones((t.shape[0], self.size))
        for q, alpha in enumerate(self.terms):
            for axis, e in enumerate(alpha):
                if e:
                    out[:, q] *= powers[:, axis, e]
        return out

    def center_gradient(self, displacements: np.ndarray) -> np.ndarray:
        """
        Derivatives of every term with respect to the center, shape (K, Q, dim).
        Equal to minus the spatial gradient of the monomial.
        """
        t = self._scaled(displacements)
        powers = self._powers(t)
        out = np.zeros((t.shape[0], self.size, self.dim))
        for q, alpha in enumerate(self.terms):
            for axis in range(self.dim):
                e = alpha[axis]
                if e == 0:
                    continue
                column = -e * powers[:, axis, e - 1] / self.scale
                for other, e_other in enumerate(alpha):
                    if other != axis and e_other:
                        column = column * powers[:, other, e_other]
                out[:, q, axis] = column
        return out

    def to_dict(self) -> dict:
        return {"dim": self.dim, "order": self.order, "scale": self.scale}

    @staticmethod
    def from_dict(data: dict) -> "MonomialBasis":
        return MonomialBasis(int(data["dim"]), int(data["order"]), float(data["scale"]))


def basis_size(dim: int, order: int) -> int:
    return math.comb(order + dim, dim)


def _check_point(basis: MonomialBasis, x: np.ndarray, name: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (basis.dim,):
        raise GeometryError(f"{name} must be a {basis.dim}D point, got shape {x.shape}")
    return x


def eval_basis(basis: MonomialBasis, x: np.ndarray, center: np.ndarray) -> np.ndarray:
    """
    Evaluates every term at one point.

    Parameters
    ----------
    basis : MonomialBasis
        Basis descriptor.
    x, center : np.ndarray
        Points of dimension `basis.dim`.

    Returns
    -------
    np.ndarray
        Vector of Q values; the first one is always 1.
    """
    x = _check_point(basis, x, "x")
    center = _check_point(basis, center, "center")
    return basis.evaluate((x - center)[None, :])[0]


def eval_basis_gradient(basis: MonomialBasis, x: np.ndarray, center: np.ndarray) -> np.ndarray:
    """
    Derivatives of every term with respect to the center coordinates, shape (Q, dim).
    """
    x = _check_point(basis, x, "x")
    center = _check_point(basis, center, "center")
    return basis.center_gradient((x - center)[None, :])[0]


def operator_terms(op_tag: str, dim: int, a: float = 0.0, nu: float = 0.0) -> Dict[MultiIndex, float]:
    """
    Expresses an operator tag as a combination of partial derivatives.

    Parameters
    ----------
    op_tag : str
        One of identity, d/dx, d/dy, d2/dx2, laplacian (alias laplacian_2d),
        advdiff (a*d/dx + nu*d2/dx2) or flux_advdiff (a*identity + nu*d/dx).
    dim : int
        Spatial dimension.
    a, nu : float
        Coefficients of the advection-diffusion operators.

    Returns
    -------
    Dict[MultiIndex, float]
        Multi-index of each partial derivative mapped to its coefficient.
    """
    op_tag = OPERATOR_ALIASES.get(op_tag, op_tag)

    def axis(index: int, order: int) -> MultiIndex:
        alpha = [0] * dim
        alpha[index] = order
        return tuple(alpha)

    if op_tag == "identity":
        return {axis(0, 0): 1.0}
    if op_tag == "d/dx":
        return {axis(0, 1): 1.0}
    if op_tag == "d/dy":
        if dim < 2:
            raise GeometryError("Operator d/dy needs a 2D basis")
        return {axis(1, 1): 1.0}
    if op_tag == "d2/dx2":
        return {axis(0, 2): 1.0}
    if op_tag == "laplacian":
        return {axis(k, 2): 1.0 for k in range(dim)}
    if op_tag in ("advdiff", "flux_advdiff"):
        if dim != 1:
            raise GeometryError(f"Operator {op_tag} is only defined in 1D")
        if op_tag == "advdiff":
            return {(1,): float(a), (2,): float(nu)}
        return {(0,): float(a), (1,): float(nu)}
    raise GeometryError(f"Unknown operator tag '{op_tag}'")


def apply_operator_to_basis(
    basis: MonomialBasis,
    op_tag: str,
    center: np.ndarray | None = None,
    a: float = 0.0,
    nu: float = 0.0,
) -> np.ndarray:
    """
    Exact action tau(Phi) of an operator on every basis term at the center.

    Since the basis is centered, D^alpha applied to term beta at the center is
    alpha! / scale^|alpha| when beta == alpha and 0 otherwise; the result is
    independent of where the center lies.

    Parameters
    ----------
    basis : MonomialBasis
        Basis descriptor.
    op_tag : str
        Operator tag, see `operator_terms`.
    center : np.ndarray | None
        Evaluation point; only its dimension is checked.
    a, nu : float
        Coefficients of advdiff and flux_advdiff.

    Returns
    -------
    np.ndarray
        Vector of length Q.

    Raises
    ------
    GeometryError
        Unknown tag, tag incompatible with the dimension, or a derivative of
        higher order than the basis.
    """
    if center is not None:
        _check_point(basis, center, "center")
    image = np.zeros(basis.size)
    for alpha, coefficient in operator_terms(op_tag, basis.dim, a, nu).items():
        if sum(alpha) > basis.order:
            raise GeometryError(
                f"Operator {op_tag} needs derivatives of order {sum(alpha)} but the basis has order {basis.order}"
            )
        factorial = math.prod(math.factorial(e) for e in alpha)
        image[basis.index_of(alpha)] += coefficient * factorial / basis.scale ** sum(alpha)
    return image
