"""Design assembly: functional inner products X, Kronecker interaction block U,
Psi = (X, U) and the full regressor matrix Phi = (Psi | Z [| 1])."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, coefficients_inner_products, functional_inner_products


@dataclass(frozen=True, eq=False)
class GridCurves:
    """Curves sampled on a common grid; ``values`` is ``(n, p)``."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if grid.ndim != 1 or values.shape[1] != grid.size:
            raise ValueError(f"curve values {values.shape} do not match grid of {grid.size} points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("curve grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def inner_products(self, spec: BasisSpec) -> np.ndarray:
        return functional_inner_products(spec, self.grid, self.values)

    def subset(self, idx) -> "GridCurves":
        return GridCurves(self.grid, self.values[idx])

    def shifted(self, offset: np.ndarray) -> "GridCurves":
        return GridCurves(self.grid, self.values - offset)

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)


@dataclass(frozen=True, eq=False)
class BasisCurves:
    """Curves given exactly as coefficients on a B-spline basis."""

    spec: BasisSpec
    coefs: np.ndarray

    def __post_init__(self):
        coefs = np.atleast_2d(np.asarray(self.coefs, dtype=float))
        if coefs.shape[1] != self.spec.n_basis:
            raise ValueError(f"expected {self.spec.n_basis} coefficients per curve, got {coefs.shape[1]}")
        object.__setattr__(self, "coefs", coefs)

    @property
    def n(self) -> int:
        return self.coefs.shape[0]

    def inner_products(self, spec: BasisSpec) -> np.ndarray:
        return coefficients_inner_products(spec, self.spec, self.coefs)

    def subset(self, idx) -> "BasisCurves":
        return BasisCurves(self.spec, self.coefs[idx])

    def shifted(self, offset: np.ndarray) -> "BasisCurves":
        return BasisCurves(self.spec, self.coefs - offset)

    def mean(self) -> np.ndarray:
        return self.coefs.mean(axis=0)


Curves = GridCurves | BasisCurves


@dataclass(frozen=True, eq=False)
class Dataset:
    curves: Curves
    scalars: np.ndarray
    response: np.ndarray
    scalar_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.response, dtype=float).ravel()
        Z = np.asarray(self.scalars, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None] if Z.size == y.size and Z.size else Z.reshape(y.size, -1)
        if Z.shape[0] != y.size or self.curves.n != y.size:
            raise ValueError(f"row counts differ: curves {self.curves.n}, scalars {Z.shape[0]}, response {y.size}")
        names = tuple(self.scalar_names) or tuple(f"z{k + 1}" for k in range(Z.shape[1]))
        if len(names) != Z.shape[1]:
            raise ValueError("scalar_names length does not match the number of scalar columns")
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "scalars", Z)
        object.__setattr__(self, "scalar_names", names)

    @property
    def n(self) -> int:
        return self.response.size

    @property
    def q(self) -> int:
        return self.scalars.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.curves.subset(idx), self.scalars[idx], self.response[idx], self.scalar_names)


@dataclass(frozen=True)
class CenteringOffsets:
    curve: np.ndarray
    scalars: np.ndarray
    response: float

    def apply(self, data: Dataset) -> Dataset:
        return Dataset(data.curves.shifted(self.curve), data.scalars - self.scalars,
                       data.response - self.response, data.scalar_names)


def center_columns(data: Dataset) -> tuple[Dataset, CenteringOffsets]:
    """Center the response, each scalar column and the curves (pointwise, or
    coefficientwise for basis curves). The offsets are returned so new data
    can be shifted identically."""
    if data.n < 2:
        raise ValueError("centering needs at least two observations")
    offsets = CenteringOffsets(curve=data.curves.mean(), scalars=data.scalars.mean(axis=0),
                               response=float(data.response.mean()))
    return offsets.apply(data), offsets


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    """Column layout of ``phi`` is ``(x | u | z [| 1])`` where ``u`` holds the
    q interaction blocks ``z_ik * x_i`` in order k = 1..q."""

    x_mat: np.ndarray
    u_mat: np.ndarray
    z_mat: np.ndarray
    phi: np.ndarray = field(repr=False)
    intercept: bool = False

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def q(self) -> int:
        return self.z_mat.shape[1]

    @property
    def n_basis(self) -> int:
        return self.x_mat.shape[1]

    @property
    def psi(self) -> np.ndarray:
        return self.phi[:, :self.q_n]

    @property
    def q_n(self) -> int:
        return (self.q + 1) * self.n_basis

    @property
    def d_n(self) -> int:
        return self.phi.shape[1]

    def layout(self) -> tuple[int, int, bool]:
        return (self.q, self.n_basis, self.intercept)

    def subset(self, idx) -> "DesignMatrices":
        idx = np.asarray(idx)
        return DesignMatrices(self.x_mat[idx], self.u_mat[idx], self.z_mat[idx], self.phi[idx], self.intercept)


def assemble(x_mat: np.ndarray, z_mat: np.ndarray, intercept: bool = False) -> DesignMatrices:
    x_mat = np.asarray(x_mat, dtype=float)
    z_mat = np.asarray(z_mat, dtype=float).reshape(x_mat.shape[0], -1)
    n = x_mat.shape[0]
    # row i of u is kron(z_i, x_i)
    u_mat = (z_mat[:, :, None] * x_mat[:, None, :]).reshape(n, -1)
    cols = [x_mat, u_mat, z_mat]
    if intercept:
        cols.append(np.ones((n, 1)))
    return DesignMatrices(x_mat, u_mat, z_mat, np.hstack(cols), bool(intercept))


def build_design(data: Dataset, spec: BasisSpec, intercept: bool = False) -> DesignMatrices:
    return assemble(data.curves.inner_products(spec), data.scalars, intercept)
