"""Clamped B-spline bases on equally spaced knots, with the per-interval Gram
blocks and second-derivative roughness matrix used by the penalties."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline


@dataclass(frozen=True)
class BasisSpec:
    """B-spline basis of a given degree on ``m_intervals`` equal intervals of
    ``[0, domain_end]``.

    The basis has ``m_intervals + degree`` functions; boundary knots are
    repeated ``degree + 1`` times.
    """

    degree: int = 3
    m_intervals: int = 70
    domain_end: float = 1.0

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 2:
            raise ValueError(f"degree must be an integer >= 2, got {self.degree}")
        if int(self.m_intervals) != self.m_intervals or self.m_intervals < 2:
            raise ValueError(f"m_intervals must be an integer >= 2, got {self.m_intervals}")
        if not self.domain_end > 0:
            raise ValueError(f"domain_end must be positive, got {self.domain_end}")

    @property
    def n_basis(self) -> int:
        return self.m_intervals + self.degree

    @property
    def spacing(self) -> float:
        return self.domain_end / self.m_intervals

    @property
    def breakpoints(self) -> np.ndarray:
        return np.linspace(0.0, self.domain_end, self.m_intervals + 1)

    @property
    def knots(self) -> np.ndarray:
        bp = self.breakpoints
        d = self.degree
        return np.concatenate([np.full(d, bp[0]), bp, np.full(d, bp[-1])])

    @cached_property
    def _splines(self) -> tuple[BSpline, BSpline]:
        sp = BSpline(self.knots, np.eye(self.n_basis), self.degree, extrapolate=True)
        return sp, sp.derivative(2)

    def interval_of(self, t) -> np.ndarray:
        """0-based index of the knot interval containing each ``t`` (the last
        interval is closed on the right)."""
        idx = np.floor(np.asarray(t, dtype=float) / self.spacing).astype(int)
        return np.clip(idx, 0, self.m_intervals - 1)


def build_basis(degree: int = 3, m_intervals: int = 70, domain_end: float = 1.0) -> BasisSpec:
    return BasisSpec(int(degree), int(m_intervals), float(domain_end))


def _check_domain(spec: BasisSpec, t: np.ndarray, tol: float = 1e-12) -> None:
    if t.size and (np.any(~np.isfinite(t)) or t.min() < -tol * spec.domain_end
                   or t.max() > spec.domain_end * (1 + tol)):
        raise ValueError(f"evaluation points outside [0, {spec.domain_end}]")


def eval_basis(spec: BasisSpec, t, deriv: int = 0) -> np.ndarray:
    """Evaluate all basis functions (``deriv=0``) or their second derivatives
    (``deriv=2``) at ``t``.

    A scalar ``t`` gives a vector of length ``n_basis``; an array gives a
    ``(len(t), n_basis)`` matrix.
    """
    if deriv not in (0, 2):
        raise ValueError("deriv must be 0 or 2")
    t_arr = np.asarray(t, dtype=float)
    _check_domain(spec, t_arr.ravel())
    t_cl = np.clip(t_arr, 0.0, spec.domain_end)
    sp = spec._splines[0 if deriv == 0 else 1]
    return sp(t_cl)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Composite Gauss-Legendre rule, ``points_per_interval`` nodes on each
    knot interval. ``nodes`` and ``weights`` are ``(m_intervals, p)``."""

    nodes: np.ndarray
    weights: np.ndarray
    points_per_interval: int


def gauss_rule(breaks: np.ndarray, points: int) -> QuadratureRule:
    x, w = leggauss(points)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (b - a)
    return QuadratureRule(nodes=a + half * (x + 1.0), weights=half * w, points_per_interval=points)


def quadrature(spec: BasisSpec, points: int | None = None) -> QuadratureRule:
    # degree+1 points integrate polynomials up to degree 2*degree+1 exactly
    return gauss_rule(spec.breakpoints, points or spec.degree + 1)


@dataclass(frozen=True, eq=False)
class PenaltyMatrices:
    """Per-interval Gram blocks and the roughness matrix.

    ``blocks[l]`` is the ``(degree+1, degree+1)`` nonzero block of the
    interval Gram matrix W_l (scaled by ``m_intervals / domain_end``), sitting
    at rows/columns ``l .. l+degree`` (0-based). ``roughness`` is V.
    """

    spec: BasisSpec
    blocks: np.ndarray
    roughness: np.ndarray = field(repr=False)

    @property
    def window(self) -> int:
        return self.spec.degree + 1

    def dense(self, l: int) -> np.ndarray:
        return local_gram(self.spec, l, self)

    @cached_property
    def dense_stack(self) -> np.ndarray:
        """All W_l as a ``(m_intervals, n_basis, n_basis)`` array."""
        m, nb, w = self.spec.m_intervals, self.spec.n_basis, self.window
        out = np.zeros((m, nb, nb))
        for l in range(m):
            out[l, l:l + w, l:l + w] = self.blocks[l]
        return out

    @cached_property
    def full_gram(self) -> np.ndarray:
        return self.dense_stack.sum(axis=0) * self.spec.spacing


def _gram_blocks(spec: BasisSpec) -> np.ndarray:
    rule = quadrature(spec)
    m, w = spec.m_intervals, spec.degree + 1
    blocks = np.empty((m, w, w))
    for l in range(m):
        B = eval_basis(spec, rule.nodes[l])[:, l:l + w]
        blocks[l] = (B * rule.weights[l][:, None]).T @ B
    blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    return blocks * (spec.m_intervals / spec.domain_end)


def local_gram(spec: BasisSpec, l: int, mats: PenaltyMatrices | None = None) -> np.ndarray:
    """Dense W_l for the 0-based interval index ``l``."""
    if not 0 <= l < spec.m_intervals:
        raise IndexError(f"interval index {l} out of range [0, {spec.m_intervals})")
    blocks = mats.blocks if mats is not None else _gram_blocks(spec)
    w = spec.degree + 1
    out = np.zeros((spec.n_basis, spec.n_basis))
    out[l:l + w, l:l + w] = blocks[l]
    return out


def roughness_matrix(spec: BasisSpec) -> np.ndarray:
    """V with entries int B_i'' B_j'' over the whole domain."""
    rule = quadrature(spec)
    nb, w = spec.n_basis, spec.degree + 1
    V = np.zeros((nb, nb))
    for l in range(spec.m_intervals):
        D = eval_basis(spec, rule.nodes[l], deriv=2)[:, l:l + w]
        V[l:l + w, l:l + w] += (D * rule.weights[l][:, None]).T @ D
    return 0.5 * (V + V.T)


@lru_cache(maxsize=32)
def penalty_matrices(spec: BasisSpec) -> PenaltyMatrices:
    return PenaltyMatrices(spec=spec, blocks=_gram_blocks(spec), roughness=roughness_matrix(spec))


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def functional_inner_products(spec: BasisSpec, grid, values) -> np.ndarray:
    """Integrals of sampled curves against every basis function.

    ``values`` is ``(p,)`` or ``(n, p)`` samples on the sorted ``grid``, which
    must cover ``[0, domain_end]``. Uses the composite trapezoid rule, so the
    grid has to be fine enough for the caller's accuracy needs.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-d array with at least two points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    tol = 1e-9 * spec.domain_end
    if abs(grid[0]) > tol or abs(grid[-1] - spec.domain_end) > tol:
        raise ValueError(f"grid must span [0, {spec.domain_end}], got [{grid[0]}, {grid[-1]}]")
    if values.shape[-1] != grid.size:
        raise ValueError(f"curve has {values.shape[-1]} samples but grid has {grid.size}")
    B = eval_basis(spec, np.clip(grid, 0.0, spec.domain_end))
    return values @ (B * trapezoid_weights(grid)[:, None])


def cross_gram(spec_a: BasisSpec, spec_b: BasisSpec) -> np.ndarray:
    """Exact ``int B^a_i B^b_j`` for two bases on the same domain."""
    if not np.isclose(spec_a.domain_end, spec_b.domain_end, rtol=1e-12, atol=0):
        raise ValueError("bases live on different domains")
    breaks = np.union1d(spec_a.breakpoints, spec_b.breakpoints)
    rule = gauss_rule(breaks, (spec_a.degree + spec_b.degree) // 2 + 1)
    t, w = rule.nodes.ravel(), rule.weights.ravel()
    return (eval_basis(spec_a, t) * w[:, None]).T @ eval_basis(spec_b, t)


def coefficients_inner_products(spec: BasisSpec, curve_spec: BasisSpec, coefs) -> np.ndarray:
    """Inner products for curves given as coefficients on ``curve_spec``."""
    coefs = np.asarray(coefs, dtype=float)
    if coefs.shape[-1] != curve_spec.n_basis:
        raise ValueError(f"expected {curve_spec.n_basis} coefficients, got {coefs.shape[-1]}")
    return coefs @ cross_gram(curve_spec, spec)
