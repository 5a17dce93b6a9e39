"""MCP, interval seminorms and the sparse-group penalty with its local
quadratic approximation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .basis import PenaltyMatrices, gauss_rule

PENALTY_KINDS = ("sparse-group", "mcp", "smooth")


@dataclass(frozen=True)
class PenaltyConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    xi: float = 6.0
    eta: float = 0.0
    kappa: float | None = None
    norm_floor: float = 1e-8

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.eta < 0:
            raise ValueError("lambda1, lambda2 and eta must be nonnegative")
        if not self.xi > 1:
            raise ValueError(f"xi must exceed 1, got {self.xi}")
        if not self.norm_floor > 0:
            raise ValueError("norm_floor must be positive")

    @classmethod
    def from_rule(cls, lambda1: float, q: int, eta: float = 0.0, xi: float = 6.0,
                  **kw) -> "PenaltyConfig":
        """lambda2 = sqrt(q + 1) * lambda1."""
        return cls(lambda1=float(lambda1), lambda2=float(np.sqrt(q + 1) * lambda1), xi=xi,
                   eta=float(eta), **kw)


def mcp(t, lam: float, xi: float):
    a = np.abs(t)
    if lam == 0:
        return np.zeros_like(a, dtype=float) if np.ndim(a) else 0.0
    return np.where(a < lam * xi, lam * a - a * a / (2.0 * xi), 0.5 * lam * lam * xi)


def mcp_deriv(t, lam: float, xi: float):
    a = np.abs(t)
    if lam == 0:
        return np.zeros_like(a, dtype=float) if np.ndim(a) else 0.0
    return lam * np.maximum(0.0, 1.0 - a / (lam * xi))


def mcp_floored(t, lam: float, xi: float, floor: float):
    """MCP with its quadratic-in-t tangent below ``floor``.

    This is the function the floored LQA weights are exact tangents of, so it
    is the penalty the solver provably descends on.
    """
    a = np.abs(t)
    below = a < floor
    lin = mcp(floor, lam, xi) + 0.5 * mcp_deriv(floor, lam, xi) / floor * (a * a - floor * floor)
    return np.where(below, lin, mcp(a, lam, xi))


def lqa_ratio(u, lam: float, xi: float, floor: float):
    """p'(u)/u with the denominator clamped at ``floor``."""
    uu = np.maximum(u, floor)
    return mcp_deriv(uu, lam, xi) / uu


def group_norm(b_block, w_l) -> float:
    b_block = np.asarray(b_block, dtype=float)
    w_l = np.asarray(w_l, dtype=float)
    if w_l.shape != (b_block.size, b_block.size):
        raise ValueError(f"vector of length {b_block.size} does not match matrix {w_l.shape}")
    return float(np.sqrt(max(b_block @ w_l @ b_block, 0.0)))


def split_b(b, n_basis: int) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.size % n_basis:
        raise ValueError(f"stacked coefficient length {b.size} is not a multiple of {n_basis}")
    return b.reshape(-1, n_basis)


def interval_norms(b_stack: np.ndarray, mats: PenaltyMatrices) -> np.ndarray:
    """``(q+1, m_intervals)`` matrix of ||b_k||_{W_l}."""
    win = sliding_window_view(b_stack, mats.window, axis=1)  # (q+1, M, d+1)
    sq = np.einsum("kli,lij,klj->kl", win, mats.blocks, win)
    return np.sqrt(np.maximum(sq, 0.0))


def _check_b(b, mats: PenaltyMatrices, q: int) -> np.ndarray:
    nb = mats.spec.n_basis
    b = np.asarray(b, dtype=float).ravel()
    if b.size != (q + 1) * nb:
        raise ValueError(f"expected {(q + 1) * nb} stacked coefficients, got {b.size}")
    return b.reshape(q + 1, nb)


def penalty_value(b, cfg: PenaltyConfig, mats: PenaltyMatrices, q: int,
                  kind: str = "sparse-group", floored: bool = False) -> float:
    """Discretized selection penalty (the roughness term is separate).

    ``sparse-group``: individual MCP on interactions k >= 1 plus group MCP on
    the stacked interval norm. ``mcp``: individual MCP with ``lambda1`` on
    every k including the main effect. ``smooth``: zero.
    """
    bs = _check_b(b, mats, q)
    if kind == "smooth":
        return 0.0
    p = (lambda t, lam: mcp_floored(t, lam, cfg.xi, cfg.norm_floor)) if floored else \
        (lambda t, lam: mcp(t, lam, cfg.xi))
    norms = interval_norms(bs, mats)
    if kind == "mcp":
        return float(np.sum(p(norms, cfg.lambda1)))
    if kind != "sparse-group":
        raise ValueError(f"unknown penalty kind {kind!r}")
    full = np.sqrt(np.sum(norms ** 2, axis=0))
    return float(np.sum(p(norms[1:], cfg.lambda1)) + np.sum(p(full, cfg.lambda2)))


def roughness_value(b, mats: PenaltyMatrices, q: int) -> float:
    bs = _check_b(b, mats, q)
    return float(np.einsum("ki,ij,kj->", bs, mats.roughness, bs))


@dataclass(frozen=True, eq=False)
class LqaWeights:
    """Blocks W0..Wq of the quadratic penalty surrogate b' W b."""

    blocks: np.ndarray  # (q+1, n_basis, n_basis)

    @property
    def assembled(self) -> np.ndarray:
        k, nb, _ = self.blocks.shape
        out = np.zeros((k * nb, k * nb))
        for i in range(k):
            out[i * nb:(i + 1) * nb, i * nb:(i + 1) * nb] = self.blocks[i]
        return out

    def padded(self, d_n: int) -> np.ndarray:
        """Block-diagonal weight with zero rows/columns for the scalar (and
        intercept) coefficients."""
        out = np.zeros((d_n, d_n))
        a = self.assembled
        out[:a.shape[0], :a.shape[0]] = a
        return out


def lqa_coefficients(b, cfg: PenaltyConfig, mats: PenaltyMatrices, q: int,
                     kind: str = "sparse-group") -> np.ndarray:
    """``(q+1, m_intervals)`` multipliers c_kl with block_k = sum_l c_kl W_l."""
    bs = _check_b(b, mats, q)
    m = mats.spec.m_intervals
    c = np.zeros((q + 1, m))
    if kind == "smooth":
        return c
    norms = interval_norms(bs, mats)
    if kind == "mcp":
        return 0.5 * lqa_ratio(norms, cfg.lambda1, cfg.xi, cfg.norm_floor)
    if kind != "sparse-group":
        raise ValueError(f"unknown penalty kind {kind!r}")
    full = np.sqrt(np.sum(norms ** 2, axis=0))
    group = lqa_ratio(full, cfg.lambda2, cfg.xi, cfg.norm_floor)
    c[:] = group
    c[1:] += lqa_ratio(norms[1:], cfg.lambda1, cfg.xi, cfg.norm_floor)
    return 0.5 * c


def lqa_weights(b, cfg: PenaltyConfig, mats: PenaltyMatrices, q: int,
                kind: str = "sparse-group") -> LqaWeights:
    c = lqa_coefficients(b, cfg, mats, q, kind)
    return LqaWeights(np.einsum("kl,lij->kij", c, mats.dense_stack))


def lemma1_gap(beta_fns: Sequence[Callable], cfg: PenaltyConfig, m_intervals: int,
               domain_end: float = 1.0, points_per_interval: int = 64,
               reference_intervals: int = 4096) -> float:
    """|continuous sparse-group penalty - its interval-sum approximation|.

    The continuous side integrates p(|beta_k(t)|) and p(||beta(t)||_2) on a
    fine composite Gauss grid; the discrete side uses interval RMS values
    sqrt(M/T) * ||beta_k||_{L2(I_l)} with ``points_per_interval`` nodes.
    ``beta_fns[0]`` is the main effect.
    """
    T = float(domain_end)
    xi = cfg.xi

    fine = gauss_rule(np.linspace(0.0, T, reference_intervals + 1), 8)
    t, w = fine.nodes.ravel(), fine.weights.ravel()
    vals = np.array([np.asarray(f(t), dtype=float) * np.ones_like(t) for f in beta_fns])
    cont = sum(np.sum(w * mcp(vals[k], cfg.lambda1, xi)) for k in range(1, len(beta_fns)))
    cont += np.sum(w * mcp(np.sqrt(np.sum(vals ** 2, axis=0)), cfg.lambda2, xi))
    cont /= T

    rule = gauss_rule(np.linspace(0.0, T, m_intervals + 1), points_per_interval)
    tv = rule.nodes
    sq = np.array([np.sum(rule.weights * (np.asarray(f(tv), dtype=float) * np.ones_like(tv)) ** 2, axis=1)
                   for f in beta_fns])  # (q+1, M)
    scale = m_intervals / T
    disc = sum(np.sum(mcp(np.sqrt(scale * sq[k]), cfg.lambda1, xi)) for k in range(1, len(beta_fns)))
    disc += np.sum(mcp(np.sqrt(scale * sq.sum(axis=0)), cfg.lambda2, xi))
    disc /= m_intervals
    return float(abs(cont - disc))
