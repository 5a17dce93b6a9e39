"""Residual densities and the random-quantile QQ check for fitted models."""
from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy.stats import gaussian_kde

from .basis import BasisSpec, penalty_matrices
from .design import DesignMatrices
from .penalty import PenaltyConfig
from .solver import FitOptions, fit, predict


def residual_density(residuals, points: int = 256, pad: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE (Scott's bandwidth) on an evenly spaced grid spanning the
    residual range widened by ``pad`` on each side."""
    r = np.asarray(residuals, dtype=float)
    if r.size < 2 or np.ptp(r) == 0:
        raise ValueError("density estimation needs at least two distinct residuals")
    lo, hi = r.min(), r.max()
    span = hi - lo
    x = np.linspace(lo - pad * span, hi + pad * span, points)
    return x, gaussian_kde(r)(x)


def qq_simulation(design: DesignMatrices, y, spec: BasisSpec, cfg: PenaltyConfig, opts: FitOptions,
                  rng: np.random.Generator, draws: int = 100) -> np.ndarray:
    """Random-quantile QQ check.

    Each draw picks tau ~ U(0, 1), fits the model at tau, picks a covariate
    row at random and records the fitted conditional quantile there. A
    well-specified model makes these draws follow the response distribution.
    Returns ``(draws, 3)`` rows of (probability, simulated quantile, observed
    quantile), both sorted.
    """
    y = np.asarray(y, dtype=float)
    mats = penalty_matrices(spec)
    sims = np.empty(draws)
    for i in range(draws):
        tau = float(rng.uniform(1e-3, 1 - 1e-3))
        row = int(rng.integers(design.n))
        res = fit(design, y, spec, cfg, replace(opts, tau=tau), mats)
        sims[i] = predict(res, design.subset([row]))[0]
    probs = (np.arange(draws) + 0.5) / draws
    return np.column_stack([probs, np.sort(sims), np.quantile(y, probs)])
