"""Validation-set grid search over (eta, lambda1) with lambda2 = sqrt(q+1) lambda1."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .basis import BasisSpec, PenaltyMatrices, penalty_matrices
from .design import DesignMatrices
from .penalty import PenaltyConfig
from .solver import FitOptions, FitResult, check_loss, fit, predict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TuningGrid:
    eta_grid: tuple[float, ...] = tuple(np.logspace(-8, -2, 7))
    lambda1_grid: tuple[float, ...] = (0.0,) + tuple(np.logspace(-4, 0, 10))
    xi_fixed: float = 6.0

    def __post_init__(self):
        eta = tuple(float(v) for v in self.eta_grid)
        lam = tuple(float(v) for v in self.lambda1_grid)
        if not eta or not lam:
            raise ValueError("tuning grids must be nonempty")
        if any(np.diff(eta) < 0) or any(np.diff(lam) < 0):
            raise ValueError("tuning grids must be sorted ascending")
        if min(eta) < 0 or min(lam) < 0:
            raise ValueError("tuning grid values must be nonnegative")
        object.__setattr__(self, "eta_grid", eta)
        object.__setattr__(self, "lambda1_grid", lam)

    def for_penalty(self, kind: str) -> "TuningGrid":
        """Smooth-only fits ignore lambda, so only eta is searched."""
        if kind == "smooth":
            return TuningGrid(self.eta_grid, (0.0,), self.xi_fixed)
        return self


@dataclass(eq=False)
class TuningResult:
    best_eta: float
    best_lambda1: float
    score_table: np.ndarray  # (len(lambda1_grid), len(eta_grid))
    best_fit: FitResult
    grid: TuningGrid
    fits: list[FitResult | None] = field(default_factory=list, repr=False)

    @property
    def best_score(self) -> float:
        return float(np.min(self.score_table))


def validation_score(result: FitResult, valid_design: DesignMatrices, y_valid, tau: float,
                     loss: str = "quantile") -> float:
    """Mean check loss (quantile) or mean squared error (ls) on held-out data."""
    resid = np.asarray(y_valid, dtype=float) - predict(result, valid_design)
    if loss == "quantile":
        return float(np.mean(check_loss(resid, tau)))
    if loss == "ls":
        return float(np.mean(resid ** 2))
    raise ValueError(f"unknown loss {loss!r}")


def _fit_one(design, y, spec, cfg, opts, mats, valid_design, y_valid):
    try:
        res = fit(design, y, spec, cfg, opts, mats)
        score = validation_score(res, valid_design, y_valid, opts.tau, opts.loss)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        log.warning("fit failed at eta=%g lambda1=%g: %s", cfg.eta, cfg.lambda1, exc)
        return None, np.inf
    if not np.isfinite(score):
        return res, np.inf
    return res, score


def grid_search(train: tuple[DesignMatrices, np.ndarray], valid: tuple[DesignMatrices, np.ndarray],
                spec: BasisSpec, grid: TuningGrid = TuningGrid(), opts: FitOptions = FitOptions(),
                cfg_base: PenaltyConfig | None = None, mats: PenaltyMatrices | None = None,
                jobs: int = 1, keep_fits: bool = True) -> TuningResult:
    """Fit every (eta, lambda1) pair on ``train`` and keep the one with the
    lowest validation score.

    Ties go to the smallest lambda1, then the smallest eta (i.e. the first
    index in the sorted grids). Failed fits score +inf.
    """
    design, y = train
    vdesign, vy = valid
    if design.layout() != vdesign.layout():
        raise ValueError("training and validation designs have different layouts")
    mats = mats or penalty_matrices(spec)
    base = cfg_base or PenaltyConfig(xi=grid.xi_fixed)
    q = design.q
    pairs = [(il, ie) for il in range(len(grid.lambda1_grid)) for ie in range(len(grid.eta_grid))]
    cfgs = [PenaltyConfig.from_rule(grid.lambda1_grid[il], q, grid.eta_grid[ie], xi=grid.xi_fixed,
                                    norm_floor=base.norm_floor) for il, ie in pairs]
    if jobs == 1:
        out = [_fit_one(design, y, spec, c, opts, mats, vdesign, vy) for c in cfgs]
    else:
        out = Parallel(n_jobs=jobs)(delayed(_fit_one)(design, y, spec, c, opts, mats, vdesign, vy)
                                    for c in cfgs)
    scores = np.full((len(grid.lambda1_grid), len(grid.eta_grid)), np.inf)
    best = None
    for (il, ie), (res, s) in zip(pairs, out):
        scores[il, ie] = s
        if res is not None and (best is None or s < scores[best]):
            best = (il, ie)
    if best is None:
        raise RuntimeError("every fit in the tuning grid failed")
    best_fit = out[pairs.index(best)][0]
    return TuningResult(best_eta=grid.eta_grid[best[1]], best_lambda1=grid.lambda1_grid[best[0]],
                        score_table=scores, best_fit=best_fit, grid=grid,
                        fits=[r for r, _ in out] if keep_fits else [])
