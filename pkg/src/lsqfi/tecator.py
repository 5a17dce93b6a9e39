"""Tecator meat-spectra data: plain-text parser, train/tune/test protocol and
random re-partitions."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import BasisSpec, penalty_matrices
from .design import Dataset, GridCurves, build_design
from .io import InputError
from .solver import FitOptions, FitResult, check_loss, predict
from .tuning import TuningGrid, grid_search

log = logging.getLogger(__name__)

N_SAMPLES = 215
N_CHANNELS = 100
N_PCS = 22
RECORD = N_CHANNELS + N_PCS + 3  # absorbances, principal components, moisture, fat, protein
SPLIT_SIZES = (129, 43, 43)
WAVELENGTHS = np.linspace(850.0, 1050.0, N_CHANNELS)


def _numeric_tail(lines: list[str]) -> list[float]:
    """Numbers from the trailing run of all-numeric lines (the header prose
    above the data block is skipped)."""
    vals: list[list[float]] = []
    for line in reversed(lines):
        toks = line.split()
        if not toks:
            continue
        try:
            vals.append([float(t) for t in toks])
        except ValueError:
            break
    return [v for row in reversed(vals) for v in row]


def parse_tecator(path: str | Path) -> tuple[GridCurves, np.ndarray]:
    """Return the spectra (on the 850-1050 nm grid) and an ``(n, 3)`` array of
    (moisture, fat, protein) for the first 215 samples."""
    p = Path(path)
    try:
        lines = p.read_text(encoding="utf-8", errors="replace").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read Tecator file {p}: {exc.strerror}") from None
    nums = _numeric_tail(lines)
    if len(nums) % RECORD or len(nums) // RECORD < N_SAMPLES:
        raise InputError(f"{p}: expected at least {N_SAMPLES} records of {RECORD} numbers "
                         f"({N_SAMPLES * RECORD} values), found {len(nums)} values")
    arr = np.asarray(nums).reshape(-1, RECORD)[:N_SAMPLES]
    return GridCurves(WAVELENGTHS, arr[:, :N_CHANNELS]), arr[:, N_CHANNELS + N_PCS:]


def tecator_dataset(curves: GridCurves, chem: np.ndarray, response_transform: str = "none") -> Dataset:
    """Response fat; scalars moisture and protein; wavelengths mapped to [0, 1]."""
    fat = chem[:, 1]
    if response_transform == "log":
        fat = np.log(fat)
    elif response_transform != "none":
        raise InputError(f"tecator_response must be 'none' or 'log', got {response_transform!r}")
    unit = GridCurves((curves.grid - curves.grid[0]) / (curves.grid[-1] - curves.grid[0]), curves.values)
    return Dataset(unit, chem[:, [0, 2]], fat, ("moisture", "protein"))


def official_split(n: int = N_SAMPLES) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a, b, _ = SPLIT_SIZES
    idx = np.arange(n)
    return idx[:a], idx[a:a + b], idx[a + b:]


def random_split(rng: np.random.Generator, n: int = N_SAMPLES) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a, b, _ = SPLIT_SIZES
    perm = rng.permutation(n)
    return np.sort(perm[:a]), np.sort(perm[a:a + b]), np.sort(perm[a + b:])


@dataclass
class SplitOutcome:
    tau: float
    method: str
    fit: FitResult
    best_eta: float
    best_lambda1: float
    prediction_error: float

    @property
    def estimates(self) -> tuple[float, ...]:
        c = self.fit.coeffs
        return (c.intercept if c.intercept is not None else float("nan"), *map(float, c.gamma))


def prediction_error(result: FitResult, design, y, tau: float) -> float:
    """Mean check loss on held-out data."""
    return float(np.mean(check_loss(np.asarray(y) - predict(result, design), tau)))


def run_split(data: Dataset, split, spec: BasisSpec, tau: float, method: str, grid: TuningGrid,
              opts_kw: dict | None = None, jobs: int = 1) -> SplitOutcome:
    tr, va, te = (data.subset(i) for i in split)
    designs = [build_design(d, spec, intercept=True) for d in (tr, va, te)]
    opts = FitOptions.for_method(method, tau=tau, **(opts_kw or {}))
    res = grid_search((designs[0], tr.response), (designs[1], va.response), spec, grid.for_penalty(opts.penalty),
                      opts, mats=penalty_matrices(spec), jobs=jobs, keep_fits=False)
    pe = prediction_error(res.best_fit, designs[2], te.response, tau)
    return SplitOutcome(tau, method, res.best_fit, res.best_eta, res.best_lambda1, pe)
