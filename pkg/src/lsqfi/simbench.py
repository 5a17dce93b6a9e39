"""Simulation scenarios I-III, error cases 1-3, estimation-quality metrics and
the replicate benchmark over the six methods."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from .basis import BasisSpec, eval_basis, gauss_rule, penalty_matrices, trapezoid_weights
from .design import BasisCurves, Dataset, build_design
from .solver import METHODS, FitOptions, FitResult, hierarchy_violations, reconstruct
from .tuning import TuningGrid, grid_search

log = logging.getLogger(__name__)

GEN_SPEC = BasisSpec(degree=4, m_intervals=70, domain_end=1.0)
EST_SPEC = BasisSpec(degree=3, m_intervals=70, domain_end=1.0)
GAMMA_TRUE = (0.5, 0.8)
METHOD_LABELS = {"alt1": "Alt.1", "alt2": "Alt.2", "alt3": "Alt.3", "alt4": "Alt.4",
                 "alt5": "Alt.5", "proposed": "Proposed"}


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    fn: Callable[[np.ndarray], np.ndarray]
    closed_left: bool = False


def _piecewise(pieces: Sequence[Piece]) -> Callable:
    def beta(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p in pieces:
            inside = (t <= p.hi) & ((t > p.lo) | ((t == p.lo) if p.closed_left else False))
            if np.any(inside):
                out = np.where(inside, p.fn(t), out)
        return out
    return beta


def _complement(pieces: Sequence[Piece], lo: float = 0.0, hi: float = 1.0) -> list[tuple[float, float]]:
    spans = sorted((p.lo, p.hi) for p in pieces)
    out, cur = [], lo
    for a, b in spans:
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    if cur < hi:
        out.append((cur, hi))
    return out


def _s1_main(t):
    return np.where(t <= 0.5, 2 * (1 - t) * np.sin(2 * np.pi * (t + 0.2)), 2 * t * np.sin(2 * np.pi * (t - 0.2)))


_S1_LEFT = Piece(0.0, 0.3, lambda t: 2 * (1 - t) * np.sin(2 * np.pi * (t + 0.2)), closed_left=True)
_S1_RIGHT = Piece(0.7, 1.0, lambda t: 2 * t * np.sin(2 * np.pi * (t - 0.2)), closed_left=True)


def _sin(a, f, c):
    return lambda t: a * np.sin(f * np.pi * (t - c))


def _bump(a, c, w):
    return lambda t: a * (t - c) ** 2 / w ** 2 - a


SCENARIO_PIECES: dict[str, tuple[tuple[Piece, ...], ...]] = {
    "I": (
        (_S1_LEFT, _S1_RIGHT),
        (_S1_LEFT,),
        (_S1_RIGHT,),
    ),
    "II": (
        (Piece(0.2, 0.3, _sin(5, 10, 0.2)), Piece(0.5, 0.6, _sin(-3, 10, 0.5)),
         Piece(0.7, 0.8, _sin(3.5, 10, 0.7))),
        (Piece(0.2, 0.3, _bump(2, 0.25, 0.05)), Piece(0.5, 0.6, _sin(5, 10, 0.5))),
        (Piece(0.5, 0.6, _sin(2.5, 10, 0.5)), Piece(0.7, 0.8, _bump(4, 0.75, 0.05))),
    ),
    "III": (
        (Piece(0.125, 0.15, _bump(4, 0.1375, 0.0125)), Piece(0.175, 0.2, _sin(7, 40, 0.175)),
         Piece(0.325, 0.35, _sin(-6, 40, 0.325)), Piece(0.6, 0.625, _sin(8, 40, 0.6)),
         Piece(0.7, 0.725, _sin(-10, 40, 0.7)), Piece(0.8, 0.825, _sin(5, 40, 0.8)),
         Piece(0.875, 0.9, _sin(-7, 40, 0.875))),
        (Piece(0.125, 0.15, _sin(10, 40, 0.125)), Piece(0.325, 0.35, _sin(6, 40, 0.325)),
         Piece(0.7, 0.725, _bump(8, 0.7125, 0.0125)), Piece(0.875, 0.9, _sin(9, 40, 0.875))),
        (Piece(0.175, 0.2, _sin(5, 40, 0.175)), Piece(0.6, 0.625, _bump(10, 0.6125, 0.0125)),
         Piece(0.8, 0.825, _sin(7, 40, 0.8))),
    ),
}


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    id: str
    beta_fns: tuple[Callable, ...]
    null_regions: tuple[tuple[tuple[float, float], ...], ...]
    gamma_true: tuple[float, ...] = GAMMA_TRUE
    breakpoints: tuple[float, ...] = ()

    @property
    def q(self) -> int:
        return len(self.beta_fns) - 1

    def nonnull_regions(self, k: int) -> list[tuple[float, float]]:
        out, cur = [], 0.0
        for a, b in self.null_regions[k]:
            if a > cur:
                out.append((cur, a))
            cur = b
        if cur < 1.0:
            out.append((cur, 1.0))
        return out

    def null_length(self, k: int) -> float:
        return float(sum(b - a for a, b in self.null_regions[k]))

    def in_null(self, k: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        mask = np.zeros(t.shape, dtype=bool)
        # interior endpoints belong to the neighbouring support piece
        for a, b in self.null_regions[k]:
            mask |= ((t > a) | ((t == a) & (a == 0.0))) & ((t < b) | ((t == b) & (b == 1.0)))
        return mask


@lru_cache(maxsize=None)
def scenario(sid: str) -> ScenarioSpec:
    sid = str(sid).upper()
    if sid not in SCENARIO_PIECES:
        raise ValueError(f"unknown scenario {sid!r}; choose from I, II, III")
    pieces = SCENARIO_PIECES[sid]
    bps = sorted({v for ps in pieces for p in ps for v in (p.lo, p.hi)})
    return ScenarioSpec(
        id=sid,
        beta_fns=tuple(_piecewise(ps) for ps in pieces),
        null_regions=tuple(tuple(_complement(ps)) for ps in pieces),
        breakpoints=tuple(bps),
    )


def scenario_beta(scenario_id: str, k: int, t):
    """True coefficient function k (0 = main effect) of a scenario."""
    return scenario(scenario_id).beta_fns[k](t)


@dataclass(frozen=True)
class ErrorCase:
    id: int
    tau: float | None = None
    snr_target: float = 4.0

    def __post_init__(self):
        if self.id not in (1, 2, 3):
            raise ValueError(f"error case must be 1, 2 or 3, got {self.id}")
        if self.id == 3 and self.tau is None:
            raise ValueError("case 3 needs tau to centre the errors at their tau-quantile")


def gen_curves(n: int, rng: np.random.Generator | int, spec: BasisSpec = GEN_SPEC,
               sd: float = 5.0) -> BasisCurves:
    """Curves sum_j a_ij B_j(t) with a_ij ~ N(0, sd^2) on a degree-4 basis."""
    rng = np.random.default_rng(rng)
    return BasisCurves(spec, rng.normal(0.0, sd, size=(n, spec.n_basis)))


@lru_cache(maxsize=16)
def _beta_projections(sid: str, spec: BasisSpec) -> np.ndarray:
    """``(q+1, n_basis)`` integrals of each generator basis function against
    the true coefficient functions."""
    sc = scenario(sid)
    breaks = np.union1d(spec.breakpoints, np.asarray(sc.breakpoints))
    rule = gauss_rule(breaks, 16)
    t, w = rule.nodes.ravel(), rule.weights.ravel()
    B = eval_basis(spec, t)
    return np.array([(w * f(t)) @ B for f in sc.beta_fns])


@dataclass(frozen=True, eq=False)
class SimulatedData:
    data: Dataset
    signal: np.ndarray
    errors: np.ndarray
    functional_terms: np.ndarray  # (n, q+1): int X_i beta_k


def signal_components(curves: BasisCurves, sc: ScenarioSpec) -> np.ndarray:
    return curves.coefs @ _beta_projections(sc.id, curves.spec).T


def case1_sigma(signal: np.ndarray, snr: float = 4.0) -> float:
    """Noise sd giving Var(signal) / sigma^2 = snr on the realized sample."""
    return float(np.std(signal) / math.sqrt(snr))


def gen_errors(case: ErrorCase, n: int, rng: np.random.Generator, signal: np.ndarray,
               z1_term: np.ndarray) -> np.ndarray:
    if case.id == 1:
        return rng.normal(0.0, case1_sigma(signal, case.snr_target), size=n)
    if case.id == 2:
        return rng.standard_t(3, size=n)
    scale = 1.5 * np.abs(z1_term)
    return scale * (rng.standard_normal(n) - norm.ppf(case.tau))


def gen_response(curves: BasisCurves, sc: ScenarioSpec, case: ErrorCase,
                 rng: np.random.Generator | int, gamma: Sequence[float] | None = None,
                 errors: bool = True) -> SimulatedData:
    rng = np.random.default_rng(rng)
    n = curves.n
    gamma = np.asarray(sc.gamma_true if gamma is None else gamma, dtype=float)
    Z = rng.standard_normal((n, sc.q))
    terms = signal_components(curves, sc)
    signal = terms[:, 0] + np.sum(Z * terms[:, 1:], axis=1) + Z @ gamma
    eps = gen_errors(case, n, rng, signal, Z[:, 0] * terms[:, 1]) if errors else np.zeros(n)
    return SimulatedData(Dataset(curves, Z, signal + eps), signal, eps, terms)


def simulate(n: int, sc: ScenarioSpec, case: ErrorCase, rng: np.random.Generator) -> SimulatedData:
    return gen_response(gen_curves(n, rng), sc, case, rng)


@dataclass
class MetricsReport:
    """Per-k lists hold ``None`` where a metric is not applicable (no null or
    no nonnull region)."""

    ise0: list[float | None]
    ise1: list[float | None]
    rmse_gamma: float
    ftpr: list[float | None]
    ftnr: list[float | None]

    def rows(self) -> list[tuple[str, int | None, float]]:
        out = []
        for name in ("ise0", "ise1", "ftpr", "ftnr"):
            for k, v in enumerate(getattr(self, name)):
                if v is not None:
                    out.append((name, k, float(v)))
        out.append(("rmse_gamma", None, float(self.rmse_gamma)))
        return out


def region_integral(f: Callable, regions: Sequence[tuple[float, float]], density: int = 2000) -> float:
    """Composite trapezoid of ``f`` over a union of intervals, with about
    ``density`` points per unit length."""
    total = 0.0
    for a, b in regions:
        if b <= a:
            continue
        t = np.linspace(a, b, max(2, int(math.ceil((b - a) * density)) + 1))
        total += float(trapezoid_weights(t) @ f(t))
    return total


def metrics(estimate: Callable[[np.ndarray], np.ndarray], sc: ScenarioSpec, gamma_hat,
            grid_points: int = 2001, density: int = 2000) -> MetricsReport:
    """Estimation metrics for coefficient functions.

    ``estimate(t)`` returns the ``(q+1, len(t))`` estimated functions (e.g.
    ``lambda t: reconstruct(fit, spec, t)``).
    """
    ise0, ise1, ftpr, ftnr = [], [], [], []
    grid = np.linspace(0.0, 1.0, grid_points)
    est_grid = estimate(grid)
    for k, f in enumerate(sc.beta_fns):
        sq = lambda t, k=k, f=f: (estimate(t)[k] - f(t)) ** 2
        null, nonnull = sc.null_regions[k], sc.nonnull_regions(k)
        l0 = sum(b - a for a, b in null)
        l1 = sum(b - a for a, b in nonnull)
        ise0.append(region_integral(sq, null, density) / l0 if l0 > 0 else None)
        ise1.append(region_integral(sq, nonnull, density) / l1 if l1 > 0 else None)
        in_null = sc.in_null(k, grid)
        zero = est_grid[k] == 0.0
        ftnr.append(float(np.mean(zero[in_null])) if np.any(in_null) else None)
        ftpr.append(float(np.mean(~zero[~in_null])) if np.any(~in_null) else None)
    rmse = float(np.linalg.norm(np.asarray(gamma_hat, dtype=float) - np.asarray(sc.gamma_true)))
    return MetricsReport(ise0, ise1, rmse, ftpr, ftnr)


def fit_metrics(result: FitResult, sc: ScenarioSpec) -> MetricsReport:
    return metrics(lambda t: reconstruct(result, result.spec, t), sc, result.coeffs.gamma)


@dataclass
class BenchmarkResult:
    per_replicate: list[dict]
    table: list[dict]
    failures: int = 0
    hierarchy_fits: int = 0
    hierarchy_violations: int = 0
    fits: dict = field(default_factory=dict, repr=False)

    def cell(self, method: str, metric: str, k: int | None = None, n: int | None = None) -> dict:
        for row in self.table:
            if (row["method"] == method and row["metric"] == metric and row["k"] == k
                    and (n is None or row["n"] == n)):
                return row
        raise KeyError((method, metric, k, n))


def _replicate(rep: int, sc: ScenarioSpec, case: ErrorCase, n: int, tau: float,
               methods: Sequence[str], seed: int, grid: TuningGrid, n_valid: int,
               spec: BasisSpec, opts_kw: dict) -> dict:
    rng = np.random.default_rng(seed + rep)
    train = simulate(n, sc, case, rng)
    valid = simulate(n_valid, sc, case, rng)
    d_train = build_design(train.data, spec)
    d_valid = build_design(valid.data, spec)
    mats = penalty_matrices(spec)
    out = {"rows": [], "hier_fits": 0, "hier_viol": 0, "best": {}}
    for m in methods:
        opts = FitOptions.for_method(m, tau=tau, **opts_kw)
        tr = grid_search((d_train, train.data.response), (d_valid, valid.data.response), spec,
                         grid.for_penalty(opts.penalty), opts, mats=mats)
        if opts.penalty == "sparse-group":
            done = [f for f in tr.fits if f is not None]
            out["hier_fits"] += len(done)
            out["hier_viol"] += sum(hierarchy_violations(f.interval_masks) for f in done)
        rep_metrics = fit_metrics(tr.best_fit, sc)
        for metric, k, value in rep_metrics.rows():
            out["rows"].append({"method": METHOD_LABELS.get(m, m), "n": n, "replicate": rep,
                                "metric": metric, "k": k, "value": value})
        out["best"][m] = tr.best_fit
        for name, v in (("best_eta", tr.best_eta), ("best_lambda1", tr.best_lambda1)):
            out["rows"].append({"method": METHOD_LABELS.get(m, m), "n": n, "replicate": rep,
                                "metric": name, "k": None, "value": float(v)})
    return out


def aggregate(rows: Sequence[dict]) -> list[dict]:
    """Mean and sd (ddof=1) per (method, n, metric, k), in first-seen order."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r["method"], r["n"], r["metric"], r["k"]), []).append(r["value"])
    table = []
    for (method, n, metric, k), vals in groups.items():
        v = np.asarray(vals, dtype=float)
        table.append({"method": method, "n": n, "metric": metric, "k": k, "mean": float(v.mean()),
                      "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0, "count": int(v.size)})
    return table


def run_benchmark(scenario_id: str, error_case: ErrorCase, n: int, tau: float,
                  methods: Sequence[str] = tuple(METHODS), replicates: int = 100, seed: int = 0,
                  grid: TuningGrid = TuningGrid(), n_valid: int = 500, spec: BasisSpec = EST_SPEC,
                  jobs: int = 1, keep_fits: bool = False, **opts_kw) -> BenchmarkResult:
    """Per replicate: fresh training (size n) and validation (size n_valid)
    draws, tuning of each method on the validation set, metrics of the tuned
    fit. Replicate r uses seed ``seed + r``."""
    if not methods:
        raise ValueError("at least one method is required")
    methods = [m.lower().replace(".", "") for m in methods]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    sc = scenario(scenario_id)
    args = (sc, error_case, n, tau, methods, seed, grid, n_valid, spec, opts_kw)

    def safe(rep):
        try:
            return _replicate(rep, *args)
        except Exception as exc:  # a failed replicate is logged and excluded
            log.error("replicate %d failed: %s", rep, exc)
            return None

    if jobs == 1:
        outs = [safe(r) for r in range(replicates)]
    else:
        outs = Parallel(n_jobs=jobs)(delayed(safe)(r) for r in range(replicates))
    rows, fits = [], {}
    failures = hf = hv = 0
    for rep, o in enumerate(outs):
        if o is None:
            failures += 1
            continue
        rows.extend(o["rows"])
        hf += o["hier_fits"]
        hv += o["hier_viol"]
        if keep_fits:
            fits[rep] = o["best"]
    return BenchmarkResult(per_replicate=rows, table=aggregate(rows), failures=failures,
                           hierarchy_fits=hf, hierarchy_violations=hv, fits=fits)
