"""Flat key=value run configuration and the CSV/JSON formats used by the CLI."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .basis import BasisSpec
from .design import CenteringOffsets, Dataset, GridCurves
from .penalty import PenaltyConfig
from .solver import Coefficients, FitOptions, FitResult

DEFAULT_SEED = 20240501


class InputError(ValueError):
    """Malformed configuration or data file (CLI exit code 2)."""


def fmt(x: float) -> str:
    """17 significant digits: enough for an exact float64 round trip."""
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return repr(x)
    return format(x, ".17g")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _strs(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


@dataclass
class RunConfig:
    """Every setting the subcommands read. Lists are comma separated in the
    config file; paths are resolved relative to the config file's directory."""

    # basis
    degree: int = 3
    intervals: int = 70
    domain_end: float = 1.0
    map_to_unit: bool = True
    # model
    intercept: bool = False
    center: bool = False
    method: str = "proposed"
    tau: tuple[float, ...] = (0.5,)
    # penalty and tuning
    eta: float = 1e-5
    lambda1: float = 0.01
    xi: float = 6.0
    eta_grid: tuple[float, ...] = tuple(float(v) for v in np.logspace(-8, -2, 7))
    lambda1_grid: tuple[float, ...] = (0.0,) + tuple(float(v) for v in np.logspace(-4, 0, 10))
    # solver
    rho_perturb: float = 1e-6
    max_iter: int = 200
    conv_tol: float = 1e-4
    zero_threshold: float = 1e-3
    threshold_mode: str = "group"
    # data
    curves: str = ""
    scalars: str = ""
    response: str = "y"
    valid_curves: str = ""
    valid_scalars: str = ""
    model: str = ""
    output: str = "out"
    # simulation
    scenario: str = "I"
    error_case: int = 1
    n: tuple[int, ...] = (300,)
    replicates: int = 100
    n_valid: int = 500
    methods: tuple[str, ...] = ("alt1", "alt2", "alt3", "alt4", "alt5", "proposed")
    # tecator
    tecator_file: str = ""
    tecator_response: str = "none"
    partitions: int = 0
    # diagnostics
    qq_draws: int = 100
    density_points: int = 256
    # run control
    seed: int = DEFAULT_SEED
    jobs: int = 1
    verify_hierarchy: bool = False

    def basis(self) -> BasisSpec:
        return BasisSpec(self.degree, self.intervals, self.domain_end)

    def fit_options(self, tau: float, method: str | None = None) -> FitOptions:
        return FitOptions.for_method(method or self.method, tau=tau, rho_perturb=self.rho_perturb,
                                     max_iter=self.max_iter, conv_tol=self.conv_tol,
                                     zero_threshold=self.zero_threshold,
                                     threshold_mode=self.threshold_mode)

    def penalty(self, q: int) -> PenaltyConfig:
        return PenaltyConfig.from_rule(self.lambda1, q, self.eta, xi=self.xi)

    def to_dict(self, portable: bool = False) -> dict[str, Any]:
        """``portable`` drops run-location settings so outputs do not depend
        on where they were written."""
        skip = ("output", "jobs") if portable else ()
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items() if k not in skip}


_PARSERS = {int: int, float: float, str: str, bool: _bool, tuple[float, ...]: _floats,
            tuple[int, ...]: lambda s: tuple(int(v) for v in _strs(s)), tuple[str, ...]: _strs}
_PATH_KEYS = ("curves", "scalars", "valid_curves", "valid_scalars", "model", "tecator_file", "output")


def _field_types() -> dict[str, Any]:
    hints = {"int": int, "float": float, "str": str, "bool": bool, "tuple[float, ...]": tuple[float, ...],
             "tuple[int, ...]": tuple[int, ...], "tuple[str, ...]": tuple[str, ...]}
    return {f.name: hints[f.type] for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    types = _field_types()
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise InputError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _PARSERS[types[key]](value)
        except ValueError as exc:
            raise InputError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return out


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    if path:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read config {p}: {exc.strerror}") from None
        values = parse_config_text(text, str(p))
        for k in _PATH_KEYS:
            if values.get(k) and not Path(values[k]).is_absolute():
                values[k] = str(p.parent / values[k])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise InputError(str(exc)) from None


def config_help() -> str:
    lines = []
    for f in fields(RunConfig):
        d = f.default
        shown = ",".join(fmt(v) if isinstance(v, float) else str(v) for v in d) if isinstance(d, tuple) else d
        lines.append(f"  {f.name} = {shown}")
    return "\n".join(lines)


def _read_rows(path: str | Path) -> list[list[str]]:
    p = Path(path)
    try:
        with p.open(newline="", encoding="utf-8") as fh:
            return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise InputError(f"cannot read {p}: {exc.strerror}") from None


def read_functional_csv(path: str | Path) -> GridCurves:
    rows = _read_rows(path)
    if len(rows) < 2:
        raise InputError(f"{path}: need a grid header row and at least one curve row")
    try:
        grid = np.array([float(v) for v in rows[0]])
    except ValueError:
        raise InputError(f"{path}: row 1 (grid header) is not numeric") from None
    if np.any(np.diff(grid) <= 0):
        raise InputError(f"{path}: grid header must be strictly increasing")
    values = np.empty((len(rows) - 1, grid.size))
    for i, row in enumerate(rows[1:]):
        if len(row) != grid.size:
            raise InputError(f"{path}: row {i + 2} has {len(row)} values, grid has {grid.size}")
        try:
            values[i] = [float(v) for v in row]
        except ValueError:
            raise InputError(f"{path}: row {i + 2} has a non-numeric value") from None
    return GridCurves(grid, values)


def write_functional_csv(path: str | Path, curves: GridCurves) -> None:
    write_rows(path, [fmt(t) for t in curves.grid], [[fmt(v) for v in row] for row in curves.values])


def read_scalar_csv(path: str | Path, response: str | None = "y") -> tuple[np.ndarray, tuple[str, ...], np.ndarray | None]:
    """Named columns; ``response`` (if present in the header) is split off."""
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise InputError(f"{path}: row {i + 2} has {len(row)} fields, header has {len(header)}")
        try:
            data[i] = [float(v) for v in row]
        except ValueError:
            raise InputError(f"{path}: row {i + 2} has a non-numeric value") from None
    y = None
    if response and response in header:
        j = header.index(response)
        y = data[:, j]
        data = np.delete(data, j, axis=1)
        header.pop(j)
    return data, tuple(header), y


def write_rows(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def map_grid(grid: np.ndarray, domain_end: float = 1.0) -> np.ndarray:
    """Affine map of the sampling grid onto [0, domain_end]."""
    g = np.asarray(grid, dtype=float)
    return (g - g[0]) / (g[-1] - g[0]) * domain_end


def load_dataset(curves_path: str, scalars_path: str, cfg: RunConfig, need_response: bool = True) -> Dataset:
    if not curves_path or not scalars_path:
        raise InputError("both a curves file and a scalars file are required")
    curves = read_functional_csv(curves_path)
    Z, names, y = read_scalar_csv(scalars_path, cfg.response)
    if Z.shape[0] != curves.n:
        raise InputError(f"{scalars_path} has {Z.shape[0]} rows but {curves_path} has {curves.n} curves")
    if y is None:
        if need_response:
            raise InputError(f"{scalars_path}: response column {cfg.response!r} not found")
        y = np.zeros(curves.n)
    if cfg.map_to_unit:
        curves = GridCurves(map_grid(curves.grid, cfg.domain_end), curves.values)
    elif curves.grid[0] < 0 or curves.grid[-1] > cfg.domain_end:
        raise InputError(f"{curves_path}: grid leaves [0, {cfg.domain_end}] and map_to_unit is off")
    return Dataset(curves, Z, y, names)


@dataclass
class ModelBundle:
    """Everything needed to predict with fitted models: basis, layout,
    centering offsets and one coefficient vector per tau."""

    spec: BasisSpec
    q: int
    intercept: bool
    scalar_names: tuple[str, ...]
    method: str
    fits: list[dict] = field(default_factory=list)
    offsets: CenteringOffsets | None = None
    grid: tuple[float, ...] = ()
    map_to_unit: bool = True
    config: dict = field(default_factory=dict)

    def coefficients(self, i: int) -> Coefficients:
        return Coefficients(np.asarray(self.fits[i]["omega"]), self.q, self.spec.n_basis, self.intercept)

    def to_json(self) -> dict:
        return {
            "basis": {"degree": self.spec.degree, "intervals": self.spec.m_intervals,
                      "domain_end": self.spec.domain_end},
            "q": self.q, "intercept": self.intercept, "scalar_names": list(self.scalar_names),
            "method": self.method, "map_to_unit": self.map_to_unit,
            "offsets": None if self.offsets is None else {
                "curve": self.offsets.curve, "scalars": self.offsets.scalars,
                "response": self.offsets.response, "grid": list(self.grid)},
            "fits": self.fits, "config": self.config,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelBundle":
        try:
            b = obj["basis"]
            off = obj.get("offsets")
            offsets = None if off is None else CenteringOffsets(np.asarray(off["curve"]), np.asarray(off["scalars"]),
                                                                float(off["response"]))
            return cls(BasisSpec(int(b["degree"]), int(b["intervals"]), float(b["domain_end"])), int(obj["q"]),
                       bool(obj["intercept"]), tuple(obj["scalar_names"]), obj["method"], list(obj["fits"]),
                       offsets, tuple(off["grid"]) if off else (), bool(obj.get("map_to_unit", True)),
                       dict(obj.get("config", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed model bundle: {exc}") from None


def fit_record(res: FitResult, tau: float) -> dict:
    c = res.coeffs
    return {"tau": tau, "eta": res.config.eta, "lambda1": res.config.lambda1, "lambda2": res.config.lambda2,
            "xi": res.config.xi, "omega": c.omega, "gamma": c.gamma, "intercept": c.intercept,
            "iterations": res.iterations, "converged": res.converged}


def load_bundle(path: str | Path) -> ModelBundle:
    if not path:
        raise InputError("no model bundle given (set model = path/to/coefficients.json)")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"model bundle {p} not found")
    try:
        return ModelBundle.from_json(json.loads(p.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: not valid JSON ({exc.msg})") from None
