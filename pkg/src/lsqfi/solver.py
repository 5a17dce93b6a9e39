"""Penalized quantile / least-squares fitting by MM + LQA Gauss-Newton steps.

The quantile loss is replaced at each iterate by the quadratic majorizer of its
rho-perturbed version, and the MCP terms by their local quadratic
approximation. Both are exact majorizers (the LQA one of the floored MCP, see
``penalty.mcp_floored``), so the descent function reported in
``FitResult.surrogate_trace`` cannot increase.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import BasisSpec, PenaltyMatrices, eval_basis, penalty_matrices
from .design import DesignMatrices
from .penalty import (PENALTY_KINDS, LqaWeights, PenaltyConfig, interval_norms, lqa_weights,
                      penalty_value, roughness_value)

log = logging.getLogger(__name__)

LOSSES = ("quantile", "ls")

# method name -> (loss, penalty kind)
METHODS = {
    "alt1": ("ls", "smooth"),
    "alt2": ("ls", "mcp"),
    "alt3": ("ls", "sparse-group"),
    "alt4": ("quantile", "smooth"),
    "alt5": ("quantile", "mcp"),
    "proposed": ("quantile", "sparse-group"),
}


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class FitOptions:
    tau: float = 0.5
    loss: str = "quantile"
    penalty: str = "sparse-group"
    rho_perturb: float = 1e-6
    max_iter: int = 200
    conv_tol: float = 1e-4
    zero_threshold: float = 1e-3
    threshold_mode: str = "group"
    max_halvings: int = 10

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if not self.rho_perturb > 0:
            raise ValueError("rho_perturb must be positive")
        if self.zero_threshold < 0:
            raise ValueError("zero_threshold must be nonnegative")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.penalty not in PENALTY_KINDS:
            raise ValueError(f"penalty must be one of {PENALTY_KINDS}")
        if self.threshold_mode not in ("group", "element"):
            raise ValueError("threshold_mode must be 'group' or 'element'")

    @classmethod
    def for_method(cls, method: str, **kw) -> "FitOptions":
        try:
            loss, pen = METHODS[method.lower().replace(".", "")]
        except KeyError:
            raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
        return cls(loss=loss, penalty=pen, **kw)

    @property
    def method(self) -> str:
        for name, lp in METHODS.items():
            if lp == (self.loss, self.penalty):
                return name
        raise AssertionError


@dataclass(eq=False)
class Coefficients:
    """omega = (b_0, ..., b_q, gamma[, mu]); ``b`` and ``gamma`` are views."""

    omega: np.ndarray
    q: int
    n_basis: int
    has_intercept: bool = False

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        expect = (self.q + 1) * self.n_basis + self.q + int(self.has_intercept)
        if self.omega.size != expect:
            raise ValueError(f"omega has {self.omega.size} entries, layout needs {expect}")

    @property
    def q_n(self) -> int:
        return (self.q + 1) * self.n_basis

    @property
    def b(self) -> np.ndarray:
        return self.omega[:self.q_n].reshape(self.q + 1, self.n_basis)

    @property
    def gamma(self) -> np.ndarray:
        return self.omega[self.q_n:self.q_n + self.q]

    @property
    def intercept(self) -> float | None:
        return float(self.omega[-1]) if self.has_intercept else None

    def copy(self) -> "Coefficients":
        return Coefficients(self.omega.copy(), self.q, self.n_basis, self.has_intercept)


@dataclass(eq=False)
class FitResult:
    coeffs: Coefficients
    spec: BasisSpec
    options: FitOptions
    config: PenaltyConfig
    iterations: int
    converged: bool
    objective_trace: list[float]
    surrogate_trace: list[float]
    interval_masks: np.ndarray
    halvings: int = 0
    raw_omega: np.ndarray | None = field(default=None, repr=False)

    def hierarchy_violations(self) -> int:
        return hierarchy_violations(self.interval_masks)


def hierarchy_violations(masks: np.ndarray) -> int:
    """Intervals where some interaction is nonzero but the main effect is null."""
    masks = np.asarray(masks, dtype=bool)
    if masks.shape[0] < 2:
        return 0
    return int(np.sum(masks[0] & np.any(~masks[1:], axis=0)))


def check_loss(u, tau: float):
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


def perturbed_check_loss(u, tau: float, rho: float):
    """Check loss minus (rho/2) log(rho + |u|); the quadratic majorizer touches
    this function at its expansion point."""
    u = np.asarray(u, dtype=float)
    return check_loss(u, tau) - 0.5 * rho * np.log(rho + np.abs(u))


def majorizer_constants(r_prev, tau: float, rho: float) -> np.ndarray:
    r_prev = np.asarray(r_prev, dtype=float)
    return (4.0 * perturbed_check_loss(r_prev, tau, rho)
            - r_prev ** 2 / (rho + np.abs(r_prev)) - (4 * tau - 2) * r_prev)


def majorizer(r, r_prev, tau: float, rho: float) -> float:
    """(1/n) sum 1/4 (r^2/(rho+|r_prev|) + (4 tau - 2) r + c), with c chosen
    per observation so that it equals the perturbed check loss at r_prev."""
    r = np.asarray(r, dtype=float)
    r_prev = np.asarray(r_prev, dtype=float)
    if r.shape != r_prev.shape:
        raise ValueError("residual vectors differ in length")
    c = majorizer_constants(r_prev, tau, rho)
    return float(np.mean(0.25 * (r ** 2 / (rho + np.abs(r_prev)) + (4 * tau - 2) * r + c)))


def _solve_spd(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    # symmetric diagonal scaling keeps Cholesky usable when 1/(rho+|r|) spans many decades
    d = np.sqrt(np.abs(np.diag(H)))
    d[d == 0] = 1.0
    Hs = H / d[:, None] / d[None, :]
    gs = g / d
    try:
        # collinear functional designs routinely trip scipy's rcond warning
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            return scipy.linalg.solve(Hs, gs, assume_a="pos", check_finite=False) / d
    except (np.linalg.LinAlgError, ValueError):
        pass
    ridge = 1e-10 * np.trace(Hs) / Hs.shape[0]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            return scipy.linalg.solve(Hs + ridge * np.eye(Hs.shape[0]), gs, assume_a="sym",
                                      check_finite=False) / d
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError("Gauss-Newton system is singular after ridge repair") from exc


def padded_roughness(mats: PenaltyMatrices, q: int, d_n: int) -> np.ndarray:
    nb = mats.spec.n_basis
    out = np.zeros((d_n, d_n))
    for k in range(q + 1):
        out[k * nb:(k + 1) * nb, k * nb:(k + 1) * nb] = mats.roughness
    return out


def newton_step(phi: np.ndarray, omega, r_prev: np.ndarray, weights: LqaWeights | np.ndarray,
                v_tilde: np.ndarray, tau: float, rho: float, eta: float,
                loss: str = "quantile") -> np.ndarray:
    """Gauss-Newton direction minimizing the quadratic surrogate at ``omega``.

    ``weights`` is either an ``LqaWeights`` or an already padded matrix.
    For the quantile loss the residuals used in the gradient are those at
    ``omega``, which coincide with ``r_prev`` inside the solver.
    """
    om = omega.omega if isinstance(omega, Coefficients) else np.asarray(omega, dtype=float)
    n, d_n = phi.shape
    Wt = weights.padded(d_n) if isinstance(weights, LqaWeights) else np.asarray(weights)
    pen = Wt + eta * v_tilde
    if loss == "quantile":
        rw = 1.0 / (rho + np.abs(r_prev))
        r = r_prev
        v = 1.0 - 2.0 * tau - r * rw
        H = phi.T @ (phi * rw[:, None]) + 4 * n * pen
        g = phi.T @ v + 4 * n * (pen @ om)
    elif loss == "ls":
        H = phi.T @ phi + n * pen
        g = -(phi.T @ r_prev) + n * (pen @ om)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return -_solve_spd(0.5 * (H + H.T), g)


def _descent_value(omega, phi, y, mats, cfg, opts, q, v_tilde) -> float:
    r = y - phi @ omega
    if opts.loss == "quantile":
        fit_term = float(np.mean(perturbed_check_loss(r, opts.tau, opts.rho_perturb)))
    else:
        fit_term = float(np.mean(r ** 2))
    b = omega[:(q + 1) * mats.spec.n_basis]
    return (fit_term + penalty_value(b, cfg, mats, q, opts.penalty, floored=True)
            + cfg.eta * float(omega @ v_tilde @ omega))


def objective(omega, phi, y, mats, cfg, opts, q) -> float:
    """Discretized penalized objective: mean loss + selection penalty +
    eta * roughness."""
    omega = np.asarray(omega, dtype=float)
    r = y - phi @ omega
    fit_term = float(np.mean(check_loss(r, opts.tau))) if opts.loss == "quantile" else float(np.mean(r ** 2))
    b = omega[:(q + 1) * mats.spec.n_basis]
    return fit_term + penalty_value(b, cfg, mats, q, opts.penalty) + cfg.eta * roughness_value(b, mats, q)


def _zero_windows(mask: np.ndarray, window: int, n_basis: int) -> np.ndarray:
    """Coefficient indices covered by the masked intervals."""
    out = np.zeros(n_basis, dtype=bool)
    for l in np.flatnonzero(mask):
        out[l:l + window] = True
    return out


def null_masks(b_stack: np.ndarray, window: int) -> np.ndarray:
    """True where beta_k is identically zero on interval l (all coefficients
    of the local window vanish)."""
    m = b_stack.shape[1] - window + 1
    return np.array([[not np.any(bk[l:l + window]) for l in range(m)] for bk in b_stack])


def threshold(omega: np.ndarray, mats: PenaltyMatrices, q: int, cutoff: float,
              mode: str = "group") -> np.ndarray:
    """Hard-threshold the converged estimate.

    ``group``: zero every coefficient window of intervals whose stacked norm is
    below ``cutoff``, then interaction windows (k >= 1) whose own norm is below
    it, and finally interaction windows on intervals where the main effect is
    null. ``element``: zero entries of omega below ``cutoff`` in magnitude.
    """
    out = omega.copy()
    if cutoff <= 0:
        return out
    if mode == "element":
        out[np.abs(out) < cutoff] = 0.0
        return out
    nb, w = mats.spec.n_basis, mats.window
    bs = out[:(q + 1) * nb].reshape(q + 1, nb)
    norms = interval_norms(bs, mats)
    full = np.sqrt(np.sum(norms ** 2, axis=0))
    bs[:, _zero_windows(full < cutoff, w, nb)] = 0.0
    for k in range(1, q + 1):
        bs[k, _zero_windows(norms[k] < cutoff, w, nb)] = 0.0
    main_null = null_masks(bs[:1], w)[0]
    if q and np.any(main_null):
        bs[1:, _zero_windows(main_null, w, nb)] = 0.0
    return out


def ridge_start(phi: np.ndarray, y: np.ndarray, v_tilde: np.ndarray, eta: float) -> np.ndarray:
    n = phi.shape[0]
    return _solve_spd(phi.T @ phi + n * eta * v_tilde, phi.T @ y)


def fit(design: DesignMatrices, y, spec: BasisSpec, cfg: PenaltyConfig,
        opts: FitOptions = FitOptions(), mats: PenaltyMatrices | None = None,
        omega0: np.ndarray | None = None) -> FitResult:
    """Minimize the penalized objective from a ridge start.

    Iterates full Gauss-Newton steps on the surrogate (halved when the descent
    function would increase) until the step norm drops below ``conv_tol``,
    then thresholds. Non-convergence is reported, not raised.
    """
    y = np.asarray(y, dtype=float).ravel()
    phi = design.phi
    n, d_n = phi.shape
    if y.size != n:
        raise ValueError(f"response has {y.size} entries, design has {n} rows")
    if design.n_basis != spec.n_basis:
        raise ValueError(f"design built for {design.n_basis} basis functions, spec has {spec.n_basis}")
    mats = mats or penalty_matrices(spec)
    q = design.q
    v_tilde = padded_roughness(mats, q, d_n)
    q_n = (q + 1) * spec.n_basis

    omega = ridge_start(phi, y, v_tilde, cfg.eta) if omega0 is None else np.array(omega0, dtype=float)
    args = (phi, y, mats, cfg, opts, q)
    obj_trace = [objective(omega, *args)]
    cur = _descent_value(omega, *args, v_tilde)
    sur_trace = [cur]
    converged = False
    halvings = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        r = y - phi @ omega
        W = lqa_weights(omega[:q_n], cfg, mats, q, opts.penalty)
        delta = newton_step(phi, omega, r, W, v_tilde, opts.tau, opts.rho_perturb, cfg.eta, opts.loss)
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            cand = omega + step * delta
            val = _descent_value(cand, *args, v_tilde)
            if val <= cur:
                break
            step *= 0.5
            halvings += 1
        else:
            # no decrease available along the Gauss-Newton direction
            converged = bool(np.linalg.norm(delta) < opts.conv_tol)
            break
        moved = np.linalg.norm(cand - omega)
        omega, cur = cand, val
        sur_trace.append(cur)
        obj_trace.append(objective(omega, *args))
        if moved < opts.conv_tol:
            converged = True
            break
    if not converged:
        log.debug("fit stopped after %d iterations without meeting conv_tol", it)

    final = threshold(omega, mats, q, opts.zero_threshold, opts.threshold_mode)
    coeffs = Coefficients(final, q, spec.n_basis, design.intercept)
    masks = null_masks(coeffs.b, mats.window)
    return FitResult(coeffs=coeffs, spec=spec, options=opts, config=cfg, iterations=it,
                     converged=converged, objective_trace=obj_trace, surrogate_trace=sur_trace,
                     interval_masks=masks, halvings=halvings, raw_omega=omega)


def reconstruct(result: FitResult | Coefficients, spec: BasisSpec, grid) -> np.ndarray:
    """``(q+1, len(grid))`` values of the estimated coefficient functions."""
    coeffs = result.coeffs if isinstance(result, FitResult) else result
    B = eval_basis(spec, np.atleast_1d(np.asarray(grid, dtype=float)))
    return coeffs.b @ B.T


def predict(result: FitResult | Coefficients, new_design: DesignMatrices) -> np.ndarray:
    coeffs = result.coeffs if isinstance(result, FitResult) else result
    if new_design.layout() != (coeffs.q, coeffs.n_basis, coeffs.has_intercept):
        raise ValueError(f"design layout {new_design.layout()} does not match the fitted model "
                         f"{(coeffs.q, coeffs.n_basis, coeffs.has_intercept)}")
    return new_design.phi @ coeffs.omega

