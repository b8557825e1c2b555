"""Least-squares RIS localization from path-length and alpha measurements.

Minimizes, for one RIS,

    sum_r  w_xi,r * (|p - p_t| + |p - p_r| - xi_r)^2 + w_alpha,r * (alpha_r(p) - alpha_hat_r)^2

with a coarse grid scan followed by Nelder-Mead refinement from the best
cells. When every measurement carries variances the weights are their
inverses (times SolverConfig.weights); otherwise SolverConfig.weights are used
as they are. The alpha model has absolute-value kinks, so no gradients are
used. The ToA-only baseline drops the alpha terms.

An estimate is rejected (LocalizationResult.rejected names why) when it lies
more than one grid step outside the search region, or when its
inverse-variance residual fails a chi-square test at gate_pvalue.

The measurement model is mirror-symmetric about the Tx-Rx line when all
anchors share y = 0, so the search region should cover one half-plane only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, stats

from .errors import DegenerateGeometryError, EstimationError
from .estimator import Measurement
from .geometry import Anchors, Point2, PointLike, _vec, alpha_field, path_length_field

logger = logging.getLogger(__name__)

PsiLike = Union[float, Sequence[float]]


@dataclass(frozen=True)
class SolverConfig:
    x_bounds: Tuple[float, float] = (0.0, 16.0)
    y_bounds: Tuple[float, float] = (1.0, 14.0)
    grid_step: float = 0.25
    refine_max_iters: int = 400
    refine_tol: float = 1e-4
    restarts: int = 3
    weights: Tuple[float, float] = (1.0, 1.0)
    # 0 turns the residual test off.
    gate_pvalue: float = 1e-6

    def __post_init__(self) -> None:
        if self.grid_step <= 0:
            raise ValueError(f"grid_step must be > 0, got {self.grid_step}")
        if self.refine_tol <= 0:
            raise ValueError(f"refine_tol must be > 0, got {self.refine_tol}")
        if self.restarts < 1 or self.refine_max_iters < 1:
            raise ValueError("restarts and refine_max_iters must be >= 1")
        if self.x_bounds[1] <= self.x_bounds[0] or self.y_bounds[1] <= self.y_bounds[0]:
            raise ValueError(f"empty search region {self.x_bounds} x {self.y_bounds}")
        if min(self.weights) < 0:
            raise ValueError(f"weights must be >= 0, got {self.weights}")
        if not 0.0 <= self.gate_pvalue < 1.0:
            raise ValueError(f"gate_pvalue must be in [0, 1), got {self.gate_pvalue}")

    def grid(self) -> np.ndarray:
        """Grid points, shape (P, 2)."""
        xs = np.arange(self.x_bounds[0], self.x_bounds[1] + 0.5 * self.grid_step, self.grid_step)
        ys = np.arange(self.y_bounds[0], self.y_bounds[1] + 0.5 * self.grid_step, self.grid_step)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def contains(self, p: PointLike, margin: float = 0.0) -> bool:
        x, y = _vec(p)
        return (self.x_bounds[0] - margin <= x <= self.x_bounds[1] + margin
                and self.y_bounds[0] - margin <= y <= self.y_bounds[1] + margin)


@dataclass(frozen=True)
class LocalizationResult:
    p_hat: Point2
    objective: float
    iterations: int
    converged: bool
    message: str = ""
    # Inverse-variance residual at p_hat; nan when the measurements carry no variances.
    chi2: float = float("nan")
    rejected: str = ""

    @property
    def accepted(self) -> bool:
        return not self.rejected

    def as_dict(self) -> Dict[str, Any]:
        return {
            "x_hat": self.p_hat.x,
            "y_hat": self.p_hat.y,
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "chi2": self.chi2,
            "rejected": self.rejected,
        }


@dataclass(frozen=True)
class _Terms:
    xi: np.ndarray
    alpha: Optional[np.ndarray]
    w_xi: np.ndarray
    w_alpha: np.ndarray
    # Inverse variances, when every measurement has them.
    inv_var: Optional[Tuple[np.ndarray, np.ndarray]]


def _psi_vector(psi: PsiLike, n_rx: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(psi, dtype=float), (n_rx,))


def _objective_field(points: np.ndarray, terms: _Terms, anchors: Anchors, psi: np.ndarray) -> np.ndarray:
    total = np.zeros(points.shape[:-1])
    for r, p_r in enumerate(anchors.receivers):
        total = total + terms.w_xi[r] * (path_length_field(anchors.tx, p_r, points) - terms.xi[r]) ** 2
        if terms.alpha is not None:
            total = total + terms.w_alpha[r] * (alpha_field(anchors.tx, p_r, points, psi[r]) - terms.alpha[r]) ** 2
    return np.where(np.isfinite(total), total, np.inf)


def _usable(var: Optional[float]) -> bool:
    return var is not None and math.isfinite(var) and var > 0


def _terms(meas: Sequence[Measurement], anchors: Anchors, weights: Tuple[float, float], *,
           use_alpha: bool = True) -> _Terms:
    if not meas:
        raise EstimationError("no measurements to localize from")
    if len(meas) != anchors.n_receivers:
        raise EstimationError(f"{len(meas)} measurements for {anchors.n_receivers} receivers")
    xi = np.array([m.xi_hat for m in meas])
    alpha = np.array([m.alpha_hat for m in meas]) if use_alpha else None
    n = len(meas)
    if all(_usable(m.xi_var) for m in meas) and (not use_alpha or all(_usable(m.alpha_var) for m in meas)):
        inv_xi = np.array([1.0 / m.xi_var for m in meas])
        inv_alpha = np.array([1.0 / m.alpha_var for m in meas]) if use_alpha else np.zeros(n)
        return _Terms(xi, alpha, weights[0] * inv_xi, weights[1] * inv_alpha, (inv_xi, inv_alpha))
    return _Terms(xi, alpha, np.full(n, weights[0]), np.full(n, weights[1]), None)


def objective(p: PointLike, meas: Sequence[Measurement], anchors: Anchors, psi: PsiLike,
              weights: Tuple[float, float] = (1.0, 1.0)) -> float:
    """Weighted least-squares cost at p; raises at an anchor."""
    terms = _terms(meas, anchors, weights)
    value = float(_objective_field(_vec(p), terms, anchors, _psi_vector(psi, len(terms.xi))))
    if not np.isfinite(value):
        raise DegenerateGeometryError()
    return value


def _chi2(p: np.ndarray, terms: _Terms, anchors: Anchors, psi: np.ndarray) -> Tuple[float, int]:
    """Inverse-variance residual at p and its degrees of freedom."""
    if terms.inv_var is None:
        return float("nan"), 0
    unit = _Terms(terms.xi, terms.alpha, terms.inv_var[0], terms.inv_var[1], terms.inv_var)
    n_terms = len(terms.xi) * (1 if terms.alpha is None else 2)
    return float(_objective_field(p, unit, anchors, psi)), n_terms - 2


def _solve(terms: _Terms, anchors: Anchors, psi: np.ndarray, cfg: SolverConfig) -> LocalizationResult:
    # Rescale so the largest weight is 1; the minimizer does not move and fatol keeps its meaning.
    scale = float(np.max(terms.w_xi if terms.alpha is None else np.concatenate([terms.w_xi, terms.w_alpha])))
    if scale <= 0:
        raise EstimationError("every localization weight is zero")
    scaled = _Terms(terms.xi, terms.alpha, terms.w_xi / scale, terms.w_alpha / scale, terms.inv_var)

    grid = cfg.grid()
    values = _objective_field(grid, scaled, anchors, psi)
    finite = np.flatnonzero(np.isfinite(values))
    if finite.size == 0:
        raise EstimationError("no finite-objective point in the search region")
    order = finite[np.argsort(values[finite], kind="stable")]
    starts = grid[order[: cfg.restarts]]

    def fun(p: np.ndarray) -> float:
        return float(_objective_field(p, scaled, anchors, psi))

    best_p, best_fun, best_nit, best_ok, best_msg = grid[order[0]], float(values[order[0]]), 0, False, "grid"
    step = cfg.grid_step
    for start in starts:
        simplex = np.array([start, start + [step, 0.0], start + [0.0, step]])
        res = optimize.minimize(
            fun,
            start,
            method="Nelder-Mead",
            options={
                "maxiter": cfg.refine_max_iters,
                "xatol": 0.1 * cfg.refine_tol,
                "fatol": 1e-12,
                "initial_simplex": simplex,
            },
        )
        if np.isfinite(res.fun) and res.fun <= best_fun:
            best_p, best_fun, best_nit, best_ok, best_msg = res.x, float(res.fun), int(res.nit), bool(res.success), \
                str(res.message)

    chi2, dof = _chi2(np.asarray(best_p, dtype=float), terms, anchors, psi)
    rejected = ""
    if not cfg.contains(best_p, margin=cfg.grid_step):
        rejected = "outside search region"
    elif cfg.gate_pvalue > 0 and dof >= 1 and chi2 > stats.chi2.isf(cfg.gate_pvalue, dof):
        rejected = f"residual test failed (chi2 {chi2:.3g} with {dof} dof)"
    if rejected:
        logger.info("estimate (%.3f, %.3f) rejected: %s", best_p[0], best_p[1], rejected)
    logger.debug("localized at (%.3f, %.3f), objective %.3e", best_p[0], best_p[1], best_fun * scale)
    return LocalizationResult(Point2.of(best_p), best_fun * scale, best_nit, best_ok, best_msg, chi2, rejected)


def localize(meas: Sequence[Measurement], anchors: Anchors, psi: PsiLike,
             cfg: SolverConfig = SolverConfig()) -> LocalizationResult:
    """Locate one RIS from its per-receiver path lengths and alphas."""
    terms = _terms(meas, anchors, cfg.weights)
    return _solve(terms, anchors, _psi_vector(psi, len(terms.xi)), cfg)


def localize_toa_only(meas: Sequence[Measurement], anchors: Anchors,
                      cfg: SolverConfig = SolverConfig()) -> LocalizationResult:
    """Baseline on path lengths only; one receiver leaves a whole ellipse and is flagged."""
    terms = _terms(meas, anchors, cfg.weights, use_alpha=False)
    result = _solve(terms, anchors, np.zeros(len(terms.xi)), cfg)
    if anchors.n_receivers < 2:
        return LocalizationResult(result.p_hat, result.objective, result.iterations, False,
                                  "ambiguous: a single receiver constrains the RIS to an ellipse", result.chi2,
                                  result.rejected)
    return result
