"""Extended Kalman filter for one RIS.

State x = [x, y, vx, vy] with constant-acceleration dynamics

    x[n | n-1] = A x[n-1 | n-1] + B a,   M[n | n-1] = A M A^T + Q

and measurement nu = (xi_1 .. xi_R, alpha_1 .. alpha_R) from the estimator.
The measurement Jacobian carries the position partials in the first two
columns; by default the velocity columns are T_s times the position columns,
as the filter was originally formulated. velocity_coupling=False zeroes them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .channel_sim import OfdmParams, RxFrameSet
from .errors import (
    DegenerateGeometryError,
    EstimationError,
    NondifferentiableError,
    SingularMatrixError,
)
from .estimator import EstimatorConfig, Measurement, measure_ris
from .geometry import SPEED_OF_LIGHT, Anchors, partial_alpha, partial_path_length, path_length, sum_cosines_alpha
from .localizer import LocalizationResult, PsiLike, _psi_vector
from .phase_codebook import PhaseSchedule

logger = logging.getLogger(__name__)


def _check_symmetric_psd(name: str, mat: np.ndarray, tol: float = 1e-9) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, atol=tol * max(1.0, float(np.max(np.abs(mat))))):
        raise ValueError(f"{name} must be symmetric")
    if mat.size and float(np.min(np.linalg.eigvalsh(mat))) < -tol * max(1.0, float(np.max(np.abs(mat)))):
        raise ValueError(f"{name} must be positive semidefinite")


@dataclass(frozen=True)
class EkfConfig:
    sample_period: float
    acceleration: Tuple[float, float]
    process_noise: np.ndarray
    measurement_noise: np.ndarray
    velocity_coupling: bool = True

    def __post_init__(self) -> None:
        if self.sample_period <= 0:
            raise ValueError(f"sample_period must be > 0, got {self.sample_period}")
        _check_symmetric_psd("Q", np.asarray(self.process_noise, dtype=float))
        _check_symmetric_psd("C", np.asarray(self.measurement_noise, dtype=float))
        if np.shape(self.process_noise) != (4, 4):
            raise ValueError(f"Q must be 4x4, got {np.shape(self.process_noise)}")


@dataclass(frozen=True)
class EkfState:
    x: np.ndarray
    cov: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return self.x[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[2:]

    @classmethod
    def from_localization(cls, result: LocalizationResult, *, position_var: float = 1.0,
                          velocity_var: float = 100.0) -> "EkfState":
        """Position from the localizer, velocity unknown."""
        x = np.array([result.p_hat.x, result.p_hat.y, 0.0, 0.0])
        return cls(x, np.diag([position_var, position_var, velocity_var, velocity_var]))


@dataclass
class TrackStep:
    step: int
    state: EkfState
    measured: bool
    innovation_norm: float = float("nan")
    measurements: Optional[List[Measurement]] = None
    note: str = ""

    def as_dict(self) -> Dict[str, Any]:
        x = self.state.x
        return {
            "step": self.step,
            "x_hat": x[0],
            "y_hat": x[1],
            "vx_hat": x[2],
            "vy_hat": x[3],
            "innovation_norm": self.innovation_norm,
            "measured": self.measured,
        }


def transition_matrices(sample_period: float) -> Tuple[np.ndarray, np.ndarray]:
    ts = sample_period
    A = np.array([[1.0, 0.0, ts, 0.0], [0.0, 1.0, 0.0, ts], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    B = np.array([[ts**2 / 2, 0.0], [0.0, ts**2 / 2], [ts, 0.0], [0.0, ts]])
    return A, B


def predict(state: EkfState, cfg: EkfConfig) -> EkfState:
    A, B = transition_matrices(cfg.sample_period)
    x = A @ state.x + B @ np.asarray(cfg.acceleration, dtype=float)
    cov = A @ state.cov @ A.T + np.asarray(cfg.process_noise, dtype=float)
    return EkfState(x, 0.5 * (cov + cov.T))


def measurement_fn(x: np.ndarray, anchors: Anchors, psi: PsiLike) -> np.ndarray:
    """h(x): path lengths to every receiver, then alphas."""
    p = x[:2]
    psis = _psi_vector(psi, anchors.n_receivers)
    xi = [path_length(anchors.tx, p_r, p) for p_r in anchors.receivers]
    alpha = [sum_cosines_alpha(anchors.tx, p_r, p, psis[r]) for r, p_r in enumerate(anchors.receivers)]
    return np.array(xi + alpha)


def jacobian_h(x: np.ndarray, anchors: Anchors, psi: PsiLike, cfg: EkfConfig) -> np.ndarray:
    p = x[:2]
    psis = _psi_vector(psi, anchors.n_receivers)
    rows = [partial_path_length(anchors.tx, p_r, p).as_array() for p_r in anchors.receivers]
    rows += [partial_alpha(anchors.tx, p_r, p, psis[r]).as_array() for r, p_r in enumerate(anchors.receivers)]
    h_pos = np.array(rows)
    h_vel = cfg.sample_period * h_pos if cfg.velocity_coupling else np.zeros_like(h_pos)
    return np.hstack([h_pos, h_vel])


def kalman_update(state: EkfState, innovation: np.ndarray, H: np.ndarray, C: np.ndarray) -> EkfState:
    """Generic Kalman correction: K = M H^T (C + H M H^T)^-1, M <- (I - K H) M."""
    M = state.cov
    S = C + H @ M @ H.T
    S = 0.5 * (S + S.T)
    try:
        factor = linalg.cho_factor(S)
        gain = linalg.cho_solve(factor, H @ M).T
    except linalg.LinAlgError as exc:
        raise SingularMatrixError("singular innovation covariance") from exc
    x = state.x + gain @ innovation
    cov = (np.eye(M.shape[0]) - gain @ H) @ M
    return EkfState(x, 0.5 * (cov + cov.T))


def update(state_pred: EkfState, nu: np.ndarray, anchors: Anchors, psi: PsiLike, cfg: EkfConfig) -> EkfState:
    innovation = np.asarray(nu, dtype=float) - measurement_fn(state_pred.x, anchors, psi)
    H = jacobian_h(state_pred.x, anchors, psi, cfg)
    return kalman_update(state_pred, innovation, H, np.asarray(cfg.measurement_noise, dtype=float))


def default_measurement_noise(n_receivers: int, delta_f: float, est_cfg: EstimatorConfig,
                              alpha_var: Union[float, Sequence[float]]) -> np.ndarray:
    """Diagonal C: uniform quantization over one delay bin for xi, given variance for alpha."""
    xi_var = (SPEED_OF_LIGHT * est_cfg.tau_bin(delta_f)) ** 2 / 12.0
    alpha = np.broadcast_to(np.asarray(alpha_var, dtype=float), (n_receivers,))
    return np.diag(np.concatenate([np.full(n_receivers, xi_var), alpha]))


def measurement_vector(meas: Sequence[Measurement]) -> np.ndarray:
    return np.array([m.xi_hat for m in meas] + [m.alpha_hat for m in meas])


def track(frames_stream: Iterable[RxFrameSet], sched: PhaseSchedule, ofdm: OfdmParams, anchors: Anchors,
          psi: PsiLike, cfg: EkfConfig, init: Union[EkfState, LocalizationResult], *, k: int = 0,
          est_cfg: EstimatorConfig = EstimatorConfig(), spacing_divisor: int = 4) -> List[TrackStep]:
    """Filter RIS k over a stream of frames.

    Returns one TrackStep per frame (plus step 0 for the initial state). A
    frame whose measurement or correction fails keeps the prediction and is
    flagged measured=False.
    """
    state = init if isinstance(init, EkfState) else EkfState.from_localization(init)
    steps = [TrackStep(0, state, measured=False, note="init")]
    for n, frames in enumerate(frames_stream, start=1):
        pred = predict(state, cfg)
        try:
            meas = measure_ris(frames, sched, ofdm, k, est_cfg, spacing_divisor)
            nu = measurement_vector(meas)
            innovation = nu - measurement_fn(pred.x, anchors, psi)
            state = update(pred, nu, anchors, psi, cfg)
            steps.append(TrackStep(n, state, True, float(np.linalg.norm(innovation)), meas))
        except (EstimationError, DegenerateGeometryError, NondifferentiableError, SingularMatrixError) as exc:
            logger.warning("step %d: update skipped (%s)", n, exc)
            state = pred
            steps.append(TrackStep(n, state, False, note=str(exc)))
    return steps
