"""Planar geometry of the Tx -> RIS -> Rx path.

Delays, the sum-of-cosines parameter alpha = cos(phi) + cos(theta), Doppler
frequencies, RIS steering vectors and the analytic gradients used by the
tracker Jacobian and the Fisher information.

The angle model uses coordinate absolute values relative to the RIS array
axis, which is rotated by psi from the Tx-Rx baseline:

    cos(phi)   = ( cos(psi)|x - x_t| + sin(psi)|y - y_t| ) / |p - p_t|
    cos(theta) = (-cos(psi)|x - x_r| + sin(psi)|y - y_r| ) / |p - p_r|

Measurement synthesis and inversion both use these expressions, so they stay
consistent with each other even where the absolute values drop sign
information.

Functions named ``*_field`` accept arrays of points with shape (..., 2) and
return NaN where a point sits on an anchor; the scalar functions raise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import constants

from .errors import DegenerateGeometryError, NondifferentiableError

SPEED_OF_LIGHT = float(constants.speed_of_light)

# Distance below which a point counts as sitting on an anchor or a kink.
KINK_TOLERANCE = 1e-9

PointLike = Union["Point2", Sequence[float], np.ndarray]


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Point2 coordinates must be finite, got ({self.x}, {self.y})")

    @classmethod
    def of(cls, value: PointLike) -> "Point2":
        if isinstance(value, Point2):
            return value
        arr = np.asarray(value, dtype=float).reshape(-1)
        if arr.shape != (2,):
            raise ValueError(f"expected two coordinates, got {arr.tolist()}")
        return cls(float(arr[0]), float(arr[1]))

    def __array__(self, dtype=None, copy=None) -> np.ndarray:  # pylint: disable=unused-argument
        return np.array([self.x, self.y], dtype=dtype or float)

    def distance_to(self, other: PointLike) -> float:
        o = _vec(other)
        return float(math.hypot(self.x - o[0], self.y - o[1]))

    def as_dict(self) -> Dict[str, Any]:
        return {"x": self.x, "y": self.y}


@dataclass(frozen=True)
class Grad2:
    d_dx: float
    d_dy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.d_dx, self.d_dy])


@dataclass(frozen=True)
class Anchors:
    """Known transmitter and receiver positions."""

    tx: Point2
    receivers: Tuple[Point2, ...]

    def __post_init__(self) -> None:
        if not self.receivers:
            raise ValueError("at least one receiver is required")

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    def points(self) -> Tuple[Point2, ...]:
        return (self.tx,) + tuple(self.receivers)


@dataclass(frozen=True)
class RisPose:
    """State of one RIS at a frame epoch.

    The element spacing is d = wavelength / spacing_divisor; psi is the array
    orientation relative to the Tx-Rx baseline, optionally overridden per
    receiver by psi_per_rx.
    """

    position: Point2
    orientation_psi: float = math.pi / 6
    velocity: Tuple[float, float] = (0.0, 0.0)
    acceleration: Tuple[float, float] = (0.0, 0.0)
    num_elements: int = 4
    spacing_divisor: int = 4
    psi_per_rx: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.num_elements < 2:
            raise ValueError(f"num_elements must be >= 2, got {self.num_elements}")
        if int(self.spacing_divisor) != self.spacing_divisor or self.spacing_divisor < 4:
            raise ValueError(f"spacing_divisor must be an integer >= 4, got {self.spacing_divisor}")

    @property
    def speed(self) -> float:
        return float(math.hypot(*self.velocity))

    def element_spacing(self, wavelength_m: float) -> float:
        return wavelength_m / self.spacing_divisor

    def psi_for(self, receiver: int) -> float:
        if self.psi_per_rx is None:
            return self.orientation_psi
        return float(self.psi_per_rx[receiver])

    def as_dict(self) -> Dict[str, Any]:
        return {
            "position": [self.position.x, self.position.y],
            "psi": self.orientation_psi,
            "velocity": list(self.velocity),
            "acceleration": list(self.acceleration),
            "num_elements": self.num_elements,
            "spacing_divisor": self.spacing_divisor,
            "psi_per_rx": None if self.psi_per_rx is None else list(self.psi_per_rx),
        }


def _vec(p: PointLike) -> np.ndarray:
    return np.asarray(p, dtype=float)


def wavelength(f_c: float) -> float:
    return SPEED_OF_LIGHT / f_c


def _check_nondegenerate(p_t: np.ndarray, p_r: np.ndarray, p_k: np.ndarray) -> Tuple[float, float]:
    r_t = float(np.hypot(*(p_k - p_t)))
    r_r = float(np.hypot(*(p_k - p_r)))
    if r_t < KINK_TOLERANCE or r_r < KINK_TOLERANCE:
        raise DegenerateGeometryError()
    return r_t, r_r


def path_length_field(p_t: PointLike, p_r: PointLike, points: np.ndarray) -> np.ndarray:
    """Tx -> point -> Rx path length in meters for an array of points."""
    pts = _vec(points)
    return np.linalg.norm(pts - _vec(p_t), axis=-1) + np.linalg.norm(pts - _vec(p_r), axis=-1)


def path_length(p_t: PointLike, p_r: PointLike, p_k: PointLike) -> float:
    return float(path_length_field(p_t, p_r, _vec(p_k)))


def path_delay(p_t: PointLike, p_r: PointLike, p_k: PointLike) -> float:
    """Propagation delay of the Tx -> RIS -> Rx path in seconds."""
    return path_length(p_t, p_r, p_k) / SPEED_OF_LIGHT


def _cosines(p_t: np.ndarray, p_r: np.ndarray, pts: np.ndarray, psi) -> Tuple[np.ndarray, np.ndarray]:
    dt = pts - p_t
    dr = pts - p_r
    r_t = np.linalg.norm(dt, axis=-1)
    r_r = np.linalg.norm(dr, axis=-1)
    c_psi, s_psi = np.cos(psi), np.sin(psi)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_phi = (c_psi * np.abs(dt[..., 0]) + s_psi * np.abs(dt[..., 1])) / r_t
        cos_theta = (-c_psi * np.abs(dr[..., 0]) + s_psi * np.abs(dr[..., 1])) / r_r
    degenerate = (r_t < KINK_TOLERANCE) | (r_r < KINK_TOLERANCE)
    cos_phi = np.where(degenerate, np.nan, cos_phi)
    cos_theta = np.where(degenerate, np.nan, cos_theta)
    return cos_phi, cos_theta


def incidence_cosines(p_t: PointLike, p_r: PointLike, p_k: PointLike, psi: float) -> Tuple[float, float]:
    """Return (cos(phi), cos(theta)) of the incident and departing rays."""
    pt, pr, pk = _vec(p_t), _vec(p_r), _vec(p_k)
    _check_nondegenerate(pt, pr, pk)
    cos_phi, cos_theta = _cosines(pt, pr, pk, psi)
    return float(cos_phi), float(cos_theta)


def alpha_field(p_t: PointLike, p_r: PointLike, points: np.ndarray, psi: float) -> np.ndarray:
    cos_phi, cos_theta = _cosines(_vec(p_t), _vec(p_r), _vec(points), psi)
    return cos_phi + cos_theta


def sum_cosines_alpha(p_t: PointLike, p_r: PointLike, p_k: PointLike, psi: float) -> float:
    """alpha = cos(phi) + cos(theta), always within [-2, 2]."""
    cos_phi, cos_theta = incidence_cosines(p_t, p_r, p_k, psi)
    return cos_phi + cos_theta


def doppler_freq(alpha: float, speed: float, f_c: float) -> float:
    """Doppler shift of the RIS path: speed * alpha * f_c / c."""
    if speed < 0:
        raise ValueError(f"speed must be >= 0, got {speed}")
    return speed * alpha * f_c / SPEED_OF_LIGHT


def steering_vector(cos_angle: float, num_elements: int, spacing: float, wavelength_m: float) -> np.ndarray:
    """Uniform linear array response; element 0 is exactly 1."""
    if num_elements < 1:
        raise ValueError(f"num_elements must be >= 1, got {num_elements}")
    m = np.arange(num_elements)
    return np.exp(1j * 2.0 * np.pi / wavelength_m * m * spacing * cos_angle)


def partial_path_length(p_t: PointLike, p_r: PointLike, p_k: PointLike) -> Grad2:
    """Gradient of the path length (meters per meter) w.r.t. the RIS position."""
    pt, pr, pk = _vec(p_t), _vec(p_r), _vec(p_k)
    r_t, r_r = _check_nondegenerate(pt, pr, pk)
    g = (pk - pt) / r_t + (pk - pr) / r_r
    return Grad2(float(g[0]), float(g[1]))


def partial_tau(p_t: PointLike, p_r: PointLike, p_k: PointLike) -> Grad2:
    g = partial_path_length(p_t, p_r, p_k)
    return Grad2(g.d_dx / SPEED_OF_LIGHT, g.d_dy / SPEED_OF_LIGHT)


def _abs_ratio_jacobian(d: np.ndarray, r: float) -> np.ndarray:
    # J[i, j] = d(|d_i| / r) / dp_j
    jac = -np.outer(np.abs(d), d) / r**3
    jac[np.diag_indices(2)] += np.sign(d) / r
    return jac


def partial_alpha(p_t: PointLike, p_r: PointLike, p_k: PointLike, psi: float) -> Grad2:
    """Analytic gradient of sum_cosines_alpha w.r.t. the RIS position."""
    pt, pr, pk = _vec(p_t), _vec(p_r), _vec(p_k)
    r_t, r_r = _check_nondegenerate(pt, pr, pk)
    dt = pk - pt
    dr = pk - pr
    if np.any(np.abs(dt) < KINK_TOLERANCE) or np.any(np.abs(dr) < KINK_TOLERANCE):
        raise NondifferentiableError()
    j_t = _abs_ratio_jacobian(dt, r_t)
    j_r = _abs_ratio_jacobian(dr, r_r)
    grad = math.cos(psi) * (j_t[0] - j_r[0]) + math.sin(psi) * (j_t[1] + j_r[1])
    return Grad2(float(grad[0]), float(grad[1]))
