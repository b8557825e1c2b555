"""Synthesis of received OFDM frames.

For receiver n_r and global slot t_bar the received N-vector is

    sum_k sqrt(P_sc) g_k d(tau_k) a(theta_k)^T Phi_k(t_bar) a(phi_k) exp(j 2 pi f_d,k T_d t_bar)
  + sum_l sqrt(P_sc) g'_l d(tau'_l)
  + white circular Gaussian noise of variance delta_f * N0

with P_sc = E_s * delta_f the power of one subcarrier, so the per-entry SNR
of a unit-gain path is E_s / N0 whatever the subcarrier spacing. Here l = 0
is the direct Tx -> Rx path and l >= 1 are static point scatterers. RIS
states are frozen at the frame epoch; Doppler only enters as the per-slot
phase ramp.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple, Union

import numpy as np

from .errors import DegenerateGeometryError, ScheduleError
from .geometry import (
    SPEED_OF_LIGHT,
    Anchors,
    Point2,
    PointLike,
    RisPose,
    _vec,
    doppler_freq,
    incidence_cosines,
    path_length,
    steering_vector,
    wavelength,
)
from .phase_codebook import PhaseSchedule, slot_diagonals

logger = logging.getLogger(__name__)

RngLike = Union[None, int, np.random.Generator]


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0) * 1e-3


def watts_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w / 1e-3)


@dataclass(frozen=True)
class OfdmParams:
    """OFDM numerology and link budget.

    symbol_energy is E_s per subcarrier symbol (J) and noise_psd is N0 (W/Hz).
    A subcarrier carries E_s * delta_f watts against delta_f * N0 of noise, and
    the total transmit power is N * E_s * delta_f.
    """

    n_subcarriers: int = 512
    delta_f: float = 120e3
    f_c: float = 6e9
    symbol_energy: float = 1.0 / (512 * 120e3)
    noise_psd: float = dbm_to_watts(-174.0)
    cp_fraction: float = 0.25
    T: int = 16
    n_intervals: int = 8

    def __post_init__(self) -> None:
        if self.n_subcarriers < 1:
            raise ValueError(f"n_subcarriers must be >= 1, got {self.n_subcarriers}")
        if self.delta_f <= 0:
            raise ValueError(f"delta_f must be > 0, got {self.delta_f}")
        if self.f_c <= 0:
            raise ValueError(f"f_c must be > 0, got {self.f_c}")
        if self.symbol_energy < 0 or self.noise_psd < 0:
            raise ValueError("symbol_energy and noise_psd must be >= 0")
        if self.cp_fraction < 0:
            raise ValueError(f"cp_fraction must be >= 0, got {self.cp_fraction}")

    @classmethod
    def from_power(cls, *, power_dbm: float = 30.0, n0_dbm_hz: float = -174.0,
                   n_subcarriers: int = 512, delta_f: float = 120e3, **kwargs: Any) -> "OfdmParams":
        """Build from total transmit power (dBm) and noise density (dBm/Hz)."""
        return cls(
            n_subcarriers=n_subcarriers,
            delta_f=delta_f,
            symbol_energy=dbm_to_watts(power_dbm) / (n_subcarriers * delta_f),
            noise_psd=dbm_to_watts(n0_dbm_hz),
            **kwargs,
        )

    @property
    def wavelength(self) -> float:
        return wavelength(self.f_c)

    @property
    def symbol_duration(self) -> float:
        """T_d: OFDM symbol plus cyclic prefix."""
        return (1.0 + self.cp_fraction) / self.delta_f

    @property
    def noise_variance(self) -> float:
        return self.delta_f * self.noise_psd

    @property
    def subcarrier_power(self) -> float:
        """P_sc = E_s * delta_f (W)."""
        return self.symbol_energy * self.delta_f

    @property
    def snr_per_entry(self) -> float:
        """E_s / N0 of a unit-gain path."""
        return self.subcarrier_power / self.noise_variance if self.noise_variance > 0 else math.inf

    @property
    def total_slots(self) -> int:
        return self.T * self.n_intervals

    @property
    def power_dbm(self) -> float:
        return watts_to_dbm(self.n_subcarriers * self.symbol_energy * self.delta_f)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "n_subcarriers": self.n_subcarriers,
            "delta_f": self.delta_f,
            "f_c": self.f_c,
            "symbol_energy": self.symbol_energy,
            "noise_psd": self.noise_psd,
            "cp_fraction": self.cp_fraction,
            "T": self.T,
            "n_intervals": self.n_intervals,
        }


@dataclass(frozen=True)
class Scatterer:
    position: Point2
    reflection_gain: float = 0.3

    def __post_init__(self) -> None:
        if self.reflection_gain < 0:
            raise ValueError(f"reflection_gain must be >= 0, got {self.reflection_gain}")


@dataclass(frozen=True)
class Scenario:
    """Anchors, RIS states and static scatterers of one frame epoch.

    ris_gain_db scales the free-space cascade amplitude of every RIS path
    (array/aperture gain of the surface, 0 dB for a bare free-space cascade).
    direct_path toggles the l = 0 term.
    """

    tx: Point2
    receivers: Tuple[Point2, ...]
    ris: Tuple[RisPose, ...]
    scatterers: Tuple[Scatterer, ...] = ()
    ris_gain_db: float = 0.0
    direct_path: bool = True

    def __post_init__(self) -> None:
        if not self.receivers:
            raise ValueError("scenario needs at least one receiver")

    @property
    def anchors(self) -> Anchors:
        return Anchors(self.tx, tuple(self.receivers))

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)


@dataclass(frozen=True)
class RisPath:
    """True parameters of the Tx -> RIS k -> Rx n_r path."""

    tau: float
    alpha: float
    cos_phi: float
    cos_theta: float
    f_d: float
    gain: float


@dataclass
class RxFrameSet:
    """One N x (N_T * T) complex observation matrix per receiver."""

    frames: Tuple[np.ndarray, ...]
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_receivers(self) -> int:
        return len(self.frames)

    def check(self, ofdm: OfdmParams) -> None:
        expected = (ofdm.n_subcarriers, ofdm.total_slots)
        for i, y in enumerate(self.frames):
            if y.shape != expected:
                raise ScheduleError(f"receiver {i} frame has shape {y.shape}, expected {expected}")


def delay_vector(tau: float, N: int, delta_f: float) -> np.ndarray:
    """d(tau): entry n is exp(j 2 pi n delta_f tau)."""
    return np.exp(1j * 2.0 * np.pi * np.arange(N) * delta_f * tau)


def cascaded_gain(p_t: PointLike, p_r: PointLike, p_k: PointLike, wavelength_m: float) -> float:
    """Free-space two-hop amplitude lambda^2 / ((4 pi)^2 d_tk d_kr)."""
    d_tk = float(np.linalg.norm(_vec(p_k) - _vec(p_t)))
    d_kr = float(np.linalg.norm(_vec(p_k) - _vec(p_r)))
    if d_tk <= 0.0 or d_kr <= 0.0:
        raise DegenerateGeometryError("zero distance in cascaded gain")
    return wavelength_m**2 / ((4.0 * math.pi) ** 2 * d_tk * d_kr)


def direct_gain(p_t: PointLike, p_r: PointLike, wavelength_m: float) -> float:
    d = float(np.linalg.norm(_vec(p_r) - _vec(p_t)))
    if d <= 0.0:
        raise DegenerateGeometryError("zero distance in direct path")
    return wavelength_m / (4.0 * math.pi * d)


def ris_path(scenario: Scenario, ofdm: OfdmParams, k: int, n_r: int) -> RisPath:
    ris = scenario.ris[k]
    p_r = scenario.receivers[n_r]
    cos_phi, cos_theta = incidence_cosines(scenario.tx, p_r, ris.position, ris.psi_for(n_r))
    alpha = cos_phi + cos_theta
    gain = cascaded_gain(scenario.tx, p_r, ris.position, ofdm.wavelength) * 10.0 ** (scenario.ris_gain_db / 20.0)
    return RisPath(
        tau=path_length(scenario.tx, p_r, ris.position) / SPEED_OF_LIGHT,
        alpha=alpha,
        cos_phi=cos_phi,
        cos_theta=cos_theta,
        f_d=doppler_freq(alpha, ris.speed, ofdm.f_c),
        gain=gain,
    )


def _check_dimensions(scenario: Scenario, ofdm: OfdmParams, schedule: PhaseSchedule) -> None:
    if len(scenario.ris) > schedule.n_ris:
        raise ScheduleError(f"scenario has {len(scenario.ris)} RISs but schedule serves {schedule.n_ris}")
    if schedule.T != ofdm.T or schedule.n_intervals != ofdm.n_intervals:
        raise ScheduleError(
            f"schedule is {schedule.n_intervals}x{schedule.T} slots, OFDM params want "
            f"{ofdm.n_intervals}x{ofdm.T}"
        )
    for k, ris in enumerate(scenario.ris):
        if ris.num_elements != schedule.num_elements:
            raise ScheduleError(
                f"RIS {k} has {ris.num_elements} elements, schedule has {schedule.num_elements}"
            )


def ris_signal(scenario: Scenario, ofdm: OfdmParams, schedule: PhaseSchedule, k: int, n_r: int) -> np.ndarray:
    """Noiseless N x (N_T * T) contribution of RIS k at receiver n_r."""
    ris = scenario.ris[k]
    path = ris_path(scenario, ofdm, k, n_r)
    lam = ofdm.wavelength
    spacing = ris.element_spacing(lam)
    a_phi = steering_vector(path.cos_phi, ris.num_elements, spacing, lam)
    a_theta = steering_vector(path.cos_theta, ris.num_elements, spacing, lam)
    array_gain = slot_diagonals(schedule, k) @ (a_theta * a_phi)
    slots = np.arange(schedule.total_slots)
    doppler = np.exp(1j * 2.0 * np.pi * path.f_d * ofdm.symbol_duration * slots)
    d = delay_vector(path.tau, ofdm.n_subcarriers, ofdm.delta_f)
    return math.sqrt(ofdm.subcarrier_power) * path.gain * np.outer(d, array_gain * doppler)


def static_signal(scenario: Scenario, ofdm: OfdmParams, n_r: int) -> np.ndarray:
    """Direct path plus scatterers at receiver n_r, one N-vector held over all slots."""
    p_r = scenario.receivers[n_r]
    lam = ofdm.wavelength
    out = np.zeros(ofdm.n_subcarriers, dtype=complex)
    if scenario.direct_path:
        tau0 = float(np.linalg.norm(_vec(p_r) - _vec(scenario.tx))) / SPEED_OF_LIGHT
        out += direct_gain(scenario.tx, p_r, lam) * delay_vector(tau0, ofdm.n_subcarriers, ofdm.delta_f)
    for sc in scenario.scatterers:
        g = sc.reflection_gain * cascaded_gain(scenario.tx, p_r, sc.position, lam)
        tau = path_length(scenario.tx, p_r, sc.position) / SPEED_OF_LIGHT
        out += g * delay_vector(tau, ofdm.n_subcarriers, ofdm.delta_f)
    return math.sqrt(ofdm.subcarrier_power) * out


def simulate_frames(scenario: Scenario, ofdm: OfdmParams, schedule: PhaseSchedule, rng: RngLike = None,
                    *, include_noise: bool = True) -> RxFrameSet:
    """Received frames of every receiver for one epoch.

    rng is a seed or a numpy Generator; the same seed gives the same frames.
    """
    _check_dimensions(scenario, ofdm, schedule)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    shape = (ofdm.n_subcarriers, ofdm.total_slots)
    sigma = math.sqrt(ofdm.noise_variance / 2.0)

    frames = []
    for n_r in range(scenario.n_receivers):
        y = np.zeros(shape, dtype=complex)
        for k in range(len(scenario.ris)):
            y += ris_signal(scenario, ofdm, schedule, k, n_r)
        y += static_signal(scenario, ofdm, n_r)[:, None]
        if include_noise:
            y += sigma * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))
        frames.append(y)
    logger.debug("simulated %d frames of shape %s", len(frames), shape)
    return RxFrameSet(tuple(frames), meta={"n_ris": len(scenario.ris)})
