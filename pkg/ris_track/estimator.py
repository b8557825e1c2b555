"""Per-(RIS, receiver) measurement chain.

For each receiver frame and each RIS k:

  1. cancel_scatterers: difference of the two slots of every pair, per interval.
  2. extract_ris: correlate with the RIS code gamma_k.
  3. difference_pairs: subtract consecutive intervals; only the toggled
     element survives.
  4. estimate_toa_doppler: peak of the zero-padded 2-D delay/Doppler map of
     the pair differences, forward and backward Doppler transforms resolve
     the Doppler sign. refine_delay optionally polishes the delay inside
     +-1 bin of the grid peak.
  5. compensate_and_extract + estimate_s: Doppler- and delay-compensated
     extraction, averaged over subcarriers, per interval.
  6. estimate_alpha: phase of the toggled-element term -> alpha.
  7. measurement_variances: variances of xi and alpha from the SNR of the
     toggled-element term, used to weight the localizer.

Outputs are gathered in a MeasurementSet keyed by (k, n_r), 0-based.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from .channel_sim import OfdmParams, RxFrameSet, delay_vector
from .errors import EstimationError, ScheduleError
from .geometry import SPEED_OF_LIGHT
from .phase_codebook import TOGGLED_ELEMENT, PhaseSchedule, doppler_compensated_gamma

logger = logging.getLogger(__name__)

# Caps the SNR of noiseless input so the variances stay positive.
MAX_SNR = 1e12


@dataclass(frozen=True)
class EstimatorConfig:
    n_fft_tau: int = 8192
    n_fft_doppler: int = 1024
    candidate_rows: int = 8
    refine_delay: bool = True

    def __post_init__(self) -> None:
        if self.n_fft_tau < 1 or self.n_fft_doppler < 1:
            raise ValueError("FFT sizes must be >= 1")
        if self.candidate_rows < 0:
            raise ValueError(f"candidate_rows must be >= 0, got {self.candidate_rows}")

    def tau_bin(self, delta_f: float) -> float:
        """Delay grid spacing in seconds."""
        return 1.0 / (self.n_fft_tau * delta_f)


@dataclass(frozen=True)
class Measurement:
    ris: int
    receiver: int
    tau_hat: float
    f_d_hat: float
    alpha_hat: float
    s_hat: Tuple[complex, ...]
    xi_var: Optional[float] = None
    alpha_var: Optional[float] = None

    @property
    def xi_hat(self) -> float:
        """Path length c * tau_hat in meters."""
        return SPEED_OF_LIGHT * self.tau_hat

    def as_dict(self) -> Dict[str, Any]:
        return {
            "k": self.ris,
            "receiver": self.receiver,
            "tau_hat": self.tau_hat,
            "xi_hat": self.xi_hat,
            "f_d_hat": self.f_d_hat,
            "alpha_hat": self.alpha_hat,
            "xi_var": self.xi_var,
            "alpha_var": self.alpha_var,
        }


@dataclass
class MeasurementSet:
    entries: Dict[Tuple[int, int], Measurement] = field(default_factory=dict)

    def add(self, m: Measurement) -> None:
        self.entries[(m.ris, m.receiver)] = m

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Measurement]:
        return iter(self.entries[key] for key in sorted(self.entries))

    def __getitem__(self, key: Tuple[int, int]) -> Measurement:
        return self.entries[key]

    def for_ris(self, k: int) -> List[Measurement]:
        """Measurements of RIS k ordered by receiver."""
        return [self.entries[key] for key in sorted(self.entries) if key[0] == k]

    def rows(self, trial: int) -> List[Dict[str, Any]]:
        return [{"trial": trial, **m.as_dict()} for m in self]


def cancel_scatterers(Y: np.ndarray) -> np.ndarray:
    """(Y[:, 2u] - Y[:, 2u + 1]) / 2 for every slot pair u of one interval."""
    if Y.shape[1] % 2:
        raise ScheduleError(f"interval must hold an even number of slots, got {Y.shape[1]}")
    return (Y[:, 0::2] - Y[:, 1::2]) / 2.0


def extract_ris(Y_prime: np.ndarray, gamma_k: np.ndarray) -> np.ndarray:
    """(2/T) Y' conj(gamma_k)."""
    half = Y_prime.shape[1]
    if gamma_k.shape != (half,):
        raise ScheduleError(f"code length {gamma_k.shape} does not match {half} slot pairs")
    return (Y_prime @ np.conj(gamma_k)) / half


def difference_pairs(r_by_interval: Sequence[np.ndarray]) -> List[np.ndarray]:
    """r[2n] - r[2n + 1] for every interval pair n."""
    if len(r_by_interval) % 2:
        raise ScheduleError(f"need an even number of intervals, got {len(r_by_interval)}")
    return [r_by_interval[2 * n] - r_by_interval[2 * n + 1] for n in range(len(r_by_interval) // 2)]


def _doppler_step(T_d: float, T: int) -> float:
    # Column spacing of R is two intervals: phase advance 4 pi f_d T_d T per column.
    return 2.0 * T_d * T


def estimate_toa_doppler(R: np.ndarray, delta_f: float, T_d: float, T: int,
                         cfg: EstimatorConfig = EstimatorConfig()) -> Tuple[float, float]:
    """Joint delay/Doppler grid estimate from the N x (N_T/2) matrix R.

    The delay axis is a forward transform over subcarriers; the Doppler axis is
    evaluated with a forward and an inverse transform over columns. The two
    Doppler candidates are k1 / (2 N_fd T_d T) and -k2 / (2 N_fd T_d T); the
    smaller magnitude wins. Ties in either map go to the lowest index.
    """
    if R.ndim != 2 or R.size == 0:
        raise EstimationError("empty delay/Doppler input")
    if not np.all(np.isfinite(R)):
        raise EstimationError("non-finite values in delay/Doppler input")
    n, cols = R.shape
    if cfg.n_fft_tau < n or cfg.n_fft_doppler < cols:
        raise EstimationError(
            f"FFT sizes ({cfg.n_fft_tau}, {cfg.n_fft_doppler}) smaller than data ({n}, {cols})"
        )

    A = np.fft.fft(R, n=cfg.n_fft_tau, axis=0)
    if 0 < cfg.candidate_rows < cfg.n_fft_tau:
        energy = np.sum(np.abs(A) ** 2, axis=1)
        rows = np.sort(np.argsort(-energy, kind="stable")[: cfg.candidate_rows])
    else:
        rows = np.arange(cfg.n_fft_tau)
    if not np.any(np.abs(A[rows]) > 0):
        raise EstimationError("delay/Doppler map is identically zero")

    n_fd = cfg.n_fft_doppler
    fwd = np.abs(np.fft.fft(A[rows], n=n_fd, axis=1))
    bwd = np.abs(np.fft.ifft(A[rows], n=n_fd, axis=1))
    r1, k1 = np.unravel_index(int(np.argmax(fwd)), fwd.shape)
    r2, k2 = np.unravel_index(int(np.argmax(bwd)), bwd.shape)

    scale = 1.0 / (n_fd * _doppler_step(T_d, T))
    f_fwd = k1 * scale
    f_bwd = -k2 * scale
    if abs(f_fwd) <= abs(f_bwd):
        tau_idx, f_d = rows[r1], f_fwd
    else:
        tau_idx, f_d = rows[r2], f_bwd
    tau = float(tau_idx) / (cfg.n_fft_tau * delta_f)
    return tau, float(f_d)


def refine_delay(R: np.ndarray, tau_hat: float, delta_f: float, n_fft_tau: int) -> float:
    """Maximize the noncoherent delay periodogram of R within +-1 bin of tau_hat."""
    n = np.arange(R.shape[0])
    bin0 = tau_hat * n_fft_tau * delta_f

    def neg_power(x: float) -> float:
        steer = np.exp(-2j * np.pi * n * x / n_fft_tau)
        return -float(np.sum(np.abs(steer @ R) ** 2))

    res = optimize.minimize_scalar(
        neg_power, bounds=(bin0 - 1.0, bin0 + 1.0), method="bounded", options={"xatol": 1e-9}
    )
    x = float(res.x) if -res.fun >= -neg_power(bin0) else bin0
    return max(x, 0.0) / (n_fft_tau * delta_f)


def compensate_and_extract(Y_prime: np.ndarray, sched: PhaseSchedule, k: int, f_d_hat: float,
                           tau_hat: float, n_T: int, ofdm: OfdmParams) -> np.ndarray:
    """r'' = (2/T) (Y' conj(gamma~)) * conj(d(tau_hat)) for interval n_T.

    gamma~ is the Doppler-compensated code; conjugating it combines the slot
    pairs coherently. With exact estimates r'' = |1 + exp(j 2 pi f_d T_d)|^2 / 2 * s
    on every subcarrier, i.e. 2 s at zero Doppler.
    """
    gamma = doppler_compensated_gamma(sched, k, f_d_hat, ofdm.symbol_duration, n_T)
    r = (Y_prime @ np.conj(gamma)) / Y_prime.shape[1]
    return r * np.conj(delay_vector(tau_hat, Y_prime.shape[0], ofdm.delta_f))


def estimate_s(r_dprime: np.ndarray) -> complex:
    return complex(np.mean(r_dprime))


def estimate_s_variance(r_dprime: np.ndarray) -> float:
    """Variance of estimate_s, from the spread of r'' over subcarriers (nan for one subcarrier)."""
    n = r_dprime.size
    if n < 2:
        return float("nan")
    spread = float(np.sum(np.abs(r_dprime - np.mean(r_dprime)) ** 2)) / (n - 1)
    return spread / n


def toggled_term(s_hats: Sequence[complex], sched: PhaseSchedule, k: int,
                 s_vars: Optional[Sequence[float]] = None) -> Tuple[complex, float]:
    """Mean of (s[2n] - s[2n+1]) / (toggled[2n] - toggled[2n+1]) over interval pairs, and its variance.

    The variance is nan unless s_vars gives the variance of every s_hat.
    """
    if len(s_hats) % 2:
        raise ScheduleError(f"need an even number of intervals, got {len(s_hats)}")
    toggled = sched.interval_diag[k, :, TOGGLED_ELEMENT]
    pairs = len(s_hats) // 2
    terms, var = [], 0.0
    for n in range(pairs):
        den = toggled[2 * n] - toggled[2 * n + 1]
        if abs(den) < 1e-12:
            raise ScheduleError(f"toggled element does not change within interval pair {n}")
        terms.append((s_hats[2 * n] - s_hats[2 * n + 1]) / den)
        if s_vars is not None:
            var += (s_vars[2 * n] + s_vars[2 * n + 1]) / abs(den) ** 2
    term_var = var / pairs**2 if s_vars is not None else float("nan")
    return complex(np.mean(terms)), float(term_var)


def estimate_alpha(s_hats: Sequence[complex], sched: PhaseSchedule, k: int, spacing: float,
                   wavelength_m: float) -> float:
    """alpha from the toggled-element phase, clamped to [-2, 2]."""
    term, _ = toggled_term(s_hats, sched, k)
    phase = float(np.angle(term))
    return float(np.clip(wavelength_m / (2.0 * math.pi * spacing) * phase, -2.0, 2.0))


def measurement_variances(term: complex, term_var: float, n_subcarriers: int, delta_f: float,
                          spacing: float, wavelength_m: float,
                          tau_bin: Optional[float] = None) -> Tuple[Optional[float], Optional[float]]:
    """(var xi in m^2, var alpha) of one measurement, or (None, None) without a usable SNR.

    With snr = |term|^2 / term_var the delay follows the slope of the phase
    over the band, var tau = 6 / ((2 pi delta_f N)^2 snr), and alpha the phase
    at subcarrier 0, var phase = 2 / snr (a quarter of it from the noise on the
    band-centre phase, the rest from the delay error). A grid delay (tau_bin
    given) adds uniform quantization over one bin to both.
    """
    power = abs(term) ** 2
    if not (math.isfinite(power) and power > 0 and math.isfinite(term_var)) or term_var < 0:
        return None, None
    snr = MAX_SNR if term_var == 0 else min(power / term_var, MAX_SNR)
    var_tau = 6.0 / ((2.0 * math.pi * delta_f * n_subcarriers) ** 2 * snr)
    var_phase = 2.0 / snr
    if tau_bin is not None:
        var_tau += tau_bin**2 / 12.0
        var_phase += (math.pi * (n_subcarriers - 1) * delta_f * tau_bin) ** 2 / 12.0
    kappa = wavelength_m / (2.0 * math.pi * spacing)
    return SPEED_OF_LIGHT**2 * var_tau, kappa**2 * var_phase


def _interval_blocks(Y: np.ndarray, sched: PhaseSchedule) -> List[np.ndarray]:
    return [Y[:, n * sched.T:(n + 1) * sched.T] for n in range(sched.n_intervals)]


def measure_ris(frames: RxFrameSet, sched: PhaseSchedule, ofdm: OfdmParams, k: int,
                cfg: EstimatorConfig = EstimatorConfig(), spacing_divisor: int = 4) -> List[Measurement]:
    """Run the chain for RIS k on every receiver."""
    frames.check(ofdm)
    T_d = ofdm.symbol_duration
    spacing = ofdm.wavelength / spacing_divisor
    out = []
    for n_r, Y in enumerate(frames.frames):
        primes = [cancel_scatterers(block) for block in _interval_blocks(Y, sched)]
        r = [extract_ris(yp, sched.gamma[k]) for yp in primes]
        R = np.stack(difference_pairs(r), axis=1)
        tau_hat, f_d_hat = estimate_toa_doppler(R, ofdm.delta_f, T_d, sched.T, cfg)
        if cfg.refine_delay:
            tau_hat = refine_delay(R, tau_hat, ofdm.delta_f, cfg.n_fft_tau)
        r_dprimes = [
            compensate_and_extract(yp, sched, k, f_d_hat, tau_hat, n_T, ofdm) for n_T, yp in enumerate(primes)
        ]
        s_hats = [estimate_s(rd) for rd in r_dprimes]
        alpha_hat = estimate_alpha(s_hats, sched, k, spacing, ofdm.wavelength)
        term, term_var = toggled_term(s_hats, sched, k, [estimate_s_variance(rd) for rd in r_dprimes])
        xi_var, alpha_var = measurement_variances(
            term, term_var, ofdm.n_subcarriers, ofdm.delta_f, spacing, ofdm.wavelength,
            None if cfg.refine_delay else cfg.tau_bin(ofdm.delta_f),
        )
        logger.debug("k=%d rx=%d tau=%.4e f_d=%.2f alpha=%.5f", k, n_r, tau_hat, f_d_hat, alpha_hat)
        out.append(Measurement(k, n_r, tau_hat, f_d_hat, alpha_hat, tuple(s_hats), xi_var, alpha_var))
    return out


def measure_all(frames: RxFrameSet, sched: PhaseSchedule, ofdm: OfdmParams,
                cfg: EstimatorConfig = EstimatorConfig(),
                spacing_divisors: Union[int, Sequence[int]] = 4) -> MeasurementSet:
    """Measurements of every scheduled RIS at every receiver."""
    if isinstance(spacing_divisors, int):
        spacing_divisors = [spacing_divisors] * sched.n_ris
    result = MeasurementSet()
    for k in range(sched.n_ris):
        for m in measure_ris(frames, sched, ofdm, k, cfg, spacing_divisors[k]):
            result.add(m)
    return result
