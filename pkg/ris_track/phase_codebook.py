"""RIS phase-shift schedule.

Every frame has N_T intervals of T slots. Within an interval, RIS k applies
omega[k, t] * diag(interval_diag[k, n_T]) at slot t:

  - omega alternates sign between slots 2u and 2u + 1 and carries the code
    gamma[k, u]. Static scatterers and direct paths are identical in both
    slots of a pair and vanish in their difference.
  - gamma[k] is column k of the T/2-point DFT matrix, so different RISs are
    separated by correlating with their own code.
  - interval_diag toggles element 1 between +1 and -1 on consecutive
    intervals and keeps every other element at +1. Subtracting the two
    intervals of a pair leaves only the element-1 term, whose phase is
    2*pi*d*alpha/lambda.

Indices are 0-based: RIS k, slot t in [0, T), interval n in [0, N_T) and
global slot t_bar = n * T + t.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np

from .errors import ScheduleError

# Element whose phase toggles between the intervals of a pair.
TOGGLED_ELEMENT = 1


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PhaseSchedule:
    k_max: int
    T: int
    n_intervals: int
    num_elements: int
    omega: np.ndarray  # (K, T)
    gamma: np.ndarray  # (K, T // 2)
    interval_diag: np.ndarray  # (K, N_T, M)

    @property
    def n_ris(self) -> int:
        return int(self.omega.shape[0])

    @property
    def total_slots(self) -> int:
        return self.T * self.n_intervals

    def as_dict(self) -> Dict[str, Any]:
        return {
            "k_max": self.k_max,
            "T": self.T,
            "n_intervals": self.n_intervals,
            "num_elements": self.num_elements,
            "omega": _complex_to_pairs(self.omega),
            "gamma": _complex_to_pairs(self.gamma),
            "interval_diag": _complex_to_pairs(self.interval_diag),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PhaseSchedule":
        try:
            return cls(
                k_max=int(data["k_max"]),
                T=int(data["T"]),
                n_intervals=int(data["n_intervals"]),
                num_elements=int(data["num_elements"]),
                omega=_freeze(_pairs_to_complex(data["omega"])),
                gamma=_freeze(_pairs_to_complex(data["gamma"])),
                interval_diag=_freeze(_pairs_to_complex(data["interval_diag"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScheduleError(f"invalid schedule layout: {exc}") from exc


def _complex_to_pairs(arr: np.ndarray) -> List:
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _pairs_to_complex(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def build_schedule(K: int, K_max: int, M: int, T: int, N_T: int) -> PhaseSchedule:
    """Build the schedule for K active RISs out of a K_max-code book."""
    if T < 2 or T % 2:
        raise ScheduleError(f"T must be even and >= 2, got {T}")
    if N_T < 2 or N_T % 2:
        raise ScheduleError(f"N_T must be even and >= 2, got {N_T}")
    if M < 2:
        raise ScheduleError(f"M must be >= 2 so element {TOGGLED_ELEMENT} exists, got {M}")
    half = T // 2
    if K_max > half or K > K_max:
        raise ScheduleError(f"codebook capacity exceeded: K={K}, K_max={K_max}, T/2={half}")
    if K < 1:
        raise ScheduleError(f"K must be >= 1, got {K}")

    u = np.arange(half)
    gamma = np.exp(-2j * np.pi * np.outer(np.arange(K), u) / half)

    omega = np.empty((K, T), dtype=complex)
    omega[:, 0::2] = gamma
    omega[:, 1::2] = -gamma

    interval_diag = np.ones((K, N_T, M), dtype=complex)
    interval_diag[:, 1::2, TOGGLED_ELEMENT] = -1.0

    return PhaseSchedule(
        k_max=K_max,
        T=T,
        n_intervals=N_T,
        num_elements=M,
        omega=_freeze(omega),
        gamma=_freeze(gamma),
        interval_diag=_freeze(interval_diag),
    )


def _check_ris(sched: PhaseSchedule, k: int) -> None:
    if not 0 <= k < sched.n_ris:
        raise ScheduleError(f"RIS index {k} outside schedule with {sched.n_ris} RISs")


def phase_diag_at_slot(sched: PhaseSchedule, k: int, t_bar: int) -> np.ndarray:
    """Diagonal of the RIS-k phase matrix at global slot t_bar."""
    _check_ris(sched, k)
    if not 0 <= t_bar < sched.total_slots:
        raise ScheduleError(f"slot {t_bar} out of range [0, {sched.total_slots})")
    interval, t = divmod(t_bar, sched.T)
    return sched.omega[k, t] * sched.interval_diag[k, interval]


def slot_diagonals(sched: PhaseSchedule, k: int) -> np.ndarray:
    """All phase diagonals of RIS k, shape (N_T * T, M), row = global slot."""
    _check_ris(sched, k)
    per_interval = sched.interval_diag[k][:, None, :] * sched.omega[k][None, :, None]
    return per_interval.reshape(sched.total_slots, sched.num_elements)


def doppler_compensated_gamma(sched: PhaseSchedule, k: int, f_d_hat: float, T_d: float,
                              n_T: int) -> np.ndarray:
    """Code of RIS k with the Doppler phase of interval n_T folded in.

    Entry u is gamma[k, u] * exp(j w T n_T) * (exp(j 2u w) + exp(j (2u+1) w))
    with w = 2 pi f_d_hat T_d. For f_d_hat = 0 this is 2 * gamma[k].
    """
    _check_ris(sched, k)
    w = 2.0 * np.pi * f_d_hat * T_d
    u = np.arange(sched.T // 2)
    pair_sum = np.exp(1j * 2 * u * w) + np.exp(1j * (2 * u + 1) * w)
    return sched.gamma[k] * np.exp(1j * w * sched.T * n_T) * pair_sum
