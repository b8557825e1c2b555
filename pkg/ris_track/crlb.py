"""Fisher information, CRLBs and position error bounds.

The noiseless RIS part of the observation, flattened per receiver in
column-major (subcarrier fastest, then slot) order, is

    f(n, t) = sqrt(E_s delta_f) g sum_m Phi_m(t) mu(n, t, m)
    mu(n, t, m) = exp(j 2 pi (n delta_f tau + f_d T_d t + m d alpha / lambda))

Two parameterizations are supported:

  eta  per RIS k: [p_x, p_y, (g, f_d) for every receiver]
  beta per RIS k and receiver: [tau, alpha, g, f_d]

For white noise of variance s2 the information is I = 2 Re(D^H D) / s2 with
D the stacked derivative vectors. Inversion uses diagonal (Jacobi) scaling
and a Cholesky factorization; a scaled condition number above 1e12 attaches
an "ill-conditioned FIM" warning to the result.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .channel_sim import OfdmParams, Scenario, delay_vector, ris_path
from .errors import NumericalError, SingularMatrixError
from .geometry import Point2, RisPose, partial_alpha, partial_tau, steering_vector
from .phase_codebook import PhaseSchedule, slot_diagonals

logger = logging.getLogger(__name__)

ILL_CONDITIONED = 1e12


@dataclass
class FisherInfo:
    matrix: np.ndarray
    param_layout: Tuple[str, ...]
    warnings: List[str] = field(default_factory=list)
    _inverse: Optional[np.ndarray] = field(default=None, repr=False)
    _condition: Optional[float] = field(default=None, repr=False)

    def _scaled(self) -> Tuple[np.ndarray, np.ndarray]:
        diag = np.diag(self.matrix)
        if np.any(diag <= 0):
            bad = [self.param_layout[i] for i in np.flatnonzero(diag <= 0)]
            raise SingularMatrixError(f"parameters carry no information: {', '.join(bad)}")
        scale = 1.0 / np.sqrt(diag)
        return self.matrix * np.outer(scale, scale), scale

    def inverse(self) -> np.ndarray:
        """J = I^-1 (cached)."""
        if self._inverse is None:
            scaled, scale = self._scaled()
            try:
                factor = linalg.cho_factor(scaled)
            except linalg.LinAlgError as exc:
                raise SingularMatrixError("singular Fisher information matrix") from exc
            inv_scaled = linalg.cho_solve(factor, np.eye(len(scale)))
            self._condition = float(np.linalg.cond(scaled))
            if self._condition > ILL_CONDITIONED:
                msg = f"ill-conditioned FIM (condition {self._condition:.3e})"
                self.warnings.append(msg)
                logger.warning(msg)
            self._inverse = inv_scaled * np.outer(scale, scale)
        return self._inverse

    @property
    def condition_number(self) -> float:
        self.inverse()
        return float(self._condition)

    def inverse_residual(self) -> float:
        """Spectral norm of I J - Id in Jacobi-scaled coordinates."""
        scaled, scale = self._scaled()
        inv_scaled = self.inverse() / np.outer(scale, scale)
        return float(np.linalg.norm(scaled @ inv_scaled - np.eye(len(scale)), 2))

    def index(self, label: str) -> int:
        return self.param_layout.index(label)

    def crlb(self, label: str) -> float:
        i = self.index(label)
        return float(self.inverse()[i, i])


@dataclass(frozen=True)
class PositionBound:
    peb: float
    trace: float
    condition_number: float
    warnings: Tuple[str, ...] = ()


def _ris_terms(scenario: Scenario, sched: PhaseSchedule, ofdm: OfdmParams, k: int, n_r: int):
    ris = scenario.ris[k]
    path = ris_path(scenario, ofdm, k, n_r)
    lam = ofdm.wavelength
    spacing = ris.element_spacing(lam)
    m = np.arange(ris.num_elements)
    per_element = steering_vector(path.alpha, ris.num_elements, spacing, lam)
    diags = slot_diagonals(sched, k)  # (slots, M)
    slots = np.arange(sched.total_slots)
    doppler = np.exp(1j * 2.0 * np.pi * path.f_d * ofdm.symbol_duration * slots)
    d = delay_vector(path.tau, ofdm.n_subcarriers, ofdm.delta_f)
    amp = math.sqrt(ofdm.subcarrier_power) * path.gain
    array_sum = diags @ per_element  # sum_m Phi_m mu_m over elements, per slot
    array_grad = diags @ (1j * 2.0 * np.pi * m * spacing / lam * per_element)  # d/d alpha
    f = amp * np.outer(d, array_sum * doppler)
    return path, f, amp, d, doppler, array_sum, array_grad, slots


def _flat(mat: np.ndarray) -> np.ndarray:
    return mat.reshape(-1, order="F")


def signal_derivatives_beta(scenario: Scenario, sched: PhaseSchedule, ofdm: OfdmParams, k: int,
                            n_r: int) -> Dict[str, np.ndarray]:
    """d f / d (tau, alpha, g, f_d) for RIS k at receiver n_r."""
    path, f, amp, d, doppler, _, array_grad, slots = _ris_terms(scenario, sched, ofdm, k, n_r)
    n = np.arange(ofdm.n_subcarriers)
    return {
        "tau": _flat(f * (1j * 2.0 * np.pi * n * ofdm.delta_f)[:, None]),
        "alpha": _flat(amp * np.outer(d, array_grad * doppler)),
        "g": _flat(f / path.gain),
        "f_d": _flat(f * (1j * 2.0 * np.pi * ofdm.symbol_duration * slots)[None, :]),
    }


def signal_derivatives_eta(scenario: Scenario, sched: PhaseSchedule, ofdm: OfdmParams, k: int,
                           n_r: int) -> Dict[str, np.ndarray]:
    """d f / d (p_x, p_y, g, f_d) for RIS k at receiver n_r, chained through tau and alpha."""
    beta = signal_derivatives_beta(scenario, sched, ofdm, k, n_r)
    ris = scenario.ris[k]
    p_r = scenario.receivers[n_r]
    g_tau = partial_tau(scenario.tx, p_r, ris.position)
    g_alpha = partial_alpha(scenario.tx, p_r, ris.position, ris.psi_for(n_r))
    return {
        "p_x": beta["tau"] * g_tau.d_dx + beta["alpha"] * g_alpha.d_dx,
        "p_y": beta["tau"] * g_tau.d_dy + beta["alpha"] * g_alpha.d_dy,
        "g": beta["g"],
        "f_d": beta["f_d"],
    }


def _fisher(columns: Dict[Tuple[str, int], List[Tuple[int, np.ndarray]]], labels: List[Tuple[str, int]],
            n_receivers: int, noise_variance: float) -> np.ndarray:
    # columns[label] = [(receiver, derivative block), ...]; blocks of different receivers never overlap.
    size = len(labels)
    info = np.zeros((size, size))
    for n_r in range(n_receivers):
        idx, vecs = [], []
        for i, label in enumerate(labels):
            for rx, vec in columns[label]:
                if rx == n_r:
                    idx.append(i)
                    vecs.append(vec)
        if not vecs:
            continue
        D = np.stack(vecs, axis=1)
        block = 2.0 * np.real(D.conj().T @ D) / noise_variance
        info[np.ix_(idx, idx)] += block
    return 0.5 * (info + info.T)


def fisher_eta(scenario: Scenario, sched: PhaseSchedule, ofdm: OfdmParams) -> FisherInfo:
    labels: List[Tuple[str, int]] = []
    names: List[str] = []
    columns: Dict[Tuple[str, int], List[Tuple[int, np.ndarray]]] = {}
    n_rx = scenario.n_receivers
    for k in range(len(scenario.ris)):
        derivs = [signal_derivatives_eta(scenario, sched, ofdm, k, n_r) for n_r in range(n_rx)]
        for axis in ("p_x", "p_y"):
            key = (f"{axis}[{k}]", k)
            labels.append(key)
            names.append(key[0])
            columns[key] = [(n_r, derivs[n_r][axis]) for n_r in range(n_rx)]
        for n_r in range(n_rx):
            for par in ("g", "f_d"):
                key = (f"{par}[{k},{n_r}]", k)
                labels.append(key)
                names.append(key[0])
                columns[key] = [(n_r, derivs[n_r][par])]
    return FisherInfo(_fisher(columns, labels, n_rx, ofdm.noise_variance), tuple(names))


def fisher_beta(scenario: Scenario, sched: PhaseSchedule, ofdm: OfdmParams) -> FisherInfo:
    labels: List[Tuple[str, int]] = []
    names: List[str] = []
    columns: Dict[Tuple[str, int], List[Tuple[int, np.ndarray]]] = {}
    n_rx = scenario.n_receivers
    for k in range(len(scenario.ris)):
        for n_r in range(n_rx):
            derivs = signal_derivatives_beta(scenario, sched, ofdm, k, n_r)
            for par in ("tau", "alpha", "g", "f_d"):
                key = (f"{par}[{k},{n_r}]", k)
                labels.append(key)
                names.append(key[0])
                columns[key] = [(n_r, derivs[par])]
    return FisherInfo(_fisher(columns, labels, n_rx, ofdm.noise_variance), tuple(names))


def crlb_tau_alpha(scenario: Scenario, sched: PhaseSchedule, ofdm: OfdmParams, k: int,
                   n_r: int) -> Tuple[float, float]:
    """(CRLB of tau in s^2, CRLB of alpha)."""
    info = fisher_beta(scenario, sched, ofdm)
    return info.crlb(f"tau[{k},{n_r}]"), info.crlb(f"alpha[{k},{n_r}]")


def position_bound(scenario: Scenario, sched: PhaseSchedule, ofdm: OfdmParams, k: int) -> PositionBound:
    info = fisher_eta(scenario, sched, ofdm)
    J = info.inverse()
    ix, iy = info.index(f"p_x[{k}]"), info.index(f"p_y[{k}]")
    trace = float(J[ix, ix] + J[iy, iy])
    return PositionBound(math.sqrt(max(trace, 0.0)), trace, info.condition_number, tuple(info.warnings))


def peb(scenario: Scenario, sched: PhaseSchedule, ofdm: OfdmParams, k: int) -> float:
    """Position error bound of RIS k in meters."""
    return position_bound(scenario, sched, ofdm, k).peb


@dataclass(frozen=True)
class HeatmapCell:
    x: float
    y: float
    peb: Optional[float]
    note: str = ""

    @property
    def peb_db(self) -> Optional[float]:
        return None if self.peb is None else 10.0 * math.log10(self.peb)


def _cell_centres(x_bounds: Sequence[float], y_bounds: Sequence[float], step: float) -> List[Tuple[float, float]]:
    nx = int(round((x_bounds[1] - x_bounds[0]) / step))
    ny = int(round((y_bounds[1] - y_bounds[0]) / step))
    return [
        (x_bounds[0] + (i + 0.5) * step, y_bounds[0] + (j + 0.5) * step)
        for i in range(nx)
        for j in range(ny)
    ]


def peb_heatmap(x_bounds: Sequence[float], y_bounds: Sequence[float], step: float, template: Scenario,
                sched: PhaseSchedule, ofdm: OfdmParams, *, k: int = 0, exclusion_radius: float = 0.25,
                workers: int = 1) -> List[HeatmapCell]:
    """PEB of RIS k of the template moved to every cell centre of the grid.

    Only RIS k is kept. Cells near an anchor and cells whose FIM cannot be
    inverted come back with peb=None.
    """
    ris = template.ris[k]
    anchors = template.anchors.points()

    def evaluate(centre: Tuple[float, float]) -> HeatmapCell:
        x, y = centre
        if any(a.distance_to(centre) < exclusion_radius for a in anchors):
            return HeatmapCell(x, y, None, "anchor")
        moved: RisPose = replace(ris, position=Point2(x, y))
        scenario = replace(template, ris=(moved,))
        try:
            return HeatmapCell(x, y, peb(scenario, _single(sched, k), ofdm, 0))
        except (NumericalError, ValueError) as exc:
            logger.warning("PEB cell (%.2f, %.2f) missing: %s", x, y, exc)
            return HeatmapCell(x, y, None, str(exc))

    centres = _cell_centres(x_bounds, y_bounds, step)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate, centres))
    return [evaluate(c) for c in centres]


def _single(sched: PhaseSchedule, k: int) -> PhaseSchedule:
    """Schedule restricted to RIS k, re-indexed as RIS 0."""
    if k == 0 and sched.n_ris == 1:
        return sched
    return replace(
        sched,
        omega=sched.omega[k:k + 1],
        gamma=sched.gamma[k:k + 1],
        interval_diag=sched.interval_diag[k:k + 1],
    )
