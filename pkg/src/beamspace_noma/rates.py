"""Rate evaluation for beamspace NOMA designs.

All rates are in bits/s/Hz and the noise variance is 1, so ``power_budget``
is the transmit SNR in linear units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .channel import BeamspaceBasis, draw_fading, rng_stream
from .clustering import ClusteredScenario

__all__ = [
    "BeamDesign",
    "RateReport",
    "SaturatedBound",
    "beam_sinr",
    "equivalent_beam_sinr",
    "upper_bound",
    "upper_bound_terms",
    "saturated_bound",
    "mmse_receiver_and_mse",
    "instantaneous_rates",
    "instantaneous_rate",
    "draw_fading_batch",
    "ergodic_weighted_sum_rate",
]

# chunk of Monte Carlo realizations evaluated per vectorized call
_CHUNK = 256


@dataclass(frozen=True)
class BeamDesign:
    """Beam selection and per-beam powers of every UE.

    Rows follow the UE layout of the :class:`ClusteredScenario` the design
    was built for.  ``sic=False`` marks schemes whose receivers treat all
    other streams as noise.
    """

    selection: np.ndarray
    powers: np.ndarray
    power_budget: float
    sic: bool = True

    def __post_init__(self):
        s = np.array(self.selection, dtype=np.int8)
        p = np.array(self.powers, dtype=float)
        if s.shape != p.shape or s.ndim != 2:
            raise ValueError("selection and powers must be matching (K, N_t) arrays")
        if not np.all((s == 0) | (s == 1)):
            raise ValueError("selection entries must be 0 or 1")
        if np.any(p < 0):
            raise ValueError("powers must be nonnegative")
        if not self.power_budget > 0:
            raise ValueError("power_budget must be positive")
        s.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "selection", s)
        object.__setattr__(self, "powers", p)

    @property
    def effective_powers(self) -> np.ndarray:
        """``s * p`` per UE and beam."""
        return self.selection * self.powers

    @property
    def total_power(self) -> float:
        return float(self.effective_powers.sum())

    def is_feasible(self, rtol: float = 1e-6) -> bool:
        return self.total_power <= self.power_budget * (1 + rtol)

    def transmit_beams(self, basis: BeamspaceBasis) -> np.ndarray:
        """Antenna-domain beams ``w_k = U P_k^{1/2} s_k`` as columns."""
        return basis.basis @ np.sqrt(self.effective_powers).T


@dataclass
class RateReport:
    per_ue_rates: dict
    weighted_sum_rate: float
    upper_bound: float
    num_realizations: int
    rng_seed: int
    sum_rate_stderr: float = 0.0
    per_ue_stderr: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SaturatedBound:
    """High-SNR limit of the bound.

    ``unbounded`` lists ``(ue_id, beam)`` terms with a positive numerator and
    no interference; those grow without limit once noise is dropped.
    """

    finite: float
    unbounded: tuple

    @property
    def value(self) -> float:
        return np.inf if self.unbounded else self.finite

    @property
    def is_bounded(self) -> bool:
        return not self.unbounded


def _interference(eff: np.ndarray, scenario: ClusteredScenario, sic: bool) -> np.ndarray:
    # per-beam transmit power that interferes at each UE, before scaling by eta
    if not sic:
        return eff.sum(axis=0)[None, :] - eff
    inter = eff.sum(axis=0)[None, :] - scenario.cluster_total(eff)[scenario.cluster_of]
    return inter + scenario.cluster_cumsum(eff) - eff


def beam_sinr(design: BeamDesign, scenario: ClusteredScenario) -> np.ndarray:
    """Per-beam equivalent SINR of every UE, shape ``(K, N_t)``."""
    eff = design.effective_powers
    eta = scenario.eta
    return eff * eta / (_interference(eff, scenario, design.sic) * eta + 1)


def equivalent_beam_sinr(design: BeamDesign, scenario: ClusteredScenario, ue, beam_index: int) -> float:
    return float(beam_sinr(design, scenario)[scenario.row(ue), beam_index])


def upper_bound_terms(design: BeamDesign, scenario: ClusteredScenario) -> np.ndarray:
    """Weighted per-UE, per-beam terms of the orthogonal-resource bound."""
    return scenario.weights[:, None] * np.log2(1 + beam_sinr(design, scenario))


def upper_bound(design: BeamDesign, scenario: ClusteredScenario) -> float:
    """Closed-form bound: a weighted sum rate over N_t parallel beams."""
    return float(upper_bound_terms(design, scenario).sum())


def saturated_bound(fractions, selection, scenario: ClusteredScenario, sic: bool = True) -> SaturatedBound:
    """Noise-free bound on power fractions; invariant to scaling ``fractions``."""
    nu = np.asarray(selection) * np.asarray(fractions, dtype=float)
    if nu.shape != scenario.eta.shape:
        raise ValueError("fractions/selection must have shape (K, N_t)")
    inter = _interference(nu, scenario, sic) * scenario.eta
    signal = nu * scenario.eta
    finite = 0.0
    unbounded = []
    for k, c in zip(*np.nonzero(signal > 0)):
        if inter[k, c] > 0:
            finite += scenario.weights[k] * np.log2(1 + signal[k, c] / inter[k, c])
        else:
            unbounded.append((scenario.ue_ids[k], int(c)))
    return SaturatedBound(float(finite), tuple(unbounded))


def mmse_receiver_and_mse(p, eta, interference_power):
    """Scalar MMSE receiver for one equivalent beam stream.

    Returns ``(v, mse)`` with ``Phi = eta * (interference + p) + 1``,
    ``v = sqrt(eta p) / Phi`` and ``mse = 1 - eta p / Phi``, so that
    ``1 / mse = 1 + SINR``.  Works elementwise on arrays.
    """
    p = np.asarray(p, dtype=float)
    eta = np.asarray(eta, dtype=float)
    noise = eta * np.asarray(interference_power, dtype=float) + 1
    phi = noise + eta * p
    v = np.sqrt(eta * p) / phi
    # 1 - eta p / Phi, written without cancellation
    mse = noise / phi
    if v.ndim == 0:
        return float(v), float(mse)
    return v, mse


def instantaneous_rates(design: BeamDesign, scenario: ClusteredScenario, fading: np.ndarray) -> np.ndarray:
    """Per-UE rates for small-scale fading ``fading`` of shape ``(..., K, N_t)``.

    Evaluated in beamspace: the amplitude of UE ``j``'s stream at UE ``k`` is
    ``hbar_k^H Lambda_k^{1/2} P_j^{1/2} s_j``.
    """
    fading = np.asarray(fading)
    coeff = np.conj(fading) * np.sqrt(scenario.eta)
    amp = coeff @ np.sqrt(design.effective_powers).T
    power = np.abs(amp) ** 2
    mask = scenario.interference_mask(design.sic)
    desired = np.diagonal(power, axis1=-2, axis2=-1)
    interference = np.sum(power * mask, axis=-1)
    return np.log2(1 + desired / (interference + 1))


def instantaneous_rate(design: BeamDesign, channels: Mapping, scenario: ClusteredScenario, ue,
                       basis: BeamspaceBasis) -> float:
    """Rate of one UE given antenna-domain channel vectors of every UE.

    ``U^H h_k`` equals ``Lambda_k^{1/2} hbar_k`` because ``U`` is unitary, so
    the beamspace coefficients are read straight off the channel vectors.
    """
    k = scenario.row(ue)
    h = np.stack([np.asarray(getattr(channels[u], "h", channels[u])) for u in scenario.ue_ids])
    coeff = h @ basis.basis.conj()
    amp = np.conj(coeff[k]) @ np.sqrt(design.effective_powers).T
    power = np.abs(amp) ** 2
    mask = scenario.interference_mask(design.sic)[k]
    return float(np.log2(1 + power[k] / (power[mask].sum() + 1)))


def draw_fading_batch(seed: int, start: int, stop: int, shape) -> np.ndarray:
    """Fading for realizations ``start..stop-1``, one keyed stream each."""
    return np.stack([draw_fading(rng_stream(seed, r), shape) for r in range(start, stop)])


def ergodic_weighted_sum_rate(design: BeamDesign, scenario: ClusteredScenario, num_realizations: int,
                              seed: int) -> RateReport:
    """Monte Carlo ergodic rates; realization ``r`` uses stream ``(seed, r)``."""
    if num_realizations < 1:
        raise ValueError("num_realizations must be >= 1")
    k, n_t = scenario.eta.shape
    w = scenario.weights
    s1 = np.zeros(k)
    s2 = np.zeros(k)
    ws1 = ws2 = 0.0
    for start in range(0, num_realizations, _CHUNK):
        stop = min(start + _CHUNK, num_realizations)
        rates = instantaneous_rates(design, scenario, draw_fading_batch(seed, start, stop, (k, n_t)))
        s1 += rates.sum(axis=0)
        s2 += (rates ** 2).sum(axis=0)
        wsr = rates @ w
        ws1 += wsr.sum()
        ws2 += (wsr ** 2).sum()
    return _report(scenario, s1, s2, ws1, ws2, num_realizations, seed, upper_bound(design, scenario))


def _report(scenario, s1, s2, ws1, ws2, n, seed, ub) -> RateReport:
    mean = s1 / n
    wmean = float(np.dot(scenario.weights, mean))
    if n > 1:
        var = np.maximum(s2 / n - mean ** 2, 0) * n / (n - 1)
        wvar = max(ws2 / n - (ws1 / n) ** 2, 0.0) * n / (n - 1)
    else:
        var = np.zeros_like(mean)
        wvar = 0.0
    return RateReport(
        per_ue_rates={u: float(r) for u, r in zip(scenario.ue_ids, mean)},
        weighted_sum_rate=wmean,
        upper_bound=float(ub),
        num_realizations=int(n),
        rng_seed=int(seed),
        sum_rate_stderr=float(np.sqrt(wvar / n)),
        per_ue_stderr={u: float(np.sqrt(v / n)) for u, v in zip(scenario.ue_ids, var)},
    )
