"""Beamspace channel model for a uniform linear array.

Channels are synthesized from a small set of propagation paths, binned onto
the fixed angular grid of the orthonormal base beams, and expressed as

    h = U diag(sqrt(eta)) hbar

where ``U`` holds the base beams, ``eta`` the statistical per-beam gains and
``hbar`` i.i.d. CN(0, 1) small-scale fading.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ArrayConfig",
    "PathProfile",
    "BeamspaceBasis",
    "UEProfile",
    "SmallScaleFading",
    "ChannelVector",
    "ChannelParams",
    "rng_stream",
    "steering_vector",
    "beamspace_basis",
    "bin_paths",
    "draw_paths",
    "generate_ue_profile",
    "draw_fading",
    "channel_vector",
    "correlation_matrix",
    "estimate_beam_gains",
    "channel_gain",
]


def _frozen(a, dtype=None):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent generator keyed by ``(seed, *keys)``.

    Streams with distinct keys are statistically independent and do not
    depend on the order in which they are created, so Monte Carlo loops can
    be split across workers without changing results.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass(frozen=True)
class ArrayConfig:
    num_antennas: int
    spacing: float = 0.5
    carrier_wavelength: float = 0.125

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 2:
            raise ValueError(f"num_antennas must be an integer >= 2, got {self.num_antennas}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not self.carrier_wavelength > 0:
            raise ValueError(f"carrier_wavelength must be positive, got {self.carrier_wavelength}")


@dataclass(frozen=True)
class PathProfile:
    """Propagation paths of one UE as ``(attenuation, distance, aod)`` triples."""

    paths: tuple

    def __post_init__(self):
        paths = tuple((float(a), float(d), float(t)) for a, d, t in self.paths)
        if not paths:
            raise ValueError("a path profile needs at least one path")
        for a, d, t in paths:
            if a < 0 or d < 0:
                raise ValueError("path attenuation and distance must be nonnegative")
            if abs(t) > np.pi / 2 + 1e-12:
                raise ValueError(f"path AoD {t} outside [-pi/2, pi/2]")
        object.__setattr__(self, "paths", paths)

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def attenuations(self) -> np.ndarray:
        return np.array([p[0] for p in self.paths])

    @property
    def distances(self) -> np.ndarray:
        return np.array([p[1] for p in self.paths])

    @property
    def aods(self) -> np.ndarray:
        return np.array([p[2] for p in self.paths])


@dataclass(frozen=True)
class BeamspaceBasis:
    basis: np.ndarray
    sampled_angles: np.ndarray
    array: ArrayConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "basis", _frozen(self.basis, complex))
        object.__setattr__(self, "sampled_angles", _frozen(self.sampled_angles, float))

    @property
    def num_beams(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class UEProfile:
    """Statistical CSI of one UE: dominant AoD, per-beam gains and priority."""

    aod: float
    beam_gains: np.ndarray
    weight: float = 1.0
    id: int = 0

    def __post_init__(self):
        gains = _frozen(self.beam_gains, float)
        if gains.ndim != 1:
            raise ValueError("beam_gains must be one-dimensional")
        if np.any(gains < 0):
            raise ValueError("beam_gains must be nonnegative")
        if not np.any(gains > 0):
            raise ValueError("at least one beam gain must be positive")
        if not self.weight > 0:
            raise ValueError(f"weight must be positive, got {self.weight}")
        object.__setattr__(self, "beam_gains", gains)

    @property
    def num_beams(self) -> int:
        return self.beam_gains.size

    @property
    def expected_gain(self) -> float:
        """E||h||^2, the trace of the beam gain matrix."""
        return float(self.beam_gains.sum())


@dataclass(frozen=True)
class SmallScaleFading:
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(self.coeffs, complex))

    @classmethod
    def draw(cls, rng: np.random.Generator, num_beams: int) -> "SmallScaleFading":
        return cls(draw_fading(rng, (num_beams,)))


@dataclass(frozen=True)
class ChannelVector:
    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", _frozen(self.h, complex))


@dataclass(frozen=True)
class ChannelParams:
    """Knobs of the multipath drop generator.

    The large-scale gain of a UE at distance ``r`` is
    ``reference_gain * (max(r, min_distance) / cell_radius) ** -pathloss_exponent``
    and the total path power is ``num_antennas`` times that, so a UE at the
    cell edge with ``reference_gain = 1`` has ``E||h||^2 = N_t``.
    """

    num_paths: int = 4
    angular_spread_deg: float = 5.0
    power_decay: float = 1.0
    cell_radius: float = 50.0
    min_distance: float = 1.0
    pathloss_exponent: float = 3.7
    reference_gain_db: float = 0.0
    excess_distance: float = 10.0

    def __post_init__(self):
        if int(self.num_paths) != self.num_paths or self.num_paths < 1:
            raise ValueError(f"num_paths must be an integer >= 1, got {self.num_paths}")
        if self.angular_spread_deg < 0:
            raise ValueError("angular_spread_deg must be nonnegative")
        if not self.cell_radius > 0:
            raise ValueError("cell_radius must be positive")
        if not 0 < self.min_distance <= self.cell_radius:
            raise ValueError("min_distance must lie in (0, cell_radius]")
        if self.pathloss_exponent < 0 or self.power_decay < 0 or self.excess_distance < 0:
            raise ValueError("pathloss_exponent, power_decay and excess_distance must be nonnegative")

    def large_scale_gain(self, distance: float) -> float:
        r = max(float(distance), self.min_distance)
        return 10 ** (self.reference_gain_db / 10) * (r / self.cell_radius) ** -self.pathloss_exponent


def steering_vector(aod: float, array: ArrayConfig) -> np.ndarray:
    """ULA response ``(1/sqrt(N)) exp(-j 2 pi (i-1) spacing sin(aod))``."""
    if not -np.pi / 2 - 1e-12 <= aod <= np.pi / 2 + 1e-12:
        raise ValueError(f"aod {aod} outside [-pi/2, pi/2]")
    n = np.arange(array.num_antennas)
    return np.exp(-2j * np.pi * n * array.spacing * np.sin(aod)) / np.sqrt(array.num_antennas)


def beamspace_basis(array: ArrayConfig) -> BeamspaceBasis:
    n_t = array.num_antennas
    sines = 2 * np.arange(1, n_t + 1) / n_t - 1
    angles = np.arcsin(np.clip(sines, -1, 1))
    basis = np.column_stack([steering_vector(a, array) for a in angles])
    return BeamspaceBasis(basis, angles, array)


def _grid_index(sine: float, n_t: int) -> int:
    # circular distance on the sine grid: sin = -1 and sin = +1 give the same
    # steering vector at half-wavelength spacing
    grid = 2 * np.arange(1, n_t + 1) / n_t - 1
    d = np.abs(sine - grid)
    d = np.minimum(d, 2 - d)
    return int(np.flatnonzero(d <= d.min() + 1e-12)[0])


def bin_paths(paths: PathProfile, array: ArrayConfig) -> np.ndarray:
    """Per-beam gains from coherent accumulation of the paths in each bin.

    The propagation phase ``exp(-j 2 pi d / lambda)`` is folded into the
    complex path amplitude before binning; the gain of beam ``i`` is the
    squared magnitude of the accumulated amplitude.
    """
    n_t = array.num_antennas
    coef = np.zeros(n_t, complex)
    for a, d, theta in paths.paths:
        coef[_grid_index(np.sin(theta), n_t)] += a * np.exp(-2j * np.pi * d / array.carrier_wavelength)
    return np.abs(coef) ** 2


def _fold(theta):
    # reflect across the array axis; preserves sin(theta)
    theta = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    return np.where(theta > np.pi / 2, np.pi - theta, np.where(theta < -np.pi / 2, -np.pi - theta, theta))


def draw_paths(rng: np.random.Generator, params: ChannelParams, num_antennas: int):
    """Draw a UE position and its paths.

    Returns ``(dominant_aod, distance, PathProfile)``.  The geometry does not
    depend on ``num_antennas`` except through the overall power scale, so
    antenna sweeps can reuse one drop.
    """
    if params.num_paths < 1:
        raise ValueError("num_paths must be >= 1")
    r = params.cell_radius * np.sqrt(rng.uniform())
    azimuth = rng.uniform(-np.pi, np.pi)
    aod = float(_fold(azimuth))
    n_paths = int(params.num_paths)
    spread = np.deg2rad(params.angular_spread_deg)
    offsets = rng.laplace(0.0, spread / np.sqrt(2), size=n_paths) if spread > 0 else np.zeros(n_paths)
    offsets[0] = 0.0
    aods = _fold(aod + offsets)
    profile = np.exp(-params.power_decay * np.arange(n_paths))
    profile /= profile.sum()
    total = num_antennas * params.large_scale_gain(r)
    amps = np.sqrt(total * profile)
    dists = r + rng.exponential(params.excess_distance, size=n_paths) if params.excess_distance > 0 else np.full(n_paths, r)
    dists[0] = r
    return aod, float(r), PathProfile(tuple(zip(amps, dists, aods)))


def generate_ue_profile(rng: np.random.Generator, params: ChannelParams, array: ArrayConfig,
                        weight: float = 1.0, ue_id: int = 0):
    """Drop one UE uniformly in the cell and build its beamspace profile."""
    aod, _, paths = draw_paths(rng, params, array.num_antennas)
    gains = bin_paths(paths, array)
    if not np.any(gains > 0):
        # paths cancelled exactly in every bin; keep the dominant path alone
        gains = bin_paths(PathProfile(paths.paths[:1]), array)
    return UEProfile(aod, gains, weight, ue_id), paths


def draw_fading(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _gains(profile) -> np.ndarray:
    # accepts a UEProfile or a bare gain vector (e.g. an all-zero one)
    return np.asarray(getattr(profile, "beam_gains", profile), dtype=float)


def _coeffs(fading) -> np.ndarray:
    return np.asarray(getattr(fading, "coeffs", fading), dtype=complex)


def channel_vector(profile: UEProfile, fading: SmallScaleFading, basis: BeamspaceBasis) -> ChannelVector:
    gains, hbar = _gains(profile), _coeffs(fading)
    n = basis.num_beams
    if gains.shape != (n,) or hbar.shape != (n,):
        raise ValueError("profile, fading and basis dimensions disagree")
    return ChannelVector(basis.basis @ (np.sqrt(gains) * hbar))


def correlation_matrix(profile: UEProfile, basis: BeamspaceBasis) -> np.ndarray:
    u = basis.basis
    return (u * _gains(profile)) @ u.conj().T


def estimate_beam_gains(realizations: Sequence[ChannelVector], basis: BeamspaceBasis) -> np.ndarray:
    """Per-beam gains from the sample correlation of channel realizations."""
    if len(realizations) == 0:
        raise ValueError("need at least one channel realization")
    h = np.stack([np.asarray(getattr(r, "h", r)) for r in realizations])
    coeffs = h @ basis.basis.conj()
    return np.maximum(np.mean(np.abs(coeffs) ** 2, axis=0), 0.0)


def channel_gain(profile: UEProfile, fading: SmallScaleFading) -> float:
    """Instantaneous ``||h||^2 = hbar^H Lambda hbar``."""
    gains, hbar = _gains(profile), _coeffs(fading)
    if gains.shape != hbar.shape:
        raise ValueError("profile and fading dimensions disagree")
    return float(np.sum(gains * np.abs(hbar) ** 2))
