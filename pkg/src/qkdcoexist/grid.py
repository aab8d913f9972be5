"""DWDM frequency grid, unit conversions and the channel/link value types.

Frequencies are carried in THz, spacings and bandwidths in GHz, wavelengths
in nm and optical powers in dBm unless a name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

SPEED_OF_LIGHT = 299_792_458.0  # m/s
PLANCK = 6.62607015e-34  # J s

C_BAND_NM = (1530.0, 1565.0)
POWER_FLOOR_DBM = -60.0


def dbm_to_mw(p_dbm: float) -> float:
    if p_dbm == -math.inf:
        return 0.0
    return 10.0 ** (p_dbm / 10.0)


def mw_to_dbm(p_mw: float) -> float:
    if p_mw < 0:
        raise ValueError(f"power must be non-negative, got {p_mw} mW")
    if p_mw == 0:
        return -math.inf
    return 10.0 * math.log10(p_mw)


def total_power_dbm(powers_dbm: Sequence[float]) -> float:
    """Sum per-channel powers in the linear domain and return dBm."""
    return mw_to_dbm(math.fsum(dbm_to_mw(p) for p in powers_dbm))


def frequency_to_wavelength(f_thz: float) -> float:
    if not f_thz > 0:
        raise ValueError(f"frequency must be positive, got {f_thz} THz")
    return SPEED_OF_LIGHT / (f_thz * 1e12) * 1e9


def wavelength_to_frequency(wavelength_nm: float) -> float:
    if not wavelength_nm > 0:
        raise ValueError(f"wavelength must be positive, got {wavelength_nm} nm")
    return SPEED_OF_LIGHT / (wavelength_nm * 1e-9) / 1e12


def photon_energy(f_thz: float) -> float:
    """Energy of one photon in joules."""
    return PLANCK * f_thz * 1e12


def in_c_band(wavelength_nm: float) -> bool:
    return C_BAND_NM[0] <= wavelength_nm <= C_BAND_NM[1]


@dataclass(frozen=True)
class GridSpec:
    """Fixed-anchor DWDM grid; channel ``i`` sits at ``anchor + i * spacing``."""

    anchor_frequency: float = 191.45  # THz
    channel_spacing: float = 50.0  # GHz

    def __post_init__(self) -> None:
        if not self.anchor_frequency > 0:
            raise ValueError("anchor_frequency must be positive")
        if not self.channel_spacing > 0:
            raise ValueError("channel_spacing must be positive")

    def index_of(self, f_thz: float) -> float:
        """Fractional channel index of an arbitrary frequency."""
        return (f_thz - self.anchor_frequency) * 1e3 / self.channel_spacing

    def c_band_indices(self) -> range:
        lo = math.ceil(self.index_of(wavelength_to_frequency(C_BAND_NM[1])) - 1e-9)
        hi = math.floor(self.index_of(wavelength_to_frequency(C_BAND_NM[0])) + 1e-9)
        return range(max(lo, 0), hi + 1)


def channel_to_frequency(index: int, grid: GridSpec) -> float:
    if index < 0:
        raise ValueError(f"channel index must be >= 0, got {index}")
    # integer GHz arithmetic keeps e.g. 190.0 + 62 * 0.05 from drifting
    return (round(grid.anchor_frequency * 1e3, 6) + index * grid.channel_spacing) / 1e3


@dataclass(frozen=True)
class DetectorModel:
    detection_efficiency: float = 0.1
    intrinsic_dark_count_probability: float = 5e-6
    gate_rate: float = 5e6  # Hz
    detector_error_rate: float = 0.01

    def __post_init__(self) -> None:
        for name in ("detection_efficiency", "intrinsic_dark_count_probability", "detector_error_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.gate_rate > 0:
            raise ValueError("gate_rate must be positive")


@dataclass(frozen=True)
class QuantumChannelSpec:
    center_wavelength: float = 1551.90  # nm
    filter_bandwidth: float = 100.0  # GHz
    detector: DetectorModel = field(default_factory=DetectorModel)

    def __post_init__(self) -> None:
        if not self.filter_bandwidth > 0:
            raise ValueError("filter_bandwidth must be positive")
        if not in_c_band(self.center_wavelength):
            raise ValueError(f"quantum channel {self.center_wavelength} nm is outside the C-band")

    @property
    def center_frequency(self) -> float:
        return wavelength_to_frequency(self.center_wavelength)

    def in_band(self, f_thz: float) -> bool:
        """True when ``f_thz`` falls inside the receive filter (edges inclusive)."""
        return abs(f_thz - self.center_frequency) * 1e3 <= self.filter_bandwidth / 2.0


@dataclass(frozen=True)
class FiberProfile:
    """A link between Alice and Bob.

    ``raman_coefficient`` is the spontaneous Raman conversion efficiency per
    km per GHz of receive bandwidth; ``fwm_efficiency`` scales the product of
    the three parent powers (in mW) to the mixing-product power in mW.
    """

    name: str
    length: float  # km
    end_to_end_loss: float  # dB
    raman_coefficient: float = 0.0
    fwm_efficiency: float = 0.0

    def __post_init__(self) -> None:
        if not self.length > 0:
            raise ValueError("length must be positive")
        if self.end_to_end_loss < 0:
            raise ValueError("end_to_end_loss must be non-negative")
        if self.raman_coefficient < 0 or self.fwm_efficiency < 0:
            raise ValueError("fiber coefficients must be non-negative")

    @property
    def transmission(self) -> float:
        return 10.0 ** (-self.end_to_end_loss / 10.0)


@dataclass(frozen=True)
class ClassicalChannelSet:
    """Co-propagating classical channels: frequencies (THz) and powers (dBm).

    Build instances with :meth:`from_channels` or :meth:`from_indices`, which
    derive the spacings and the total power; the raw constructor stores
    whatever it is given so that :func:`validate_channel_set` can report on
    malformed sets instead of refusing them.
    """

    center_frequencies: tuple[float, ...]
    spacings: tuple[float, ...]
    per_channel_powers: tuple[float, ...]
    total_power: float

    @property
    def n(self) -> int:
        return len(self.center_frequencies)

    @classmethod
    def from_channels(cls, frequencies: Sequence[float], powers_dbm: Sequence[float]) -> ClassicalChannelSet:
        if len(frequencies) != len(powers_dbm):
            raise ValueError("frequencies and powers must have the same length")
        pairs = sorted(zip(frequencies, powers_dbm))
        freqs = tuple(float(f) for f, _ in pairs)
        powers = tuple(float(p) for _, p in pairs)
        spacings = tuple((b - a) * 1e3 for a, b in zip(freqs, freqs[1:]))
        return cls(freqs, spacings, powers, total_power_dbm(powers))

    @classmethod
    def from_indices(
        cls, indices: Sequence[int], powers_dbm: Sequence[float] | float, grid: GridSpec
    ) -> ClassicalChannelSet:
        if isinstance(powers_dbm, (int, float)):
            powers_dbm = [float(powers_dbm)] * len(indices)
        order = sorted(range(len(indices)), key=lambda i: indices[i])
        return cls.from_channels(
            [channel_to_frequency(indices[i], grid) for i in order],
            [powers_dbm[i] for i in order],
        )

    @classmethod
    def empty(cls) -> ClassicalChannelSet:
        return cls((), (), (), -math.inf)

    @property
    def powers_mw(self) -> tuple[float, ...]:
        return tuple(dbm_to_mw(p) for p in self.per_channel_powers)

    def indices(self, grid: GridSpec) -> tuple[int, ...]:
        """Nearest grid index of every channel."""
        return tuple(round(grid.index_of(f)) for f in self.center_frequencies)

    def with_powers(self, powers_dbm: Sequence[float]) -> ClassicalChannelSet:
        return ClassicalChannelSet.from_channels(self.center_frequencies, powers_dbm)


def validate_channel_set(channels: ClassicalChannelSet, q: QuantumChannelSpec) -> list[str]:
    """Return human-readable violations; an empty list means the set is usable."""
    problems: list[str] = []
    n = channels.n
    if len(channels.per_channel_powers) != n:
        problems.append(f"expected {n} powers, got {len(channels.per_channel_powers)}")
    if len(channels.spacings) != max(n - 1, 0):
        problems.append(f"expected {max(n - 1, 0)} spacings, got {len(channels.spacings)}")
    f = channels.center_frequencies
    if any(b <= a for a, b in zip(f, f[1:])):
        problems.append("center frequencies are not strictly increasing")
    elif len(channels.spacings) == max(n - 1, 0):
        for i, (a, b) in enumerate(zip(f, f[1:])):
            if not math.isclose(channels.spacings[i], (b - a) * 1e3, rel_tol=1e-9, abs_tol=1e-6):
                problems.append(f"spacing {i} does not match its center frequencies")
    if any(not x > 0 for x in f):
        problems.append("center frequencies must be positive")
    if n == 0:
        if channels.total_power != -math.inf:
            problems.append("empty set must have total power -inf")
    elif len(channels.per_channel_powers) == n:
        expected = total_power_dbm(channels.per_channel_powers)
        if not abs(expected - channels.total_power) <= 0.01:
            problems.append(f"total power {channels.total_power:.3f} dBm != sum of channels {expected:.3f} dBm")
    for x in f:
        if x > 0 and q.in_band(x):
            problems.append(
                f"classical channel at {x:.4f} THz ({frequency_to_wavelength(x):.3f} nm) "
                f"overlaps the quantum filter band"
            )
    return problems
