"""Synthetic link oracle for a quantum channel sharing fibre with DWDM traffic.

Four noise sources land in the quantum receive filter: spontaneous Raman
scattering (linear in launch power), four-wave-mixing products (cubic),
an ASE floor carried by every amplified classical channel, and leakage of
classical light through the demultiplexer, which decays exponentially with
spectral distance. The summed photon rate sets the per-gate noise
probability, from which QBER and an asymptotic BB84 key rate follow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from .grid import ClassicalChannelSet, FiberProfile, QuantumChannelSpec, photon_energy


@dataclass(frozen=True)
class LinkConstants:
    """Knobs of the noise/key-rate model that are not tied to one fibre."""

    mean_photon_number: float = 0.1
    sift_factor: float = 0.5
    ase_floor_rate: float = 2.0  # photons/s per classical channel
    leak_isolation_db: float = 100.0  # filter suppression at the band edge
    leak_decay_ghz: float = 60.0  # e-folding distance beyond the band edge
    label_jitter: float = 0.0  # relative sigma of optional label noise

    def __post_init__(self) -> None:
        if not 0 <= self.sift_factor <= 1:
            raise ValueError("sift_factor must lie in [0, 1]")
        if self.mean_photon_number < 0 or self.ase_floor_rate < 0 or self.label_jitter < 0:
            raise ValueError("link constants must be non-negative")
        if not self.leak_decay_ghz > 0:
            raise ValueError("leak_decay_ghz must be positive")


DEFAULT_CONSTANTS = LinkConstants()


@dataclass(frozen=True)
class FwmProduct:
    frequency: float  # THz
    parent_indices: tuple[int, int, int]
    degeneracy: int


@dataclass(frozen=True)
class NoiseBreakdown:
    raman_rate: float
    fwm_rate: float
    ase_rate: float
    leakage_rate: float
    total_rate: float
    dark_count_probability: float


@dataclass(frozen=True)
class QkdPerformance:
    noise: NoiseBreakdown
    qber: float
    skr: float


def enumerate_fwm_products(frequencies: Sequence[float]) -> list[FwmProduct]:
    """All mixing products ``f_i + f_j - f_k`` with ``i <= j`` and ``k`` not in ``{i, j}``.

    For ``N`` distinct inputs there are ``(N**3 - N**2) / 2`` of them.
    """
    if len(set(frequencies)) != len(frequencies):
        raise ValueError("duplicate input frequencies")
    products = []
    n = len(frequencies)
    for i, j in combinations_with_replacement(range(n), 2):
        for k in range(n):
            if k == i or k == j:
                continue
            products.append(
                FwmProduct(
                    frequency=frequencies[i] + frequencies[j] - frequencies[k],
                    parent_indices=(i, j, k),
                    degeneracy=1 if i == j else 2,
                )
            )
    return products


def fwm_guard_frequencies(f_min: float, f_max: float) -> tuple[float, float]:
    """Outermost frequencies any mixing product of channels in ``[f_min, f_max]`` can reach."""
    if f_min > f_max:
        raise ValueError(f"f_min ({f_min}) exceeds f_max ({f_max})")
    return 2 * f_min - f_max, 2 * f_max - f_min


def inband_fwm_products(channels: ClassicalChannelSet, q: QuantumChannelSpec) -> list[FwmProduct]:
    return [p for p in enumerate_fwm_products(channels.center_frequencies) if q.in_band(p.frequency)]


def _photon_rate(power_mw: float, q: QuantumChannelSpec) -> float:
    return power_mw * 1e-3 / photon_energy(q.center_frequency)


def fwm_inband_rate(channels: ClassicalChannelSet, q: QuantumChannelSpec, fiber: FiberProfile) -> float:
    p = channels.powers_mw
    power = math.fsum(
        prod.degeneracy**2 * p[prod.parent_indices[0]] * p[prod.parent_indices[1]] * p[prod.parent_indices[2]]
        for prod in inband_fwm_products(channels, q)
    )
    return _photon_rate(fiber.fwm_efficiency * power * fiber.transmission, q)


def raman_inband_rate(channels: ClassicalChannelSet, q: QuantumChannelSpec, fiber: FiberProfile) -> float:
    launched = math.fsum(channels.powers_mw)
    power = launched * fiber.raman_coefficient * fiber.length * q.filter_bandwidth * fiber.transmission
    return _photon_rate(power, q)


def leakage_isolation(distance_ghz: float, q: QuantumChannelSpec, constants: LinkConstants = DEFAULT_CONSTANTS) -> float:
    """Linear suppression of a classical channel ``distance_ghz`` from the quantum centre."""
    beyond_edge = max(distance_ghz - q.filter_bandwidth / 2.0, 0.0)
    return 10.0 ** (-constants.leak_isolation_db / 10.0) * math.exp(-beyond_edge / constants.leak_decay_ghz)


def ase_and_leakage_rate(
    channels: ClassicalChannelSet,
    q: QuantumChannelSpec,
    fiber: FiberProfile,
    constants: LinkConstants = DEFAULT_CONSTANTS,
) -> float:
    ase, leak = _ase_and_leakage(channels, q, fiber, constants)
    return ase + leak


def _ase_and_leakage(channels, q, fiber, constants) -> tuple[float, float]:
    fq = q.center_frequency
    leaked_mw = math.fsum(
        p * leakage_isolation(abs(f - fq) * 1e3, q, constants)
        for f, p in zip(channels.center_frequencies, channels.powers_mw)
    )
    return constants.ase_floor_rate * channels.n, _photon_rate(leaked_mw * fiber.transmission, q)


def binary_entropy(e: float) -> float:
    if e <= 0.0 or e >= 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)


def zero_rate_qber(tol: float = 1e-12) -> float:
    """The QBER at which ``1 - 2 H2(e)`` vanishes (about 0.110), by bisection."""
    lo, hi = 0.0, 0.5
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if 1.0 - 2.0 * binary_entropy(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def signal_detection_probability(
    q: QuantumChannelSpec, fiber: FiberProfile, constants: LinkConstants = DEFAULT_CONSTANTS
) -> float:
    return constants.mean_photon_number * q.detector.detection_efficiency * fiber.transmission


def performance_from_noise(
    noise_rate: float,
    q: QuantumChannelSpec,
    fiber: FiberProfile,
    constants: LinkConstants = DEFAULT_CONSTANTS,
) -> tuple[float, float, float]:
    """Map an in-band noise photon rate to ``(dark_count_probability, qber, skr)``."""
    det = q.detector
    p_noise = 1.0 - math.exp(-noise_rate / det.gate_rate) + det.intrinsic_dark_count_probability
    p_noise = min(max(p_noise, 0.0), 1.0)
    p_signal = signal_detection_probability(q, fiber, constants)
    p_click = p_noise + p_signal
    if p_click == 0:
        return p_noise, 0.0, 0.0
    qber = (0.5 * p_noise + det.detector_error_rate * p_signal) / p_click
    qber = min(max(qber, 0.0), 0.5)
    sift_rate = constants.sift_factor * det.gate_rate * p_click
    skr = sift_rate * max(0.0, 1.0 - 2.0 * binary_entropy(qber))
    return p_noise, qber, skr


def evaluate_link(
    channels: ClassicalChannelSet,
    q: QuantumChannelSpec,
    fiber: FiberProfile,
    constants: LinkConstants = DEFAULT_CONSTANTS,
) -> QkdPerformance:
    """Ground-truth noise, QBER and SKR of the quantum channel on ``fiber``."""
    raman = raman_inband_rate(channels, q, fiber)
    fwm = fwm_inband_rate(channels, q, fiber)
    ase, leak = _ase_and_leakage(channels, q, fiber, constants)
    total = raman + fwm + ase + leak
    p_dark, qber, skr = performance_from_noise(total, q, fiber, constants)
    noise = NoiseBreakdown(raman, fwm, ase, leak, total, p_dark)
    return QkdPerformance(noise=noise, qber=qber, skr=skr)


def jitter_labels(
    targets: tuple[float, float, float], rng: np.random.Generator, sigma: float
) -> tuple[float, float, float]:
    """Multiplicative zero-mean Gaussian measurement noise on ``(noise, skr, qber)``."""
    if sigma == 0:
        return targets
    noise, skr, qber = (max(v * (1.0 + sigma * z), 0.0) for v, z in zip(targets, rng.standard_normal(3)))
    return noise, skr, min(qber, 0.5)
