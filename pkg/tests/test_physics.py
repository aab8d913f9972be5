import dataclasses
import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkdcoexist.grid import ClassicalChannelSet, DetectorModel, FiberProfile, GridSpec, QuantumChannelSpec
from qkdcoexist.physics import (
    DEFAULT_CONSTANTS,
    binary_entropy,
    enumerate_fwm_products,
    evaluate_link,
    fwm_guard_frequencies,
    fwm_inband_rate,
    inband_fwm_products,
    jitter_labels,
    performance_from_noise,
    raman_inband_rate,
    ase_and_leakage_rate,
    zero_rate_qber,
)

GOLDEN = json.loads((Path(__file__).parent / "fixtures" / "golden_physics.json").read_text())


def brute_force_products(freqs):
    """Every distinct (unordered pair {i, j}, k) with k outside the pair."""
    seen = {}
    n = len(freqs)
    for i, j, k in itertools.product(range(n), repeat=3):
        if k in (i, j):
            continue
        key = (min(i, j), max(i, j), k)
        seen[key] = freqs[i] + freqs[j] - freqs[k]
    return seen


QUANTUM = QuantumChannelSpec()
LAB = FiberProfile("lab", 1.0, 9.5)
LAB_FWM = FiberProfile("lab", 1.0, 9.5, fwm_efficiency=5e-8)

freq_sets = st.lists(
    st.floats(min_value=191.0, max_value=196.0, allow_nan=False), min_size=1, max_size=9, unique=True
)


def test_single_channel_has_no_products():
    assert enumerate_fwm_products([193.0]) == []


def test_two_channel_products():
    freqs = sorted(p.frequency for p in enumerate_fwm_products([193.0, 193.1]))
    assert freqs == pytest.approx([192.9, 193.2])


def test_eight_channels_give_224():
    assert len(enumerate_fwm_products([193.0 + 0.05 * i for i in range(8)])) == 224


@given(freq_sets)
def test_products_match_brute_force(freqs):
    products = enumerate_fwm_products(freqs)
    oracle = brute_force_products(freqs)
    assert len(products) == len(oracle) == (len(freqs) ** 3 - len(freqs) ** 2) // 2
    for p in products:
        i, j, k = p.parent_indices
        assert oracle[(i, j, k)] == p.frequency
        assert p.degeneracy == (1 if i == j else 2)


def test_duplicate_frequencies_rejected():
    with pytest.raises(ValueError):
        enumerate_fwm_products([193.0, 193.0])


def test_guard_examples():
    assert fwm_guard_frequencies(193.0, 193.0) == (193.0, 193.0)
    lo, hi = fwm_guard_frequencies(193.0, 193.4)
    assert (lo, hi) == (pytest.approx(192.6), pytest.approx(193.8))
    with pytest.raises(ValueError):
        fwm_guard_frequencies(193.4, 193.0)


@given(freq_sets)
def test_guard_brackets_every_product(freqs):
    lo, hi = fwm_guard_frequencies(min(freqs), max(freqs))
    for p in enumerate_fwm_products(freqs):
        assert lo - 1e-9 <= p.frequency <= hi + 1e-9


def _golden_set(case, grid):
    g = GOLDEN[case]
    return ClassicalChannelSet.from_indices(g["indices"], g["power_dbm"], grid)


def _reference_set(grid):
    """8 channels in 100 GHz steps on each side of the quantum channel, -25 dBm each."""
    return _golden_set("fwm_reference", grid)


def test_fwm_golden(grid, quantum, lab):
    s = _reference_set(grid)
    assert fwm_inband_rate(s, quantum, lab) == pytest.approx(GOLDEN["fwm_reference"]["rate"], rel=1e-9)
    assert len(inband_fwm_products(s, quantum)) == GOLDEN["fwm_reference"]["inband_products"]


def test_fwm_zero_without_inband_products(grid, quantum, lab):
    far = ClassicalChannelSet.from_indices([60, 61, 62], -10.0, grid)
    assert inband_fwm_products(far, quantum) == []
    assert fwm_inband_rate(far, quantum, lab) == 0.0


@given(
    st.lists(st.integers(min_value=20, max_value=50), min_size=2, max_size=8, unique=True).filter(
        lambda idx: not {34, 35} & set(idx)
    ),
    st.data(),
)
def test_fwm_dark_parent_contributes_nothing(indices, data):
    grid = GridSpec()
    dark = data.draw(st.sampled_from(indices))
    powers = [-math.inf if i == dark else -20.0 for i in indices]
    with_dark = ClassicalChannelSet.from_indices(indices, powers, grid)
    without = ClassicalChannelSet.from_indices([i for i in indices if i != dark], -20.0, grid)
    assert fwm_inband_rate(with_dark, QUANTUM, LAB_FWM) == pytest.approx(fwm_inband_rate(without, QUANTUM, LAB_FWM), rel=1e-12)


def test_raman_golden_and_linearity(grid, quantum, lab):
    one = _golden_set("raman_single", grid)
    assert raman_inband_rate(one, quantum, lab) == pytest.approx(GOLDEN["raman_single"]["rate"], rel=1e-9)
    s = _reference_set(grid)
    doubled = s.with_powers([p + 10 * math.log10(2) for p in s.per_channel_powers])
    assert raman_inband_rate(doubled, quantum, lab) == pytest.approx(2 * raman_inband_rate(s, quantum, lab), rel=1e-12)
    assert raman_inband_rate(ClassicalChannelSet.empty(), quantum, lab) == 0.0


def test_ase_golden_and_additivity(grid, quantum, lab, config):
    far = _golden_set("ase_far", grid)
    assert ase_and_leakage_rate(far, quantum, lab, config.constants) == pytest.approx(GOLDEN["ase_far"]["rate"], rel=1e-9)
    assert ase_and_leakage_rate(ClassicalChannelSet.empty(), quantum, lab) == 0.0
    base = ClassicalChannelSet.from_indices([40, 44], -20.0, grid)
    more = ClassicalChannelSet.from_indices([40, 44, 50], -20.0, grid)
    only = ClassicalChannelSet.from_indices([50], -20.0, grid)
    c = config.constants
    assert ase_and_leakage_rate(more, quantum, lab, c) == pytest.approx(
        ase_and_leakage_rate(base, quantum, lab, c) + ase_and_leakage_rate(only, quantum, lab, c), rel=1e-12
    )


def test_noise_breakdown_sums(grid, quantum, lab, config):
    perf = evaluate_link(_reference_set(grid), quantum, lab, config.constants)
    n = perf.noise
    assert n.total_rate == pytest.approx(n.raman_rate + n.fwm_rate + n.ase_rate + n.leakage_rate, rel=1e-12)


def test_zero_noise_perfect_detector_gives_sift_rate():
    q = QuantumChannelSpec(detector=DetectorModel(intrinsic_dark_count_probability=0.0, detector_error_rate=0.0))
    fiber = FiberProfile("x", 1.0, 5.0)
    perf = evaluate_link(ClassicalChannelSet.empty(), q, fiber)
    assert perf.qber == 0.0
    c = DEFAULT_CONSTANTS
    sift_rate = c.sift_factor * q.detector.gate_rate * c.mean_photon_number * q.detector.detection_efficiency * fiber.transmission
    assert perf.skr == pytest.approx(sift_rate, rel=1e-12)


def test_zero_rate_qber_value():
    e = zero_rate_qber()
    assert e == pytest.approx(0.1100, abs=1e-4)
    assert e == pytest.approx(GOLDEN["zero_rate_qber"], abs=1e-11)
    assert 1 - 2 * binary_entropy(e) == pytest.approx(0.0, abs=1e-9)


@given(st.floats(min_value=0.0, max_value=1e9), st.floats(min_value=0.0, max_value=1e9))
def test_skr_non_increasing_in_noise(a, b):
    lo, hi = sorted((a, b))
    _, q_lo, s_lo = performance_from_noise(lo, QUANTUM, LAB)
    _, q_hi, s_hi = performance_from_noise(hi, QUANTUM, LAB)
    assert s_hi <= s_lo
    assert q_hi >= q_lo - 1e-15


def test_skr_zero_beyond_zero_rate_qber(quantum, lab):
    for rate in np.logspace(3, 9, 30):
        _, qber, skr = performance_from_noise(float(rate), quantum, lab)
        if qber >= zero_rate_qber():
            assert skr == 0.0


def test_binary_entropy_edges():
    assert binary_entropy(0.0) == binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(1.0)


def test_jitter_labels_identity_and_bounds(rng):
    t = (100.0, 2000.0, 0.03)
    assert jitter_labels(t, rng, 0.0) == t
    for _ in range(200):
        noise, skr, qber = jitter_labels(t, rng, 0.5)
        assert noise >= 0 and skr >= 0 and 0 <= qber <= 0.5


def test_link_constants_validation():
    with pytest.raises(ValueError):
        dataclasses.replace(DEFAULT_CONSTANTS, mean_photon_number=-1.0)
