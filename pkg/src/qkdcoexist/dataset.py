"""Training/validation campaign over the fibre profiles.

Each instance is one classical-channel configuration on one fibre, reduced
to a 7-value feature vector and labelled by the physics oracle. Validation
instances use total-power levels that never occur in training, so the two
splits are disjoint by construction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import CampaignConfig, Config, ConfigError
from .grid import (
    POWER_FLOOR_DBM,
    ClassicalChannelSet,
    FiberProfile,
    GridSpec,
    QuantumChannelSpec,
    channel_to_frequency,
    validate_channel_set,
)
from .physics import evaluate_link, inband_fwm_products, jitter_labels

FEATURE_NAMES = (
    "n_channels",
    "mean_power_dbm",
    "total_power_dbm",
    "min_spacing_ghz",
    "min_quantum_distance_ghz",
    "inband_fwm_count",
    "fiber_loss_db",
)
TARGET_NAMES = ("noise_rate", "skr", "qber")
META_NAMES = ("set", "split", "fiber", "seed")
CHANNELS_FORMAT = "qkdcoexist.channels/1"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Instance:
    features: tuple[float, ...]
    targets: tuple[float, float, float]  # noise_rate, skr, qber
    fiber: str
    seed: int
    set_index: int
    split: str
    channels: ClassicalChannelSet


@dataclass(frozen=True)
class DatasetBundle:
    training_sets: tuple[tuple[Instance, ...], ...]
    validation_sets: tuple[tuple[Instance, ...], ...]

    @property
    def set_count(self) -> int:
        return len(self.training_sets)

    @property
    def training(self) -> list[Instance]:
        return [inst for s in self.training_sets for inst in s]

    @property
    def validation(self) -> list[Instance]:
        return [inst for s in self.validation_sets for inst in s]


def featurize(
    channels: ClassicalChannelSet,
    q: QuantumChannelSpec,
    fiber: FiberProfile,
    sentinel_ghz: float = CampaignConfig.sentinel_ghz,
) -> tuple[float, ...]:
    """Order-invariant 7-vector; see ``FEATURE_NAMES`` for the layout."""
    n = channels.n
    if n == 0:
        return (0.0, POWER_FLOOR_DBM, POWER_FLOOR_DBM, sentinel_ghz, sentinel_ghz, 0.0, fiber.end_to_end_loss)
    f = sorted(channels.center_frequencies)
    fq = q.center_frequency
    min_spacing = min((b - a) * 1e3 for a, b in zip(f, f[1:])) if n > 1 else sentinel_ghz
    return (
        float(n),
        max(math.fsum(channels.per_channel_powers) / n, POWER_FLOOR_DBM),
        max(channels.total_power, POWER_FLOOR_DBM),
        min_spacing,
        min(abs(x - fq) * 1e3 for x in f),
        float(len(inband_fwm_products(channels, q))),
        fiber.end_to_end_loss,
    )


def tp_levels(campaign: CampaignConfig) -> tuple[list[float], list[float]]:
    """Total-power grid split into (training levels, validation levels)."""
    count = int(round((campaign.tp_max_dbm - campaign.tp_min_dbm) / campaign.tp_step_db)) + 1
    levels = [round(campaign.tp_min_dbm + i * campaign.tp_step_db, 6) for i in range(count)]
    stride, offset = campaign.validation_tp_stride, campaign.validation_tp_offset
    val = [t for i, t in enumerate(levels) if i % stride == offset]
    train = [t for i, t in enumerate(levels) if i % stride != offset]
    return train, val


def allowed_indices(grid: GridSpec, q: QuantumChannelSpec) -> list[int]:
    return [i for i in grid.c_band_indices() if not q.in_band(channel_to_frequency(i, grid))]


def candidate_placements(
    n: int, grid: GridSpec, q: QuantumChannelSpec, campaign: CampaignConfig, rng: np.random.Generator
) -> list[tuple[int, ...]]:
    """Distinct channel-index tuples for ``n`` channels.

    Three families: allocations straddling the quantum channel symmetrically
    (which put mixing products on top of it), one-sided evenly spaced blocks,
    and uniformly random picks.
    """
    allowed = allowed_indices(grid, q)
    allowed_set = set(allowed)
    below = max(i for i in allowed if channel_to_frequency(i, grid) < q.center_frequency)
    above = min(i for i in allowed if channel_to_frequency(i, grid) > q.center_frequency)
    seen: dict[tuple[int, ...], None] = {}

    def keep(idx: Iterable[int]) -> None:
        t = tuple(sorted(idx))
        if len(set(t)) == n and all(i in allowed_set for i in t):
            seen.setdefault(t, None)

    for offset in range(campaign.max_offset_slots + 1):
        for s in campaign.spacing_slots:
            lows = [below - offset - s * m for m in range(n)]
            highs = [above + offset + s * m for m in range(n)]
            if n == 1:
                keep(lows[:1])
                keep(highs[:1])
                continue
            # the quantum channel sits off-grid, so also skew the straddle by one slot each way
            for skew in (0, -1, 1):
                lo = [i - max(skew, 0) for i in lows[: n // 2]]
                hi = [i + max(-skew, 0) for i in highs[: n - n // 2]]
                keep(lo + hi)
            keep(lows)
            keep(highs)
    for _ in range(campaign.random_placements):
        keep(int(i) for i in rng.choice(allowed, size=n, replace=False))
    return list(seen)


def _powers(n: int, tp: float, ripple_db: float, rng: np.random.Generator) -> list[float]:
    raw = tp - 10 * math.log10(n) + rng.uniform(-ripple_db, ripple_db, size=n)
    shift = tp - 10 * math.log10(np.sum(10 ** (raw / 10)))
    return [float(p) for p in raw + shift]


def _quotas(total: int, strata: int) -> list[int]:
    base, extra = divmod(total, strata)
    return [base + (1 if i < extra else 0) for i in range(strata)]


def generate_campaign(config: Config, seed: int) -> DatasetBundle:
    """Deterministic campaign of ``set_count`` training/validation set pairs."""
    campaign = config.campaign
    if not config.fibers:
        raise ConfigError("campaign needs at least one fiber profile")
    if any(n < 1 for n in campaign.n_values):
        raise ConfigError("n_values must be positive")
    train_tp, val_tp = tp_levels(campaign)
    if not train_tp or not val_tp:
        raise ConfigError("TP sweep leaves no training or no validation levels")
    if min(train_tp + val_tp) < campaign.tp_min_dbm or max(train_tp + val_tp) > campaign.tp_max_dbm + 1e-9:
        raise ConfigError("TP levels fall outside the sweep bounds")

    placements = {}
    for n in campaign.n_values:
        prng = np.random.default_rng(np.random.SeedSequence([seed, 1000 + n]))
        placements[n] = candidate_placements(n, config.grid, config.quantum, campaign, prng)

    strata = [(fiber, n) for fiber in config.fibers for n in campaign.n_values]
    train_q = _quotas(campaign.training_per_set, len(strata))
    val_q = _quotas(campaign.validation_per_set, len(strata))
    needed = campaign.training_per_set + campaign.validation_per_set
    available = sum(len(placements[n]) * (len(train_tp) + len(val_tp)) for _, n in strata)
    if available < needed:
        raise ConfigError(f"config yields only {available} distinct combinations per set, need {needed}")
    for (fiber, n), tq, vq in zip(strata, train_q, val_q):
        if len(placements[n]) * len(train_tp) < tq or len(placements[n]) * len(val_tp) < vq:
            raise ConfigError(f"stratum ({fiber.name}, n={n}) has too few distinct combinations")

    training_sets, validation_sets = [], []
    for s in range(campaign.set_count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, s]))
        for split, levels, quotas, out in (
            ("train", train_tp, train_q, training_sets),
            ("validation", val_tp, val_q, validation_sets),
        ):
            rows = []
            for (fiber, n), quota in zip(strata, quotas):
                pool = placements[n]
                picks = rng.choice(len(pool) * len(levels), size=quota, replace=False)
                for pick in picks:
                    idx, tp = pool[pick // len(levels)], levels[pick % len(levels)]
                    powers = _powers(n, tp, campaign.power_ripple_db, rng)
                    channels = ClassicalChannelSet.from_indices(idx, powers, config.grid)
                    rows.append(_label(channels, config, fiber, seed, s, split, rng))
            out.append(tuple(rows))
    return DatasetBundle(tuple(training_sets), tuple(validation_sets))


def _label(channels, config: Config, fiber, seed, set_index, split, rng) -> Instance:
    problems = validate_channel_set(channels, config.quantum)
    if problems:
        raise AssertionError(f"generated an invalid channel set: {problems}")
    perf = evaluate_link(channels, config.quantum, fiber, config.constants)
    targets = (perf.noise.total_rate, perf.skr, perf.qber)
    targets = jitter_labels(targets, rng, config.constants.label_jitter)
    return Instance(
        features=featurize(channels, config.quantum, fiber, config.campaign.sentinel_ghz),
        targets=targets,
        fiber=fiber.name,
        seed=seed,
        set_index=set_index,
        split=split,
        channels=channels,
    )


def feature_matrix(instances: Sequence[Instance]) -> np.ndarray:
    return np.array([inst.features for inst in instances], dtype=float).reshape(-1, len(FEATURE_NAMES))


def target_vector(instances: Sequence[Instance], target: str) -> np.ndarray:
    return np.array([inst.targets[TARGET_NAMES.index(target)] for inst in instances], dtype=float)


def _instances(bundle: DatasetBundle) -> list[Instance]:
    out = []
    for t, v in zip(bundle.training_sets, bundle.validation_sets):
        out.extend(t)
        out.extend(v)
    return out


def save(bundle: DatasetBundle, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>`` (CSV table) and ``<path stem>.channels.json`` next to it."""
    path = Path(path)
    companion = path.with_suffix(".channels.json")
    rows = _instances(bundle)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(META_NAMES + FEATURE_NAMES + TARGET_NAMES)
        for inst in rows:
            writer.writerow([inst.set_index, inst.split, inst.fiber, inst.seed, *map(repr, inst.features), *map(repr, inst.targets)])
    payload = {
        "format": CHANNELS_FORMAT,
        "instances": [
            {"row": i + 1, "frequencies_thz": list(inst.channels.center_frequencies), "powers_dbm": list(inst.channels.per_channel_powers)}
            for i, inst in enumerate(rows)
        ],
    }
    companion.write_text(json.dumps(payload))
    return path, companion


def load(path: str | Path) -> DatasetBundle:
    path = Path(path)
    companion = path.with_suffix(".channels.json")
    try:
        channels_doc = json.loads(companion.read_text())
    except FileNotFoundError:
        raise DatasetError(f"missing companion channel file {companion}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{companion}: {exc}") from None
    if channels_doc.get("format") != CHANNELS_FORMAT:
        raise DatasetError(f"{companion}: unsupported format {channels_doc.get('format')!r}")
    channel_rows = channels_doc["instances"]

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        for name in META_NAMES + FEATURE_NAMES + TARGET_NAMES:
            if name not in header:
                raise DatasetError(f"{path}: missing column {name!r}")
        col = {name: header.index(name) for name in header}
        train: dict[int, list[Instance]] = {}
        val: dict[int, list[Instance]] = {}
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DatasetError(f"{path}: row {row_no}: expected {len(header)} fields, got {len(row)}")
            try:
                features = tuple(float(row[col[n]]) for n in FEATURE_NAMES)
                targets = tuple(float(row[col[n]]) for n in TARGET_NAMES)
                set_index, seed = int(row[col["set"]]), int(row[col["seed"]])
            except ValueError as exc:
                raise DatasetError(f"{path}: row {row_no}: {exc}") from None
            split = row[col["split"]]
            if split not in ("train", "validation"):
                raise DatasetError(f"{path}: row {row_no}: bad split {split!r}")
            if row_no > len(channel_rows):
                raise DatasetError(f"{companion}: no channel set for row {row_no}")
            ch = channel_rows[row_no - 1]
            channels = ClassicalChannelSet.from_channels(ch["frequencies_thz"], ch["powers_dbm"])
            inst = Instance(features, targets, row[col["fiber"]], seed, set_index, split, channels)
            (train if split == "train" else val).setdefault(set_index, []).append(inst)
    if len(channel_rows) != sum(map(len, train.values())) + sum(map(len, val.values())):
        raise DatasetError(f"{companion}: row count does not match {path}")
    keys = sorted(set(train) | set(val))
    return DatasetBundle(
        tuple(tuple(train.get(k, ())) for k in keys),
        tuple(tuple(val.get(k, ())) for k in keys),
    )
