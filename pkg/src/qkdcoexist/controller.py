"""SDN application logic: monitor a link, predict quantum-channel quality, act.

When predicted metrics miss the threshold (or the current allocation
collides with spectrum reserved for other traffic) the controller first
tries to re-allocate the classical channels on the same path, choosing the
candidate plan with the highest predicted SKR; only if no plan is
acceptable does it move to another path.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import yaml

from .config import Config
from .dataset import featurize
from .grid import (
    ClassicalChannelSet,
    FiberProfile,
    GridSpec,
    QuantumChannelSpec,
    channel_to_frequency,
    frequency_to_wavelength,
    validate_channel_set,
)
from .ml import Predictor
from .physics import QkdPerformance, evaluate_link
from .wire import RecordLog, SssConfigMessage, encode

log = logging.getLogger(__name__)

PLAN_PRESETS: dict[str, tuple[int, ...]] = {
    "A": (75, 77, 79, 81, 83, 85, 87, 89),
    # as printed; the "70" breaks the odd-channel pattern of the rest
    "A-literal": (75, 77, 70, 81, 83, 85, 87, 89),
    "B": (11, 17, 23, 29, 41, 47, 53, 59),
}

KEEP, REALLOCATE, SWITCH_PATH = "keep", "reallocate", "switch_path"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Threshold:
    min_skr: float
    max_qber: float
    max_noise_rate: float

    def __post_init__(self) -> None:
        if self.min_skr < 0:
            raise ValueError("min_skr must be non-negative")
        if not 0 < self.max_qber <= 0.5:
            raise ValueError("max_qber must lie in (0, 0.5]")

    def violations(self, p: Prediction) -> list[str]:
        out = []
        if not p.skr >= self.min_skr:
            out.append(f"skr {p.skr:.1f} < {self.min_skr:.1f}")
        if not p.qber <= self.max_qber:
            out.append(f"qber {p.qber:.4f} > {self.max_qber:.4f}")
        if not p.noise_rate <= self.max_noise_rate:
            out.append(f"noise {p.noise_rate:.1f} > {self.max_noise_rate:.1f}")
        return out


@dataclass(frozen=True)
class Prediction:
    noise_rate: float
    skr: float
    qber: float


@dataclass(frozen=True)
class MonitoringSnapshot:
    timestamp: float
    link_id: str
    channels: ClassicalChannelSet
    measured_powers: tuple[float, ...]
    tolerance_db: float = 0.5

    def __post_init__(self) -> None:
        if len(self.measured_powers) != self.channels.n:
            raise ValueError("one measured power per channel required")
        for nominal, seen in zip(self.channels.per_channel_powers, self.measured_powers):
            if abs(nominal - seen) > self.tolerance_db:
                raise ValueError(f"measured power {seen:.2f} dBm deviates from nominal {nominal:.2f} dBm")

    @property
    def observed(self) -> ClassicalChannelSet:
        return self.channels.with_powers(self.measured_powers)


@dataclass(frozen=True)
class Action:
    variant: str
    predicted: Prediction
    plan: tuple[int, ...] | None = None
    plan_name: str | None = None
    path_id: str | None = None
    warning: bool = False
    reason: str = ""

    def label(self) -> str:
        if self.variant == REALLOCATE:
            return f"reallocate:{self.plan_name or ','.join(map(str, self.plan))}"
        if self.variant == SWITCH_PATH:
            return f"switch_path:{self.path_id}"
        return KEEP

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["plan"] = list(self.plan) if self.plan is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Action:
        return cls(
            variant=d["variant"],
            predicted=Prediction(**d["predicted"]),
            plan=tuple(d["plan"]) if d.get("plan") is not None else None,
            plan_name=d.get("plan_name"),
            path_id=d.get("path_id"),
            warning=d.get("warning", False),
            reason=d.get("reason", ""),
        )


def predict_link(
    predictor: Predictor,
    channels: ClassicalChannelSet,
    fiber: FiberProfile,
    q: QuantumChannelSpec,
    sentinel_ghz: float = 5000.0,
) -> Prediction:
    out = predictor.predict(featurize(channels, q, fiber, sentinel_ghz))
    return Prediction(noise_rate=out["noise_rate"], skr=out["skr"], qber=out["qber"])


def _rank(p: Prediction) -> tuple[float, float]:
    return (-p.skr, p.noise_rate)


def select_initial_path(
    paths: Sequence[tuple[FiberProfile, ClassicalChannelSet]],
    predictor: Predictor,
    q: QuantumChannelSpec,
    sentinel_ghz: float = 5000.0,
) -> int:
    """Index of the path with the best predicted SKR (then lowest noise, then lowest index)."""
    if not paths:
        raise ValueError("no candidate paths")
    preds = [predict_link(predictor, ch, fiber, q, sentinel_ghz) for fiber, ch in paths]
    return min(range(len(paths)), key=lambda i: (*_rank(preds[i]), i))


def plan_channel_set(
    plan: Sequence[int], powers_dbm: Sequence[float], grid: GridSpec
) -> ClassicalChannelSet:
    """Channels of ``plan`` carrying the current powers, lowest frequency first."""
    return ClassicalChannelSet.from_indices(sorted(plan), list(powers_dbm), grid)


def evaluate_and_decide(
    snapshot: MonitoringSnapshot,
    predictor: Predictor,
    threshold: Threshold,
    plans: Mapping[str, Sequence[int]],
    alternate_paths: Sequence[FiberProfile],
    *,
    fiber: FiberProfile,
    quantum: QuantumChannelSpec,
    grid: GridSpec,
    reserved: Sequence[int] = (),
    sentinel_ghz: float = 5000.0,
) -> Action:
    observed = snapshot.observed
    current = predict_link(predictor, observed, fiber, quantum, sentinel_ghz)
    failing = threshold.violations(current)
    blocked = set(reserved)
    clash = sorted(blocked & set(observed.indices(grid)))
    if not failing and not clash:
        return Action(KEEP, current, reason="all thresholds met")
    reason = "; ".join(failing + ([f"channels {clash} reserved by other traffic"] if clash else []))

    candidates: list[tuple[str, tuple[int, ...], Prediction]] = []
    for name, plan in plans.items():
        plan = tuple(sorted(plan))
        if len(plan) != observed.n or blocked & set(plan):
            continue
        channels = plan_channel_set(plan, snapshot.measured_powers, grid)
        if validate_channel_set(channels, quantum):
            continue
        candidates.append((name, plan, predict_link(predictor, channels, fiber, quantum, sentinel_ghz)))
    ok = [c for c in candidates if not threshold.violations(c[2])]
    if ok:
        name, plan, pred = min(ok, key=lambda c: _rank(c[2]))
        return Action(REALLOCATE, pred, plan=plan, plan_name=name, reason=reason)

    if not clash:
        alternates = [(f.name, predict_link(predictor, observed, f, quantum, sentinel_ghz)) for f in alternate_paths]
        good = [a for a in alternates if not threshold.violations(a[1])]
        if good:
            path_id, pred = min(good, key=lambda a: _rank(a[1]))
            return Action(SWITCH_PATH, pred, path_id=path_id, reason=reason)

    if candidates:
        name, plan, pred = min(candidates, key=lambda c: _rank(c[2]))
        log.warning("no plan or path meets the threshold; best effort re-allocation to %s", name)
        return Action(REALLOCATE, pred, plan=plan, plan_name=name, warning=True, reason=reason + "; best effort")
    log.warning("no feasible re-allocation plan; keeping current allocation")
    return Action(KEEP, current, warning=True, reason=reason + "; no feasible plan")


def greedy_plan(
    current: Sequence[int],
    powers_dbm: Sequence[float],
    fiber: FiberProfile,
    predictor: Predictor,
    quantum: QuantumChannelSpec,
    grid: GridSpec,
    reserved: Sequence[int] = (),
    max_moves: int = 16,
    sentinel_ghz: float = 5000.0,
) -> tuple[int, ...]:
    """Move the channel nearest the quantum channel to the nearest free slot farther out, while that helps.

    Not part of the field-trial procedure; offered as an extra candidate plan.
    """
    fq_index = grid.index_of(quantum.center_frequency)
    allowed = [i for i in grid.c_band_indices() if not quantum.in_band(channel_to_frequency(i, grid))]
    plan = sorted(current)

    def score(p):
        return _rank(predict_link(predictor, plan_channel_set(p, powers_dbm, grid), fiber, quantum, sentinel_ghz))

    best = score(plan)
    for _ in range(max_moves):
        worst = min(plan, key=lambda i: (abs(i - fq_index), i))
        side = 1 if worst > fq_index else -1
        free = [i for i in allowed if i not in plan and i not in reserved and (i - worst) * side > 0]
        if not free:
            break
        target = min(free, key=lambda i: abs(i - worst))
        trial = sorted([i for i in plan if i != worst] + [target])
        s = score(trial)
        if s >= best:
            break
        plan, best = trial, s
    return tuple(plan)


def moved_channel_messages(
    old: Sequence[int],
    new: Sequence[int],
    grid: GridSpec,
    *,
    in_port: str,
    filter_width: float,
    first_id: int,
    timestamp: float,
) -> list[SssConfigMessage]:
    """One SSS message per channel slot whose wavelength changes; output port = 1-based slot."""
    msgs = []
    for slot, (a, b) in enumerate(zip(sorted(old), sorted(new)), start=1):
        if a == b:
            continue
        msgs.append(
            SssConfigMessage(
                in_port=in_port,
                out_port=str(slot),
                center_wavelength=frequency_to_wavelength(channel_to_frequency(b, grid)),
                filter_width=filter_width,
                message_id=first_id + len(msgs),
                timestamp=timestamp,
            )
        )
    return msgs


# --- scenario ---------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioStage:
    name: str
    channels: tuple[int, ...] | None = None
    add: tuple[int, ...] = ()
    reserved: tuple[int, ...] = ()
    expect: str | None = None


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    stages: tuple[ScenarioStage, ...]
    plans: dict[str, tuple[int, ...]]
    paths: tuple[str, ...]
    power_dbm: float = -24.5
    monitor_jitter_db: float = 0.2
    stage_interval_s: float = 60.0
    seed: int = 0

    def __post_init__(self) -> None:
        names = [s.name for s in self.stages]
        if not names or names[0] != "initial":
            raise ScenarioError("the first stage must be 'initial'")
        for i, name in enumerate(names[1:], start=1):
            if name != f"stage{i}":
                raise ScenarioError(f"stage {i} is {name!r}; stages must run initial, stage1, stage2, ...")
        if self.stages[0].channels is None:
            raise ScenarioError("the initial stage must list its channels")
        if not self.paths:
            raise ScenarioError("at least one path is required")
        if not self.plans:
            raise ScenarioError("at least one re-allocation plan is required")


def _resolve_plan(value: Any) -> tuple[int, ...]:
    if isinstance(value, str):
        if value not in PLAN_PRESETS:
            raise ScenarioError(f"unknown plan preset {value!r}; known: {sorted(PLAN_PRESETS)}")
        return PLAN_PRESETS[value]
    return tuple(int(i) for i in value)


def script_from_dict(d: dict[str, Any]) -> ScenarioScript:
    try:
        stages = tuple(
            ScenarioStage(
                name=str(s["name"]),
                channels=tuple(int(i) for i in s["channels"]) if "channels" in s else None,
                add=tuple(int(i) for i in s.get("add", ())),
                reserved=tuple(int(i) for i in s.get("reserved", ())),
                expect=s.get("expect"),
            )
            for s in d["stages"]
        )
        return ScenarioScript(
            name=str(d.get("name", "scenario")),
            stages=stages,
            plans={str(k): _resolve_plan(v) for k, v in d["plans"].items()},
            paths=tuple(d["paths"]),
            power_dbm=float(d.get("power_dbm", -24.5)),
            monitor_jitter_db=float(d.get("monitor_jitter_db", 0.2)),
            stage_interval_s=float(d.get("stage_interval_s", 60.0)),
            seed=int(d.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"malformed scenario script: {exc}") from exc


def load_script(path: str | Path | None = None) -> ScenarioScript:
    """Parse a YAML scenario; ``None`` loads the shipped field-trial scenario."""
    if path is None:
        text = resources.files("qkdcoexist").joinpath("data/default_scenario.yaml").read_text()
    else:
        text = Path(path).read_text()
    return script_from_dict(yaml.safe_load(text))


@dataclass(frozen=True)
class StageRecord:
    name: str
    path: str
    channels: tuple[int, ...]
    reserved: tuple[int, ...]
    monitored: QkdPerformance
    predicted: Prediction
    action: Action
    messages: tuple[SssConfigMessage, ...]
    expected: str | None

    @property
    def matches_expected(self) -> bool | None:
        return None if self.expected is None else self.expected == self.action.label()

    @property
    def deltas(self) -> dict[str, float]:
        """Predicted minus monitored, per metric."""
        m = self.monitored
        return {
            "noise_rate": self.predicted.noise_rate - m.noise.total_rate,
            "skr": self.predicted.skr - m.skr,
            "qber": self.predicted.qber - m.qber,
        }


@dataclass(frozen=True)
class ScenarioReport:
    script: str
    model: str
    threshold: Threshold
    stages: tuple[StageRecord, ...]

    @property
    def actions(self) -> list[str]:
        return [s.action.label() for s in self.stages]

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for s in self.stages:
            out.append(
                {
                    "stage": s.name,
                    "path": s.path,
                    "channels": "-".join(map(str, s.channels)),
                    "monitored_noise_rate": s.monitored.noise.total_rate,
                    "predicted_noise_rate": s.predicted.noise_rate,
                    "monitored_skr": s.monitored.skr,
                    "predicted_skr": s.predicted.skr,
                    "monitored_qber": s.monitored.qber,
                    "predicted_qber": s.predicted.qber,
                    "action": s.action.label(),
                    "warning": s.action.warning,
                    "messages": len(s.messages),
                    "expected": s.expected or "",
                }
            )
        return out

    def format(self) -> str:
        t = self.threshold
        lines = [
            f"scenario {self.script} (model {self.model})",
            f"threshold: skr >= {t.min_skr:.1f} b/s, qber <= {t.max_qber:.3f}, noise <= {t.max_noise_rate:.1f} ph/s",
            "",
            f"{'stage':<8}{'path':<9}{'noise mon/pred':>20}{'SKR mon/pred':>20}{'QBER mon/pred':>18}  action",
        ]
        for s in self.stages:
            m, p = s.monitored, s.predicted
            flag = " (!)" if s.action.warning else ""
            lines.append(
                f"{s.name:<8}{s.path:<9}{m.noise.total_rate:>10.1f}/{p.noise_rate:<9.1f}"
                f"{m.skr:>10.1f}/{p.skr:<9.1f}{m.qber:>9.4f}/{p.qber:<8.4f}  {s.action.label()}{flag}"
            )
            lines.append(f"{'':<17}channels {'-'.join(map(str, s.channels))}; {s.action.reason}")
            for msg in s.messages:
                lines.append(f"{'':<17}{encode(msg).decode().rstrip()}")
        return "\n".join(lines)


def _snapshot_payload(stage, snapshot, path, alternates, threshold, plans, monitored) -> dict[str, Any]:
    return {
        "stage": stage.name,
        "timestamp": snapshot.timestamp,
        "link": path,
        "alternates": [f for f in alternates],
        "frequencies_thz": list(snapshot.channels.center_frequencies),
        "nominal_dbm": list(snapshot.channels.per_channel_powers),
        "measured_dbm": list(snapshot.measured_powers),
        "reserved": list(stage.reserved),
        "plans": {k: list(v) for k, v in plans.items()},
        "threshold": asdict(threshold),
        "monitored": {
            "noise_rate": monitored.noise.total_rate,
            "skr": monitored.skr,
            "qber": monitored.qber,
            "breakdown": asdict(monitored.noise),
        },
    }


def run_scenario(
    script: ScenarioScript,
    predictor: Predictor,
    config: Config,
    oracle: Callable[..., QkdPerformance] = evaluate_link,
    store: RecordLog | None = None,
    min_skr: float | None = None,
    max_qber: float | None = None,
    greedy: bool = False,
) -> ScenarioReport:
    """Replay the staged use case: monitor, predict, decide, and emit switch messages."""
    grid, q = config.grid, config.quantum
    sentinel = config.campaign.sentinel_ghz
    fibers = {name: config.fiber(name) for name in script.paths}
    rng = np.random.default_rng(script.seed)
    first = script.stages[0]
    power = script.power_dbm

    def nominal(indices):
        return ClassicalChannelSet.from_indices(indices, power, grid)

    candidates = [(fibers[p], nominal(first.channels)) for p in script.paths]
    path = script.paths[select_initial_path(candidates, predictor, q, sentinel)]

    threshold: Threshold | None = None
    records: list[StageRecord] = []
    current: tuple[int, ...] = ()
    pending: Action | None = None
    next_msg_id = 1
    for i, stage in enumerate(script.stages):
        if pending is not None and pending.variant == REALLOCATE:
            current = tuple(sorted(pending.plan))
        elif pending is not None and pending.variant == SWITCH_PATH:
            path = pending.path_id
        if stage.channels is not None:
            current = tuple(sorted(stage.channels))
        if stage.add:
            if set(stage.add) & set(current):
                raise ScenarioError(f"{stage.name}: added channels already in use")
            current = tuple(sorted(current + stage.add))
        nominal_set = nominal(current)
        if validate_channel_set(nominal_set, q):
            raise ScenarioError(f"{stage.name}: invalid allocation {validate_channel_set(nominal_set, q)}")
        jitter = rng.uniform(-script.monitor_jitter_db, script.monitor_jitter_db, size=nominal_set.n)
        timestamp = i * script.stage_interval_s
        snapshot = MonitoringSnapshot(
            timestamp, path, nominal_set, tuple(float(p) for p in np.add(nominal_set.per_channel_powers, jitter))
        )
        fiber = fibers[path]
        monitored = oracle(snapshot.observed, q, fiber, config.constants)
        predicted = predict_link(predictor, snapshot.observed, fiber, q, sentinel)

        if threshold is None:
            tc = config.threshold
            skr_floor = min_skr if min_skr is not None else tc.min_skr
            if skr_floor is None:
                skr_floor = tc.min_skr_fraction * predicted.skr
            threshold = Threshold(skr_floor, max_qber if max_qber is not None else tc.max_qber, tc.max_noise_rate)

        plans = dict(script.plans)
        if greedy:
            plans["greedy"] = greedy_plan(
                current, snapshot.measured_powers, fiber, predictor, q, grid, stage.reserved, sentinel_ghz=sentinel
            )
        alternates = [fibers[p] for p in script.paths if p != path]
        action = evaluate_and_decide(
            snapshot, predictor, threshold, plans, alternates,
            fiber=fiber, quantum=q, grid=grid, reserved=stage.reserved, sentinel_ghz=sentinel,
        )
        messages: list[SssConfigMessage] = []
        if action.variant == REALLOCATE:
            messages = moved_channel_messages(
                current, action.plan, grid,
                in_port=config.messages.in_port,
                filter_width=config.messages.filter_width_ghz,
                first_id=next_msg_id,
                timestamp=timestamp + 1.0,
            )
            next_msg_id += len(messages)

        if store is not None:
            store.append("snapshot", _snapshot_payload(stage, snapshot, path, [f.name for f in alternates], threshold, plans, monitored))
            store.append("prediction", {"stage": stage.name, **asdict(predicted)})
            store.append("action", {"stage": stage.name, **action.to_dict()})
            for msg in messages:
                store.append("message", {"stage": stage.name, "wire": encode(msg).decode()})

        records.append(
            StageRecord(stage.name, path, current, stage.reserved, monitored, predicted, action, tuple(messages), stage.expect)
        )
        pending = action
    return ScenarioReport(script.name, predictor.kind, threshold, tuple(records))


def actions_from_log(records) -> list[Action]:
    return [Action.from_dict({k: v for k, v in r.payload.items() if k != "stage"}) for r in records if r.kind == "action"]


def redecide_from_log(records, predictor: Predictor, config: Config) -> list[Action]:
    """Re-run every logged decision from its snapshot record alone."""
    out = []
    for r in records:
        if r.kind != "snapshot":
            continue
        p = r.payload
        channels = ClassicalChannelSet.from_channels(p["frequencies_thz"], p["nominal_dbm"])
        snapshot = MonitoringSnapshot(p["timestamp"], p["link"], channels, tuple(p["measured_dbm"]))
        out.append(
            evaluate_and_decide(
                snapshot,
                predictor,
                Threshold(**p["threshold"]),
                {k: tuple(v) for k, v in p["plans"].items()},
                [config.fiber(n) for n in p["alternates"]],
                fiber=config.fiber(p["link"]),
                quantum=config.quantum,
                grid=config.grid,
                reserved=tuple(p["reserved"]),
                sentinel_ghz=config.campaign.sentinel_ghz,
            )
        )
    return out
