"""Loading the YAML setup file that describes grid, links, campaign and thresholds."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .grid import DetectorModel, FiberProfile, GridSpec, QuantumChannelSpec
from .physics import LinkConstants


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    n_values: tuple[int, ...] = (1, 4, 8)
    tp_min_dbm: float = -26.0
    tp_max_dbm: float = -15.0
    tp_step_db: float = 0.25
    validation_tp_stride: int = 5
    validation_tp_offset: int = 2
    spacing_slots: tuple[int, ...] = (1, 2, 3, 4, 6)
    max_offset_slots: int = 12
    random_placements: int = 20
    power_ripple_db: float = 1.0
    training_per_set: int = 164
    validation_per_set: int = 43
    set_count: int = 5
    sentinel_ghz: float = 5000.0


@dataclass(frozen=True)
class ThresholdConfig:
    max_qber: float = 0.06
    max_noise_rate: float = 600.0
    min_skr_fraction: float = 0.5
    min_skr: float | None = None


@dataclass(frozen=True)
class MessageConfig:
    filter_width_ghz: float = 38.0
    in_port: str = "A"


@dataclass(frozen=True)
class Config:
    grid: GridSpec = field(default_factory=GridSpec)
    quantum: QuantumChannelSpec = field(default_factory=QuantumChannelSpec)
    constants: LinkConstants = field(default_factory=LinkConstants)
    fibers: tuple[FiberProfile, ...] = ()
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    messages: MessageConfig = field(default_factory=MessageConfig)

    def fiber(self, name: str) -> FiberProfile:
        for f in self.fibers:
            if f.name == name:
                return f
        raise ConfigError(f"unknown fiber profile {name!r}")

    def to_dict(self) -> dict[str, Any]:
        q = self.quantum
        return {
            "grid": {"anchor_thz": self.grid.anchor_frequency, "spacing_ghz": self.grid.channel_spacing},
            "quantum": {"wavelength_nm": q.center_wavelength, "filter_bandwidth_ghz": q.filter_bandwidth},
            "detector": {
                "detection_efficiency": q.detector.detection_efficiency,
                "dark_count_probability": q.detector.intrinsic_dark_count_probability,
                "gate_rate_hz": q.detector.gate_rate,
                "error_rate": q.detector.detector_error_rate,
            },
            "link": asdict(self.constants),
            "fibers": [
                {
                    "name": f.name,
                    "length_km": f.length,
                    "loss_db": f.end_to_end_loss,
                    "raman_coefficient": f.raman_coefficient,
                    "fwm_efficiency": f.fwm_efficiency,
                }
                for f in self.fibers
            ],
            "campaign": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.campaign).items()},
            "threshold": {k: v for k, v in asdict(self.threshold).items() if v is not None},
            "messages": asdict(self.messages),
        }


_SECTIONS = {
    "grid": {"anchor_thz", "spacing_ghz"},
    "quantum": {"wavelength_nm", "filter_bandwidth_ghz"},
    "detector": {"detection_efficiency", "dark_count_probability", "gate_rate_hz", "error_rate"},
    "link": set(LinkConstants.__dataclass_fields__),
    "campaign": set(CampaignConfig.__dataclass_fields__),
    "threshold": set(ThresholdConfig.__dataclass_fields__),
    "messages": set(MessageConfig.__dataclass_fields__),
}
_FIBER_KEYS = {"name", "length_km", "loss_db", "raman_coefficient", "fwm_efficiency"}


def _defaults() -> dict[str, Any]:
    text = resources.files("qkdcoexist").joinpath("data/defaults.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key == "fibers":
            if not isinstance(value, list) or not value:
                raise ConfigError("'fibers' must be a non-empty list")
            for entry in value:
                extra = set(entry) - _FIBER_KEYS
                if extra:
                    raise ConfigError(f"unknown fiber keys: {sorted(extra)}")
            out["fibers"] = value
            continue
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config section {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        extra = set(value) - _SECTIONS[key]
        if extra:
            raise ConfigError(f"unknown keys in [{key}]: {sorted(extra)}")
        out.setdefault(key, {}).update(value)
    return out


def config_from_dict(raw: dict[str, Any]) -> Config:
    d = _merge(_defaults(), raw or {})
    try:
        det = d["detector"]
        quantum = QuantumChannelSpec(
            center_wavelength=float(d["quantum"]["wavelength_nm"]),
            filter_bandwidth=float(d["quantum"]["filter_bandwidth_ghz"]),
            detector=DetectorModel(
                detection_efficiency=float(det["detection_efficiency"]),
                intrinsic_dark_count_probability=float(det["dark_count_probability"]),
                gate_rate=float(det["gate_rate_hz"]),
                detector_error_rate=float(det["error_rate"]),
            ),
        )
        fibers = tuple(
            FiberProfile(
                name=str(f["name"]),
                length=float(f["length_km"]),
                end_to_end_loss=float(f["loss_db"]),
                raman_coefficient=float(f.get("raman_coefficient", 0.0)),
                fwm_efficiency=float(f.get("fwm_efficiency", 0.0)),
            )
            for f in d["fibers"]
        )
        campaign = {k: tuple(v) if isinstance(v, list) else v for k, v in d["campaign"].items()}
        return Config(
            grid=GridSpec(float(d["grid"]["anchor_thz"]), float(d["grid"]["spacing_ghz"])),
            quantum=quantum,
            constants=LinkConstants(**{k: float(v) for k, v in d["link"].items()}),
            fibers=fibers,
            campaign=CampaignConfig(**campaign),
            threshold=ThresholdConfig(**d["threshold"]),
            messages=MessageConfig(**d["messages"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path: str | Path | None = None) -> Config:
    """Read a YAML config, layering it over the shipped defaults."""
    if path is None:
        return config_from_dict({})
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw or {})
