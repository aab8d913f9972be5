"""Switch-configuration messages and the append-only record log.

Wire format, one message per line, fields in this fixed order::

    SSS_CONFIG id=<int> ts=<seconds, 3 dp> in_port=<label> out_port=<label> wavelength_nm=<3 dp> filter_ghz=<1 dp>

The canonical vector is ``SSS_CONFIG id=1 ts=0.000 in_port=A out_port=4
wavelength_nm=1554.134 filter_ghz=38.0``. Values are rounded to the wire
precision when a message is built, so ``decode(encode(m)) == m`` holds
exactly.

The record log is JSON lines, ``{"seq": n, "kind": ..., "payload": {...}}``,
with ``seq`` starting at 1 and increasing by one per record.
"""

from __future__ import annotations

import json
import os
import re
import threading
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from .grid import C_BAND_NM

TAG = "SSS_CONFIG"
FIELDS = ("id", "ts", "in_port", "out_port", "wavelength_nm", "filter_ghz")
RECORD_KINDS = ("snapshot", "prediction", "action", "message")

_PORT = re.compile(r"^[^\s=]+$")
_DECIMAL = re.compile(r"^-?\d+(\.\d+)?$")


class WireError(ValueError):
    pass


class MissingFieldError(WireError):
    pass


class UnknownFieldError(WireError):
    pass


class WavelengthRangeError(WireError):
    pass


class MalformedNumberError(WireError):
    pass


class MessageValidationError(WireError):
    pass


class CorruptLogError(RuntimeError):
    pass


class TruncatedLogWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SssConfigMessage:
    in_port: str
    out_port: str
    center_wavelength: float  # nm
    filter_width: float  # GHz
    message_id: int = 0
    timestamp: float = 0.0  # s

    def __post_init__(self) -> None:
        object.__setattr__(self, "center_wavelength", round(float(self.center_wavelength), 3))
        object.__setattr__(self, "filter_width", round(float(self.filter_width), 1))
        object.__setattr__(self, "timestamp", round(float(self.timestamp), 3))
        for name in ("in_port", "out_port"):
            port = getattr(self, name)
            if not isinstance(port, str) or not _PORT.match(port):
                raise MessageValidationError(f"{name} must be a non-empty label without spaces or '=': {port!r}")
        if not self.filter_width > 0:
            raise MessageValidationError(f"filter width must be positive, got {self.filter_width} GHz")
        if not C_BAND_NM[0] <= self.center_wavelength <= C_BAND_NM[1]:
            raise WavelengthRangeError(f"wavelength {self.center_wavelength} nm is outside the C-band {C_BAND_NM}")
        if isinstance(self.message_id, bool) or not isinstance(self.message_id, int) or self.message_id < 0:
            raise MessageValidationError(f"message id must be a non-negative integer, got {self.message_id!r}")
        if self.timestamp < 0:
            raise MessageValidationError("timestamp must be non-negative")


def encode(msg: SssConfigMessage) -> bytes:
    return (
        f"{TAG} id={msg.message_id} ts={msg.timestamp:.3f} in_port={msg.in_port} out_port={msg.out_port} "
        f"wavelength_nm={msg.center_wavelength:.3f} filter_ghz={msg.filter_width:.1f}\n"
    ).encode("ascii")


def _number(name: str, text: str) -> float:
    if not _DECIMAL.match(text):
        raise MalformedNumberError(f"field {name!r}: malformed number {text!r}")
    return float(text)


def decode(data: bytes) -> SssConfigMessage:
    try:
        line = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise WireError(f"message is not ASCII: {exc}") from None
    if line.endswith("\n"):
        line = line[:-1]
    tokens = line.split(" ")
    if not tokens or tokens[0] != TAG:
        raise WireError(f"message must start with {TAG!r}")
    values: dict[str, str] = {}
    for tok in tokens[1:]:
        key, sep, value = tok.partition("=")
        if not sep:
            raise WireError(f"malformed token {tok!r}")
        if key not in FIELDS:
            raise UnknownFieldError(f"unknown field {key!r}")
        if key in values:
            raise WireError(f"duplicate field {key!r}")
        values[key] = value
    for name in FIELDS:
        if name not in values:
            raise MissingFieldError(f"missing field {name!r}")
    if list(values) != list(FIELDS):
        raise WireError("fields out of canonical order")
    if not values["id"].isdigit():
        raise MalformedNumberError(f"field 'id': malformed integer {values['id']!r}")
    return SssConfigMessage(
        in_port=values["in_port"],
        out_port=values["out_port"],
        center_wavelength=_number("wavelength_nm", values["wavelength_nm"]),
        filter_width=_number("filter_ghz", values["filter_ghz"]),
        message_id=int(values["id"]),
        timestamp=_number("ts", values["ts"]),
    )


@dataclass(frozen=True)
class Record:
    seq: int
    kind: str
    payload: dict[str, Any]

    def to_line(self) -> str:
        return json.dumps({"seq": self.seq, "kind": self.kind, "payload": self.payload}, sort_keys=True) + "\n"


def _parse_lines(text: str, source: str) -> tuple[list[Record], int]:
    """Records plus the byte length of the intact prefix."""
    records: list[Record] = []
    good = 0
    lines = text.splitlines(keepends=True)
    for i, line in enumerate(lines):
        last = i == len(lines) - 1
        try:
            if not line.endswith("\n"):
                raise ValueError("unterminated line")
            obj = json.loads(line)
            rec = Record(int(obj["seq"]), str(obj["kind"]), dict(obj["payload"]))
        except (ValueError, KeyError, TypeError) as exc:
            if last:
                warnings.warn(f"{source}: dropping partial trailing record ({exc})", TruncatedLogWarning, stacklevel=3)
                break
            raise CorruptLogError(f"{source}: line {i + 1} is corrupt: {exc}") from None
        if rec.kind not in RECORD_KINDS:
            raise CorruptLogError(f"{source}: line {i + 1} has unknown kind {rec.kind!r}")
        expected = records[-1].seq + 1 if records else 1
        if rec.seq != expected:
            raise CorruptLogError(f"{source}: sequence gap at line {i + 1} (expected {expected}, got {rec.seq})")
        records.append(rec)
        good += len(line.encode())
    return records, good


def replay(path: str | Path) -> list[Record]:
    """Records in append order; a torn final line is dropped with a warning."""
    path = Path(path)
    if not path.exists():
        return []
    records, _ = _parse_lines(path.read_text(), str(path))
    return records


class RecordLog:
    """Single-writer append-only log; reopening trims a torn tail and continues the sequence."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seq = 0
        if self.path.exists():
            records, good = _parse_lines(self.path.read_text(), str(self.path))
            if good != self.path.stat().st_size:
                with self.path.open("r+b") as fh:
                    fh.truncate(good)
            self._seq = records[-1].seq if records else 0
        else:
            self.path.touch()

    def append(self, kind: str, payload: dict[str, Any]) -> Record:
        if kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        with self._lock:
            rec = Record(self._seq + 1, kind, payload)
            with self.path.open("a") as fh:
                fh.write(rec.to_line())
                fh.flush()
                os.fsync(fh.fileno())
            self._seq = rec.seq
            return rec

    def extend(self, items: Iterable[tuple[str, dict[str, Any]]]) -> list[Record]:
        return [self.append(kind, payload) for kind, payload in items]

    def replay(self) -> list[Record]:
        return replay(self.path)
