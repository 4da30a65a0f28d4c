"""SignalTrace: an abscissa grid plus named real-valued channels.

Column-text layout (``.csv``)::

    # key=value            metadata, one per line, sorted by key
    name[unit],name[unit]  header, abscissa first
    1.0,2.5                rows, shortest round-trip float repr

The JSON layout carries the same content as a single object.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

_HEADER_RE = re.compile(r"^(?P<name>[^\[\]]+)\[(?P<unit>[^\[\]]*)\]$")


class TraceError(ValueError):
    """Malformed trace or incompatible traces."""


@dataclass
class SignalTrace:
    abscissa_name: str
    abscissa_unit: str
    abscissa: np.ndarray
    channels: dict[str, np.ndarray] = field(default_factory=dict)
    units: dict[str, str] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        if self.abscissa.ndim != 1 or self.abscissa.size == 0:
            raise TraceError("abscissa must be a non-empty 1-D grid")
        if self.abscissa.size > 1 and not np.all(np.diff(self.abscissa) > 0):
            raise TraceError("abscissa must be strictly ascending")
        chans = {}
        for name, values in self.channels.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != self.abscissa.shape:
                raise TraceError(
                    f"channel {name!r} has {arr.size} points, abscissa has {self.abscissa.size}"
                )
            chans[name] = arr
        self.channels = chans
        for name in self.channels:
            self.units.setdefault(name, "")
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}

    def __len__(self) -> int:
        return self.abscissa.size

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def with_channel(self, name: str, values, unit: str = "") -> "SignalTrace":
        chans = dict(self.channels)
        chans[name] = values
        units = dict(self.units)
        units[name] = unit
        return SignalTrace(self.abscissa_name, self.abscissa_unit, self.abscissa.copy(),
                           chans, units, dict(self.metadata))

    def same_grid(self, other: "SignalTrace") -> bool:
        return (self.abscissa_name == other.abscissa_name
                and self.abscissa.shape == other.abscissa.shape
                and bool(np.array_equal(self.abscissa, other.abscissa)))

    # -- serialization -----------------------------------------------------

    def to_csv_text(self) -> str:
        lines = [f"# {k}={self.metadata[k]}" for k in sorted(self.metadata)]
        names = list(self.channels)
        header = [f"{self.abscissa_name}[{self.abscissa_unit}]"]
        header += [f"{n}[{self.units.get(n, '')}]" for n in names]
        lines.append(",".join(header))
        cols = [self.abscissa] + [self.channels[n] for n in names]
        for i in range(self.abscissa.size):
            lines.append(",".join(repr(float(c[i])) for c in cols))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv_text(cls, text: str) -> "SignalTrace":
        metadata: dict[str, str] = {}
        rows = []
        header = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                metadata[key.strip()] = value.strip()
            elif header is None:
                header = [h.strip() for h in line.split(",")]
            else:
                rows.append([float(v) for v in line.split(",")])
        if header is None:
            raise TraceError("missing header line")
        parsed = []
        for h in header:
            m = _HEADER_RE.match(h)
            if m is None:
                raise TraceError(f"header entry {h!r} is not of the form name[unit]")
            parsed.append((m["name"], m["unit"]))
        data = np.array(rows, dtype=float).reshape(len(rows), len(parsed))
        (aname, aunit), rest = parsed[0], parsed[1:]
        return cls(aname, aunit, data[:, 0],
                   {n: data[:, i + 1] for i, (n, _) in enumerate(rest)},
                   {n: u for n, u in rest}, metadata)

    def to_dict(self) -> dict:
        return {
            "abscissa": {"name": self.abscissa_name, "unit": self.abscissa_unit,
                         "values": self.abscissa.tolist()},
            "channels": {n: {"unit": self.units.get(n, ""), "values": v.tolist()}
                         for n, v in self.channels.items()},
            "metadata": dict(sorted(self.metadata.items())),
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json_text(cls, text: str) -> "SignalTrace":
        obj = json.loads(text)
        ab = obj["abscissa"]
        chans = obj.get("channels", {})
        return cls(ab["name"], ab["unit"], ab["values"],
                   {n: c["values"] for n, c in chans.items()},
                   {n: c.get("unit", "") for n, c in chans.items()},
                   obj.get("metadata", {}))
