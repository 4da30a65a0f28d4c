"""Declarative run configuration (TOML).

User-facing units: frequencies and rates in Hz (multiplied by 2 pi
internally), fields in mT, angles in degrees. Every section is optional;
missing keys take the defaults below. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import sys
from typing import Literal, Optional

import numpy as np
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .constants import TWO_PI
from .mech import CantileverParams
from .nvcore import NvParams, StaticField
from .signal import DEFAULT_KAPPA, DriveConfig, SpuriousBackground
from .spindyn import RateSet


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key and line."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class NvSection(_Section):
    zero_field_splitting: float = Field(2.87e9, gt=0)
    gyromagnetic_ratio: float = Field(-28.0e9, lt=0)
    gamma1: float = Field(1e3, ge=0)
    gamma2_star: float = Field(5e6, gt=0)
    gamma_las: float = Field(1e3, ge=0)
    spins_per_class: float = Field(5e9, gt=0)


class FieldSection(_Section):
    amplitude: float = Field(18.0, ge=0)
    theta: float = Field(60.0, ge=0, le=180)
    azimuth: float = 0.0
    class_index: int = Field(0, ge=0, le=3)


class RatesSection(_Section):
    rabi_frequency: float = Field(1e6, ge=0)
    detuning: Optional[float] = None


class CantileverSection(_Section):
    length: float = Field(350e-6, gt=0)
    width: float = Field(32.5e-6, gt=0)
    thickness: float = Field(1e-6, gt=0)
    f0: float = Field(14480.0, gt=0)
    fm: float = Field(2860.0, gt=0)
    quality_factor: float = Field(160.0, gt=0)
    stiffness: float = Field(0.03, gt=0)
    effective_mass: float = Field(1e-11, gt=0)
    beta: float = Field(1.875, gt=0)
    temperature: float = Field(300.0, ge=0)
    noise_floor: float = Field(1e-21, ge=0)

    @model_validator(mode="after")
    def _loaded_below_free(self):
        if self.fm > self.f0:
            raise ValueError("fm must not exceed f0")
        return self


class DriveSection(_Section):
    mw_center: float = Field(2.87e9, gt=0)
    fm_depth: float = Field(8e6, ge=0)
    mod_freq: Optional[float] = Field(None, gt=0)
    power_dbm: Optional[float] = None
    kappa: float = Field(DEFAULT_KAPPA, gt=0)
    transition: Literal["minus", "plus"] = "minus"
    class_index: int = Field(0, ge=0, le=3)


class OdmrSection(_Section):
    contrast: float = Field(0.015, gt=0, lt=1)
    linewidth: float = Field(10e6, gt=0)


class BackgroundSection(_Section):
    x_amplitude: float = 0.0
    y_amplitude: float = 0.0
    laser_off: bool = False


class SweepSection(_Section):
    abscissa: Literal["mw_frequency", "theta", "field", "power", "rabi", "frequency"]
    start: float
    stop: float
    points: int = Field(ge=2)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.start < self.stop:
            raise ValueError("start must be below stop")
        return self

    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


class OutputSection(_Section):
    directory: str = "out"
    format: Literal["csv", "json"] = "csv"


class FitSection(_Section):
    f_minus: Optional[float] = Field(None, gt=0)
    f_plus: Optional[float] = Field(None, gt=0)
    tolerance: float = Field(1e3, gt=0)
    data: Optional[str] = None
    channel: str = "tau"
    variable: Literal["theta", "field"] = "theta"
    quantity: Literal["norm", "projection"] = "norm"
    noise: float = Field(0.01, ge=0)


class RunConfig(_Section):
    nv: NvSection = NvSection()
    field: FieldSection = FieldSection()
    rates: RatesSection = RatesSection()
    cantilever: CantileverSection = CantileverSection()
    drive: DriveSection = DriveSection()
    odmr: OdmrSection = OdmrSection()
    background: BackgroundSection = BackgroundSection()
    sweep: Optional[SweepSection] = None
    output: OutputSection = OutputSection()
    fit: FitSection = FitSection()
    seed: int = 0

    # -- conversion to domain objects (SI, rad/s) ---------------------------

    def nv_params(self) -> NvParams:
        s = self.nv
        return NvParams(D=TWO_PI * s.zero_field_splitting, gamma_e=TWO_PI * s.gyromagnetic_ratio,
                        Gamma1=TWO_PI * s.gamma1, Gamma2star=TWO_PI * s.gamma2_star,
                        gamma_las=TWO_PI * s.gamma_las, N_per_class=s.spins_per_class)

    def static_field(self) -> StaticField:
        f = self.field
        return StaticField.from_angle(f.amplitude * 1e-3, math.radians(f.theta), f.class_index,
                                      self.nv_params(), math.radians(f.azimuth))

    def rate_set(self) -> RateSet:
        nv = self.nv_params()
        det = None if self.rates.detuning is None else TWO_PI * self.rates.detuning
        return RateSet.from_params(nv, TWO_PI * self.rates.rabi_frequency, det)

    def cantilever_params(self) -> CantileverParams:
        c = self.cantilever
        return CantileverParams(L=c.length, w=c.width, t=c.thickness, f0=c.f0, fm=c.fm,
                                Q=c.quality_factor, km=c.stiffness, me=c.effective_mass,
                                beta=c.beta, T_bath=c.temperature, noise_floor=c.noise_floor)

    def drive_config(self) -> DriveConfig:
        d = self.drive
        return DriveConfig(mw_center=d.mw_center, fm_depth=d.fm_depth, mod_freq=d.mod_freq,
                           omega_rabi=TWO_PI * self.rates.rabi_frequency, power_dbm=d.power_dbm,
                           kappa=d.kappa, transition=d.transition, class_index=d.class_index)

    def spurious_background(self) -> SpuriousBackground | None:
        b = self.background
        if b.x_amplitude == 0 and b.y_amplitude == 0:
            return None
        return SpuriousBackground(b.x_amplitude, b.y_amplitude, seed=self.seed)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return self.model_dump(exclude_none=True)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def resolved(self) -> dict:
        """Everything that determines the output content (not where it is written)."""
        d = self.model_dump()
        d["output"].pop("directory")
        return d

    def sha256(self) -> str:
        canon = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _find_line(text: str, loc: tuple) -> int | None:
    """Line number (1-based) of the key at ``loc`` in TOML ``text``, if present."""
    if len(loc) == 1:
        for i, line in enumerate(text.splitlines(), start=1):
            if re.match(rf"^\s*\[\s*{re.escape(str(loc[0]))}\s*\]", line):
                return i
    section = None
    target_section = loc[0] if len(loc) > 1 else None
    key = loc[1] if len(loc) > 1 else loc[0]
    header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.-]+)\s*\]")
    keyline = re.compile(r"^\s*([A-Za-z0-9_-]+)\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            section = m.group(1)
            if target_section == section and isinstance(key, int):
                return i
            continue
        m = keyline.match(line)
        if m and m.group(1) == key and section == target_section:
            return i
    if target_section is not None:
        for i, line in enumerate(text.splitlines(), start=1):
            m = header.match(line)
            if m and m.group(1) == target_section:
                return i
    return None


def parse_config(text: str) -> RunConfig:
    """Parse TOML text into a fully resolved :class:`RunConfig`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = tuple(p for p in err["loc"] if not str(p).startswith("function-"))
            name = ".".join(str(p) for p in loc) or "<root>"
            line = _find_line(text, loc) if loc else None
            where = f" (line {line})" if line else ""
            msgs.append(f"{name}{where}: {err['msg']}")
        raise ConfigError("; ".join(msgs)) from None


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
