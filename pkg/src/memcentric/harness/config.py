"""Experiment configuration: YAML files validated strictly against dataclasses.

Every section maps onto a dataclass; keys and value types are checked against
its fields, so a typo is an error that names the file and line. Environment
variables ``MEMCENTRIC_<SECTION>__<KEY>=value`` override file values (nested
keys join with ``__``, matching is case-insensitive, values are YAML scalars).
"""

from __future__ import annotations

import copy
import dataclasses
import difflib
import math
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from ..disturbance import DEFAULT_ACMIN_MEDIAN, DEFAULT_ACMIN_SIGMA, DisturbanceProfile
from ..geometry import ConfigError, DramGeometry, TimingParams
from ..mitigation import MitigationConfig
from ..pud.ops import NoiseModel
from ..smd import SmdConfig

ENV_PREFIX = "MEMCENTRIC_"
SUBCOMMANDS = ("simulate", "attack", "pud", "trng", "pnm", "sweep")
DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@dataclass
class DisturbanceSection:
    enabled: bool = True
    acmin_median: float = DEFAULT_ACMIN_MEDIAN
    acmin_log_sigma: float = DEFAULT_ACMIN_SIGMA
    acmin_fixed: Optional[float] = None  # every row gets this base threshold
    press_alpha: float = 2.0 / 3.0
    press_ton_ref: Optional[int] = None
    vrd_ratio_max: float = 3.5
    blast_weights: dict = field(default_factory=lambda: {1: 1.0, 2: 0.2})
    flips_per_event: int = 1

    def profile(self) -> DisturbanceProfile:
        if not self.acmin_median > 0:
            raise ConfigError("disturbance.acmin_median > 0 violated")
        if self.acmin_fixed is not None and not self.acmin_fixed > 0:
            raise ConfigError("disturbance.acmin_fixed > 0 violated")
        return DisturbanceProfile(
            enabled=self.enabled, acmin_log_mean=math.log(self.acmin_median),
            acmin_log_sigma=self.acmin_log_sigma, press_alpha=self.press_alpha,
            press_ton_ref=self.press_ton_ref, vrd_ratio_max=self.vrd_ratio_max,
            blast_weights=self.blast_weights, flips_per_event=self.flips_per_event)


@dataclass
class RefreshSection:
    enabled: Optional[bool] = None  # None: host refresh unless SMD owns it


@dataclass
class SyntheticWorkload:
    kind: str = "uniform"
    banks: int = 4
    subarrays: Optional[int] = None   # per bank; None uses all
    requests: int = 1000
    interval: int = 20                # cycles between request arrivals
    write_fraction: float = 0.5


@dataclass
class WorkloadSection:
    trace: Optional[str] = None
    synthetic: Optional[SyntheticWorkload] = None


@dataclass
class AttackSection:
    pattern: str = "double"       # single | double | many_sided | rowpress
    sides: int = 4                # aggressor count for many_sided
    bank: int = 0
    subarray: int = 0
    victim_row: int = 8           # row the pattern is centred on
    spacing: int = 5              # many_sided: rows between aggressors
    hold: Optional[int] = None    # open cycles per activation; None: tRAS
    press_hold_factor: int = 1000 # rowpress hold as a multiple of tRAS
    activations: int = 1_000_000
    refresh: bool = True          # REF after every tREFI window
    stop_on_first_flip: bool = False


@dataclass
class PudSection:
    netlist: str = "builtin:netlists/adder8.net"
    operands: Any = None          # mapping name -> list, CSV path, or None for random
    lanes: int = 1024
    bank: int = 0
    subarray: int = 0
    register_rows: int = 3


@dataclass
class TrngSection:
    n_rows: int = 4
    n_bits: int = 1_000_000
    bank: int = 0
    subarray: int = 0


@dataclass
class ScalingSection:
    unit: str = "fc_pim"
    kernel: Optional[str] = None
    n_max: int = 64
    host_fed: bool = False


@dataclass
class PnmSection:
    units: Optional[list] = None   # None: the built-in heterogeneous set
    kernels: list = field(default_factory=list)
    scaling: Optional[ScalingSection] = None
    link_energy_per_byte: float = 10e-12


@dataclass
class SweepSection:
    subcommand: str = "attack"
    params: dict = field(default_factory=dict)   # dotted key -> list of values
    workers: int = 1


@dataclass
class OutputSection:
    path: Optional[str] = None
    format: str = "csv"


SECTIONS = {
    "geometry": DramGeometry,
    "timing": TimingParams,
    "disturbance": DisturbanceSection,
    "mitigation": MitigationConfig,
    "smd": SmdConfig,
    "refresh": RefreshSection,
    "noise": NoiseModel,
    "workload": WorkloadSection,
    "attack": AttackSection,
    "pud": PudSection,
    "trng": TrngSection,
    "pnm": PnmSection,
    "sweep": SweepSection,
    "output": OutputSection,
}


@dataclass
class ExperimentConfig:
    seed: int
    geometry: DramGeometry
    timing: TimingParams
    disturbance: DisturbanceSection
    mitigation: MitigationConfig
    smd: SmdConfig
    refresh: RefreshSection
    noise: NoiseModel
    workload: WorkloadSection
    attack: AttackSection
    pud: PudSection
    trng: TrngSection
    pnm: PnmSection
    sweep: SweepSection
    output: OutputSection
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    @property
    def profile(self) -> DisturbanceProfile:
        return self.disturbance.profile()

    @property
    def host_refresh(self) -> bool:
        if self.refresh.enabled is None:
            return not self.smd.enabled
        return self.refresh.enabled

    def resolve(self, path: str) -> Path:
        """Paths are relative to the config file; ``builtin:`` names shipped data."""
        if path.startswith("builtin:"):
            return DATA_DIR / path[len("builtin:"):]
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


# ---------------------------------------------------------------- validation

class _Lines:
    """Line numbers of every key in a YAML document, by dotted path."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict = {}
        try:
            node = yaml.compose(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f"{source}:{mark.line + 1}" if mark else source
            raise ConfigError(f"{where}: malformed YAML: {getattr(e, 'problem', e)}") from None
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (str(k.value),)
                self.lines[p] = k.start_mark.line + 1
                self._walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self.lines[path + (str(i),)] = v.start_mark.line + 1
                self._walk(v, path + (str(i),))

    def where(self, path) -> str:
        path = tuple(str(p) for p in path)
        while path and path not in self.lines:
            path = path[:-1]
        line = self.lines.get(path)
        return f"{self.source}:{line}" if line else self.source


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def _check_value(value, hint, path, where) -> Any:
    key = ".".join(map(str, path))
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _check_value(value, args[0], path, where)
    if hint is Any:
        return value
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{where(path)}: {key} must be a mapping")
        return _check_section(value, hint, path, where)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where(path)}: {key} must be true or false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{where(path)}: {key} must be an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, str):
            # YAML 1.1 reads exponents without a sign (1.0e12) as strings
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where(path)}: {key} must be a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where(path)}: {key} must be a string, got {value!r}")
        return value
    if hint is dict or origin is dict:
        if not isinstance(value, Mapping):
            raise ConfigError(f"{where(path)}: {key} must be a mapping")
        return dict(value)
    if hint is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where(path)}: {key} must be a list")
        return list(value)
    return value


def _unknown(key, known, path, where):
    hint = difflib.get_close_matches(str(key), known, n=1)
    full = ".".join(map(str, path + (key,)))
    extra = f"; did you mean {hint[0]!r}?" if hint else ""
    return ConfigError(f"{where(path + (key,))}: unknown key {full!r}{extra}")


def _check_section(raw: Mapping, cls, path, where):
    hints = _hints(cls)
    names = [f.name for f in dataclasses.fields(cls) if f.init]
    kwargs = {}
    for k, v in raw.items():
        if k not in names:
            raise _unknown(k, names, path, where)
        kwargs[k] = _check_value(v, hints[k], path + (k,), where)
    try:
        obj = cls(**kwargs)
        if hasattr(obj, "validate"):
            obj.validate()
    except ConfigError as e:
        raise ConfigError(f"{where(path)}: {e}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where(path)}: {'.'.join(path)}: {e}") from None
    return obj


def _field_names(cls) -> list:
    return [f.name for f in dataclasses.fields(cls) if f.init]


def apply_env(raw: dict, env: Mapping[str, str]) -> dict:
    """Overlay ``MEMCENTRIC_*`` variables onto a raw config tree."""
    raw = copy.deepcopy(raw)
    for var in sorted(env):
        if not var.startswith(ENV_PREFIX):
            continue
        parts = var[len(ENV_PREFIX):].split("__")
        try:
            value = yaml.safe_load(env[var])
        except yaml.YAMLError:
            raise ConfigError(f"environment {var}: malformed value {env[var]!r}") from None
        set_path(raw, parts, value, source=f"environment {var}")
    return raw


def set_path(raw: dict, parts, value, source: str = "override") -> None:
    """Set a dotted key on a raw tree, matching names case-insensitively."""
    cls = None
    node = raw
    known = ["seed"] + list(SECTIONS)
    for depth, part in enumerate(parts):
        match = {k.lower(): k for k in known}.get(part.lower())
        if match is None:
            hint = difflib.get_close_matches(part.lower(), [k.lower() for k in known], n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"{source}: unknown key {'.'.join(parts)!r}{extra}")
        last = depth == len(parts) - 1
        if last:
            node[match] = value
            return
        if depth == 0:
            cls = SECTIONS.get(match)
        else:
            h = _hints(cls)[match]
            args = [a for a in typing.get_args(h) if a is not type(None)] or [h]
            cls = args[0]
        if cls is None or not dataclasses.is_dataclass(cls):
            raise ConfigError(f"{source}: {'.'.join(parts[:depth + 1])} has no sub-keys")
        node = node.setdefault(match, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{source}: {'.'.join(parts[:depth + 1])} is not a mapping")
        known = _field_names(cls)


def build_config(raw: Mapping, source: str = "<config>", lines: Optional[_Lines] = None,
                 base_dir: Path = Path(".")) -> ExperimentConfig:
    where = lines.where if lines is not None else (lambda p: source)
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{source}: top level must be a mapping")
    for k in raw:
        if k != "seed" and k not in SECTIONS:
            raise _unknown(k, ["seed"] + list(SECTIONS), (), where)
    if raw.get("seed") is None:
        raise ConfigError(f"{source}: missing required key 'seed'")
    seed = _check_value(raw["seed"], int, ("seed",), where)
    if seed < 0:
        raise ConfigError(f"{where(('seed',))}: seed ≥ 0 violated")
    parts = {}
    for name, cls in SECTIONS.items():
        sec = raw.get(name) or {}
        if not isinstance(sec, Mapping):
            raise ConfigError(f"{where((name,))}: section {name!r} must be a mapping")
        parts[name] = _check_section(sec, cls, (name,), where)
    wl = parts["workload"]
    if wl.trace is not None and wl.synthetic is not None:
        raise ConfigError(f"{where(('workload',))}: give exactly one of workload.trace "
                          "or workload.synthetic")
    if wl.trace is None and wl.synthetic is None:
        wl.synthetic = SyntheticWorkload()
    parts["disturbance"].profile()
    if parts["output"].format not in ("csv", "json"):
        raise ConfigError(f"{where(('output', 'format'))}: output.format must be csv or json")
    if parts["sweep"].subcommand not in SUBCOMMANDS[:-1]:
        raise ConfigError(f"{where(('sweep', 'subcommand'))}: sweep.subcommand must be one of "
                          f"{SUBCOMMANDS[:-1]}")
    return ExperimentConfig(seed=seed, base_dir=base_dir, raw=copy.deepcopy(dict(raw)), **parts)


def load_raw(path) -> tuple[dict, _Lines, Path]:
    p = str(path)
    if p.startswith("builtin:"):
        path = DATA_DIR / "configs" / p[len("builtin:"):]
        if not path.suffix:
            path = path.with_suffix(".yaml")
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text(encoding="utf-8")
    lines = _Lines(text, str(path))
    raw = yaml.safe_load(text) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return raw, lines, path.parent


def parse_config(path, env: Optional[Mapping[str, str]] = None,
                 overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Load, overlay environment and explicit overrides, and validate."""
    raw, lines, base = load_raw(path)
    raw = apply_env(raw, os.environ if env is None else env)
    for key, value in (overrides or {}).items():
        set_path(raw, key.split("."), value)
    return build_config(raw, str(path), lines, base)
