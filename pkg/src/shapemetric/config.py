"""Evaluation configuration and the flat ``key=value`` config-file format."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from pathlib import Path

from .pose import DofTag, PivotMode


class EmptyPolicy(str, enum.Enum):
    EXCLUDE = "EXCLUDE"
    ZERO = "ZERO"


class IouMode(str, enum.Enum):
    AUTO = "AUTO"  # omitted when either mesh is not watertight
    ALWAYS = "ALWAYS"
    NEVER = "NEVER"


class Occluder(str, enum.Enum):
    PRED = "PRED"
    GT = "GT"


@dataclass(frozen=True)
class EvalConfig:
    n_pred: int = 100_000
    n_gt: int = 300_000
    n_iou: int = 100_000
    fs_thresholds: tuple = (0.5, 1.0, 2.0)
    iso: float = 0.25
    pivot_mode: PivotMode = PivotMode.BBOX_CENTER
    dof_mode: DofTag = DofTag.OC
    rng_seed: int = 0
    empty_policy: EmptyPolicy = EmptyPolicy.EXCLUDE
    normalize: bool = True
    iou_mode: IouMode = IouMode.AUTO
    visibility_eps: float = 1e-4
    pred_occluder: Occluder = Occluder.PRED

    def __post_init__(self):
        for name in ("n_pred", "n_gt", "n_iou"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        th = tuple(float(t) for t in self.fs_thresholds)
        if not th or any(t <= 0 for t in th):
            raise ValueError("F-score thresholds must be positive")
        object.__setattr__(self, "fs_thresholds", th)
        object.__setattr__(self, "pivot_mode", PivotMode(self.pivot_mode))
        object.__setattr__(self, "dof_mode", DofTag(self.dof_mode))
        object.__setattr__(self, "empty_policy", EmptyPolicy(self.empty_policy))
        object.__setattr__(self, "iou_mode", IouMode(self.iou_mode))
        object.__setattr__(self, "pred_occluder", Occluder(self.pred_occluder))

    def replace(self, **changes) -> "EvalConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict) -> "EvalConfig":
        """Build from string values as found in a config file; unknown keys are ignored."""
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name in values:
                kwargs[f.name] = _coerce(f, values[f.name])
        return cls(**kwargs)


def _coerce(f: dataclasses.Field, raw):
    if not isinstance(raw, str):
        return raw
    default = f.default
    if isinstance(default, bool):
        return parse_bool(raw)
    if isinstance(default, enum.Enum):
        return type(default)(raw.strip().upper())
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return parse_float_list(raw)
    return raw


def parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def parse_float_list(raw: str) -> tuple:
    return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())


def parse_int_list(raw: str) -> tuple:
    return tuple(int(float(x)) for x in raw.replace(";", ",").split(",") if x.strip())


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. Keys are normalized to snake_case."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def write_config_file(values: dict, path) -> None:
    lines = []
    for k, v in values.items():
        if isinstance(v, (tuple, list)):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, enum.Enum):
            v = v.value
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def config_to_mapping(cfg: EvalConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}


__all__ = [
    "EvalConfig",
    "EmptyPolicy",
    "IouMode",
    "Occluder",
    "read_config_file",
    "write_config_file",
    "parse_float_list",
    "parse_int_list",
    "parse_bool",
    "config_to_mapping",
]
