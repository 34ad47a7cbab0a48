"""Benchmark configuration: YAML file validated into typed settings.

Validation errors name the offending field and, when the value came from a
file, the line it sits on.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..perturb import R_CEILING, T_CEILING

METHODS = ("identity", "homography", "depth", "oracle_nvs", "geom_nvs", "remote")
NO_PERTURBATION = "none"


class ConfigError(ValueError):
    pass


class _FieldError(ValueError):
    """Cross-field problem pinned to one field, so diagnostics can name its line."""

    def __init__(self, loc: tuple, msg: str):
        super().__init__(msg)
        self.loc = loc


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LevelSettings(_Strict):
    t_max: float = Field(gt=0, le=T_CEILING)
    r_max: float = Field(gt=0, le=R_CEILING)


class TaskSettings(_Strict):
    instruction: str = "reach the red sphere"
    target_color: tuple[int, int, int] = (220, 40, 40)
    success_radius: float = Field(0.01, gt=0)


class SplatSettings(_Strict):
    radius: Literal[1, 2, 3] = 1
    z_eps: float = Field(1e-4, ge=0)


class InpaintSettings(_Strict):
    radius: int = Field(5, ge=1)


class RemoteSettings(_Strict):
    endpoint: Optional[str] = None
    timeout_ms: float = Field(2000.0, gt=0)
    fallback: Literal["none", "auto"] = "none"


def _default_levels() -> dict[str, LevelSettings]:
    return {
        "small": LevelSettings(t_max=0.05, r_max=15.0),
        "medium": LevelSettings(t_max=0.10, r_max=30.0),
        "large": LevelSettings(t_max=0.15, r_max=60.0),
    }


class BenchConfig(_Strict):
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    episodes: int = Field(10, ge=1)
    image_size: int = Field(256, ge=32, le=1024)
    max_steps: int = Field(25, ge=1)
    methods: list[Literal[METHODS]] = Field(default_factory=lambda: ["identity", "homography", "depth", "oracle_nvs"], min_length=1)
    levels: list[str] = Field(default_factory=lambda: [NO_PERTURBATION, "small", "medium", "large"], min_length=1)
    level_table: dict[str, LevelSettings] = Field(default_factory=_default_levels)
    perturb_camera: str = "agent"
    retarget: Optional[bool] = None  # None: re-aim the agent camera only
    look_target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    table_height: float = 0.0
    rig: Optional[str] = None  # rig file; the built-in two-camera rig when absent
    task: TaskSettings = TaskSettings()
    splat: SplatSettings = SplatSettings()
    inpaint: InpaintSettings = InpaintSettings()
    remote: RemoteSettings = RemoteSettings()
    workers: int = Field(1, ge=1)

    @field_validator("seeds")
    @classmethod
    def _seeds_nonneg(cls, v):
        if any(s < 0 for s in v):
            raise ValueError("seeds must be non-negative")
        if len(set(v)) != len(v):
            raise ValueError("seeds must be distinct")
        return v

    @field_validator("methods", "levels")
    @classmethod
    def _distinct(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("entries must be distinct")
        return v

    @model_validator(mode="after")
    def _cross_checks(self):
        for i, lv in enumerate(self.levels):
            if lv != NO_PERTURBATION and lv not in self.level_table:
                raise _FieldError(("levels", i), f"level {lv!r} is not in level_table")
        if "remote" in self.methods and not self.remote.endpoint:
            raise _FieldError(("methods", self.methods.index("remote")), "method 'remote' needs remote.endpoint")
        return self

    @property
    def resolved_retarget(self) -> bool:
        return self.perturb_camera == "agent" if self.retarget is None else self.retarget

    def level(self, name: str) -> tuple[float, float]:
        if name == NO_PERTURBATION:
            return 0.0, 0.0
        lv = self.level_table[name]
        return lv.t_max, lv.r_max


def _locate(node, loc) -> int | None:
    """1-based line of the YAML node at path ``loc``, or of its nearest parent."""
    line = None
    for key in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    line = k.start_mark.line + 1
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _format_errors(err: ValidationError, root) -> str:
    lines = []
    for e in err.errors():
        loc = tuple(x for x in e["loc"] if not (isinstance(x, str) and x.startswith("literal[")))
        msg = e["msg"]
        cause = e.get("ctx", {}).get("error")
        if isinstance(cause, _FieldError):
            loc, msg = loc + cause.loc, str(cause)
        path = ".".join(str(x) for x in loc) or "<config>"
        where = _locate(root, loc) if root is not None and loc else None
        prefix = f"line {where}: " if where else ""
        lines.append(f"{prefix}{path}: {msg}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<string>") -> BenchConfig:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return BenchConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: invalid config\n{_format_errors(exc, root)}") from exc


def load_config(path) -> BenchConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    return parse_config(text, str(p))


def default_config_text() -> str:
    return resources.files("camadapt.benchkit").joinpath("default_bench.yaml").read_text()


def default_config() -> BenchConfig:
    return parse_config(default_config_text(), "default_bench.yaml")
