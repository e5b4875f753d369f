"""Bench configuration: TOML in, resolved TOML out."""

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli_w

from .synth import SynthConfig
from .training import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIOS = ("unconditional", "component_conditioned", "dimension_constrained_id", "dimension_constrained_ood")
ENGINES = ("ddpm", "mdm")
DESK_COUNTS = {"n_unconditional": 1000, "n_per_condition": 45, "n_ood": 200}
PAPER_COUNTS = {"n_unconditional": 10_000, "n_per_condition": 45, "n_ood": 1000}
DEFAULT_GUIDANCE_W = 4.0
DEFAULT_CONDITION_COMPONENTS = ("carcass", "tread", "sidewall")
SHOWCASE_TARGETS = ((30, 35), (58, 54), (56, 47))  # (width, height) on the 64 px grid


class ConfigError(ValueError):
    pass


def desk_data() -> SynthConfig:
    return SynthConfig(H=32, W=32)


@dataclass
class BenchConfig:
    scenario: str = "unconditional"
    engine: str = "mdm"
    seed: int = 0
    guidance_w: float = DEFAULT_GUIDANCE_W
    paper_scale: bool = False
    n_unconditional: int | None = None
    n_id: int | None = None  # defaults to n_unconditional
    n_per_condition: int | None = None
    n_ood: int | None = None
    condition_components: tuple = DEFAULT_CONDITION_COMPONENTS
    max_condition_sources: int | None = 4  # None: every test sample
    n_showcase: int = 4  # samples per showcase target (ID scenario, when they fit the grid)
    workers: int = 1
    chunk_size: int = 16
    data_dir: str | None = None
    checkpoint: str | None = None
    data: SynthConfig = field(default_factory=desk_data)
    train: TrainConfig = field(default_factory=TrainConfig)

    def counts(self) -> dict:
        base = PAPER_COUNTS if self.paper_scale else DESK_COUNTS
        out = {k: (getattr(self, k) if getattr(self, k) is not None else v) for k, v in base.items()}
        out["n_id"] = self.n_id if self.n_id is not None else out["n_unconditional"]
        return out

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.guidance_w < 0:
            raise ConfigError("guidance_w must be >= 0")
        if any(v < 1 for v in self.counts().values()):
            raise ConfigError("sample counts must be >= 1")
        if self.workers < 1 or self.chunk_size < 1:
            raise ConfigError("workers and chunk_size must be >= 1")
        if self.n_showcase < 0:
            raise ConfigError("n_showcase must be >= 0")
        if self.max_condition_sources is not None and self.max_condition_sources < 1:
            raise ConfigError("max_condition_sources must be >= 1")
        for p in (self.data_dir, self.checkpoint):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"path does not exist: {p}")
        try:
            self.data.validate()
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved(self) -> dict:
        """Plain dict of every effective setting (None values dropped)."""
        top = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("data", "train")}
        top.update(self.counts())
        top["condition_components"] = list(self.condition_components)
        data = asdict(self.data)
        data["dim_ranges"] = [list(r) for r in self.data.resolved_ranges()]
        train = asdict(self.train)
        train["channel_mults"] = list(self.train.channel_mults)
        return _drop_none({"bench": top, "data": data, "train": train})


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


def _build(cls, values: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    values = dict(values)
    for key in ("dim_ranges", "channel_mults", "condition_components"):
        if key in values and isinstance(values[key], list):
            values[key] = tuple(tuple(v) if isinstance(v, list) else v for v in values[key])
    return cls(**values)


def from_dict(d: dict) -> BenchConfig:
    d = dict(d)
    extra = set(d) - {"bench", "data", "train"}
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    bench = dict(d.get("bench", {}))
    for key in ("n_unconditional", "n_per_condition", "n_ood", "n_id"):
        bench.setdefault(key, None)
    cfg = _build(BenchConfig, bench, "bench")
    cfg.data = _build(SynthConfig, d["data"], "data") if "data" in d else desk_data()
    cfg.train = _build(TrainConfig, d["train"], "train") if "train" in d else TrainConfig()
    return cfg


def load_config(path) -> BenchConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def write_resolved(cfg: BenchConfig, path) -> None:
    Path(path).write_text(tomli_w.dumps(cfg.resolved()))
