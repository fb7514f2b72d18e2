"""Experiment configuration: file format, validation, hashing, manifest.

Config files are INI-style text with sections mirroring the package
modules ([sim], [dataset], [mlp], [meta], [dip], [sweep], [output]).
Unknown sections or keys are hard errors so a typo can never silently
fall back to a default.  Two built-in presets exist: a desk-scale setup
that finishes in minutes on one core, and the full-scale setup matching
the reference system parameters.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .channel import SimConfig
from .errors import ConfigurationError
from .training import MetaConfig

SWEEPABLE = ("tasks_per_ue", "order", "adapt_steps", "n_adapt", "snr_db")


@dataclass(frozen=True)
class DatasetSettings:
    n_source_ue: int = 8
    n_target_ue: int = 4
    tasks_per_ue: int = 128
    n_support: int = 10
    n_query: int = 10
    n_adapt: int = 20
    n_test: int = 100
    order: int = 3

    def __post_init__(self):
        for name in ("n_source_ue", "n_target_ue", "tasks_per_ue", "n_support",
                     "n_query", "n_test", "order"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"dataset.{name} must be >= 1, got {getattr(self, name)}")
        if self.n_adapt < 0:
            raise ConfigurationError(f"dataset.n_adapt must be >= 0, got {self.n_adapt}")


@dataclass(frozen=True)
class MlpSettings:
    hidden_layers: int = 4
    hidden_width: int = 128

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ConfigurationError("mlp layer count and width must be >= 1")


@dataclass(frozen=True)
class DipSettings:
    enabled: bool = False
    depth: int = 3
    filters: int = 32
    n_iter: int = 500
    lr: float = 1e-2

    def __post_init__(self):
        if self.depth < 1 or self.filters < 1 or self.n_iter < 1:
            raise ConfigurationError("dip depth, filters, and n_iter must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError(f"dip.lr must be positive, got {self.lr}")


@dataclass(frozen=True)
class SweepSettings:
    variable: str | None = None
    values: tuple = ()
    n_seeds: int = 1

    def __post_init__(self):
        if self.variable is not None:
            if self.variable not in SWEEPABLE:
                raise ConfigurationError(
                    f"sweep.variable must be one of {SWEEPABLE}, got {self.variable!r}"
                )
            if not self.values:
                raise ConfigurationError("sweep.values must be non-empty when a variable is set")
        elif self.values:
            raise ConfigurationError("sweep.values given without sweep.variable")
        if self.n_seeds < 1:
            raise ConfigurationError(f"sweep.n_seeds must be >= 1, got {self.n_seeds}")


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    mlp: MlpSettings = field(default_factory=MlpSettings)
    meta: MetaConfig = field(default_factory=MetaConfig)
    dip: DipSettings = field(default_factory=DipSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    output_dir: str = "."

    def __post_init__(self):
        if self.sim.n_ue != self.dataset.n_source_ue + self.dataset.n_target_ue:
            raise ConfigurationError(
                f"sim.n_ue ({self.sim.n_ue}) must equal source + target users "
                f"({self.dataset.n_source_ue} + {self.dataset.n_target_ue})"
            )
        if self.mlp.hidden_width % self.sim.n_antennas != 0:
            raise ConfigurationError(
                f"mlp.hidden_width ({self.mlp.hidden_width}) must be a multiple of "
                f"n_antennas ({self.sim.n_antennas}) so cost reports stay exact"
            )
        minimum = self.dataset.order + 1 + max(
            self.dataset.n_support + self.dataset.n_query,
            self.dataset.n_adapt + self.dataset.n_test,
        )
        if self.sim.n_slots < minimum:
            raise ConfigurationError(
                f"sim.n_slots ({self.sim.n_slots}) below the minimum {minimum} "
                "needed by the dataset sizes"
            )


def desk_config() -> ExperimentConfig:
    """Small setup that runs the full pipeline in minutes on one core.

    The learning rates and batch size were picked so that adaptation is
    stable for every method at the shared step size and the meta stage
    converges; second-order meta-gradients hold up at rates where the
    first-order approximation drifts on this small model.
    """
    return ExperimentConfig(
        sim=SimConfig(n_antennas=16, n_ue=12, n_slots=256, snr_db=20.0, paths=6,
                      speed_kmh=3.0),
        dataset=DatasetSettings(),
        mlp=MlpSettings(hidden_layers=4, hidden_width=128),
        meta=MetaConfig(inner_lr=0.02, outer_lr=3e-4, batch_size=4, n_epoch=5,
                        adapt_steps=10, first_order=False),
        dip=DipSettings(enabled=False, depth=3, filters=16, n_iter=500, lr=1e-2),
    )


def full_config() -> ExperimentConfig:
    """Full-scale setup with the reference system parameters."""
    return ExperimentConfig(
        sim=SimConfig(n_antennas=64, n_ue=8, n_slots=256, snr_db=20.0, paths=20,
                      speed_kmh=3.0),
        dataset=DatasetSettings(n_source_ue=4, n_target_ue=4, tasks_per_ue=1024,
                                n_support=10, n_query=10, n_adapt=20, n_test=100,
                                order=3),
        mlp=MlpSettings(hidden_layers=4, hidden_width=512),
        meta=MetaConfig(inner_lr=0.1, outer_lr=1e-5, batch_size=64, n_epoch=20,
                        adapt_steps=10, first_order=True),
        dip=DipSettings(enabled=True, depth=4, filters=64, n_iter=2000, lr=1e-2),
    )


_PRESETS = {"desk": desk_config, "full": full_config}

_SCHEMA = {
    "sim": {"n_antennas": int, "n_slots": int, "snr_db": float, "carrier_hz": float,
            "speed_kmh": float, "slot_s": float, "paths": int},
    "dataset": {"n_source_ue": int, "n_target_ue": int, "tasks_per_ue": int,
                "n_support": int, "n_query": int, "n_adapt": int, "n_test": int,
                "order": int},
    "mlp": {"hidden_layers": int, "hidden_width": int},
    "meta": {"inner_lr": float, "outer_lr": float, "batch_size": int, "n_epoch": int,
             "adapt_steps": int, "first_order": bool},
    "dip": {"enabled": bool, "depth": int, "filters": int, "n_iter": int, "lr": float},
    "sweep": {"variable": str, "values": str, "n_seeds": int},
    "output": {"dir": str},
}


def _parse_value(section: str, key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigurationError(
            f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}"
        ) from None


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file, starting from the desk preset.

    A ``preset = desk|full`` line in a ``[base]`` section selects the
    starting defaults; every other key overrides one preset field.
    """
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file not found: {path}")
    sections = {s: dict(parser.items(s)) for s in parser.sections()}

    preset_name = "desk"
    base = sections.pop("base", {})
    for key, value in base.items():
        if key != "preset":
            raise ConfigurationError(f"[base] has unknown key {key!r} (only 'preset')")
        preset_name = value.strip()
    if preset_name not in _PRESETS:
        raise ConfigurationError(f"unknown preset {preset_name!r}; choose from {sorted(_PRESETS)}")
    cfg = _PRESETS[preset_name]()

    parsed: dict = {}
    for section, pairs in sections.items():
        if section not in _SCHEMA:
            raise ConfigurationError(
                f"unknown config section [{section}]; known: {sorted(_SCHEMA)}"
            )
        for key, raw in pairs.items():
            kind = _SCHEMA[section].get(key)
            if kind is None:
                raise ConfigurationError(
                    f"[{section}] has unknown key {key!r}; known: {sorted(_SCHEMA[section])}"
                )
            parsed.setdefault(section, {})[key] = _parse_value(section, key, raw, kind)

    sim_kw = parsed.get("sim", {})
    ds_kw = parsed.get("dataset", {})
    dataset = dataclasses.replace(cfg.dataset, **ds_kw)
    n_ue = dataset.n_source_ue + dataset.n_target_ue
    sim = dataclasses.replace(cfg.sim, n_ue=n_ue, **sim_kw)
    mlp = dataclasses.replace(cfg.mlp, **parsed.get("mlp", {}))
    meta = dataclasses.replace(cfg.meta, **parsed.get("meta", {}))
    dip = dataclasses.replace(cfg.dip, **parsed.get("dip", {}))

    sweep_kw = dict(parsed.get("sweep", {}))
    if "values" in sweep_kw:
        raw_values = [v for v in sweep_kw.pop("values").split(",") if v.strip()]
        variable = sweep_kw.get("variable", cfg.sweep.variable)
        caster = float if variable == "snr_db" else int
        try:
            sweep_kw["values"] = tuple(caster(v.strip()) for v in raw_values)
        except ValueError:
            raise ConfigurationError(f"[sweep] values: cannot parse {raw_values!r}") from None
    sweep = dataclasses.replace(cfg.sweep, **sweep_kw)

    output_dir = parsed.get("output", {}).get("dir", cfg.output_dir)
    return ExperimentConfig(sim=sim, dataset=dataset, mlp=mlp, meta=meta, dip=dip,
                            sweep=sweep, output_dir=output_dir)


def _flatten(cfg: ExperimentConfig) -> list:
    rows = []
    for section, obj in (("sim", cfg.sim), ("dataset", cfg.dataset), ("mlp", cfg.mlp),
                         ("meta", cfg.meta), ("dip", cfg.dip), ("sweep", cfg.sweep)):
        for f in dataclasses.fields(obj):
            if section in ("sim", "meta") and f.name == "seed":
                continue  # seeds are run inputs, not configuration
            rows.append(f"{section}.{f.name}={getattr(obj, f.name)!r}")
    rows.append(f"output.dir={cfg.output_dir!r}")
    return sorted(rows)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable hex digest of every configuration value (seeds excluded)."""
    return hashlib.sha256("\n".join(_flatten(cfg)).encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    """What a run consumed and produced, for exact replay."""

    config_hash: str
    seed: int
    artifacts: dict
    version: str

    def write(self, path) -> None:
        payload = {"config_hash": self.config_hash, "seed": self.seed,
                   "artifacts": self.artifacts, "version": self.version}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_manifest(path) -> RunManifest:
    with open(path) as fh:
        payload = json.load(fh)
    return RunManifest(config_hash=payload["config_hash"], seed=payload["seed"],
                       artifacts=payload["artifacts"], version=payload["version"])
