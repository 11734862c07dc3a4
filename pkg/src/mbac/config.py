"""Network presets and run configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

N_POSITIONS = 16  # 15 display slots + 1 speech slot


@dataclass(frozen=True)
class Preset:
    name: str
    embed_dim: int
    chi_dim: int
    hidden: int
    action_dim: int
    trunk: tuple
    encoder: tuple
    decoder: tuple
    kernel: int = 3
    budget: int = 20000

    @property
    def state_dim(self):
        return 2 * self.hidden

    @property
    def omega_dim(self):
        return self.embed_dim + self.chi_dim


PRESETS = {
    "paper": Preset("paper", embed_dim=300, chi_dim=100, hidden=100, action_dim=100,
                    trunk=(50, 50, 100), encoder=(50, 50, 100), decoder=(100, 50, 100), budget=100000),
    "desk": Preset("desk", embed_dim=24, chi_dim=8, hidden=16, action_dim=8,
                   trunk=(16, 16, 32), encoder=(16, 16, 32), decoder=(32, 16, 32), budget=20000),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    algorithm: str = "mbac"
    preset: str = "desk"
    corpus: str = ""
    seed: int = 0
    interactions: int = 0  # 0 means the preset's budget
    gamma: float = 0.9
    beta: float = 1.0
    lr_model: float = 1e-4
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    clip_norm: float = 0.9
    temperature: float = 1.0
    embedding: str = "hash"
    embedding_file: str = ""
    max_sentences: int = 0
    joint_state_training: bool = False
    dtype: str = "float32"
    output: str = "runs/default"
    eval_split: str = "test"
    eval_greedy: bool = False
    eval_episodes: int = 2000
    eval_policy: str = "actor"
    checkpoint_every: int = 0
    trace: bool = False

    @property
    def budget(self):
        return self.interactions or PRESETS[self.preset].budget

    @property
    def net(self):
        return PRESETS[self.preset]

    def validate(self):
        if self.algorithm not in ("mbac", "a2c"):
            raise ConfigError(f"algorithm must be 'mbac' or 'a2c', got {self.algorithm!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if not self.corpus:
            raise ConfigError("a corpus path is required")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        for name in ("lr_model", "lr_actor", "lr_critic"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.embedding not in ("hash", "file"):
            raise ConfigError("embedding must be 'hash' or 'file'")
        if self.embedding == "file" and not self.embedding_file:
            raise ConfigError("embedding=file needs embedding_file")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.interactions < 0:
            raise ConfigError("interactions must be non-negative")
        return self

    # flat key=value representation, shared by config files and checkpoints

    def to_items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    @classmethod
    def from_mapping(cls, mapping):
        kinds = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            key = key.replace("-", "_")
            if key not in kinds:
                raise ConfigError(f"unknown configuration key {key!r}")
            default = kinds[key].default
            kwargs[key] = _coerce(raw, type(default), key)
        return cls(**kwargs)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _coerce(raw, kind, key):
    if not isinstance(raw, str):
        return kind(raw)
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None


def parse_kv_lines(lines):
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config_file(path):
    return RunConfig.from_mapping(parse_kv_lines(Path(path).read_text(encoding="utf-8").splitlines()))
