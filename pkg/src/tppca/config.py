"""Analysis configuration: flat ``key = value`` files overridable by CLI flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .brownian import LITERAL_CLOCKS, SCHEMES
from .errors import InvalidInputError

MANIFOLDS = ("landmarks", "euclidean", "sphere")
INITIALIZERS = ("euclidean", "frechet", "south-pole")


@dataclass(frozen=True)
class AnalysisConfig:
    # geometry
    manifold: str = "landmarks"
    sigma: float | None = None
    sigma_factor: float = 1.5
    beta: float = 1.0
    geodesic_steps: int = 100
    log_tol: float = 1e-6
    # preprocessing
    procrustes: bool = True
    keep_scale: bool = False
    # simulation
    scheme: str = "gaussian-increment"
    step: float = 1e-3
    seed: int = 0
    literal_clock: str = "step"
    replicates: int = 200
    inner_length: float = 0.2
    leaf_length: float = 0.3
    # estimation
    epsilon: float = 1e-5
    max_iter: int = 100
    initializer: str = "euclidean"
    k: int | None = None
    ridge: float = 0.0
    workers: int = 1
    out: str = "out"

    def __post_init__(self):
        checks = [
            (self.manifold in MANIFOLDS, f"manifold must be one of {MANIFOLDS}"),
            (self.scheme in SCHEMES, f"scheme must be one of {SCHEMES}"),
            (self.literal_clock in LITERAL_CLOCKS, f"literal_clock must be one of {LITERAL_CLOCKS}"),
            (self.initializer in INITIALIZERS, f"initializer must be one of {INITIALIZERS}"),
            (self.sigma is None or self.sigma > 0, "sigma must be positive"),
            (self.sigma_factor > 0, "sigma_factor must be positive"),
            (self.beta > 0, "beta must be positive"),
            (self.geodesic_steps >= 1, "geodesic_steps must be >= 1"),
            (self.log_tol > 0, "log_tol must be positive"),
            (self.step > 0, "step must be positive"),
            (0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer"),
            (self.replicates >= 1, "replicates must be >= 1"),
            (self.inner_length >= 0 and self.leaf_length >= 0, "edge lengths must be >= 0"),
            (self.epsilon > 0, "epsilon must be positive"),
            (self.max_iter >= 1, "max_iter must be >= 1"),
            (self.k is None or self.k >= 1, "k must be >= 1"),
            (self.ridge >= 0, "ridge must be >= 0"),
            (self.workers >= 1, "workers must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidInputError(f"config: {msg}")

    def replace(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, mapping):
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in mapping.items():
            name = key.strip().replace("-", "_")
            if name not in types:
                raise InvalidInputError(f"config: unknown key {key!r}")
            values[name] = _convert(name, types[name], raw)
        return cls(**values)

    @classmethod
    def from_file(cls, path):
        mapping = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping)


def _convert(name, typ, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if "None" in typ and text.lower() in ("", "none", "auto"):
            return None
        if typ.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ.startswith("int"):
            return int(text)
        if typ.startswith("float"):
            return float(text)
    except ValueError:
        raise InvalidInputError(f"config: invalid value {raw!r} for {name}") from None
    return text
