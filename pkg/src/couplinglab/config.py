"""Flat ``key = value`` experiment configs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

SUITES = ("transport", "bismut", "harnack", "log_harnack", "tv_diffusion", "tv_jump",
          "jump_derivative", "alpha_rate", "full")

TIERS = {"smoke": 10_000, "standard": 100_000, "deep": 1_000_000}

# per-suite overrides and their defaults; the default's type fixes the parser
PARAMS = {
    "transport.n_instances": 200,
    "transport.n_1d": 100,
    "transport.n_fkg": 100,
    "bismut.h": 1e-3,
    "bismut.t": 1.0,
    "bismut.delta": 0.05,
    "harnack.h": 1e-3,
    "harnack.t": 1.0,
    "harnack.p": 2.0,
    "coupling.h": 1e-4,
    "coupling.t": 1.0,
    "coupling.paths_divisor": 10,
    "tv_jump.t_grid": (2.0, 4.0, 8.0, 16.0, 32.0, 64.0),
    "tv_jump.z0": 0.0,
    "tv_jump.eps": 0.5,
    "jump.t": 1.0,
    "jump.delta": 1e-3,
    "alpha.t_grid": (0.1, 1.0, 10.0),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    suite: str
    seed: int
    tier: str = "smoke"
    output_dir: Path = Path("out")
    n_paths: int | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ConfigError(f"suite: unknown suite {self.suite!r}")
        if self.tier not in TIERS:
            raise ConfigError(f"tier: unknown tier {self.tier!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed: must be a 64-bit unsigned integer")
        for key in self.params:
            if key not in PARAMS:
                raise ConfigError(f"{key}: unknown key")

    @property
    def paths(self) -> int:
        return self.n_paths if self.n_paths is not None else TIERS[self.tier]

    def get(self, key: str):
        return self.params.get(key, PARAMS[key])

    def echo(self) -> list[str]:
        """Canonical ``key = value`` lines (output directory excluded)."""
        lines = [f"suite = {self.suite}", f"seed = {self.seed}", f"tier = {self.tier}"]
        if self.n_paths is not None:
            lines.append(f"n_paths = {self.n_paths}")
        lines += [f"{k} = {_format(self.params[k])}" for k in sorted(self.params)]
        return lines


def _format(v) -> str:
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _convert(key: str, raw: str, like):
    try:
        if isinstance(like, tuple):
            return tuple(float(x) for x in raw.split(","))
        if isinstance(like, int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_config(text: str, base: Path | None = None) -> ExperimentConfig:
    """Parse a config. Relative ``output_dir`` values resolve against ``base``."""
    seen: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{key}: given twice")
        seen[key] = value
    if "seed" not in seen:
        raise ConfigError("seed: required")
    if "suite" not in seen:
        raise ConfigError("suite: required")
    try:
        seed = int(seen.pop("seed"), 0)
    except ValueError:
        raise ConfigError("seed: must be an integer") from None
    suite = seen.pop("suite")
    tier = seen.pop("tier", "smoke")
    out = Path(seen.pop("output_dir", "out"))
    if base is not None and not out.is_absolute():
        out = base / out
    n_paths = None
    if "n_paths" in seen:
        n_paths = _convert("n_paths", seen.pop("n_paths"), 0)
        if n_paths < 2:
            raise ConfigError("n_paths: must be >= 2")
    params = {}
    for key, raw in seen.items():
        if key not in PARAMS:
            raise ConfigError(f"{key}: unknown key")
        params[key] = _convert(key, raw, PARAMS[key])
    return ExperimentConfig(suite, seed, tier, out, n_paths, params)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)
