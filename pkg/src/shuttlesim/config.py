"""Run configuration: strict flat key=value files plus CLI overrides.

One `key = value` entry per line, `#` starts a comment, blank lines are
ignored.  Parsing is strict: unknown keys, duplicate keys and malformed lines
are errors that name the offending key and line number(s).  Values
regenerate byte-identical runs, so every run writes its effective
configuration back into the manifest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .model import EngineParams

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config_text", "DEFAULT_CONFIG"]

RUNS = ("evolve", "steady", "trajectories", "spectrum", "power", "sweep")


class ConfigError(ValueError):
    """Configuration file violates the schema."""


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s: str) -> tuple:
    return tuple(float(tok) for tok in s.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one run byte for byte."""

    run: str = "evolve"
    # physical parameters (EngineParams fields)
    omega: float = 1.0
    gamma: float = 2.0
    kappa: float = 0.05
    Gamma_s: float = 1.2
    Gamma_d: float = 0.3
    eta: float = 0.25
    x0: float = 0.3
    A: float = 1.0
    f_s: float = 0.5
    f_d: float = 0.0
    nbar_p: float = 0.0
    mass: float = 1.0
    dim: int = 40
    model: str = "reduced"
    n_e: int = 1
    # run controls
    t_max: float = 30.0 * math.pi          # 30 oscillation periods
    dt: float = math.pi / 1000.0           # 1e-3 of the oscillation period
    record_stride: int = 10
    n_traj: int = 500
    master_seed: int = 12345
    workers: int = 0                       # 0: serial / SHUTTLESIM_WORKERS
    output_dir: str = "out"
    # sweep
    sweep_param: str = "gamma"
    sweep_values: tuple = (0.0, 1.0, 2.0, 4.0)
    sweep_run: str = "steady"
    # analysis knobs
    t_transient: float = -1.0              # work/averaging window start; <0 -> 10/kappa
    spectrum_window: str = "none"
    spectrum_detrend: bool = True
    hist_bins: int = 40
    plots: bool = True

    def engine_params(self, **overrides) -> EngineParams:
        kw = {f.name: getattr(self, f.name) for f in fields(EngineParams)}
        kw.update(overrides)
        return EngineParams(**kw)

    @property
    def stationary_start(self) -> float:
        if self.t_transient >= 0:
            return self.t_transient
        return 10.0 / self.kappa if self.kappa > 0 else 0.0

    def window_start(self) -> float:
        """Averaging-window start, clamped so short runs keep half their samples."""
        return min(self.stationary_start, 0.5 * self.t_max)


_PARSERS = {float: float, int: int, str: str, bool: _parse_bool, tuple: _parse_float_list}


def _field_parsers():
    out = {}
    for f in fields(RunConfig):
        out[f.name] = _PARSERS[type(getattr(RunConfig, f.name))]
    return out


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    parsers = _field_parsers()
    seen: dict[str, int] = {}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in parsers:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(
                f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        if not val:
            raise ConfigError(f"{source}:{lineno}: missing value for {key!r}")
        try:
            values[key] = parsers[key](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    try:
        cfg = RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    _validate(cfg, source)
    return cfg


def _validate(cfg: RunConfig, source: str) -> None:
    if cfg.run not in RUNS:
        raise ConfigError(f"{source}: run must be one of {RUNS}, got {cfg.run!r}")
    if cfg.sweep_run not in RUNS or cfg.sweep_run == "sweep":
        raise ConfigError(f"{source}: sweep_run must be a non-sweep run name")
    if cfg.dt <= 0 or cfg.t_max < cfg.dt:
        raise ConfigError(f"{source}: need dt > 0 and t_max >= dt")
    if cfg.record_stride < 1 or cfg.n_traj < 1:
        raise ConfigError(f"{source}: record_stride and n_traj must be >= 1")
    if cfg.sweep_param in ("run", "sweep_param", "sweep_values", "sweep_run", "output_dir"):
        raise ConfigError(f"{source}: cannot sweep {cfg.sweep_param!r}")
    if not hasattr(cfg, cfg.sweep_param):
        raise ConfigError(f"{source}: unknown sweep parameter {cfg.sweep_param!r}")
    try:
        cfg.engine_params()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def config_to_text(cfg: RunConfig) -> str:
    """Render a config in the same flat format (round-trips through the parser)."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


DEFAULT_CONFIG = RunConfig()
