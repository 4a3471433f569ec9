"""Run configuration: flat ``key = value`` files with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from tsi.errors import ConfigError
from tsi.forecaster import DEFAULT_ALPHAS

ETTH_HORIZONS = (24, 48, 168, 336, 720)
ETTM_HORIZONS = (24, 48, 96, 288, 672)


@dataclass(frozen=True)
class RunConfig:
    # data
    dataset: str = "synthetic"
    dataset_name: str = ""
    synthetic_length: int = 4000
    split: tuple[float, ...] = (0.6, 0.2, 0.2)
    window: int = 128
    horizons: tuple[int, ...] = ()
    # encoders
    d_hidden: int = 64
    d_trend: int = 64
    d_seasonal: int = 64
    depth: int = 5
    # contrastive training
    steps: int = 1000
    batch_size: int = 8
    temperature: float = 0.07
    momentum: float = 0.999
    queue_size: int = 256
    lr: float = 1e-3
    aug_p: float = 0.5
    scale_sigma: float = 0.5
    shift_sigma: float = 0.5
    jitter_sigma: float = 0.5
    # independent components
    autoencoder: bool = True
    n_components: int = 0
    sparsity: float = 0.01
    ae_hidden: int = 32
    ae_steps: int = 1000
    ae_lr: float = 3e-3
    ica_tol: float = 1e-4
    ica_max_iter: int = 200
    ica_on_reconstruction: bool = False
    # forecasting
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHAS
    seed: int = 0

    @property
    def name(self) -> str:
        if self.dataset_name:
            return self.dataset_name
        if self.dataset == "synthetic":
            return "ETTh1"
        return Path(self.dataset).stem

    @property
    def horizon_list(self) -> tuple[int, ...]:
        if self.horizons:
            return self.horizons
        return ETTM_HORIZONS if self.name.lower().startswith("ettm") else ETTH_HORIZONS


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key: str, text: str):
    default = _FIELDS[key].default
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        item = int if key == "horizons" else float
        return tuple(item(p) for p in text.replace(" ", "").split(",") if p)
    return text


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse ``key = value`` lines; unknown keys and malformed values raise :class:`ConfigError`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        try:
            values[key] = _convert(key, val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r} (line {lineno}): {exc}") from None
    values.update(overrides or {})
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def validate(cfg: RunConfig) -> None:
    positive = ("window", "d_hidden", "d_trend", "d_seasonal", "steps", "batch_size", "queue_size",
                "ae_hidden", "ica_max_iter", "synthetic_length")
    for key in positive:
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must be >= 1")
    if cfg.depth < 0:
        raise ConfigError("depth must be >= 0")
    if cfg.n_components < 0:
        raise ConfigError("n_components must be >= 0 (0 means one per feature)")
    if any(k < 1 for k in cfg.horizon_list):
        raise ConfigError("horizons must be >= 1")
    if not cfg.alpha_grid or min(cfg.alpha_grid) < 0:
        raise ConfigError("alpha_grid must be a non-empty list of non-negative values")
    if cfg.temperature <= 0 or not 0 <= cfg.momentum <= 1 or not 0 <= cfg.aug_p <= 1:
        raise ConfigError("temperature must be > 0; momentum and aug_p must lie in [0, 1]")
    if min(cfg.scale_sigma, cfg.shift_sigma, cfg.jitter_sigma, cfg.sparsity) < 0:
        raise ConfigError("sigmas and sparsity must be non-negative")
    if len(cfg.split) != 3 or abs(sum(cfg.split) - 1.0) > 1e-9 or min(cfg.split) <= 0:
        raise ConfigError("split must be three positive ratios summing to 1")
    if cfg.queue_size > cfg.steps * cfg.batch_size:
        raise ConfigError("queue_size must not exceed steps * batch_size")
