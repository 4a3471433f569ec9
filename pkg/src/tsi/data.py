"""Dataset loading, chronological splits, windows and synthetic ground truth."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tsi.errors import DataError

ETT_FEATURES = ("HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL")


@dataclass
class DatasetBundle:
    name: str
    timestamps: list[datetime]
    values: np.ndarray
    feature_names: list[str]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CsvSchema:
    """Which columns to read; ``features=None`` keeps every non-timestamp column."""

    timestamp_column: str | int = 0
    features: tuple[str, ...] | None = None


def _parse_time(text: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"row {row}: cannot parse timestamp {text!r}") from None


def load_csv(path, schema: CsvSchema | None = None, name: str | None = None) -> DatasetBundle:
    """Read a header + timestamp-first CSV into memory.

    Rows are numbered from 1 for the first data row; columns by header name.
    Any empty, non-numeric or NaN cell is an error, as are non-increasing
    timestamps.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        ts_col = header.index(schema.timestamp_column) if isinstance(schema.timestamp_column, str) \
            else schema.timestamp_column
        if schema.features is None:
            cols = [i for i in range(len(header)) if i != ts_col]
        else:
            missing = [f for f in schema.features if f not in header]
            if missing:
                raise DataError(f"{path}: missing columns {missing}")
            cols = [header.index(f) for f in schema.features]
        stamps, rows = [], []
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(f"row {r}: expected {len(header)} cells, found {len(record)}")
            stamps.append(_parse_time(record[ts_col], r))
            vals = []
            for c in cols:
                cell = record[c].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"row {r}, column {header[c]!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {r}, column {header[c]!r}: missing or non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path} has no data rows")
    for r in range(1, len(stamps)):
        if stamps[r] <= stamps[r - 1]:
            raise DataError(f"row {r + 1}: timestamps are not strictly increasing")
    return DatasetBundle(name or path.stem, stamps, np.array(rows, dtype=np.float64), [header[c] for c in cols])


def write_csv(bundle: DatasetBundle, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *bundle.feature_names])
        for ts, row in zip(bundle.timestamps, bundle.values):
            w.writerow([ts.isoformat(sep=" "), *(repr(float(v)) for v in row)])


# ---------------------------------------------------------------------------
# splitting and scaling


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> Scaler:
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        if np.any(std <= 0):
            bad = np.flatnonzero(std <= 0).tolist()
            raise DataError(f"features {bad} have zero variance on the training split")
        return cls(mean, std)

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values) - self.mean) / self.std

    def inverse_transform(self, values) -> np.ndarray:
        return np.asarray(values) * self.std + self.mean


@dataclass
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    scaler: Scaler
    bounds: tuple[int, int]


def split_standardize(values, ratios: Sequence[float] = (0.6, 0.2, 0.2), min_length: int = 1) -> Splits:
    """Contiguous train/val/test split; the scaler is fit on train only."""
    values = values.values if isinstance(values, DatasetBundle) else np.asarray(values, dtype=np.float64)
    if len(ratios) != 3 or min(ratios) < 0 or not math.isclose(sum(ratios), 1.0):
        raise ValueError(f"invalid split ratios {tuple(ratios)}")
    n = values.shape[0]
    n_train = int(round(n * ratios[0], 9))
    n_val = int(round(n * ratios[1], 9))
    parts = (values[:n_train], values[n_train:n_train + n_val], values[n_train + n_val:])
    for label, part in zip(("train", "val", "test"), parts):
        if part.shape[0] < min_length:
            raise DataError(f"{label} split has {part.shape[0]} rows, need at least {min_length}")
    scaler = Scaler.fit(parts[0])
    return Splits(*(scaler.transform(p) for p in parts), scaler, (n_train, n_train + n_val))


@dataclass(frozen=True)
class WindowSpec:
    lookback: int
    horizon: int
    stride: int = 1

    def __post_init__(self):
        if min(self.lookback, self.horizon, self.stride) < 1:
            raise ValueError("lookback, horizon and stride must be >= 1")


def window_count(length: int, spec: WindowSpec) -> int:
    return max(0, (length - spec.lookback - spec.horizon) // spec.stride + 1)


def make_windows(split, spec: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    """Inputs ``[N, h, m]`` and the immediately following targets ``[N, k, m]``."""
    split = np.asarray(split, dtype=np.float64)
    h, k = spec.lookback, spec.horizon
    if split.shape[0] < h + k:
        raise DataError(f"split of length {split.shape[0]} is shorter than lookback + horizon = {h + k}")
    n = window_count(split.shape[0], spec)
    all_w = sliding_window_view(split, h + k, axis=0).transpose(0, 2, 1)[:: spec.stride][:n]
    return all_w[:, :h], all_w[:, h:]


def lookback_windows(split, lookback: int) -> np.ndarray:
    """Every length-``lookback`` window of ``split`` (stride 1) as a read-only view."""
    split = np.asarray(split, dtype=np.float64)
    return sliding_window_view(split, lookback, axis=0).transpose(0, 2, 1)


# ---------------------------------------------------------------------------
# synthetic data

SOURCE_KINDS = ("uniform", "laplace", "sinusoid", "gaussian")


@dataclass(frozen=True)
class SyntheticSpec:
    """Trend + seasonal + ``f(A I)`` + noise, with ``A`` square over the sources."""

    length: int = 2000
    sources: tuple[str, ...] = ("uniform", "laplace")
    trend_slopes: tuple[float, ...] | None = None
    periods: tuple[float, ...] = ()
    amplitudes: tuple[float, ...] = ()
    mixing: tuple[tuple[float, ...], ...] | None = None
    nonlinearity: str = "identity"
    noise: float = 0.0
    seed: int = 0
    feature_names: tuple[str, ...] | None = None
    start: str = "2016-07-01 00:00:00"
    freq_minutes: int = 60
    name: str = "synthetic"

    @property
    def n_features(self) -> int:
        return len(self.sources)


@dataclass
class SyntheticTruth:
    trend: np.ndarray
    seasonal: np.ndarray
    sources: np.ndarray
    mixing: np.ndarray

    def to_json(self, spec: SyntheticSpec) -> str:
        doc = {
            "mixing": self.mixing.tolist(),
            "source_kinds": list(spec.sources),
            "nonlinearity": spec.nonlinearity,
            "seed": spec.seed,
            "sources": self.sources.tolist(),
            "trend": self.trend.tolist(),
            "seasonal": self.seasonal.tolist(),
        }
        return json.dumps(doc, separators=(",", ":"))


def _draw_source(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance source signal."""
    if kind == "uniform":
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=n)
    if kind == "laplace":
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size=n)
    if kind == "sinusoid":
        period = rng.uniform(10.0, 50.0)
        phase = rng.uniform(0.0, 2 * math.pi)
        return math.sqrt(2.0) * np.sin(2 * math.pi * np.arange(n) / period + phase)
    if kind == "gaussian":
        return rng.normal(size=n)
    raise ValueError(f"unknown source kind {kind!r}; expected one of {SOURCE_KINDS}")


def _max_cross_correlation(S: np.ndarray) -> float:
    if S.shape[1] < 2 or S.shape[0] < 2:
        return 0.0
    C = np.corrcoef(S.T)
    return float(np.max(np.abs(C - np.diag(np.diag(C)))))


def _draw_sources(kinds, n: int, rng: np.random.Generator, max_corr: float = 0.05,
                  attempts: int = 50) -> np.ndarray:
    """Stacked sources, redrawn until no pair correlates beyond ``max_corr``.

    Independent draws still show sample correlations of order 1/sqrt(n); the
    redraw keeps the sample close to the independence it is meant to model.
    Short series may never get there, so the best of ``attempts`` is kept.
    """
    best, best_corr = None, np.inf
    for _ in range(attempts):
        S = np.stack([_draw_source(k, n, rng) for k in kinds], axis=1)
        c = _max_cross_correlation(S)
        if c < best_corr:
            best, best_corr = S, c
        if c < max_corr:
            break
    return best


def _check_spec(spec: SyntheticSpec) -> None:
    m = spec.n_features
    if spec.length < 1 or m < 1:
        raise ValueError("synthetic spec needs length >= 1 and at least one source")
    if len(spec.periods) != len(spec.amplitudes):
        raise ValueError("periods and amplitudes must have the same length")
    if any(p < 2 for p in spec.periods):
        raise ValueError("seasonal periods must be >= 2")
    if spec.trend_slopes is not None and len(spec.trend_slopes) != m:
        raise ValueError(f"need {m} trend slopes, got {len(spec.trend_slopes)}")
    if spec.feature_names is not None and len(spec.feature_names) != m:
        raise ValueError(f"need {m} feature names, got {len(spec.feature_names)}")
    if spec.nonlinearity not in ("identity", "tanh"):
        raise ValueError(f"nonlinearity must be 'identity' or 'tanh', not {spec.nonlinearity!r}")
    if spec.noise < 0:
        raise ValueError("noise must be non-negative")


def gen_synthetic(spec: SyntheticSpec) -> tuple[DatasetBundle, SyntheticTruth]:
    """Generate a bundle with known trend, seasonal, source and mixing components."""
    _check_spec(spec)
    m, n = spec.n_features, spec.length
    rng = np.random.default_rng(spec.seed)
    if spec.mixing is None:
        A = rng.normal(size=(m, m)) + 2.0 * np.eye(m)
    else:
        A = np.array(spec.mixing, dtype=np.float64)
        if A.shape != (m, m):
            raise ValueError(f"mixing matrix must be {m}x{m}, got {A.shape}")
    if np.linalg.matrix_rank(A) < m or np.linalg.cond(A) > 1e12:
        raise ValueError("mixing matrix is singular")
    sources = _draw_sources(spec.sources, n, rng)
    t = np.arange(n, dtype=np.float64)
    slopes = np.zeros(m) if spec.trend_slopes is None else np.asarray(spec.trend_slopes, dtype=np.float64)
    trend = t[:, None] * slopes[None, :]
    seasonal = np.zeros((n, m))
    for period, amp in zip(spec.periods, spec.amplitudes):
        phase = rng.uniform(0.0, 2 * math.pi, size=m)
        seasonal += amp * np.sin(2 * math.pi * t[:, None] / period + phase[None, :])
    mixed = sources @ A.T
    if spec.nonlinearity == "tanh":
        mixed = np.tanh(mixed)
    values = trend + seasonal + mixed
    if spec.noise > 0:
        values = values + rng.normal(0.0, spec.noise, size=values.shape)
    start = datetime.fromisoformat(spec.start)
    stamps = [start + timedelta(minutes=spec.freq_minutes * i) for i in range(n)]
    names = list(spec.feature_names or (f"x{j}" for j in range(m)))
    return DatasetBundle(spec.name, stamps, values, names), SyntheticTruth(trend, seasonal, sources, A)


def ett_like_spec(length: int = 4000, seed: int = 0) -> SyntheticSpec:
    """Hourly six-variable series with ETT column names, daily and weekly cycles."""
    return SyntheticSpec(
        length=length,
        sources=("uniform", "laplace", "sinusoid", "uniform", "laplace", "sinusoid"),
        trend_slopes=(2e-4, -1e-4, 1.5e-4, 0.0, -2e-4, 1e-4),
        periods=(24.0, 168.0),
        amplitudes=(1.0, 0.5),
        nonlinearity="tanh",
        noise=0.2,
        seed=seed,
        feature_names=ETT_FEATURES,
        name="ETTh1",
    )


def write_synthetic(spec: SyntheticSpec, out_dir) -> tuple[Path, Path]:
    """Write ``<name>.csv`` and the ``<name>.truth.json`` sidecar."""
    bundle, truth = gen_synthetic(spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{spec.name}.csv"
    json_path = out_dir / f"{spec.name}.truth.json"
    write_csv(bundle, csv_path)
    json_path.write_text(truth.to_json(spec), encoding="utf-8")
    return csv_path, json_path
