"""Stream sources: synthetic tabular data with group-wise distribution
shifts, a known-quantile diagnostic stream, a synthetic image stream, and
CSV ingestion with time-feature augmentation and warm-up normalization.

All generators are deterministic given their seed and lazily evaluated, so
arbitrarily long streams need constant memory and replays match exactly.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .models import OracleModel

_NA_TOKENS = {"", "na", "nan", "null", "none"}


# ---------------------------------------------------------------------------
# Synthetic tabular stream (group-wise shifts)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    """Generator parameters for the shifting tabular stream.

    Groups last ~N(group_mean_length, group_length_std^2) steps; each group
    draws a direction beta (uniform, L1-normalized) and a scale omega that is
    N(scale_mean, scale_var) on even-indexed groups and 1 on odd ones, which
    is what produces the abrupt regime changes.
    """

    seed: int = 0
    n_features: int = 5
    group_mean_length: float = 500.0
    group_length_std: float = 10.0
    scale_mean: float = 20.0
    scale_var: float = 10.0


def synthetic_step(y_prev: float, x: np.ndarray, eps: float, omega: float,
                   beta: np.ndarray) -> float:
    """One response draw: y = y_prev/2 + omega^2*|beta.x| + 2*sin(2*x_1*eps)."""
    return 0.5 * y_prev + omega ** 2 * abs(float(beta @ x)) \
        + 2.0 * math.sin(2.0 * x[0] * eps)


def synthetic_stream(config: SyntheticConfig, n_steps: int | None = None):
    """Yield (x, y, group_id) per the group-shift recursion, starting at y=0.

    Group ids start at 1. The group schedule is generated lazily, so the
    stream can be consumed indefinitely.
    """
    rng = np.random.default_rng(config.seed)
    p = config.n_features
    scale_std = math.sqrt(config.scale_var)

    y_prev = 0.0
    group = 0
    remaining = 0
    beta = None
    omega = 1.0
    t = 0
    while n_steps is None or t < n_steps:
        if remaining <= 0:
            group += 1
            remaining = max(1, int(round(rng.normal(
                config.group_mean_length, config.group_length_std))))
            raw = rng.uniform(0.0, 1.0, size=p)
            beta = raw / np.abs(raw).sum()
            if group % 2 == 0:
                omega = rng.normal(config.scale_mean, scale_std)
            else:
                omega = 1.0
        x = rng.uniform(0.0, 1.0, size=p)
        eps = rng.normal()
        y = synthetic_step(y_prev, x, eps, omega, beta)
        yield x, y, group
        y_prev = y
        remaining -= 1
        t += 1


def successive_difference_scale(ys) -> float:
    """Mean absolute change between consecutive labels.

    The recommended clipping range for adaptive stretching is +/- this
    value: it puts the stretch state on the scale of a typical one-step
    movement of the target.
    """
    ys = np.asarray(ys, dtype=float)
    if ys.size < 2:
        raise ValueError("need at least two labels")
    return float(np.mean(np.abs(np.diff(ys))))


def standardize_stream(points, warmup: int):
    """Standardize a labeled stream by statistics of its first ``warmup``
    points (population std), then yield every point in original order.

    Matches the CSV ingestion convention: statistics never use data beyond
    the warm-up window, constant coordinates are left unscaled, and the
    warm-up points themselves are emitted standardized. Only the warm-up
    prefix is buffered.
    """
    if warmup < 1:
        raise ValueError("warmup must be >= 1")
    it = iter(points)
    head = []
    for item in it:
        head.append(item)
        if len(head) >= warmup:
            break
    if not head:
        return
    xs = np.asarray([np.atleast_1d(p[0]) for p in head], dtype=float)
    ys = np.asarray([p[1] for p in head], dtype=float)
    x_mean = xs.mean(axis=0)
    x_std = xs.std(axis=0)
    x_std[x_std == 0.0] = 1.0
    x_mean[xs.std(axis=0) == 0.0] = 0.0
    y_mean = float(ys.mean())
    y_std = float(ys.std()) or 1.0

    def scale(item):
        x, y = item[0], item[1]
        x = (np.atleast_1d(np.asarray(x, dtype=float)) - x_mean) / x_std
        y = (float(y) - y_mean) / y_std
        if len(item) == 3:
            return x, y, item[2]
        return x, y

    for item in head:
        yield scale(item)
    for item in it:
        yield scale(item)


# ---------------------------------------------------------------------------
# Known-quantile diagnostic stream
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KnownQuantileConfig:
    """i.i.d. stream y = slope*x_1 + intercept + noise_std*eps with known
    conditional quantiles, for oracle-model diagnostics."""

    seed: int = 0
    n_features: int = 1
    slope: float = 2.0
    intercept: float = 0.0
    noise_std: float = 1.0


class KnownQuantileStream:
    """Stream with an analytically known conditional distribution."""

    def __init__(self, config: KnownQuantileConfig):
        self.config = config

    def mu(self, x) -> float:
        x = np.atleast_1d(x)
        return self.config.slope * float(x[0]) + self.config.intercept

    def sigma(self, x) -> float:
        return self.config.noise_std

    def oracle_model(self) -> OracleModel:
        return OracleModel(self.mu, self.sigma)

    def generate(self, n_steps: int | None = None):
        rng = np.random.default_rng(self.config.seed)
        p = self.config.n_features
        t = 0
        while n_steps is None or t < n_steps:
            x = rng.uniform(0.0, 1.0, size=p)
            y = self.mu(x) + self.sigma(x) * rng.normal()
            yield x, y
            t += 1

    def __iter__(self):
        return self.generate()


# ---------------------------------------------------------------------------
# Synthetic image stream
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImageStreamConfig:
    """Correlated-noise image stream with piecewise variance shifts.

    Each frame pairs a fixed smooth "prediction" field with a label equal to
    prediction + noise; the noise mixes a frame-wide component (weight
    frame_corr) with per-pixel white noise. Every shift_period steps the
    noise scale toggles between base_sigma and base_sigma * shift_factor
    (shift_factor=1 or shift_period=0 gives a stationary stream).
    """

    seed: int = 0
    height: int = 16
    width: int = 16
    base_sigma: float = 1.0
    shift_period: int = 0
    shift_factor: float = 1.0
    frame_corr: float = 0.5


def _smooth_field(h: int, w: int) -> np.ndarray:
    rows = np.sin(np.linspace(0.0, math.pi, h))[:, None]
    cols = np.cos(np.linspace(0.0, 2.0 * math.pi, w))[None, :]
    return 2.0 * rows * cols


def image_stream(config: ImageStreamConfig, n_steps: int | None = None):
    """Yield (predicted_grid, label_grid) frames."""
    rng = np.random.default_rng(config.seed)
    shape = (config.height, config.width)
    base = _smooth_field(*shape)
    rho = config.frame_corr
    w_pixel = math.sqrt(max(0.0, 1.0 - rho ** 2))

    t = 0
    while n_steps is None or t < n_steps:
        if config.shift_period and (t // config.shift_period) % 2 == 1:
            sigma = config.base_sigma * config.shift_factor
        else:
            sigma = config.base_sigma
        z = rng.normal()
        noise = sigma * (rho * z + w_pixel * rng.normal(size=shape))
        yield base, base + noise
        t += 1


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

@dataclass
class CsvStreamConfig:
    """How to read a labeled time-series CSV.

    The first ``warmup`` rows supply the normalization statistics
    (population standard deviation); time features derived from the
    timestamp column (day, month, year, hours, minutes, day-of-week) are
    appended unscaled after the standardized raw features.
    """

    path: str
    timestamp_col: str
    target_col: str
    feature_cols: list = field(default_factory=list)
    warmup: int = 8000
    augment_time: bool = True
    timestamp_format: str = "iso"  # "iso" or "epoch"


_TIME_FEATURES = ("day", "month", "year", "hours", "minutes", "day_of_week")


def _parse_timestamp(raw: str, fmt: str, row_idx: int) -> datetime:
    try:
        if fmt == "epoch":
            return datetime.fromtimestamp(float(raw), tz=timezone.utc).replace(tzinfo=None)
        return datetime.fromisoformat(raw)
    except (ValueError, OverflowError) as exc:
        raise ValueError(
            f"row {row_idx}: cannot parse timestamp {raw!r} as {fmt}: {exc}"
        ) from exc


def _time_features(ts: datetime) -> list[float]:
    return [float(ts.day), float(ts.month), float(ts.year),
            float(ts.hour), float(ts.minute), float(ts.weekday())]


@dataclass
class CsvStream:
    """Materialized, standardized stream from a CSV file.

    ``x`` rows are standardized raw features followed by raw time features;
    ``group`` is the day-of-week code (or -1 without timestamps). The
    normalization statistics are retained for inspection and de-scaling.
    """

    x: np.ndarray
    y: np.ndarray
    group: np.ndarray
    feature_names: list
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def __iter__(self):
        for i in range(len(self.y)):
            yield self.x[i], float(self.y[i]), int(self.group[i])

    def __len__(self) -> int:
        return len(self.y)


def csv_ingest(config: CsvStreamConfig) -> CsvStream:
    """Read, validate, augment and standardize a CSV stream.

    Rows are consumed strictly in file order. Rows with missing values are
    rejected with a warning naming the row and column; unparseable values
    raise with the same diagnostics. Constant columns over the warm-up
    window are left unscaled with a warning. Normalization statistics come
    from the warm-up rows only -- later rows never leak into them.
    """
    feats: list[list[float]] = []
    targets: list[float] = []
    times: list[list[float]] = []
    groups: list[int] = []

    with open(config.path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{config.path}: missing header row")
        feature_cols = list(config.feature_cols)
        if not feature_cols:
            reserved = {config.target_col, config.timestamp_col}
            feature_cols = [c for c in reader.fieldnames if c not in reserved]
        needed = [config.target_col] + feature_cols
        if config.augment_time or config.timestamp_col:
            needed.append(config.timestamp_col)
        for col in needed:
            if col not in reader.fieldnames:
                raise ValueError(f"{config.path}: column {col!r} not in header")

        for idx, row in enumerate(reader, start=1):
            values = {}
            missing = None
            for col in [config.target_col] + feature_cols:
                raw = (row.get(col) or "").strip()
                if raw.lower() in _NA_TOKENS:
                    missing = col
                    break
                try:
                    values[col] = float(raw)
                except ValueError as exc:
                    raise ValueError(
                        f"row {idx}, column {col!r}: cannot parse {raw!r}"
                    ) from exc
            if missing is not None:
                warnings.warn(
                    f"row {idx} rejected: missing value in column {missing!r}")
                continue
            if config.augment_time:
                ts = _parse_timestamp((row.get(config.timestamp_col) or "").strip(),
                                      config.timestamp_format, idx)
                times.append(_time_features(ts))
                groups.append(ts.weekday())
            else:
                groups.append(-1)
            feats.append([values[c] for c in feature_cols])
            targets.append(values[config.target_col])

    if not feats:
        raise ValueError(f"{config.path}: no usable rows")
    if config.warmup > len(feats):
        raise ValueError(
            f"warm-up size {config.warmup} exceeds row count {len(feats)}")
    warmup = config.warmup

    X = np.asarray(feats, dtype=float)
    y = np.asarray(targets, dtype=float)

    x_mean = X[:warmup].mean(axis=0)
    x_std = X[:warmup].std(axis=0)  # population std
    for j, col in enumerate(feature_cols):
        if x_std[j] == 0.0:
            warnings.warn(f"column {col!r} constant over warm-up; left unscaled")
            x_std[j] = 1.0
            x_mean[j] = 0.0
    y_mean = float(y[:warmup].mean())
    y_std = float(y[:warmup].std())
    if y_std == 0.0:
        warnings.warn("target constant over warm-up; left unscaled")
        y_std = 1.0
        y_mean = 0.0

    X = (X - x_mean) / x_std
    y = (y - y_mean) / y_std
    names = list(feature_cols)
    if config.augment_time:
        X = np.hstack([X, np.asarray(times, dtype=float)])
        names += list(_TIME_FEATURES)

    return CsvStream(
        x=X, y=y, group=np.asarray(groups, dtype=int),
        feature_names=names, x_mean=x_mean, x_std=x_std,
        y_mean=y_mean, y_std=y_std,
    )
