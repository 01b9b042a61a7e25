"""Ingestion, cleaning, encoding, scaling and synthesis of load data.

Feature layout is fixed at 12 columns: the six weather channels
(pressure, cloud cover, humidity, temperature, wind direction, wind
speed) occupy columns 0-5 and are the attackable "flexible" block; the
six sine/cosine temporal encodings occupy columns 6-11 and are fixed
(an operator can always verify the clock).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

N_FLEX = 6
N_FIX = 6
N_FEATURES = N_FLEX + N_FIX

# canonical name -> (flexible column position, None for timestamp/load)
WEATHER_FIELDS = (
    "pressure",
    "cloud_cover",
    "humidity",
    "temperature",
    "wind_direction",
    "wind_speed",
)
TIME_FIELDS = ("year", "month", "day", "hour")
CSV_FIELDS = TIME_FIELDS + WEATHER_FIELDS + ("load",)


class MissingColumn(ValueError):
    def __init__(self, names):
        self.names = tuple(names)
        super().__init__(f"CSV is missing mapped column(s): {', '.join(self.names)}")


class UnparseableField(ValueError):
    """A cell could not be parsed or violates a field invariant."""

    def __init__(self, row: int, col: str, detail: str = ""):
        self.row = row
        self.col = col
        msg = f"row {row}, column '{col}' is unparseable"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class EmptyFile(ValueError):
    pass


class AllRemoved(ValueError):
    pass


class DegenerateColumn(ValueError):
    def __init__(self, col: int):
        self.col = col
        super().__init__(f"flexible column {col} is constant; cannot scale")


@dataclass(frozen=True)
class RawRecord:
    """One hourly observation before encoding."""

    year: int
    month: int
    day: int
    hour: int
    pressure: float
    cloud_cover: float
    humidity: float
    temperature: float
    wind_direction: float
    wind_speed: float
    load: float

    def weather(self) -> tuple:
        return tuple(getattr(self, f) for f in WEATHER_FIELDS)


@dataclass
class Dataset:
    """Encoded samples: X is N x 12, flexible block first."""

    X: np.ndarray
    Y: np.ndarray
    scale_min: np.ndarray | None = None
    scale_max: np.ndarray | None = None
    flex_idx: np.ndarray = field(
        default_factory=lambda: np.arange(N_FLEX, dtype=int)
    )
    fix_idx: np.ndarray = field(
        default_factory=lambda: np.arange(N_FLEX, N_FEATURES, dtype=int)
    )

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[1] != N_FEATURES:
            raise ValueError(f"X must be N x {N_FEATURES}")
        if self.Y.shape != (self.X.shape[0],):
            raise ValueError("Y length must match X rows")

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class ImputationVector:
    """Operator's replacement values for blocked flexible features.

    Only the flexible entries matter: fixed features are never blocked,
    so their entries are stored as zero.
    """

    mode: str  # "zero" | "mean"
    values: np.ndarray  # length 12

    def __post_init__(self):
        if self.mode not in ("zero", "mean"):
            raise ValueError(f"unknown imputation mode {self.mode!r}")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (N_FEATURES,):
            raise ValueError(f"values must have length {N_FEATURES}")
        object.__setattr__(self, "values", v)


def encode_temporal(month: int, day: int, hour: int) -> np.ndarray:
    """Sine/cosine pairs on month-of-year, day-of-month and hour-of-day."""
    out = np.empty(6)
    for k, (value, period) in enumerate(((month, 12.0), (day, 31.0), (hour, 24.0))):
        angle = 2.0 * math.pi * value / period
        out[2 * k] = math.sin(angle)
        out[2 * k + 1] = math.cos(angle)
    return out


def _parse_int(text: str, row: int, col: str, lo: int, hi: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise UnparseableField(row, col, f"expected integer, got {text!r}") from None
    if not lo <= value <= hi:
        raise UnparseableField(row, col, f"{value} outside [{lo}, {hi}]")
    return value


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise UnparseableField(row, col, f"expected number, got {text!r}") from None
    if not math.isfinite(value):
        raise UnparseableField(row, col, "value is not finite")
    return value


def load_csv(path, schema: dict | None = None) -> list[RawRecord]:
    """Read hourly records from a CSV file.

    `schema` maps canonical field names (year, month, day, hour, the six
    weather channels, load) to the file's column headers; omitted keys
    default to the canonical names themselves.
    """
    schema = dict(schema or {})
    colmap = {f: schema.get(f, f) for f in CSV_FIELDS}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [colmap[f] for f in CSV_FIELDS if colmap[f] not in header]
        if missing:
            raise MissingColumn(missing)

        records = []
        for i, row in enumerate(reader, start=1):
            year = _parse_int(row[colmap["year"]], i, colmap["year"], 1900, 2200)
            month = _parse_int(row[colmap["month"]], i, colmap["month"], 1, 12)
            day = _parse_int(row[colmap["day"]], i, colmap["day"], 1, 31)
            hour = _parse_int(row[colmap["hour"]], i, colmap["hour"], 0, 23)
            weather = {
                f: _parse_float(row[colmap[f]], i, colmap[f]) for f in WEATHER_FIELDS
            }
            load = _parse_float(row[colmap["load"]], i, colmap["load"])
            if load <= 0.0:
                raise UnparseableField(i, colmap["load"], "load must be positive")
            records.append(
                RawRecord(year=year, month=month, day=day, hour=hour, load=load, **weather)
            )

    if not records:
        raise EmptyFile(f"{path} has no data rows")
    return records


def remove_outliers(records: list[RawRecord]) -> list[RawRecord]:
    """Drop records whose load is more than three sample std-devs from the mean."""
    if not records:
        raise ValueError("remove_outliers needs a nonempty list")
    loads = np.array([r.load for r in records])
    mean = loads.mean()
    sigma = loads.std(ddof=1) if len(records) > 1 else 0.0
    kept = [r for r, v in zip(records, loads) if abs(v - mean) <= 3.0 * sigma]
    if not kept:
        raise AllRemoved("outlier removal discarded every record")
    return kept


def encode(records: list[RawRecord]) -> Dataset:
    """Build the 12-column feature matrix: weather block, then temporal block."""
    n = len(records)
    X = np.empty((n, N_FEATURES))
    Y = np.empty(n)
    for i, r in enumerate(records):
        X[i, :N_FLEX] = r.weather()
        X[i, N_FLEX:] = encode_temporal(r.month, r.day, r.hour)
        Y[i] = r.load
    return Dataset(X=X, Y=Y)


def split(dataset: Dataset, ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint train/test partition; |train| = round(ratio * N)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    n = len(dataset)
    n_train = int(round(ratio * n))
    perm = np.random.default_rng(seed).permutation(n)
    tr, te = perm[:n_train], perm[n_train:]
    train = Dataset(X=dataset.X[tr], Y=dataset.Y[tr])
    test = Dataset(X=dataset.X[te], Y=dataset.Y[te])
    return train, test


def fit_scale(train: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-column min/max of the flexible block, train rows only."""
    flex = train.X[:, :N_FLEX]
    mn = flex.min(axis=0)
    mx = flex.max(axis=0)
    degenerate = np.flatnonzero(mx == mn)
    if degenerate.size:
        raise DegenerateColumn(int(degenerate[0]))
    return mn, mx


def apply_scale(dataset: Dataset, scale_min: np.ndarray, scale_max: np.ndarray) -> Dataset:
    """Map flexible columns through (x - min) / (max - min); no clamping."""
    X = dataset.X.copy()
    X[:, :N_FLEX] = (X[:, :N_FLEX] - scale_min) / (scale_max - scale_min)
    return Dataset(
        X=X,
        Y=dataset.Y.copy(),
        scale_min=np.asarray(scale_min, dtype=float).copy(),
        scale_max=np.asarray(scale_max, dtype=float).copy(),
    )


def make_imputation(train: Dataset, mode: str) -> ImputationVector:
    """Zero vector, or the scaled training-set column means (flexible block)."""
    values = np.zeros(N_FEATURES)
    if mode == "mean":
        values[:N_FLEX] = train.X[:, :N_FLEX].mean(axis=0)
    elif mode != "zero":
        raise ValueError(f"unknown imputation mode {mode!r}")
    return ImputationVector(mode=mode, values=values)


# --- synthetic data ---------------------------------------------------------

SYNTH_NOISE_SCALE = 1.0


def synth_signal(X: np.ndarray) -> np.ndarray:
    """Noise-free load surface used by the synthetic generator.

    Smooth, positive, and strongly dependent on both the weather block
    and the clock, so trained models have structure worth attacking.
    """
    X = np.atleast_2d(X)
    w = X[:, :N_FLEX]
    t = X[:, N_FLEX:]
    base = 100.0
    return (
        base
        + 22.0 * w[:, 3]
        + 14.0 * w[:, 0] * w[:, 2]
        + 9.0 * np.square(w[:, 4])
        - 11.0 * w[:, 1]
        + 6.0 * w[:, 5] * w[:, 3]
        + 8.0 * t[:, 4]
        + 5.0 * t[:, 5]
        + 3.0 * t[:, 0]
    )


def synth_records(n: int, seed: int, noise_scale: float = SYNTH_NOISE_SCALE) -> list[RawRecord]:
    """Hourly synthetic records: weather uniform on [0,1], clock advancing hourly."""
    if n < 10:
        raise ValueError("need n >= 10")
    rng = np.random.default_rng(seed)
    weather = rng.uniform(0.0, 1.0, size=(n, N_FLEX))
    noise = rng.normal(0.0, noise_scale, size=n)

    records = []
    month, day, hour = 1, 1, 0
    for i in range(n):
        temporal = encode_temporal(month, day, hour)
        x = np.concatenate([weather[i], temporal])
        load = float(synth_signal(x)[0] + noise[i])
        records.append(
            RawRecord(
                year=2019,
                month=month,
                day=day,
                hour=hour,
                pressure=weather[i, 0],
                cloud_cover=weather[i, 1],
                humidity=weather[i, 2],
                temperature=weather[i, 3],
                wind_direction=weather[i, 4],
                wind_speed=weather[i, 5],
                load=load,
            )
        )
        hour += 1
        if hour == 24:
            hour = 0
            day += 1
            if day > 28:  # short synthetic months keep the calendar trivial
                day = 1
                month = month % 12 + 1
    return records


def synth_generate(n: int, seed: int, noise_scale: float = SYNTH_NOISE_SCALE) -> Dataset:
    """Deterministic synthetic dataset for desk-scale experiments."""
    return encode(synth_records(n, seed, noise_scale))


# --- persistence ------------------------------------------------------------


def _array_digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()


@dataclass
class PreparedData:
    """Everything downstream stages need: splits, scale stats, imputations."""

    train: Dataset
    test: Dataset
    imputation_zero: ImputationVector
    imputation_mean: ImputationVector
    manifest: dict

    @property
    def manifest_hash(self) -> str:
        return self.manifest["hash"]


def prepare(
    records: list[RawRecord],
    ratio: float,
    seed: int,
    source: str = "records",
) -> PreparedData:
    """Full pipeline: outlier removal, encoding, split, scaling, imputation."""
    cleaned = remove_outliers(records)
    removed = len(records) - len(cleaned)
    train, test = split(encode(cleaned), ratio, seed)
    mn, mx = fit_scale(train)
    train = apply_scale(train, mn, mx)
    test = apply_scale(test, mn, mx)
    imp_zero = make_imputation(train, "zero")
    imp_mean = make_imputation(train, "mean")

    manifest = {
        "format_version": 1,
        "source": source,
        "seed": seed,
        "ratio": ratio,
        "rows_in": len(records),
        "outliers_removed": removed,
        "rows_train": len(train),
        "rows_test": len(test),
        "scale_min": mn.tolist(),
        "scale_max": mx.tolist(),
        "imputation_zero": imp_zero.values.tolist(),
        "imputation_mean": imp_mean.values.tolist(),
    }
    manifest["hash"] = _array_digest(train.X, train.Y, test.X, test.Y)
    return PreparedData(
        train=train,
        test=test,
        imputation_zero=imp_zero,
        imputation_mean=imp_mean,
        manifest=manifest,
    )


def save_prepared(data: PreparedData, arrays_path, manifest_path) -> None:
    np.savez(
        arrays_path,
        X_train=data.train.X,
        Y_train=data.train.Y,
        X_test=data.test.X,
        Y_test=data.test.Y,
        scale_min=data.train.scale_min,
        scale_max=data.train.scale_max,
        imputation_zero=data.imputation_zero.values,
        imputation_mean=data.imputation_mean.values,
    )
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(data.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_prepared(arrays_path, manifest_path) -> PreparedData:
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    with np.load(arrays_path) as z:
        mn, mx = z["scale_min"], z["scale_max"]
        train = Dataset(X=z["X_train"], Y=z["Y_train"], scale_min=mn, scale_max=mx)
        test = Dataset(X=z["X_test"], Y=z["Y_test"], scale_min=mn, scale_max=mx)
        imp_zero = ImputationVector(mode="zero", values=z["imputation_zero"])
        imp_mean = ImputationVector(mode="mean", values=z["imputation_mean"])
    digest = _array_digest(train.X, train.Y, test.X, test.Y)
    if digest != manifest.get("hash"):
        raise ValueError("dataset arrays do not match their manifest hash")
    return PreparedData(
        train=train,
        test=test,
        imputation_zero=imp_zero,
        imputation_mean=imp_mean,
        manifest=manifest,
    )
