"""Stored records -> feature matrix, irradiance target, splits and batches.

Dataset file format (CSV, UTF-8, one header row)::

    temp_f,humidity_pct,dew_point_f,wind_speed_mph,rain_in,barometer_inhg,
    solar_altitude_pct,solar_radiation_wm2,timestamp,split

The first seven columns are the model inputs in their fixed order, followed by
the target, the ISO-8601 UTC timestamp (metadata only) and ``train`` or
``validation``. Floats are written with ``repr`` so a reload is bit-exact.
A sidecar ``<file>.meta.json`` records the split seed, train fraction and,
when ``--standardize`` was requested, the train-only mean/std per feature.
"""

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from solarcast.errors import ValidationError
from solarcast.ingest_service import load_record, parse_timestamp

log = logging.getLogger(__name__)

FEATURE_ORDER = (
    "temp_f",
    "humidity_pct",
    "dew_point_f",
    "wind_speed_mph",
    "rain_in",
    "barometer_inhg",
    "solar_altitude_pct",
)
N_FEATURES = len(FEATURE_ORDER)
TARGET = "solar_radiation_wm2"
DATASET_FORMAT_VERSION = 1
MAX_MALFORMED_FRACTION = 0.10


@dataclass
class SampleSet:
    """Columnar samples: ``features`` (N, 7), ``targets`` (N,), ``timestamps`` (N,) str."""

    features: np.ndarray
    targets: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64).reshape(-1, N_FEATURES)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float64).reshape(-1)
        self.timestamps = np.asarray(self.timestamps, dtype=object).reshape(-1)
        n = len(self.features)
        if len(self.targets) != n or len(self.timestamps) != n:
            raise ValidationError(
                f"column lengths differ: {n} features, {len(self.targets)} targets, "
                f"{len(self.timestamps)} timestamps"
            )
        if not np.isfinite(self.features).all():
            raise ValidationError("features contain non-finite values")

    def __len__(self):
        return len(self.targets)

    def take(self, idx):
        return SampleSet(self.features[idx], self.targets[idx], self.timestamps[idx])

    @classmethod
    def empty(cls):
        return cls(np.empty((0, N_FEATURES)), np.empty(0), np.empty(0, dtype=object))

    @classmethod
    def concat(cls, *parts):
        return cls(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.timestamps for p in parts]),
        )


@dataclass
class DatasetSplit:
    train: SampleSet
    validation: SampleSet
    split_seed: int
    train_fraction: float
    stats: "Standardization | None" = None


@dataclass
class Standardization:
    mean: np.ndarray
    std: np.ndarray
    feature_order: tuple = field(default=FEATURE_ORDER)

    def apply(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def to_dict(self):
        return {
            "feature_order": list(self.feature_order),
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64),
                   tuple(d.get("feature_order", FEATURE_ORDER)))


def record_to_row(record):
    return [getattr(record, name) for name in FEATURE_ORDER], record.solar_radiation_wm2


def load_records(root):
    """Read every record file under ``root``; returns ``(samples, skipped_paths)``.

    Samples are sorted by timestamp. Raises :class:`ValidationError` when more
    than 10% of the files are malformed.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data root {root} is not a readable directory")
    paths = sorted(p for p in root.glob("*.json") if not p.name.startswith("."))
    rows, targets, stamps, skipped = [], [], [], []
    for p in paths:
        try:
            rec = load_record(p)
            feats, target = record_to_row(rec)
            if not all(math.isfinite(v) for v in feats):
                raise ValidationError("non-finite feature")
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            log.warning("skipping malformed record %s: %s", p.name, exc)
            skipped.append(p)
            continue
        rows.append(feats)
        targets.append(target)
        stamps.append(parse_timestamp(rec.last_update))
    if paths and len(skipped) > MAX_MALFORMED_FRACTION * len(paths):
        raise ValidationError(
            f"{len(skipped)} of {len(paths)} record files under {root} are malformed "
            f"(limit {MAX_MALFORMED_FRACTION:.0%})"
        )
    if skipped:
        log.warning("skipped %d malformed record file(s) of %d", len(skipped), len(paths))
    if not paths:
        log.warning("no record files under %s", root)
        return SampleSet.empty(), skipped
    order = sorted(range(len(stamps)), key=stamps.__getitem__)
    iso = np.array([stamps[i].isoformat().replace("+00:00", "Z") for i in order], dtype=object)
    return SampleSet(np.array(rows)[order], np.array(targets)[order], iso), skipped


def split(samples, train_fraction=0.8, split_seed=0):
    if len(samples) < 2:
        raise ValidationError(f"need at least 2 samples to split, got {len(samples)}")
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction={train_fraction} outside (0, 1)")
    n = len(samples)
    n_train = min(n - 1, max(1, round(n * train_fraction)))
    perm = np.random.default_rng(split_seed).permutation(n)
    return DatasetSplit(
        train=samples.take(np.sort(perm[:n_train])),
        validation=samples.take(np.sort(perm[n_train:])),
        split_seed=split_seed,
        train_fraction=train_fraction,
    )


def batches(samples, batch_size, epoch_seed):
    """Yield ``(X, y)`` minibatches over one shuffled epoch; last batch may be short."""
    if batch_size < 1:
        raise ValidationError(f"batch_size={batch_size} must be >= 1")
    perm = np.random.default_rng(epoch_seed).permutation(len(samples))
    for start in range(0, len(perm), batch_size):
        idx = perm[start : start + batch_size]
        yield samples.features[idx], samples.targets[idx]


def fit_standardization(features):
    features = np.asarray(features, dtype=np.float64)
    if len(features) == 0:
        raise ValidationError("cannot standardize an empty training set")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    flat = std == 0.0
    if flat.any():
        names = [FEATURE_ORDER[i] for i in np.flatnonzero(flat)]
        warnings.warn(f"zero-variance feature(s) left unscaled: {', '.join(names)}", stacklevel=2)
        mean = np.where(flat, 0.0, mean)
        std = np.where(flat, 1.0, std)
    return Standardization(mean, std)


def standardize(ds, stats=None):
    """Return a standardized copy of ``ds`` and the train-only statistics used.

    Not idempotent: applying the statistics to already-standardized data
    shifts and rescales it again.
    """
    stats = stats or fit_standardization(ds.train.features)
    out = DatasetSplit(
        train=SampleSet(stats.apply(ds.train.features), ds.train.targets, ds.train.timestamps),
        validation=SampleSet(
            stats.apply(ds.validation.features), ds.validation.targets, ds.validation.timestamps
        ),
        split_seed=ds.split_seed,
        train_fraction=ds.train_fraction,
        stats=stats,
    )
    return out, stats


# ---------------------------------------------------------------------------
# Dataset file
# ---------------------------------------------------------------------------

COLUMNS = FEATURE_ORDER + (TARGET, "timestamp", "split")


def meta_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_dataset(ds, path, standardize_stats=None):
    """Write a split to the CSV dataset file plus its ``.meta.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for label, part in (("train", ds.train), ("validation", ds.validation)):
            for x, y, ts in zip(part.features, part.targets, part.timestamps):
                w.writerow([repr(float(v)) for v in x] + [repr(float(y)), ts, label])
    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "feature_order": list(FEATURE_ORDER),
        "target": TARGET,
        "split_seed": ds.split_seed,
        "train_fraction": ds.train_fraction,
        "n_train": len(ds.train),
        "n_validation": len(ds.validation),
        "standardization": standardize_stats.to_dict() if standardize_stats is not None else None,
    }
    meta_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return path


def read_dataset(path):
    """Read a dataset file written by :func:`write_dataset` back into a split.

    The returned split holds raw (unstandardized) features; ``stats`` carries
    the stored statistics when the dataset was built with standardization.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = tuple(next(r, ()))
        if header != COLUMNS:
            raise ValidationError(f"{path}: header {header} does not match {COLUMNS}")
        parts = {"train": ([], [], []), "validation": ([], [], [])}
        for lineno, row in enumerate(r, start=2):
            if len(row) != len(COLUMNS) or row[-1] not in parts:
                raise ValidationError(f"{path}:{lineno}: malformed row")
            try:
                feats = [float(v) for v in row[:N_FEATURES]]
                target = float(row[N_FEATURES])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric value") from None
            bucket = parts[row[-1]]
            bucket[0].append(feats)
            bucket[1].append(target)
            bucket[2].append(row[N_FEATURES + 1])

    def build(bucket):
        if not bucket[0]:
            return SampleSet.empty()
        return SampleSet(np.array(bucket[0]), np.array(bucket[1]), np.array(bucket[2], dtype=object))

    meta = {}
    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text(encoding="utf-8"))
        if tuple(meta.get("feature_order", FEATURE_ORDER)) != FEATURE_ORDER:
            raise ValidationError(f"{mp}: feature order {meta['feature_order']} is not {FEATURE_ORDER}")
    stats = meta.get("standardization")
    return DatasetSplit(
        train=build(parts["train"]),
        validation=build(parts["validation"]),
        split_seed=meta.get("split_seed", 0),
        train_fraction=meta.get("train_fraction", 0.8),
        stats=Standardization.from_dict(stats) if stats else None,
    )


def build_dataset(data_root, out, train_fraction=0.8, seed=0, standardize_features=False):
    """``dataset build``: records under ``data_root`` -> dataset file at ``out``."""
    samples, skipped = load_records(data_root)
    ds = split(samples, train_fraction, seed)
    stats = fit_standardization(ds.train.features) if standardize_features else None
    write_dataset(ds, out, stats)
    return ds, stats, skipped
