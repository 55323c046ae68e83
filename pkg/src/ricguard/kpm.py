"""Per-UE KPM telemetry records, feature scaling, and dataset handling.

A record is one UE's measurements for one reporting second. The record
carries eight fields: the timestamp and UE id identify the stream, the
remaining six are the model's measurement features, always handled in this
fixed order:

    UEThpUl, PrbUsedUl, UEThpDl, PrbUsedDl, TotNbrUl_per_sec, TotNbrDl_per_sec

Datasets round-trip through CSV with exactly those column names (plus
Timestamp and UEid).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

FEATURE_NAMES = (
    "UEThpUl",
    "PrbUsedUl",
    "UEThpDl",
    "PrbUsedDl",
    "TotNbrUl_per_sec",
    "TotNbrDl_per_sec",
)
FEATURE_COUNT = len(FEATURE_NAMES)
CSV_COLUMNS = ("Timestamp", "UEid") + FEATURE_NAMES


class ScalerError(ValueError):
    """Raised when scaler fitting preconditions fail."""


@dataclass(frozen=True)
class KpmRecord:
    """One UE's KPM row for one reporting second.

    ``timestamp`` is milliseconds since scenario start (simulated clock).
    Measurement features are stored as floats; all must be non-negative.
    """

    timestamp: int
    ue_id: int
    ue_thp_ul: float
    prb_used_ul: float
    ue_thp_dl: float
    prb_used_dl: float
    tot_nbr_ul_per_sec: float
    tot_nbr_dl_per_sec: float

    def __post_init__(self) -> None:
        if min(self.feature_values()) < 0:
            raise ValueError(f"negative KPM feature in record (ue={self.ue_id}, t={self.timestamp})")

    def feature_values(self) -> tuple[float, ...]:
        return (
            self.ue_thp_ul,
            self.prb_used_ul,
            self.ue_thp_dl,
            self.prb_used_dl,
            self.tot_nbr_ul_per_sec,
            self.tot_nbr_dl_per_sec,
        )

    def features(self) -> np.ndarray:
        return np.array(self.feature_values(), dtype=np.float64)

    @classmethod
    def from_features(cls, timestamp: int, ue_id: int, values: Sequence[float]) -> "KpmRecord":
        if len(values) != FEATURE_COUNT:
            raise ValueError(f"expected {FEATURE_COUNT} features, got {len(values)}")
        return cls(timestamp, ue_id, *(float(v) for v in values))


def records_to_matrix(records: Sequence[KpmRecord]) -> np.ndarray:
    """Stack measurement features into an (n, 6) float64 matrix."""
    out = np.empty((len(records), FEATURE_COUNT), dtype=np.float64)
    for i, rec in enumerate(records):
        out[i] = rec.feature_values()
    return out


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature standardisation fitted on benign training records.

    Uses the population convention (ddof=0). Timestamp and UE id are stream
    identifiers, not scaled model inputs.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        if self.mean.shape != (FEATURE_COUNT,) or self.std.shape != (FEATURE_COUNT,):
            raise ScalerError("scaler statistics must have one entry per measurement feature")
        if np.any(self.std <= 0):
            raise ScalerError("scaler standard deviations must be positive")

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.std

    def denormalize(self, normalized: np.ndarray) -> np.ndarray:
        return normalized * self.std + self.mean


def fit_scaler(records: Sequence[KpmRecord]) -> FeatureScaler:
    """Fit per-feature mean/std; rejects constant features by name."""
    if len(records) < 2:
        raise ScalerError("scaler fitting requires at least 2 records")
    matrix = records_to_matrix(records)
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)  # population convention
    for name, sd in zip(FEATURE_NAMES, std):
        if sd <= 0:
            raise ScalerError(f"feature {name} is constant in the training data")
    return FeatureScaler(mean=mean, std=std)


def write_dataset_csv(records: Iterable[KpmRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([rec.timestamp, rec.ue_id, *(repr(v) for v in rec.feature_values())])


def read_dataset_csv(path) -> list[KpmRecord]:
    records: list[KpmRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_COLUMNS:
            raise ValueError(f"unexpected dataset columns {header!r}")
        for row in reader:
            records.append(
                KpmRecord.from_features(int(row[0]), int(row[1]), [float(v) for v in row[2:]])
            )
    return records


def build_windows(
    records: Sequence[KpmRecord],
    scaler: FeatureScaler,
    sequence_length: int = 10,
    tick_ms: int = 1000,
) -> tuple[np.ndarray, np.ndarray]:
    """Build normalized next-step windows from a record stream.

    Groups by UE, orders by timestamp, and slides a window over each run of
    consecutive (tick-spaced) records. Returns (inputs, targets) with shapes
    (n, sequence_length, 6) and (n, 6); the target is the record following
    the window.
    """
    by_ue: dict[int, list[KpmRecord]] = {}
    for rec in records:
        by_ue.setdefault(rec.ue_id, []).append(rec)

    inputs: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    for ue_id in sorted(by_ue):
        stream = sorted(by_ue[ue_id], key=lambda r: r.timestamp)
        feats = scaler.normalize(records_to_matrix(stream))
        times = np.array([r.timestamp for r in stream], dtype=np.int64)
        for end in range(sequence_length, len(stream)):
            start = end - sequence_length
            span = times[start : end + 1]
            if np.any(np.diff(span) != tick_ms):
                continue  # gap in the stream; windows must be consecutive
            inputs.append(feats[start:end])
            targets.append(feats[end])
    if not inputs:
        return (
            np.empty((0, sequence_length, FEATURE_COUNT)),
            np.empty((0, FEATURE_COUNT)),
        )
    return np.stack(inputs), np.stack(targets)
