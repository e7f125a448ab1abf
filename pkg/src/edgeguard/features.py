"""Flow records, CSV ingestion and two-stage feature selection.

The canonical schema is the eight per-flow features below. The wide format
(``WideFlowRecord``) only exists to exercise :func:`select_features` on
synthetic inputs with many columns.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, ParameterError, ParseError, SchemaError

FEATURES = (
    "pkts_total",
    "bytes_total",
    "duration",
    "pkt_rate",
    "pkts_in",
    "pkts_out",
    "bytes_per_pkt",
    "flags",
)

LABELS = ("benign", "attack")
FAMILIES = ("DoS", "DDoS", "reconnaissance", "information-theft", "keylogging")


@dataclass(frozen=True)
class FlowRecord:
    pkts_total: float = 0.0
    bytes_total: float = 0.0
    duration: float = 0.0
    pkt_rate: float = 0.0
    pkts_in: float = 0.0
    pkts_out: float = 0.0
    bytes_per_pkt: float = 0.0
    flags: int = 0
    label: str | None = None
    family: str | None = None
    device: str | None = None

    def __post_init__(self):
        for name in FEATURES:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            if value < 0:
                raise DomainError(f"{name} must be >= 0, got {value!r}")
        if self.flags != int(self.flags):
            raise DomainError(f"flags must be an integer bitmask, got {self.flags!r}")
        if self.pkts_in > self.pkts_total or self.pkts_out > self.pkts_total:
            raise DomainError(
                f"pkts_total ({self.pkts_total}) smaller than pkts_in/pkts_out "
                f"({self.pkts_in}/{self.pkts_out})"
            )
        if self.duration == 0 and self.pkt_rate != 0:
            # zero-length flows carry no rate information
            object.__setattr__(self, "pkt_rate", 0.0)
        if self.label is not None and self.label not in LABELS:
            raise DomainError(f"label must be one of {LABELS}, got {self.label!r}")

    def vector(self, schema: Sequence[str] = FEATURES) -> np.ndarray:
        return np.array([float(getattr(self, name)) for name in schema])

    @property
    def is_attack(self) -> bool:
        return self.label == "attack"


def parse_flow_csv(text, schema: Sequence[str] = FEATURES) -> list[FlowRecord]:
    """Parse CSV text (or a text stream) into flow records.

    Columns are mapped by header name; ``label``, ``family`` and ``device``
    columns are optional. Line numbers in errors are 1-based and count the
    header as line 1.
    """
    unknown = [name for name in schema if name not in FEATURES]
    if unknown:
        raise SchemaError(f"unknown schema column(s): {', '.join(unknown)}")
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input, expected a header line", line=1) from None
    header = [h.strip() for h in header]
    index = {name: i for i, name in enumerate(header)}
    for name in schema:
        if name not in index:
            raise SchemaError(f"missing schema column {name!r}")

    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(row)}", line=lineno)
        kwargs = {}
        for name in schema:
            cell = row[index[name]].strip()
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r} in column {name!r}", line=lineno) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {cell!r} in column {name!r}", line=lineno)
            if value < 0:
                raise DomainError(f"line {lineno}: negative value {value!r} in column {name!r}")
            kwargs[name] = int(value) if name == "flags" else value
        for extra in ("label", "family", "device"):
            if extra in index:
                cell = row[index[extra]].strip()
                kwargs[extra] = cell or None
        try:
            records.append(FlowRecord(**kwargs))
        except DomainError as exc:
            raise DomainError(f"line {lineno}: {exc}") from None
    return records


def read_flow_csv(path, schema: Sequence[str] = FEATURES) -> list[FlowRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_flow_csv(fh, schema)


def format_flow_csv(records: Iterable[FlowRecord], schema: Sequence[str] = FEATURES) -> str:
    records = list(records)
    extras = [name for name in ("label", "family", "device") if any(getattr(r, name) for r in records)]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(schema) + extras)
    for rec in records:
        row = [repr(float(getattr(rec, n))) if n != "flags" else str(int(rec.flags)) for n in schema]
        row += [getattr(rec, n) or "" for n in extras]
        writer.writerow(row)
    return out.getvalue()


def write_flow_csv(path, records: Iterable[FlowRecord], schema: Sequence[str] = FEATURES) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(format_flow_csv(records, schema))


def records_to_matrix(records: Sequence[FlowRecord], schema: Sequence[str] = FEATURES) -> np.ndarray:
    if not records:
        return np.zeros((0, len(schema)))
    return np.array([[float(getattr(r, n)) for n in schema] for r in records])


def labels_of(records: Sequence[FlowRecord]) -> np.ndarray:
    """1 for attack, 0 for benign. Unlabelled records count as benign."""
    return np.array([1 if r.label == "attack" else 0 for r in records], dtype=int)


# -- feature selection -------------------------------------------------------


@dataclass(frozen=True)
class WideFlowRecord:
    names: tuple[str, ...]
    values: tuple[float, ...]
    label: str

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise SchemaError("feature names must be unique")
        if len(self.names) != len(self.values):
            raise DimensionError("names and values differ in length")


@dataclass(frozen=True)
class FeatureSelectionReport:
    dropped_by_correlation: tuple[str, ...]
    mi_scores: dict = field(hash=False)
    selected: tuple[str, ...]


def equal_frequency_bins(values, bins: int = 16) -> np.ndarray:
    """Map a continuous series onto at most ``bins`` equal-frequency bin ids.

    Tied values always land in the same bin.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values.astype(int)
    if bins < 1:
        raise ParameterError("bins must be >= 1")
    edges = np.quantile(values, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    return np.searchsorted(edges, values, side="right")


def mutual_information(x, y) -> float:
    """Plug-in estimate of I(X;Y) in bits for two discrete series."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError(f"series length mismatch: {x.shape} vs {y.shape}")
    n = x.size
    if n == 0:
        raise DimensionError("mutual information needs at least one observation")
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    joint = np.zeros((xi.max() + 1, yi.max() + 1))
    np.add.at(joint, (xi, yi), 1.0)
    joint /= n
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log2(joint[nz] / (px @ py)[nz])))
    return max(mi, 0.0)


def _pearson_or_zero(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def select_features(
    data: Sequence[WideFlowRecord],
    corr_threshold: float = 0.95,
    k: int = 8,
    bins: int = 16,
) -> FeatureSelectionReport:
    """Correlation filter followed by a mutual-information ranking.

    Of any over-correlated pair the later column is dropped. Survivors are
    ranked by MI with the label (descending, ties by name) and the top ``k``
    are returned.
    """
    if len(data) < 2:
        raise ParameterError("feature selection needs at least 2 records")
    if not 0 < corr_threshold <= 1:
        raise ParameterError("corr_threshold must lie in (0, 1]")
    names = data[0].names
    if any(r.names != names for r in data):
        raise SchemaError("all wide records must share one feature layout")
    X = np.array([r.values for r in data], dtype=float)
    y = np.array([1 if r.label == "attack" else 0 for r in data])

    kept: list[int] = []
    dropped: list[str] = []
    for j in range(X.shape[1]):
        if any(abs(_pearson_or_zero(X[:, i], X[:, j])) > corr_threshold for i in kept):
            dropped.append(names[j])
        else:
            kept.append(j)
    if k > len(kept):
        raise ParameterError(f"k={k} exceeds the {len(kept)} features surviving the correlation filter")

    mi = {names[j]: mutual_information(equal_frequency_bins(X[:, j], bins), y) for j in kept}
    ranked = sorted(mi, key=lambda name: (-round(mi[name], 12), name))
    return FeatureSelectionReport(tuple(dropped), mi, tuple(ranked[:k]))


