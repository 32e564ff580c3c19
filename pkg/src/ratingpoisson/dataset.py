"""Rating-file ingestion and empirical Zipf / power-law checks."""

import csv
import enum
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FitError, ParseError


@dataclass(frozen=True)
class RatingEvent:
    user_id: str
    item_id: str
    rating: float
    timestamp: int


@dataclass(frozen=True)
class RatingFormat:
    """Column names and delimiter of a ratings CSV (MovieLens defaults)."""

    user_column: str = "userId"
    item_column: str = "movieId"
    rating_column: str = "rating"
    timestamp_column: str = "timestamp"
    delimiter: str = ","

    @property
    def header(self) -> List[str]:
        return [self.user_column, self.item_column, self.rating_column, self.timestamp_column]


@dataclass
class ParseResult:
    events: List[RatingEvent]
    errors: List[Tuple[int, str]] = field(default_factory=list)


@dataclass
class CountDistribution:
    """Weights over nonnegative integers ``k``.

    ``tail_mass`` holds probability truncated above the largest stored key;
    when ``normalized`` the weights plus ``tail_mass`` sum to one.
    """

    counts: Dict[int, float]
    normalized: bool = False
    tail_mass: float = 0.0

    def __post_init__(self):
        for k, w in self.counts.items():
            if k < 0 or w < 0:
                raise ValueError(f"invalid entry {k}: {w}")

    def total(self) -> float:
        return float(sum(self.counts.values()))

    def normalize(self) -> "CountDistribution":
        s = self.total() + self.tail_mass
        if s <= 0:
            raise ValueError("cannot normalize an empty distribution")
        return CountDistribution(
            {k: w / s for k, w in self.counts.items()}, normalized=True, tail_mass=self.tail_mass / s
        )

    def get(self, k: int) -> float:
        return self.counts.get(k, 0.0)

    def to_dict(self) -> dict:
        return {
            "counts": {str(k): self.counts[k] for k in sorted(self.counts)},
            "normalized": self.normalized,
            "tail_mass": self.tail_mass,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "weight"])
        for k in sorted(self.counts):
            w.writerow([k, repr(float(self.counts[k]))])
        return buf.getvalue()


@dataclass(frozen=True)
class RatioCheck:
    k: int
    j: int
    empirical_ratio: float
    paper_predicted: float
    classical_predicted: float


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    intercept: float
    r_squared: float
    n_points: int


@dataclass(frozen=True)
class ZipfFitReport:
    exponent: Optional[float]
    intercept: Optional[float]
    r_squared: Optional[float]
    ratio_checks: Tuple[RatioCheck, ...] = ()
    diagnostics: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "ratio_checks": [vars(c) for c in self.ratio_checks],
            "diagnostics": list(self.diagnostics),
        }


class Axis(str, enum.Enum):
    ITEM = "item"
    USER = "user"


def _parse_row(row, idx, lineno) -> RatingEvent:
    if len(row) < len(idx) or any(i >= len(row) for i in idx):
        raise ValueError(f"line {lineno}: expected at least {max(idx) + 1} columns, got {len(row)}")
    user, item, rating, ts = (row[i].strip() for i in idx)
    if not user or not item:
        raise ValueError(f"line {lineno}: empty user or item id")
    try:
        r = float(rating)
    except ValueError:
        raise ValueError(f"line {lineno}: non-numeric rating {rating!r}") from None
    if not math.isfinite(r):
        raise ValueError(f"line {lineno}: non-finite rating {rating!r}")
    try:
        t = int(ts)
    except ValueError:
        raise ValueError(f"line {lineno}: non-integer timestamp {ts!r}") from None
    if t < 0:
        raise ValueError(f"line {lineno}: negative timestamp {t}")
    return RatingEvent(user, item, r, t)


def parse_ratings(lines: Iterable[str], fmt: RatingFormat = RatingFormat(), strict: bool = False) -> ParseResult:
    """Parse a ratings CSV with a header line.

    Malformed rows are collected in ``errors`` as ``(line_number, message)``;
    with ``strict=True`` the first one raises :class:`ParseError` instead.
    Line numbers are 1-based and count the header.
    """
    it = iter(lines)
    header_line = next(it, None)
    if header_line is None:
        raise ParseError("empty input: header line missing", 1)
    header = [h.strip() for h in header_line.rstrip("\r\n").split(fmt.delimiter)]
    missing = [c for c in fmt.header if c not in header]
    if missing:
        raise ParseError(f"line 1: header lacks columns {missing}", 1)
    idx = [header.index(c) for c in fmt.header]

    result = ParseResult(events=[])
    for lineno, line in enumerate(it, start=2):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        try:
            result.events.append(_parse_row(line.split(fmt.delimiter), idx, lineno))
        except ValueError as e:
            if strict:
                raise ParseError(str(e), lineno) from None
            result.errors.append((lineno, str(e)))
    return result


def format_ratings(events: Sequence[RatingEvent], fmt: RatingFormat = RatingFormat()) -> List[str]:
    """Inverse of :func:`parse_ratings` (``repr`` keeps ratings lossless)."""
    d = fmt.delimiter
    out = [d.join(fmt.header)]
    for e in events:
        out.append(d.join([e.user_id, e.item_id, repr(float(e.rating)), str(e.timestamp)]))
    return out


def entity_counts(events: Iterable[RatingEvent], axis=Axis.ITEM) -> Counter:
    """Number of events per item (or per user)."""
    axis = Axis(axis)
    key = (lambda e: e.item_id) if axis is Axis.ITEM else (lambda e: e.user_id)
    return Counter(key(e) for e in events)


def popularity_counts(events: Iterable[RatingEvent], axis=Axis.ITEM) -> CountDistribution:
    """Histogram of per-entity totals: ``k -> number of entities with k events``."""
    hist = Counter(entity_counts(events, axis).values())
    return CountDistribution({k: float(n) for k, n in sorted(hist.items())})


def rank_frequency(per_entity: Dict[object, float]) -> CountDistribution:
    """Re-key per-entity counts by popularity rank (1 = most frequent)."""
    vals = sorted((float(v) for v in per_entity.values()), reverse=True)
    return CountDistribution({r: v for r, v in enumerate(vals, start=1)})


def zipf_ratio_test(dist: CountDistribution, pairs: Sequence[Tuple[int, int]]) -> ZipfFitReport:
    """Empirical ``P(k)/P(j)`` next to ``k/j`` and ``j/k`` for each pair."""
    checks, diags = [], []
    for k, j in pairs:
        if not k > j:
            raise ValueError(f"ratio pair needs k > j, got ({k}, {j})")
        wk, wj = dist.get(k), dist.get(j)
        if wk <= 0 or wj <= 0:
            diags.append(f"pair ({k}, {j}) skipped: zero weight at k={k if wk <= 0 else j}")
            continue
        checks.append(RatioCheck(k, j, wk / wj, k / j, j / k))
    return ZipfFitReport(None, None, None, tuple(checks), tuple(diags))


def fit_power_law_exponent(dist: CountDistribution, k_min: int = 1) -> PowerLawFit:
    """Ordinary least squares of ``ln(weight)`` on ``ln(k)`` over ``k >= k_min``."""
    pts = sorted((k, w) for k, w in dist.counts.items() if k >= max(k_min, 1) and w > 0)
    if len(pts) < 3:
        raise FitError(f"need at least 3 positive-weight points with k >= {k_min}, got {len(pts)}")
    lx = np.log([k for k, _ in pts])
    ly = np.log([w for _, w in pts])
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), len(pts))


def zipf_report(dist: CountDistribution, pairs: Sequence[Tuple[int, int]], k_min: int = 1) -> ZipfFitReport:
    ratio = zipf_ratio_test(dist, pairs)
    diags = list(ratio.diagnostics)
    try:
        fit = fit_power_law_exponent(dist, k_min)
        exponent, intercept, r2 = fit.exponent, fit.intercept, fit.r_squared
    except FitError as e:
        exponent = intercept = r2 = None
        diags.append(str(e))
    return ZipfFitReport(exponent, intercept, r2, ratio.ratio_checks, tuple(diags))
