"""Event-stream simulation for piecewise-constant Poisson intensities and Zipf popularity.

Sampling is by thinning: candidates arrive at the dominating rate
``lam_max = max(rates)`` and each is kept with probability ``lam(t) / lam_max``.
"""

import csv
import io
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .dataset import CountDistribution, RatingEvent
from .errors import DomainError
from .solver import RNG_NAME, InhomogeneousSolution

# Upper bound on candidate arrivals drawn at once by the batched sampler.
_BATCH_CANDIDATES = 2_000_000


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class PiecewiseIntensity:
    """Rate ``rates[i]`` on ``[breakpoints[i-1], breakpoints[i])`` with an implicit 0 start."""

    breakpoints: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        r = np.array(self.rates, dtype=float)
        if b.ndim != 1 or b.size == 0 or b.shape != r.shape:
            raise DomainError("need one rate per breakpoint")
        if not np.all(np.isfinite(b)) or not np.all(np.isfinite(r)):
            raise DomainError("breakpoints and rates must be finite")
        if b[0] <= 0 or np.any(np.diff(b) <= 0):
            raise DomainError(f"breakpoints must be positive and strictly increasing: {b.tolist()}")
        if np.any(r < 0):
            raise DomainError(f"rates must be nonnegative: {r.tolist()}")
        b.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "rates", r)

    @classmethod
    def constant(cls, rate: float, horizon: float) -> "PiecewiseIntensity":
        return cls([horizon], [rate])

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def max_rate(self) -> float:
        return float(self.rates.max())

    def rate_at(self, t) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints, np.asarray(t, dtype=float), side="right")
        return self.rates[np.minimum(idx, self.rates.size - 1)]

    def cumulative(self, t) -> np.ndarray:
        """Integrated intensity ``int_0^t lam(s) ds`` (clipped to the horizon)."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.horizon)
        starts = np.concatenate([[0.0], self.breakpoints[:-1]])
        overlap = np.clip(t[..., None] - starts, 0.0, self.breakpoints - starts)
        return overlap @ self.rates

    def integral(self, a: float, b: float) -> float:
        return float(self.cumulative(b) - self.cumulative(a))

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "rates": self.rates.tolist()}


@dataclass(frozen=True)
class EventStream:
    times: np.ndarray
    seed: Optional[int]
    horizon: float

    def __len__(self):
        return int(self.times.size)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"])
        for t in self.times:
            w.writerow([repr(float(t))])
        return buf.getvalue()


def intensity_from_solution(solution: InhomogeneousSolution) -> PiecewiseIntensity:
    """Rate ``lam_k`` on ``(t_{k-1}, t_k]`` with ``t_0 = 0``."""
    if not solution.converged:
        raise DomainError("intensity_from_solution requires a converged solution")
    return PiecewiseIntensity(solution.params.times, solution.params.lambdas)


def mean_matching_intensity(solution: InhomogeneousSolution) -> PiecewiseIntensity:
    """Intensity whose integral up to ``t_k`` equals the fitted mean ``lam_k * t_k``.

    Only exists when the fitted means are nondecreasing in ``k``.
    """
    if not solution.converged:
        raise DomainError("mean_matching_intensity requires a converged solution")
    x = solution.params.products
    t = solution.params.times
    dx = np.diff(np.concatenate([[0.0], x]))
    if np.any(dx < 0):
        raise DomainError(f"fitted means are not nondecreasing: {x.tolist()}")
    dt = np.diff(np.concatenate([[0.0], t]))
    return PiecewiseIntensity(t, dx / dt)


def sample_events(intensity: PiecewiseIntensity, seed: int) -> EventStream:
    rng = make_rng(seed)
    T, lam_max = intensity.horizon, intensity.max_rate
    if lam_max == 0:
        return EventStream(np.empty(0), seed, T)
    n = rng.poisson(lam_max * T)
    cand = np.sort(rng.uniform(0.0, T, size=n))
    keep = rng.uniform(size=n) * lam_max < intensity.rate_at(cand)
    return EventStream(cand[keep], seed, T)


def segment_counts(
    intensity: PiecewiseIntensity,
    edges: Sequence[float],
    replications: int,
    seed: int,
) -> np.ndarray:
    """Counts per ``[edges[i], edges[i+1])`` for each of ``replications`` streams.

    Vectorized thinning over batches of replications; returns an integer array
    of shape ``(replications, len(edges) - 1)``.
    """
    if replications < 1:
        raise DomainError("replications must be at least 1")
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("edges must be strictly increasing with at least two entries")
    nseg = edges.size - 1
    out = np.zeros((replications, nseg), dtype=np.int64)
    T, lam_max = intensity.horizon, intensity.max_rate
    if lam_max == 0:
        return out
    rng = make_rng(seed)
    per_rep = max(lam_max * T, 1.0)
    batch = max(1, int(_BATCH_CANDIDATES // per_rep))
    for start in range(0, replications, batch):
        stop = min(start + batch, replications)
        n = rng.poisson(lam_max * T, size=stop - start)
        owner = np.repeat(np.arange(stop - start), n)
        cand = rng.uniform(0.0, T, size=owner.size)
        keep = rng.uniform(size=owner.size) * lam_max < intensity.rate_at(cand)
        cand, owner = cand[keep], owner[keep]
        seg = np.searchsorted(edges, cand, side="right") - 1
        inside = (seg >= 0) & (seg < nseg)
        flat = owner[inside] * nseg + seg[inside]
        out[start:stop] = np.bincount(flat, minlength=(stop - start) * nseg).reshape(-1, nseg)
    return out


def counts_to_pmf(counts: np.ndarray, k_max: int) -> CountDistribution:
    counts = np.asarray(counts)
    n = counts.size
    hist = np.bincount(np.minimum(counts, k_max + 1), minlength=k_max + 2)
    return CountDistribution(
        {k: float(hist[k]) / n for k in range(k_max + 1)},
        normalized=True,
        tail_mass=float(hist[k_max + 1]) / n,
    )


def empirical_count_pmf(
    intensity: PiecewiseIntensity, k_max: int, replications: int, seed: int
) -> CountDistribution:
    """Relative frequency of the total count on ``[0, T]`` for ``k = 0..k_max``."""
    if k_max < 0:
        raise DomainError("k_max must be nonnegative")
    totals = segment_counts(intensity, [0.0, intensity.horizon], replications, seed)[:, 0]
    return counts_to_pmf(totals, k_max)


def empirical_window_pmf(
    intensity: PiecewiseIntensity,
    ends: Sequence[float],
    ks: Sequence[int],
    replications: int,
    seed: int,
) -> np.ndarray:
    """Empirical ``P(N(ends[i]) = ks[i])`` for every window ``[0, ends[i]]``.

    All windows are read off the same replications.
    """
    ends = np.asarray(ends, dtype=float)
    edges = np.concatenate([[0.0], ends])
    cum = np.cumsum(segment_counts(intensity, edges, replications, seed), axis=1)
    return np.mean(cum == np.asarray(ks)[None, :], axis=0)


def zipf_weights(exponent: float, n_items: int) -> np.ndarray:
    """Normalized ``r ** -exponent`` over ranks ``1..n_items``."""
    if exponent < 0:
        raise DomainError(f"exponent must be nonnegative, got {exponent}")
    if n_items < 1:
        raise DomainError(f"n_items must be positive, got {n_items}")
    w = np.arange(1, n_items + 1, dtype=float) ** -float(exponent)
    return w / w.sum()


def zipf_ranks(exponent: float, n_items: int, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Draw 1-based ranks by inverse CDF over the normalized weights."""
    cdf = np.cumsum(zipf_weights(exponent, n_items))
    idx = np.searchsorted(cdf, rng.uniform(size=n_draws), side="right")
    return np.minimum(idx, n_items - 1) + 1


def sample_zipf(exponent: float, n_items: int, n_draws: int, seed: int) -> CountDistribution:
    """Per-item draw counts keyed by rank ``1..n_items`` (zeros included)."""
    if n_draws < 1:
        raise DomainError(f"n_draws must be positive, got {n_draws}")
    ranks = zipf_ranks(exponent, n_items, n_draws, make_rng(seed))
    hist = np.bincount(ranks, minlength=n_items + 1)
    return CountDistribution({r: float(hist[r]) for r in range(1, n_items + 1)})


def stream_to_ratings(
    stream: EventStream,
    n_items: int,
    exponent: float,
    n_users: int,
    seed: int,
    seconds_per_unit: float = 86400.0,
) -> List[RatingEvent]:
    """Attach synthetic ids to each event.

    Items follow the Zipf sampler, users are uniform on ``1..n_users``, rating
    values are uniform on ``1..5`` and timestamps are ``floor(time * seconds_per_unit)``.
    """
    if n_users < 1:
        raise DomainError("n_users must be positive")
    rng = make_rng(seed)
    n = len(stream)
    items = zipf_ranks(exponent, n_items, n, rng)
    users = rng.integers(1, n_users + 1, size=n)
    ratings = rng.integers(1, 6, size=n)
    stamps = np.floor(stream.times * seconds_per_unit).astype(np.int64)
    return [
        RatingEvent(str(int(u)), str(int(i)), float(r), int(s))
        for u, i, r, s in zip(users, items, ratings, stamps)
    ]


def rng_metadata() -> dict:
    return {"generator": RNG_NAME, "numpy": np.__version__}
