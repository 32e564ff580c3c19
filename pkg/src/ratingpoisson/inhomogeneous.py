"""Zipf-constrained equation system for an inhomogeneous Poisson process.

Count index ``k`` has its own rate ``lam_k`` and observation time ``t_k``; the
count ``N(t_k)`` is Poisson with mean ``x_k = lam_k * t_k``. Each pair
``(k, j)`` asks ``P(N(t_k) = k) / P(N(t_j) = j)`` to equal the Zipf ratio, and
times must be increasing in ``k``.

Two residual forms are available:

* ``DERIVED_SUM`` -- the logarithm of the ratio equation,
  ``[log_pmf(k) - log_pmf(j)] - ln(k/j)``.
* ``PAPER_PRODUCT`` -- the grouped-product expansion
  ``(x_j - x_k) * (k ln lam_k - j ln lam_j + k ln t_k - j ln t_j + ln j! - ln k!) - ln(k/j)``.

Both depend on ``(lam, t)`` only through the products ``x``, which is the
gauge freedom exposed by :func:`gauge_transform`.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DomainError, GaugeOrderingError
from .homogeneous import PairEquation, ZipfDirection, zipf_log_ratio
from .numerics import log_factorial

logger = logging.getLogger(__name__)

PRODUCT_FLOOR = 1e-300
DEFAULT_ORDERING_MARGIN = 1e-6


class PairStrategy(str, enum.Enum):
    CONSECUTIVE = "consecutive"
    ALL_PAIRS = "all-pairs"
    ANCHOR_TO_ONE = "anchor-to-one"


class ResidualForm(str, enum.Enum):
    DERIVED_SUM = "derived-sum"
    PAPER_PRODUCT = "paper-product"


@dataclass(frozen=True)
class EquationSystem:
    K: int
    pairs: Tuple[PairEquation, ...]
    form: ResidualForm = ResidualForm.DERIVED_SUM
    zipf_direction: ZipfDirection = ZipfDirection.PAPER
    # Stored for completeness; ratio equations cancel it.
    c: float = 1.0
    t0: float = 0.0
    ordering_margin: float = DEFAULT_ORDERING_MARGIN

    def __post_init__(self):
        object.__setattr__(self, "form", ResidualForm(self.form))
        object.__setattr__(self, "zipf_direction", ZipfDirection(self.zipf_direction))
        pairs = tuple(p if isinstance(p, PairEquation) else PairEquation(*p) for p in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if self.K < 1:
            raise DomainError(f"K must be positive, got {self.K}")
        if not pairs:
            raise DomainError("an equation system needs at least one pair")
        if len(set(pairs)) != len(pairs):
            raise DomainError("duplicate pairs in equation system")
        for p in pairs:
            if p.k > self.K:
                raise DomainError(f"pair {p} exceeds K={self.K}")
        if not self.c > 0:
            raise DomainError(f"c must be positive, got {self.c}")
        if not self.ordering_margin > 0:
            raise DomainError(f"ordering_margin must be positive, got {self.ordering_margin}")

    @property
    def targets(self) -> np.ndarray:
        return np.array([zipf_log_ratio(p.k, p.j, self.zipf_direction) for p in self.pairs])

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "pairs": [[p.k, p.j] for p in self.pairs],
            "form": self.form.value,
            "zipf_direction": self.zipf_direction.value,
            "c": self.c,
            "t0": self.t0,
            "ordering_margin": self.ordering_margin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EquationSystem":
        return cls(
            K=int(d["K"]),
            pairs=tuple(PairEquation(int(k), int(j)) for k, j in d["pairs"]),
            form=ResidualForm(d["form"]),
            zipf_direction=ZipfDirection(d["zipf_direction"]),
            c=float(d["c"]),
            t0=float(d["t0"]),
            ordering_margin=float(d["ordering_margin"]),
        )


def build_system(
    K: int,
    strategy=PairStrategy.CONSECUTIVE,
    form=ResidualForm.DERIVED_SUM,
    zipf_direction=ZipfDirection.PAPER,
    c: float = 1.0,
    ordering_margin: float = DEFAULT_ORDERING_MARGIN,
    t0: float = 0.0,
) -> EquationSystem:
    """Assemble the pair equations for count indices ``1..K``."""
    if K < 2:
        raise DomainError(f"K must be at least 2, got {K}")
    strategy = PairStrategy(strategy)
    if strategy is PairStrategy.CONSECUTIVE:
        pairs = [(k, k - 1) for k in range(2, K + 1)]
    elif strategy is PairStrategy.ALL_PAIRS:
        pairs = [(k, j) for k in range(2, K + 1) for j in range(1, k)]
    else:
        pairs = [(k, 1) for k in range(2, K + 1)]
    return EquationSystem(
        K=K,
        pairs=tuple(PairEquation(k, j) for k, j in pairs),
        form=form,
        zipf_direction=zipf_direction,
        c=c,
        t0=t0,
        ordering_margin=ordering_margin,
    )


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Per-count rates ``lambdas[k-1]`` and observation times ``times[k-1]``.

    Positivity is enforced on construction; ordering is a constraint reported
    by :func:`check_constraints` rather than a construction error.
    """

    lambdas: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        lam, t = _frozen(self.lambdas), _frozen(self.times)
        if lam.ndim != 1 or lam.shape != t.shape or lam.size == 0:
            raise DomainError("lambdas and times must be nonempty 1-D sequences of equal length")
        if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(t)):
            raise DomainError("lambdas and times must be finite")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "times", t)

    @property
    def K(self) -> int:
        return self.lambdas.size

    @property
    def products(self) -> np.ndarray:
        return self.lambdas * self.times

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas.tolist(), "times": self.times.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(d["lambdas"], d["times"])


@dataclass(frozen=True)
class ResidualVector:
    values: np.ndarray
    inf_norm: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        inf = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        object.__setattr__(self, "inf_norm", inf)

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "inf_norm": self.inf_norm}


@dataclass(frozen=True)
class Violation:
    """One breached constraint.

    ``kind`` is ``"ordering"`` (index pair ``(k, k-1)``), ``"lambda"`` or
    ``"time"`` (positivity, index ``(k,)``). ``slack`` is negative.
    """

    kind: str
    index: Tuple[int, ...]
    slack: float


def _clamped_log(x: float) -> float:
    if x < PRODUCT_FLOOR:
        logger.warning("mean %r clamped to %g before taking its log", x, PRODUCT_FLOOR)
        x = PRODUCT_FLOOR
    return math.log(x)


def _check_index(params: ModelParams, k: int):
    if not 1 <= k <= params.K:
        raise DomainError(f"count index {k} outside 1..{params.K}")


def log_pmf(params: ModelParams, k: int) -> float:
    """``ln P(N(t_k) = k) = k ln(lam_k t_k) - ln k! - lam_k t_k``."""
    _check_index(params, k)
    _require_positive(params, k)
    x = float(params.lambdas[k - 1] * params.times[k - 1])
    return k * _clamped_log(x) - log_factorial(k) - x


def _require_positive(params: ModelParams, *indices):
    for k in indices:
        if params.lambdas[k - 1] <= 0 or params.times[k - 1] <= 0:
            raise DomainError(
                f"lam_{k}={params.lambdas[k - 1]} and t_{k}={params.times[k - 1]} must be positive"
            )


def residual(params: ModelParams, pair: PairEquation, system: EquationSystem) -> float:
    k, j = pair.k, pair.j
    _check_index(params, k)
    _check_index(params, j)
    _require_positive(params, k, j)
    target = zipf_log_ratio(k, j, system.zipf_direction)
    if system.form is ResidualForm.DERIVED_SUM:
        return (log_pmf(params, k) - log_pmf(params, j)) - target

    lam_k, lam_j = float(params.lambdas[k - 1]), float(params.lambdas[j - 1])
    t_k, t_j = float(params.times[k - 1]), float(params.times[j - 1])
    grouped = (
        k * math.log(lam_k)
        - j * math.log(lam_j)
        + k * math.log(t_k)
        - j * math.log(t_j)
        + log_factorial(j)
        - log_factorial(k)
    )
    return (lam_j * t_j - lam_k * t_k) * grouped - target


def residual_vector(params: ModelParams, system: EquationSystem) -> ResidualVector:
    return ResidualVector(np.array([residual(params, p, system) for p in system.pairs]))


def _pair_arrays(system: EquationSystem):
    ks = np.array([p.k for p in system.pairs])
    js = np.array([p.j for p in system.pairs])
    return ks, js


def log_factorials(n: int) -> np.ndarray:
    """``ln k!`` for ``k = 0..n``."""
    return np.array([log_factorial(k) for k in range(n + 1)])


def residuals_from_products(x: np.ndarray, system: EquationSystem) -> np.ndarray:
    """Vectorized residuals as a function of the products ``x_k = lam_k * t_k``.

    Matches :func:`residual_vector` for any params with these products.
    """
    x = np.maximum(np.asarray(x, dtype=float), PRODUCT_FLOOR)
    ks, js = _pair_arrays(system)
    lf = log_factorials(system.K)
    logx = np.log(x)
    targets = system.targets
    xk, xj = x[ks - 1], x[js - 1]
    if system.form is ResidualForm.DERIVED_SUM:
        lp_k = ks * logx[ks - 1] - lf[ks] - xk
        lp_j = js * logx[js - 1] - lf[js] - xj
        return lp_k - lp_j - targets
    grouped = ks * logx[ks - 1] - js * logx[js - 1] + lf[js] - lf[ks]
    return (xj - xk) * grouped - targets


def check_constraints(params: ModelParams, system: EquationSystem) -> List[Violation]:
    """Positivity of every rate and time, and ``t_k - t_{k-1} >= margin``."""
    out = []
    for k in range(1, params.K + 1):
        if params.lambdas[k - 1] <= 0:
            out.append(Violation("lambda", (k,), float(params.lambdas[k - 1])))
        if params.times[k - 1] <= 0:
            out.append(Violation("time", (k,), float(params.times[k - 1])))
    eps = system.ordering_margin
    for k in range(2, params.K + 1):
        slack = float(params.times[k - 1] - params.times[k - 2]) - eps
        if slack < 0:
            out.append(Violation("ordering", (k, k - 1), slack))
    return out


def gauge_transform(params: ModelParams, scales: Sequence[float], system: EquationSystem = None) -> ModelParams:
    """Rescale ``t_k -> s_k t_k`` and ``lam_k -> lam_k / s_k``; products are unchanged.

    Raises :class:`GaugeOrderingError` if the new times are not strictly
    increasing (by ``system.ordering_margin`` when a system is given).
    """
    s = np.asarray(scales, dtype=float)
    if s.shape != params.lambdas.shape:
        raise DomainError(f"need {params.K} scales, got {s.size}")
    if not np.all(s > 0) or not np.all(np.isfinite(s)):
        raise DomainError("gauge scales must be positive and finite")
    t_new = params.times * s
    margin = system.ordering_margin if system is not None else 0.0
    gaps = np.diff(t_new)
    if np.any(gaps <= 0) or np.any(gaps < margin):
        bad = int(np.argmin(gaps)) + 2
        raise GaugeOrderingError(f"transformed times break ordering at k={bad}: {t_new.tolist()}")
    return ModelParams(params.lambdas / s, t_new)
