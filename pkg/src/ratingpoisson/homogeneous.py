"""Homogeneous Poisson model of rating counts under a Zipf ratio constraint.

Two formulations are covered. In the plain one a single mean ``lam`` must make
``P(k) / P(j)`` equal the Zipf ratio for every pair, which has a closed-form
solution per pair; the pairs disagree with each other. In the counting-process
formulation ``P(N(t_k) = k) = c * k`` the residual ``x - k ln x + ln k! + ln k``
(with ``x = lam * t_k``) has a strictly positive minimum, so no real solution
exists.
"""

import enum
import math
from dataclasses import dataclass
from typing import List, Tuple

from .errors import DomainError
from .numerics import Bracket, log_factorial, minimize_scalar


class ZipfDirection(str, enum.Enum):
    """Which way the Zipf ratio points.

    ``PAPER`` imposes ``P(k) / P(j) = k / j``; ``CLASSICAL`` imposes ``j / k``.
    """

    PAPER = "paper"
    CLASSICAL = "classical"


class Verdict(str, enum.Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"


DEFAULT_CONSISTENCY_TOL = 1e-9


def zipf_log_ratio(k: int, j: int, direction=ZipfDirection.PAPER) -> float:
    """Target value of ``ln(P(k) / P(j))``."""
    direction = ZipfDirection(direction)
    d = math.log(k) - math.log(j)
    return d if direction is ZipfDirection.PAPER else -d


@dataclass(frozen=True, order=True)
class PairEquation:
    k: int
    j: int

    def __post_init__(self):
        if not (isinstance(self.k, int) and isinstance(self.j, int)):
            raise DomainError(f"pair indices must be integers, got ({self.k!r}, {self.j!r})")
        if not self.k > self.j >= 1:
            raise DomainError(f"pair requires k > j >= 1, got (k={self.k}, j={self.j})")


@dataclass(frozen=True)
class ConsistencyReport:
    pair_lambdas: Tuple[Tuple[PairEquation, float], ...]
    spread: float
    verdict: Verdict

    def to_dict(self):
        return {
            "pair_lambdas": [{"k": p.k, "j": p.j, "lambda": lam} for p, lam in self.pair_lambdas],
            "spread": self.spread,
            "verdict": self.verdict.value,
        }


@dataclass(frozen=True)
class FeasibilityCertificate:
    k: int
    x_star: float
    f_min: float
    feasible: bool

    def to_dict(self):
        return {"k": self.k, "x_star": self.x_star, "f_min": self.f_min, "feasible": self.feasible}


def pmf_poisson(k: int, mu: float) -> float:
    """Poisson probability of ``k`` events at mean ``mu``."""
    if k < 0 or int(k) != k:
        raise DomainError(f"k must be a nonnegative integer, got {k!r}")
    if not mu >= 0 or not math.isfinite(mu):
        raise DomainError(f"mu must be finite and nonnegative, got {mu!r}")
    if mu == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(mu) - log_factorial(int(k)) - mu)


def lambda_closed_form(pair: PairEquation, direction=ZipfDirection.PAPER) -> float:
    """Mean at which the pmf ratio for ``pair`` matches the Zipf ratio.

    From ``lam**(k-j) * j! / k! = k / j`` (paper direction):
    ``lam = exp((ln k! - ln j! + ln k - ln j) / (k - j))``.
    """
    if not isinstance(pair, PairEquation):
        pair = PairEquation(*pair)
    k, j = pair.k, pair.j
    target = zipf_log_ratio(k, j, direction)
    lam = math.exp((log_factorial(k) - log_factorial(j) + target) / (k - j))

    achieved = (k - j) * math.log(lam) - log_factorial(k) + log_factorial(j)
    if abs(achieved - target) > 1e-9 * max(1.0, abs(target)):
        raise ArithmeticError(f"closed form failed its own ratio check for {pair}")
    return lam


def homogeneity_consistency_report(
    k_max: int,
    consistency_tol: float = DEFAULT_CONSISTENCY_TOL,
    direction=ZipfDirection.PAPER,
) -> ConsistencyReport:
    """Evaluate the closed-form mean for every pair ``1 <= j < k <= k_max``."""
    if k_max < 2:
        raise DomainError(f"k_max must be at least 2 to form a pair, got {k_max}")
    pairs = [PairEquation(k, j) for k in range(2, k_max + 1) for j in range(1, k)]
    entries = tuple((p, lambda_closed_form(p, direction)) for p in pairs)
    lams = [lam for _, lam in entries]
    spread = max(lams) - min(lams)
    verdict = Verdict.INCONSISTENT if spread > consistency_tol else Verdict.CONSISTENT
    return ConsistencyReport(entries, spread, verdict)


def counting_residual(x: float, k: int, c: float = 1.0, direction=ZipfDirection.PAPER) -> float:
    """``-ln P(N = k) + ln(target)`` at mean ``x``, target ``c*k`` (or ``c/k``).

    Zero exactly where the counting-form equation holds.
    """
    zipf_term = math.log(k) if ZipfDirection(direction) is ZipfDirection.PAPER else -math.log(k)
    return x - k * math.log(x) + log_factorial(k) + zipf_term + math.log(c)


def counting_form_feasibility(
    k: int, c: float = 1.0, direction=ZipfDirection.PAPER
) -> FeasibilityCertificate:
    """Certify whether ``P(N(t_k) = k) = c*k`` has a real solution ``x = lam*t_k > 0``.

    The residual is convex in ``x`` with its minimum at ``x = k``; the analytic
    minimum is cross-checked by golden-section search on ``[k/4, 4k]``.
    """
    if k < 1 or int(k) != k:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    if not c > 0:
        raise DomainError(f"Zipf constant c must be positive, got {c!r}")
    k = int(k)
    x_star = float(k)
    f_min = counting_residual(x_star, k, c, direction)

    numeric = minimize_scalar(
        lambda x: counting_residual(x, k, c, direction), Bracket(k / 4.0, 4.0 * k), tol=1e-9 * k
    )
    if numeric.fx < f_min - 1e-9 * max(1.0, abs(f_min)):
        raise ArithmeticError(f"numeric minimum {numeric.fx} undercuts analytic {f_min} at k={k}")
    return FeasibilityCertificate(k=k, x_star=x_star, f_min=f_min, feasible=f_min <= 0.0)


def feasibility_table(k_max: int, c: float = 1.0, direction=ZipfDirection.PAPER) -> List[FeasibilityCertificate]:
    return [counting_form_feasibility(k, c, direction) for k in range(1, k_max + 1)]
