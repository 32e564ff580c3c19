"""Scalar numerical kernels: log-factorial, bracketed roots, golden-section search."""

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import BracketError, DomainError, EvaluationError

DEFAULT_TOL = 1e-12

# Exact summation below this index, log-gamma at and above.
_LGAMMA_SWITCH = 21

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQUARE = (3.0 - math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise DomainError(f"bracket endpoints must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise DomainError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class ScalarResult:
    x: float
    fx: float
    iterations: int
    converged: bool


def _as_bracket(bracket) -> Bracket:
    if isinstance(bracket, Bracket):
        return bracket
    lo, hi = bracket
    return Bracket(float(lo), float(hi))


_LOG_FACTORIAL_TABLE = [0.0]
for _i in range(1, _LGAMMA_SWITCH):
    _LOG_FACTORIAL_TABLE.append(_LOG_FACTORIAL_TABLE[-1] + math.log(_i))


def log_factorial(k: int) -> float:
    """Return ln(k!).

    Uses a running sum of ln(i) for k <= 20 and ``math.lgamma(k + 1)`` beyond.
    """
    if isinstance(k, bool) or int(k) != k:
        raise DomainError(f"log_factorial needs an integer, got {k!r}")
    k = int(k)
    if k < 0:
        raise DomainError(f"log_factorial undefined for negative k={k}")
    if k < _LGAMMA_SWITCH:
        return _LOG_FACTORIAL_TABLE[k]
    return math.lgamma(k + 1.0)


def _checked(f, x):
    fx = float(f(x))
    if not math.isfinite(fx):
        raise EvaluationError(f"non-finite value f({x!r}) = {fx!r}")
    return fx


def find_root(
    f: Callable[[float], float],
    bracket,
    tol: float = DEFAULT_TOL,
    fprime: Optional[Callable[[float], float]] = None,
    max_iterations: int = 500,
) -> ScalarResult:
    """Locate a root of ``f`` inside ``bracket`` by safeguarded bisection.

    When ``fprime`` is given, a Newton step is tried first on every iteration
    and kept only if it lands strictly inside the current bracket. Bisection
    otherwise, so convergence is guaranteed for continuous ``f``. Iterates
    until ``|f(x)| <= tol`` or the bracket can no longer be split in floating
    point; only the former is reported as converged.

    Raises
    ------
    BracketError
        If ``f(lo)`` and ``f(hi)`` do not have opposite signs.
    """
    b = _as_bracket(bracket)
    lo, hi = b.lo, b.hi
    flo, fhi = _checked(f, lo), _checked(f, hi)
    if flo == 0.0:
        return ScalarResult(lo, 0.0, 0, True)
    if fhi == 0.0:
        return ScalarResult(hi, 0.0, 0, True)
    if (flo > 0) == (fhi > 0):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}")

    x = 0.5 * (lo + hi)
    fx = _checked(f, x)
    it = 0
    for it in range(1, max_iterations + 1):
        if abs(fx) <= tol:
            return ScalarResult(x, fx, it, True)
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
        else:
            hi = x
        x_new = None
        if fprime is not None:
            d = float(fprime(x))
            if d != 0.0 and math.isfinite(d):
                cand = x - fx / d
                if lo < cand < hi:
                    x_new = cand
        if x_new is None:
            x_new = 0.5 * (lo + hi)
        if x_new == x:
            # Bracket collapsed to floating resolution.
            break
        x = x_new
        fx = _checked(f, x)
    return ScalarResult(x, fx, it, abs(fx) <= tol)


def minimize_scalar(
    f: Callable[[float], float],
    bracket,
    tol: float = DEFAULT_TOL,
) -> ScalarResult:
    """Golden-section search for the minimum of a unimodal ``f`` on ``bracket``.

    Terminates once the enclosing interval is no wider than ``tol`` (or when it
    stops shrinking in floating point, which is then reported as converged only
    if the width is within ``tol``).
    """
    b = _as_bracket(bracket)
    a, c = b.lo, b.hi
    h = c - a
    x1 = a + INV_PHI_SQUARE * h
    x2 = a + INV_PHI * h
    f1, f2 = _checked(f, x1), _checked(f, x2)
    it = 0
    while c - a > tol:
        it += 1
        if f1 < f2:
            c, x2, f2 = x2, x1, f1
            x1 = a + INV_PHI_SQUARE * (c - a)
            f1 = _checked(f, x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (c - a)
            f2 = _checked(f, x2)
        if not (a <= x1 <= x2 <= c) or it > 10_000:
            break
    x, fx = (x1, f1) if f1 < f2 else (x2, f2)
    return ScalarResult(x, fx, it, c - a <= tol)
