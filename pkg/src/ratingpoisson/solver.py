"""Constrained nonlinear least squares for :class:`EquationSystem`.

The constraints ``lam_k > 0``, ``t_k > 0`` and ``t_k - t_{k-1} >= eps`` are
eliminated by the change of variables::

    lam_k = exp(u_k)
    t_1   = exp(v_1)
    t_k   = t_{k-1} + eps + exp(v_k)

so any real ``(u, v)`` is feasible. A damped Gauss-Newton (Levenberg-Marquardt)
loop then minimizes the sum of squared residuals in ``(u, v)``. Independent
starts are drawn from per-start random streams so that a run is reproducible
for a fixed seed.
"""

import io
import csv
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, InitError
from .inhomogeneous import (
    EquationSystem,
    ModelParams,
    ResidualForm,
    ResidualVector,
    check_constraints,
    log_factorials,
    residual_vector,
    residuals_from_products,
)

RNG_NAME = "numpy.random.PCG64"
DISTINCT_THRESHOLD = 1e-3

# Internal gap sits a hair above the reported margin so that rounding in the
# cumulative sum never produces a gap that check_constraints would flag.
_GAP_INFLATION = 1e-6
_MU_MAX = 1e20


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 500
    residual_tol: float = 1e-8
    step_tol: float = 1e-12
    n_starts: int = 8
    seed: int = 0
    init_product_range: Optional[Tuple[float, float]] = None
    # Homogeneous restriction: one shared rate for every k.
    equal_lambdas: bool = False

    def validate(self, K: int) -> Tuple[float, float]:
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if self.n_starts < 1:
            raise ConfigError("n_starts must be at least 1")
        if not self.residual_tol > 0:
            raise ConfigError("residual_tol must be positive")
        if not self.step_tol >= 0:
            raise ConfigError("step_tol must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        lo, hi = self.product_range(K)
        if not 0 < lo < hi or not math.isfinite(hi):
            raise ConfigError(f"init_product_range must satisfy 0 < lo < hi, got ({lo}, {hi})")
        return lo, hi

    def product_range(self, K: int) -> Tuple[float, float]:
        if self.init_product_range is None:
            return 0.01, 2.0 * K
        lo, hi = self.init_product_range
        return float(lo), float(hi)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["init_product_range"] is not None:
            d["init_product_range"] = list(d["init_product_range"])
        return d


@dataclass(frozen=True)
class InhomogeneousSolution:
    params: ModelParams
    residuals: ResidualVector
    converged: bool
    start_index: int
    iterations: int
    objective: float
    trace: Tuple[float, ...] = field(default=(), compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "start_index": self.start_index,
            "converged": self.converged,
            "iterations": self.iterations,
            "objective": self.objective,
            "params": self.params.to_dict(),
            "products": self.params.products.tolist(),
            "residuals": self.residuals.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InhomogeneousSolution":
        return cls(
            params=ModelParams.from_dict(d["params"]),
            residuals=ResidualVector(d["residuals"]["values"]),
            converged=bool(d["converged"]),
            start_index=int(d["start_index"]),
            iterations=int(d["iterations"]),
            objective=float(d["objective"]),
        )


@dataclass(frozen=True)
class SolveReport:
    system: EquationSystem
    options: SolverOptions
    solutions: Tuple[InhomogeneousSolution, ...]
    best: int
    distinct_count: int
    no_convergence: bool

    @property
    def best_solution(self) -> InhomogeneousSolution:
        return self.solutions[self.best]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "rng": RNG_NAME,
            "system": self.system.to_dict(),
            "options": self.options.to_dict(),
            "best": self.best,
            "distinct_count": self.distinct_count,
            "no_convergence": self.no_convergence,
            "solutions": [s.to_dict() for s in self.solutions],
        }

    def times_csv(self) -> str:
        return _two_column_csv(("k", "t_k"), self.best_solution.params.times)

    def lambdas_csv(self) -> str:
        return _two_column_csv(("k", "lambda_k"), self.best_solution.params.lambdas)


def _two_column_csv(header, values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for k, v in enumerate(values, start=1):
        w.writerow([k, repr(float(v))])
    return buf.getvalue()


class Reparameterization:
    """Maps unconstrained ``z = (u, v)`` to feasible :class:`ModelParams`.

    With ``equal_lambdas`` a single ``u`` is shared by every count index.
    """

    def __init__(self, system: EquationSystem, equal_lambdas: bool = False):
        self.system = system
        self.K = system.K
        self.equal_lambdas = equal_lambdas
        self.n_u = 1 if equal_lambdas else self.K
        self.size = self.n_u + self.K
        self.gap = system.ordering_margin * (1.0 + _GAP_INFLATION)
        self._ks = np.array([p.k for p in system.pairs])
        self._js = np.array([p.j for p in system.pairs])
        self._lf = log_factorials(self.K)

    def split(self, z):
        u = z[: self.n_u]
        v = z[self.n_u:]
        if self.equal_lambdas:
            u = np.full(self.K, u[0])
        return u, v

    def times(self, v) -> np.ndarray:
        ev = np.exp(v)
        steps = ev.copy()
        steps[1:] += self.gap
        t = np.cumsum(steps)
        # Large times: one ulp can exceed the margin, so nudge up until the gap holds.
        eps = self.system.ordering_margin
        for k in range(1, t.size):
            while t[k] - t[k - 1] < eps and np.isfinite(t[k]):
                t[k] = max(np.nextafter(t[k], np.inf), t[k - 1] + eps)
        return t

    def decode(self, z) -> ModelParams:
        u, v = self.split(np.asarray(z, dtype=float))
        return ModelParams(np.exp(u), self.times(v))

    def encode(self, params: ModelParams) -> np.ndarray:
        lam, t = params.lambdas, params.times
        if self.equal_lambdas:
            if not np.allclose(lam, lam[0], rtol=1e-12, atol=0):
                raise InitError("equal_lambdas requires an initial point with one shared rate")
            u = np.array([math.log(lam[0])])
        else:
            u = np.log(lam)
        gaps = np.empty(self.K)
        gaps[0] = t[0]
        gaps[1:] = np.diff(t) - self.gap
        v = np.log(np.maximum(gaps, 1e-300))
        return np.concatenate([u, v])

    def log_products(self, z) -> np.ndarray:
        u, v = self.split(z)
        return u + np.log(self.times(v))

    def residuals(self, z) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return residuals_from_products(np.exp(self.log_products(z)), self.system)

    def _dlogx_dz(self, z) -> np.ndarray:
        u, v = self.split(z)
        t = self.times(v)
        ev = np.exp(v)
        L = np.zeros((self.K, self.size))
        if self.equal_lambdas:
            L[:, 0] = 1.0
        else:
            L[:, : self.K] = np.eye(self.K)
        # d t_k / d v_m = exp(v_m) for m <= k
        L[:, self.n_u:] = np.tril(np.ones((self.K, self.K))) * ev[None, :] / t[:, None]
        return L

    def jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.system.form is not ResidualForm.DERIVED_SUM:
            return self.numeric_jacobian(z)
        x = np.exp(self.log_products(z))
        D = np.zeros((len(self._ks), self.K))
        rows = np.arange(len(self._ks))
        # d/d ln x of (k ln x - ln k! - x) is k - x
        D[rows, self._ks - 1] = self._ks - x[self._ks - 1]
        D[rows, self._js - 1] -= self._js - x[self._js - 1]
        return D @ self._dlogx_dz(z)

    def numeric_jacobian(self, z, h: float = 1e-6) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        J = np.empty((len(self._ks), self.size))
        for i in range(self.size):
            step = h * max(1.0, abs(z[i]))
            zp, zm = z.copy(), z.copy()
            zp[i] += step
            zm[i] -= step
            J[:, i] = (self.residuals(zp) - self.residuals(zm)) / (2 * step)
        return J


def _objective(r) -> float:
    if not np.all(np.isfinite(r)):
        return math.inf
    return float(r @ r)


def _finish(system, params, start_index, iterations, trace, options) -> InhomogeneousSolution:
    rv = residual_vector(params, system)
    obj = float(rv.values @ rv.values)
    converged = rv.inf_norm <= options.residual_tol and not check_constraints(params, system)
    return InhomogeneousSolution(
        params=params,
        residuals=rv,
        converged=converged,
        start_index=start_index,
        iterations=iterations,
        objective=obj,
        trace=tuple(trace),
    )


def local_solve(
    system: EquationSystem,
    init: ModelParams,
    options: SolverOptions = SolverOptions(),
    start_index: int = 0,
) -> InhomogeneousSolution:
    """Levenberg-Marquardt from ``init``; only objective-decreasing steps are accepted."""
    options.validate(system.K)
    if init.K != system.K:
        raise InitError(f"init has {init.K} entries, system needs {system.K}")
    if check_constraints(init, system):
        raise InitError(f"initial point violates constraints: {check_constraints(init, system)}")
    rep = Reparameterization(system, options.equal_lambdas)
    z = rep.encode(init)
    r = rep.residuals(z)
    obj = _objective(r)
    trace = [obj]
    mu = None
    nu = 2.0
    it = 0
    while it < options.max_iterations:
        if np.max(np.abs(r)) <= options.residual_tol:
            break
        J = rep.jacobian(z)
        A = J.T @ J
        g = J.T @ r
        if mu is None:
            mu = 1e-3 * max(float(np.max(np.diag(A))), 1e-12)
        accepted = False
        while it < options.max_iterations and mu < _MU_MAX:
            it += 1
            try:
                delta = np.linalg.solve(A + mu * np.eye(rep.size), -g)
            except np.linalg.LinAlgError:
                mu *= nu
                nu *= 2.0
                continue
            z_new = z + delta
            r_new = rep.residuals(z_new)
            obj_new = _objective(r_new)
            if obj_new < obj:
                predicted = float(delta @ (mu * delta - g))
                rho = (obj - obj_new) / predicted if predicted > 0 else 0.0
                mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                z, r, obj = z_new, r_new, obj_new
                trace.append(obj)
                accepted = True
                break
            mu *= nu
            nu *= 2.0
        if not accepted:
            break
        if np.max(np.abs(delta)) <= options.step_tol * (np.max(np.abs(z)) + options.step_tol):
            break
    return _finish(system, rep.decode(z), start_index, it, trace, options)


def start_rng(seed: int, start_index: int) -> np.random.Generator:
    """Private generator for one start, independent of every other start."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(start_index,))))


def random_init(system: EquationSystem, options: SolverOptions, rng: np.random.Generator) -> ModelParams:
    """Log-uniform products, sorted uniform times on ``(0, K]``, rates ``x / t``."""
    K = system.K
    lo, hi = options.product_range(K)
    x = np.exp(rng.uniform(math.log(lo), math.log(hi), size=K))
    while True:
        t = np.sort(rng.uniform(0.0, K, size=K))
        if t[0] > 0 and np.all(np.diff(t) > 2.0 * system.ordering_margin):
            break
    lam = x / t
    if options.equal_lambdas:
        lam = np.full(K, math.exp(float(np.mean(np.log(lam)))))
    return ModelParams(lam, t)


def count_distinct(solutions, threshold: float = DISTINCT_THRESHOLD) -> int:
    """Greedy count of solutions whose product vectors differ by more than ``threshold``."""
    reps: List[np.ndarray] = []
    for s in solutions:
        x = s.params.products
        if all(np.max(np.abs(x - y)) > threshold for y in reps):
            reps.append(x)
    return len(reps)


def solve(system: EquationSystem, options: SolverOptions = SolverOptions()) -> SolveReport:
    """Run ``options.n_starts`` seeded local solves and collect them by objective."""
    options.validate(system.K)
    sols = []
    for i in range(options.n_starts):
        init = random_init(system, options, start_rng(options.seed, i))
        sols.append(local_solve(system, init, options, start_index=i))
    sols.sort(key=lambda s: (s.objective, s.start_index))
    converged = [s for s in sols if s.converged]
    return SolveReport(
        system=system,
        options=options,
        solutions=tuple(sols),
        best=0,
        distinct_count=count_distinct(converged),
        no_convergence=not converged,
    )


def verify(solution: InhomogeneousSolution, system: EquationSystem, residual_tol: float = 1e-8) -> bool:
    """Recompute residuals and constraints from the params alone."""
    params = solution.params
    if params.K != system.K:
        return False
    if check_constraints(params, system):
        return False
    rv = residual_vector(params, system)
    return bool(np.all(np.isfinite(rv.values))) and rv.inf_norm <= residual_tol
