import json

import numpy as np
import pytest

from oracles import chain_products
from ratingpoisson.errors import ConfigError, InitError
from ratingpoisson.inhomogeneous import (
    ModelParams,
    ResidualForm,
    build_system,
    check_constraints,
    gauge_transform,
    residual_vector,
)
from ratingpoisson.solver import (
    InhomogeneousSolution,
    Reparameterization,
    SolverOptions,
    count_distinct,
    local_solve,
    random_init,
    solve,
    start_rng,
    verify,
)


def exact_params(K, x1=0.01):
    x = chain_products(K, x1)
    t = np.arange(1.0, K + 1)
    return ModelParams(x / t, t)


class TestReparameterization:
    @pytest.mark.parametrize("equal", [False, True])
    def test_round_trip(self, equal):
        s = build_system(5)
        rep = Reparameterization(s, equal)
        lam = np.full(5, 0.7) if equal else np.array([0.2, 1.0, 3.0, 0.5, 0.9])
        p = ModelParams(lam, [0.5, 1.0, 2.5, 2.6, 7.0])
        q = rep.decode(rep.encode(p))
        np.testing.assert_allclose(q.lambdas, p.lambdas, rtol=1e-14)
        np.testing.assert_allclose(q.times, p.times, rtol=1e-12)

    def test_any_point_is_feasible(self):
        s = build_system(6)
        rep = Reparameterization(s)
        rng = np.random.default_rng(0)
        for _ in range(200):
            z = rng.normal(0, 8, rep.size)
            assert check_constraints(rep.decode(z), s) == []

    @pytest.mark.parametrize("equal", [False, True])
    def test_analytic_jacobian_matches_central_differences(self, equal):
        s = build_system(7, "all-pairs")
        rep = Reparameterization(s, equal)
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(100):
            z = rng.uniform(-1.5, 1.5, rep.size)
            Ja = rep.jacobian(z)
            Jn = rep.numeric_jacobian(z, h=1e-6)
            scale = np.maximum(np.abs(Ja), 1.0)
            worst = max(worst, float(np.max(np.abs(Ja - Jn) / scale)))
        assert worst <= 1e-5

    def test_paper_product_uses_numeric_jacobian(self):
        s = build_system(4, form=ResidualForm.PAPER_PRODUCT)
        rep = Reparameterization(s)
        z = np.linspace(-0.5, 0.5, rep.size)
        np.testing.assert_array_equal(rep.jacobian(z), rep.numeric_jacobian(z))


class TestOptions:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_starts": 0},
            {"max_iterations": 0},
            {"residual_tol": 0.0},
            {"init_product_range": (2.0, 1.0)},
            {"init_product_range": (0.0, 1.0)},
            {"seed": -1},
        ],
    )
    def test_config_errors(self, kwargs):
        with pytest.raises(ConfigError):
            solve(build_system(2), SolverOptions(**kwargs))

    def test_default_product_range(self):
        assert SolverOptions().product_range(10) == (0.01, 20.0)


class TestLocalSolve:
    def test_exact_init_is_fixed_point(self):
        s = build_system(4)
        init = exact_params(4)
        opts = SolverOptions()
        sol = local_solve(s, init, opts)
        assert sol.converged
        assert sol.iterations <= 1
        assert sol.objective <= opts.residual_tol**2

    def test_gauge_transformed_exact_init(self):
        s = build_system(4)
        init = gauge_transform(exact_params(4), [0.5, 0.9, 1.3, 3.0], s)
        assert residual_vector(init, s).inf_norm <= 1e-9
        sol = local_solve(s, init, SolverOptions())
        assert sol.objective <= 1e-16
        assert sol.converged

    def test_objective_trace_decreases(self):
        s = build_system(3)
        init = random_init(s, SolverOptions(), start_rng(5, 0))
        sol = local_solve(s, init, SolverOptions())
        trace = np.array(sol.trace)
        assert trace[-1] < trace[0]
        assert np.all(np.diff(trace) <= 0)

    def test_infeasible_init(self):
        s = build_system(3)
        with pytest.raises(InitError):
            local_solve(s, ModelParams([1, 1, 1], [2, 1, 3]), SolverOptions())

    def test_equal_lambdas_needs_shared_rate(self):
        s = build_system(3)
        with pytest.raises(InitError):
            local_solve(s, ModelParams([1, 2, 1], [1, 2, 3]), SolverOptions(equal_lambdas=True))

    @pytest.mark.parametrize("form", list(ResidualForm))
    def test_traces_non_increasing_across_many_starts(self, form):
        s = build_system(6, form=form)
        for i in range(10):
            init = random_init(s, SolverOptions(), start_rng(123, i))
            sol = local_solve(s, init, SolverOptions(max_iterations=200))
            assert np.all(np.diff(sol.trace) <= 0)


class TestSolve:
    def test_k2(self):
        s = build_system(2)
        rep = solve(s, SolverOptions(seed=1))
        best = rep.best_solution
        assert best.converged
        assert best.residuals.inf_norm <= 1e-8
        assert best.params.times[0] < best.params.times[1]
        assert verify(best, s)

    def test_k10_multiple_solutions(self):
        s = build_system(10)
        rep = solve(s, SolverOptions(seed=7, n_starts=8))
        assert rep.best_solution.converged
        assert rep.distinct_count >= 2
        for sol in rep.solutions:
            if sol.converged:
                assert verify(sol, s)

    def test_sorted_by_objective(self):
        rep = solve(build_system(5), SolverOptions(seed=3))
        keys = [(s.objective, s.start_index) for s in rep.solutions]
        assert keys == sorted(keys)
        assert rep.best == 0

    def test_forced_non_convergence(self):
        rep = solve(build_system(2), SolverOptions(seed=1, residual_tol=1e-30, max_iterations=1))
        assert rep.no_convergence
        assert not any(s.converged for s in rep.solutions)
        assert rep.distinct_count == 0

    def test_deterministic_serialization(self):
        s = build_system(6)
        a = json.dumps(solve(s, SolverOptions(seed=11)).to_dict(), sort_keys=True)
        b = json.dumps(solve(s, SolverOptions(seed=11)).to_dict(), sort_keys=True)
        assert a == b

    def test_seed_changes_starts(self):
        s = build_system(6)
        a = solve(s, SolverOptions(seed=1)).to_dict()
        b = solve(s, SolverOptions(seed=2)).to_dict()
        assert a["solutions"] != b["solutions"]

    def test_start_streams_independent(self):
        a = start_rng(9, 0).uniform(size=4)
        b = start_rng(9, 1).uniform(size=4)
        assert not np.allclose(a, b)
        np.testing.assert_array_equal(a, start_rng(9, 0).uniform(size=4))

    def test_paper_product_form_runs(self):
        s = build_system(3, form="paper-product")
        rep = solve(s, SolverOptions(seed=4))
        assert np.isfinite(rep.best_solution.objective)
        if rep.best_solution.converged:
            assert verify(rep.best_solution, s)

    def test_gauge_robustness_of_converged(self):
        s = build_system(5)
        sol = solve(s, SolverOptions(seed=2)).best_solution
        assert sol.converged
        t = sol.params.times
        q = gauge_transform(sol.params, (t + np.arange(5) * 0.5) / t, s)
        moved = InhomogeneousSolution(q, residual_vector(q, s), True, 0, 0, 0.0)
        assert verify(moved, s)
        assert residual_vector(q, s).inf_norm == pytest.approx(sol.residuals.inf_norm, abs=1e-10)

    def test_csv_tables(self):
        rep = solve(build_system(3), SolverOptions(seed=1))
        lines = rep.times_csv().strip().split("\n")
        assert lines[0] == "k,t_k" and len(lines) == 4
        assert rep.lambdas_csv().startswith("k,lambda_k\n1,")

    def test_solution_json_round_trip(self):
        sol = solve(build_system(3), SolverOptions(seed=1)).best_solution
        back = InhomogeneousSolution.from_dict(json.loads(json.dumps(sol.to_dict())))
        np.testing.assert_array_equal(back.params.times, sol.params.times)
        assert back.converged == sol.converged


class TestVerify:
    def setup_method(self):
        self.s = build_system(4)
        self.sol = solve(self.s, SolverOptions(seed=5)).best_solution

    def test_converged_passes(self):
        assert self.sol.converged
        assert verify(self.sol, self.s)

    def test_broken_ordering_fails(self):
        t = self.sol.params.times.copy()
        t[2] = t[1] - 0.1
        bad = InhomogeneousSolution(ModelParams(self.sol.params.lambdas, t), self.sol.residuals, True, 0, 0, 0.0)
        assert not verify(bad, self.s)

    def test_scaled_rate_fails(self):
        lam = self.sol.params.lambdas.copy()
        lam[1] *= 1.5
        bad = InhomogeneousSolution(ModelParams(lam, self.sol.params.times), self.sol.residuals, True, 0, 0, 0.0)
        assert not verify(bad, self.s)


def test_count_distinct_threshold():
    mk = lambda x: InhomogeneousSolution(ModelParams(x, [1.0, 2.0]), None, True, 0, 0, 0.0)
    sols = [mk([1.0, 1.0]), mk([1.0, 1.0005]), mk([1.0, 1.01])]
    assert count_distinct(sols) == 2
