import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chain_products, poisson_log_pmf
from ratingpoisson.errors import DomainError, GaugeOrderingError
from ratingpoisson.homogeneous import PairEquation, ZipfDirection
from ratingpoisson.inhomogeneous import (
    EquationSystem,
    ModelParams,
    PairStrategy,
    ResidualForm,
    build_system,
    check_constraints,
    gauge_transform,
    log_pmf,
    residual,
    residual_vector,
    residuals_from_products,
)


def params_from_products(x, times=None):
    x = np.asarray(x, dtype=float)
    t = np.arange(1.0, x.size + 1) if times is None else np.asarray(times, dtype=float)
    return ModelParams(x / t, t)


class TestBuildSystem:
    def test_consecutive(self):
        s = build_system(3, PairStrategy.CONSECUTIVE)
        assert [(p.k, p.j) for p in s.pairs] == [(2, 1), (3, 2)]

    def test_all_pairs(self):
        s = build_system(3, PairStrategy.ALL_PAIRS)
        assert [(p.k, p.j) for p in s.pairs] == [(2, 1), (3, 1), (3, 2)]
        assert len(build_system(7, "all-pairs").pairs) == 21

    def test_anchor_to_one(self):
        s = build_system(4, PairStrategy.ANCHOR_TO_ONE)
        assert [(p.k, p.j) for p in s.pairs] == [(2, 1), (3, 1), (4, 1)]

    def test_defaults(self):
        s = build_system(5)
        assert s.form is ResidualForm.DERIVED_SUM
        assert s.zipf_direction is ZipfDirection.PAPER
        assert s.ordering_margin == 1e-6
        assert s.c == 1.0 and s.t0 == 0.0
        assert len(s.pairs) == 4

    def test_too_small(self):
        with pytest.raises(DomainError):
            build_system(1)

    def test_invariants(self):
        with pytest.raises(DomainError):
            EquationSystem(K=3, pairs=())
        with pytest.raises(DomainError):
            EquationSystem(K=3, pairs=(PairEquation(2, 1), PairEquation(2, 1)))
        with pytest.raises(DomainError):
            EquationSystem(K=3, pairs=(PairEquation(4, 1),))

    def test_json_round_trip(self):
        s = build_system(6, "all-pairs", form="paper-product", zipf_direction="classical", c=0.5)
        doc = json.loads(json.dumps(s.to_dict()))
        assert doc["form"] == "paper-product"
        assert doc["zipf_direction"] == "classical"
        assert EquationSystem.from_dict(doc) == s


class TestLogPmf:
    def test_examples(self):
        p = ModelParams([1.0, 2.0], [1.0, 1.0])
        assert log_pmf(p, 1) == pytest.approx(-1.0, abs=1e-15)
        assert log_pmf(p, 2) == pytest.approx(math.log(2) - 2, abs=1e-14)

    def test_maximized_at_mean_equal_k(self):
        for k in (1, 3, 8):
            at_mode = log_pmf(ModelParams([float(k)] * k, [1.0] * k), k)
            for x in (0.5 * k, 0.9 * k, 1.1 * k, 2.0 * k):
                assert log_pmf(ModelParams([x] * k, [1.0] * k), k) < at_mode

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            log_pmf(ModelParams([1.0], [1.0]), 2)


class TestResidual:
    def test_derived_sum_example(self):
        s = build_system(2)
        p = ModelParams([1.0, 0.5], [1.0, 2.0])
        assert residual(p, PairEquation(2, 1), s) == pytest.approx(-2 * math.log(2), abs=1e-14)

    def test_derived_sum_zero_at_bisection_root(self):
        # x_2 with x^2 e^{-x} = 4 x_1 e^{-x_1}, from mpmath: 0.5841116514050031
        x = chain_products(2, 0.05)
        assert x[1] == pytest.approx(0.5841116514050031, abs=1e-12)
        r = residual(params_from_products(x), PairEquation(2, 1), build_system(2))
        assert abs(r) <= 1e-9

    def test_paper_product_verbatim(self):
        s = build_system(3, form=ResidualForm.PAPER_PRODUCT)
        lam, t = [0.7, 1.3, 0.4], [0.5, 1.5, 2.5]
        p = ModelParams(lam, t)
        k, j = 3, 2
        lf = {2: math.log(2), 3: math.log(6)}
        expected = (lam[1] * t[1] - lam[2] * t[2]) * (
            k * math.log(lam[2]) - j * math.log(lam[1]) + k * math.log(t[2]) - j * math.log(t[1]) + lf[2] - lf[3]
        ) - (math.log(3) - math.log(2))
        assert residual(p, PairEquation(3, 2), s) == pytest.approx(expected, rel=1e-14)

    def test_classical_direction_flips_target(self):
        p = ModelParams([0.3, 0.9, 1.7], [1.0, 2.0, 3.0])
        paper = residual(p, PairEquation(3, 1), build_system(3))
        classical = residual(p, PairEquation(3, 1), build_system(3, zipf_direction="classical"))
        assert paper - classical == pytest.approx(-2 * math.log(3), abs=1e-14)

    def test_non_positive_rejected(self):
        s = build_system(2)
        with pytest.raises(DomainError):
            residual(ModelParams([1.0, -1.0], [1.0, 2.0]), PairEquation(2, 1), s)

    def test_tiny_product_is_clamped(self, caplog):
        s = build_system(2)
        p = ModelParams([1e-200, 1.0], [1e-200, 2.0])
        r = residual(p, PairEquation(2, 1), s)
        assert math.isfinite(r)
        assert "clamped" in caplog.text

    @pytest.mark.parametrize("form", list(ResidualForm))
    def test_vectorized_matches_scalar(self, form):
        rng = np.random.default_rng(3)
        s = build_system(6, "all-pairs", form=form)
        for _ in range(50):
            lam = rng.uniform(0.05, 5, 6)
            t = np.sort(rng.uniform(0.1, 6, 6))
            p = ModelParams(lam, t)
            np.testing.assert_allclose(
                residuals_from_products(p.products, s), residual_vector(p, s).values, rtol=1e-11, atol=1e-11
            )

    def test_log_of_ratio_equation(self):
        rng = np.random.default_rng(11)
        s = build_system(8, "all-pairs")
        for _ in range(1000):
            x = rng.uniform(0.05, 12, 8)
            p = params_from_products(x)
            k, j = sorted(rng.choice(np.arange(1, 9), 2, replace=False))[::-1]
            r = residual(p, PairEquation(int(k), int(j)), s)
            ratio = math.exp(poisson_log_pmf(k, x[k - 1]) - poisson_log_pmf(j, x[j - 1]))
            assert ratio / (k / j) == pytest.approx(math.exp(r), rel=1e-9)


class TestResidualVector:
    def test_exact_chain_solution(self):
        x = chain_products(5, 0.01)
        assert x is not None
        rv = residual_vector(params_from_products(x), build_system(5))
        assert rv.inf_norm <= 1e-9

    def test_generic_params_are_not_solutions(self):
        p = ModelParams([1.0] * 5, [1.0, 2.0, 3.0, 4.0, 5.0])
        rv = residual_vector(p, build_system(5))
        assert rv.inf_norm > 0.1
        assert rv.inf_norm == pytest.approx(np.max(np.abs(rv.values)))


class TestConstraints:
    def test_satisfied(self):
        assert check_constraints(ModelParams([1, 1, 1], [1, 2, 3]), build_system(3)) == []

    def test_ordering_violation(self):
        v = check_constraints(ModelParams([1, 1, 1], [2, 1, 3]), build_system(3))
        assert len(v) == 1
        assert v[0].kind == "ordering"
        assert v[0].index == (2, 1)
        assert v[0].slack == pytest.approx(-1 - 1e-6)

    def test_margin_breach(self):
        v = check_constraints(ModelParams([1, 1, 1], [1, 1 + 1e-9, 3]), build_system(3))
        assert len(v) == 1 and v[0].index == (2, 1)

    def test_positivity(self):
        v = check_constraints(ModelParams([1, -1, 1], [1, 2, 3]), build_system(3))
        assert [(x.kind, x.index) for x in v] == [("lambda", (2,))]


class TestGauge:
    def test_identity(self):
        p = ModelParams([2.0, 3.0], [1.0, 2.0])
        q = gauge_transform(p, [1.0, 1.0])
        np.testing.assert_array_equal(q.lambdas, p.lambdas)
        np.testing.assert_array_equal(q.times, p.times)

    @pytest.mark.parametrize("form", list(ResidualForm))
    def test_example(self, form):
        s = build_system(2, form=form)
        p = ModelParams([2.0, 2.0], [1.0, 2.0])
        q = gauge_transform(p, [2.0, 1.5], s)
        np.testing.assert_allclose(q.lambdas, [1.0, 4.0 / 3.0], rtol=1e-15)
        np.testing.assert_allclose(q.times, [2.0, 3.0], rtol=1e-15)
        np.testing.assert_allclose(residual_vector(q, s).values, residual_vector(p, s).values, atol=1e-12)

    def test_ordering_broken(self):
        with pytest.raises(GaugeOrderingError):
            gauge_transform(ModelParams([1.0, 1.0], [1.0, 2.0]), [4.0, 1.0])

    @settings(max_examples=200, deadline=None)
    @given(
        x=st.lists(st.floats(0.01, 30), min_size=4, max_size=4),
        t_a=st.lists(st.floats(0.01, 10), min_size=4, max_size=4),
        t_b=st.lists(st.floats(0.01, 10), min_size=4, max_size=4),
        form=st.sampled_from(list(ResidualForm)),
    )
    def test_product_sufficiency(self, x, t_a, t_b, form):
        s = build_system(4, "all-pairs", form=form)
        x = np.array(x)
        ta, tb = np.cumsum(t_a), np.cumsum(t_b)
        pa, pb = ModelParams(x / ta, ta), ModelParams(x / tb, tb)
        np.testing.assert_allclose(residual_vector(pa, s).values, residual_vector(pb, s).values, atol=1e-12 * max(1, x.max()) * 10)


class TestSolutionFamilies:
    def test_k2_one_parameter_family(self):
        # x_1 e^{-x_1} <= (1/2) * max_x x^2 e^{-x} / 2 = e^{-2}
        s = build_system(2)
        for x1 in (0.01, 0.05, 0.1, 0.15):
            assert x1 * math.exp(-x1) <= math.exp(-2)
            for upper in (False, True):
                x = chain_products(2, x1, {2: upper})
                assert residual_vector(params_from_products(x), s).inf_norm <= 1e-9

    def test_k2_infeasible_x1(self):
        assert chain_products(2, 1.0) is None

    def test_k3_has_distinct_exact_solutions(self):
        s = build_system(3)
        sols = [chain_products(3, 0.01), chain_products(3, 0.02), chain_products(3, 0.01, {2: True, 3: True})]
        for x in sols:
            assert residual_vector(params_from_products(x), s).inf_norm <= 1e-9
        assert np.max(np.abs(sols[0] - sols[1])) > 1e-3
        assert np.max(np.abs(sols[0] - sols[2])) > 1e-3
