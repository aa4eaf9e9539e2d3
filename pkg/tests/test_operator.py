import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erlangmix.densities import as_density, zoo_density
from erlangmix.operator import (
    CellMassTable,
    EnumerationCapError,
    ErlangMixture,
    InvariantError,
    ThresholdPolicy,
    bell_number,
    build_mixture,
    displacement_moments,
    mc_oracle,
    mixture_cdf,
    mixture_pdf,
    mixture_pdf_grid,
    operator_eval,
    poisson_raw_moment,
    poisson_window,
    stirling2,
    weighted_moment_constant,
)
from erlangmix.quadrature import composite_rule

UNIFORM = zoo_density("uniform_box", 1, {"M": 1})
EXP1 = zoo_density("product_exponential", 1)


class TestBuildMixture:
    def test_uniform_n4(self):
        g, table = build_mixture(UNIFORM, 4)
        assert g.shapes.ravel().tolist() == [1, 2, 3, 4]
        np.testing.assert_allclose(g.weights, 0.25, rtol=1e-15)
        assert g.residual == 0

    def test_uniform_square_n2(self):
        g, _ = build_mixture(zoo_density("uniform_box", 2, {"M": 1}), 2)
        assert sorted(map(tuple, g.shapes.tolist())) == [(1, 1), (1, 2), (2, 1), (2, 2)]
        np.testing.assert_allclose(g.weights, 0.25, rtol=1e-15)

    def test_exponential_threshold(self):
        g, _ = build_mixture(EXP1, 1, ThresholdPolicy(tol=1e-6, N_start=1))
        m = g.shapes.ravel()
        want = np.exp(-(m - 1.0)) - np.exp(-m * 1.0)
        np.testing.assert_allclose(g.weights, want, rtol=1e-13)
        assert g.residual < 1e-6
        assert g.residual == pytest.approx(math.exp(-m.max()), rel=1e-6)

    def test_support_index_cap(self):
        f = zoo_density("uniform_box", 1, {"M": 1.3})
        g, _ = build_mixture(f, 5)
        assert g.shapes.max() <= math.floor(5 * 1.3) + 1

    def test_no_support_needs_threshold(self):
        from erlangmix.operator import SupportPolicy

        with pytest.raises(ValueError, match="support box"):
            build_mixture(EXP1, 2, SupportPolicy())

    def test_cap_error_reports_residual(self):
        heavy = zoo_density("product_gamma_integer", 1, {"shapes": 1, "rate": 0.01})
        with pytest.raises(EnumerationCapError) as info:
            build_mixture(heavy, 4, ThresholdPolicy(tol=1e-12, N_start=4, max_cells=64))
        assert info.value.achieved_residual > 1e-12
        assert info.value.N == 64

    @pytest.mark.parametrize("n", [1, 4, 16])
    def test_mass_balance(self, n):
        for f in (UNIFORM, EXP1):
            g, table = build_mixture(f, n)
            assert abs(float(np.sum(g.weights)) + g.residual - 1) <= 1e-12
            assert abs(table.total + table.residual - 1) <= 1e-12


class TestMixtureEval:
    def test_single_component_at_origin(self):
        g = ErlangMixture([[1, 1, 1]], [1.0], 3)
        assert mixture_pdf(g, [0, 0, 0]) == pytest.approx(27.0, rel=1e-15)

    def test_dimension_mismatch(self):
        g = ErlangMixture([[1, 1]], [1.0], 3)
        with pytest.raises(ValueError):
            mixture_pdf(g, [0.1, 0.2, 0.3])

    def test_uniform_midpoint_matches_operator(self):
        g, _ = build_mixture(UNIFORM, 4)
        assert mixture_pdf(g, [0.5]) == pytest.approx(operator_eval(UNIFORM, 4, [0.5]), abs=1e-10)

    def test_integrates_to_one_minus_residual(self):
        g, _ = build_mixture(EXP1, 4, ThresholdPolicy(tol=1e-4, N_start=2))
        x, w = composite_rule(np.linspace(0, 40, 801), 8)
        total = float(np.dot(w, mixture_pdf(g, x[:, None])))
        assert total == pytest.approx(1 - g.residual, abs=1e-8)

    def test_grid_matches_pointwise(self):
        f = zoo_density("product_exponential", 2, {"rates": [1, 2]})
        g, table = build_mixture(f, 3)
        ax = [np.linspace(0, 3, 7), np.linspace(0, 2, 5)]
        grid = mixture_pdf_grid(table, ax)
        X, Y = np.meshgrid(*ax, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        np.testing.assert_allclose(grid.ravel(), mixture_pdf(g, pts), rtol=1e-12, atol=1e-300)

    def test_cdf_of_exponential_mixture(self):
        g, _ = build_mixture(EXP1, 8)
        x = np.linspace(0, 10, 21)
        assert np.all(np.diff(mixture_cdf(g, x[:, None])) >= 0)
        assert mixture_cdf(g, np.array([[60.0]]))[0] == pytest.approx(1 - g.residual, abs=1e-12)


class TestOperatorEval:
    def test_origin_is_first_cell_average(self):
        f = zoo_density("product_exponential", 2, {"rates": [1, 2]})
        n = 3
        first = (1 - math.exp(-1 / n)) * (1 - math.exp(-2 / n))
        assert operator_eval(f, n, [0.0, 0.0]) == pytest.approx(n ** 2 * first, rel=1e-13)

    def test_constant_function(self):
        one = as_density(lambda x: np.ones(x.shape[0]), 1)
        x = np.linspace(0, 7, 15)[:, None]
        np.testing.assert_allclose(operator_eval(one, 5, x, tail_tol=1e-12), 1.0, atol=1e-12)

    def test_tail_tol_domain(self):
        with pytest.raises(ValueError):
            operator_eval(EXP1, 2, [1.0], tail_tol=1e-3)
        with pytest.raises(ValueError):
            operator_eval(EXP1, 2, [1.0], tail_tol=0.0)

    def test_deterministic(self):
        x = np.linspace(0, 3, 11)[:, None]
        a = operator_eval(EXP1, 8, x)
        b = operator_eval(EXP1, 8, x)
        assert a.tobytes() == b.tobytes()

    @pytest.mark.parametrize("n", [1, 4, 16])
    def test_representation_identity(self, n):
        rng = np.random.default_rng(n)
        for f in (UNIFORM, EXP1, zoo_density("holder_bump", 1, {"alpha": 0.5})):
            g, _ = build_mixture(f, n)
            x = rng.random(100)[:, None] * 3
            deficit = g.residual * n
            diff = np.abs(operator_eval(f, n, x) - mixture_pdf(g, x))
            assert np.max(diff) <= 1e-10 + deficit

    def test_tensorization(self):
        f2 = zoo_density("product_exponential", 2, {"rates": [1, 3]})
        pts = np.random.default_rng(0).random((30, 2)) * 3
        prod = (operator_eval(zoo_density("product_exponential", 1, {"rates": [1]}), 6, pts[:, :1])
                * operator_eval(zoo_density("product_exponential", 1, {"rates": [3]}), 6, pts[:, 1:]))
        np.testing.assert_allclose(operator_eval(f2, 6, pts), prod, atol=1e-10)

    def test_mc_agreement_n8(self):
        ref = operator_eval(EXP1, 8, [1.0])
        est, se = mc_oracle(EXP1, 8, [1.0], 100_000, seed=11)
        assert abs(est - ref) <= 4 * se

    def test_mc_agreement_n4(self):
        ref = operator_eval(EXP1, 4, [0.5])
        est, se = mc_oracle(EXP1, 4, [0.5], 100_000, seed=12)
        assert abs(est - ref) <= 4 * se

    def test_poisson_window(self):
        lo, hi, pmf, excluded = poisson_window(30.0, 1e-12)
        assert excluded < 1e-12
        assert lo <= 30 <= hi
        assert float(np.sum(pmf)) == pytest.approx(1 - excluded, abs=1e-15)


class TestMonteCarlo:
    def test_constant(self):
        est, se = mc_oracle(lambda y: np.ones(y.shape[0]), 3, [0.4, 0.2], 1000, seed=0)
        assert est == 1.0 and se == 0.0

    def test_reproducible(self):
        a = mc_oracle(EXP1, 4, [0.5], 20_000, seed=7)
        b = mc_oracle(EXP1, 4, [0.5], 20_000, seed=7)
        assert a == b

    def test_samples_validated(self):
        with pytest.raises(ValueError):
            mc_oracle(EXP1, 4, [0.5], 0, seed=0)

    def test_squared_displacement(self):
        x = np.array([0.6, 1.1])
        est, se = mc_oracle(lambda y: np.sum((y - x) ** 2, axis=1), 3, x, 100_000, seed=5)
        assert abs(est - displacement_moments(x, 3).second_moment) <= 4 * se


class TestMoments:
    def test_example_13_24(self):
        dm = displacement_moments([1, 1], 4, 2)
        assert Fraction(dm.second_moment).limit_denominator(1000) == Fraction(13, 24)
        assert dm.mean_shift == 1 / 8

    def test_origin(self):
        for n in (1, 3, 10):
            assert displacement_moments([0.0], n).second_moment == pytest.approx(1 / (3 * n * n))

    def test_bound_dominates(self):
        for d in (1, 2, 3):
            for n in (1, 2, 9):
                dm = displacement_moments(np.zeros(d), n)
                assert dm.moment_bound(2) >= dm.second_moment
                assert dm.moment_bound(2) == pytest.approx((1 + d / 3) / n)

    def test_tail_bound(self):
        dm = displacement_moments([0.5], 2)
        assert dm.tail_bound(0.5) == pytest.approx(dm.second_moment / 0.25)

    def test_dimension_errors(self):
        with pytest.raises(ValueError):
            displacement_moments([1, 2], 3, d=3)
        with pytest.raises(ValueError):
            displacement_moments([-1.0], 3)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 10), min_size=1, max_size=3), st.integers(1, 50),
           st.floats(0.05, 2.0))
    def test_moment_bound_covers_second_moment(self, x, n, r):
        dm = displacement_moments(x, n)
        # Jensen: E||D||^r <= (E||D||^2)^(r/2)
        assert dm.second_moment ** (r / 2) <= dm.moment_bound(r) * (1 + 1e-12)


class TestTouchard:
    def test_small_orders(self):
        assert poisson_raw_moment(3.0, 0) == 1
        assert poisson_raw_moment(2.5, 1) == pytest.approx(2.5)
        assert poisson_raw_moment(2.5, 2) == pytest.approx(2.5 ** 2 + 2.5)
        assert poisson_raw_moment(1, 3) == 5

    def test_bell_numbers(self):
        assert [bell_number(m) for m in range(10)] == [1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147]
        assert [poisson_raw_moment(1, m) for m in range(10)] == [bell_number(m) for m in range(10)]

    def test_exact_rationals_order_30(self):
        lam = Fraction(2, 3)
        v = poisson_raw_moment(lam, 30)
        assert isinstance(v, Fraction)
        want = sum(stirling2(30, k) * lam ** k for k in range(31))
        assert v == want

    def test_against_poisson_sum(self):
        from scipy import stats

        lam = 1.7
        k = np.arange(200)
        pmf = stats.poisson.pmf(k, lam)
        for m in range(1, 8):
            assert poisson_raw_moment(lam, m) == pytest.approx(float(np.sum(pmf * k ** m)), rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            poisson_raw_moment(1.0, -1)
        with pytest.raises(ValueError):
            poisson_raw_moment(-1.0, 2)


class TestWeightedMomentConstant:
    def test_zero(self):
        assert weighted_moment_constant(0, 3) == 1

    def test_negative(self):
        with pytest.raises(ValueError):
            weighted_moment_constant(-0.5, 1)

    def test_monotone_in_nu(self):
        for d in (1, 2, 4):
            vals = [weighted_moment_constant(nu, d) for nu in np.linspace(0, 6, 121)]
            assert all(a <= b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("nu", [0.5, 1.0, 1.5, 3.0])
    def test_mc_sweep(self, nu):
        A = weighted_moment_constant(nu, 1)
        for n in (1, 2, 8):
            for x in (0.0, 0.3, 1.0, 5.0):
                est, se = mc_oracle(lambda y: (1 + np.sum(y, axis=1)) ** nu, n, [x], 20_000, seed=3)
                assert est + 4 * se <= A * (1 + x) ** nu

    def test_d2_mc(self):
        A = weighted_moment_constant(1.0, 2)
        est, se = mc_oracle(lambda y: 1 + np.sum(y, axis=1), 1, [0.0, 0.0], 20_000, seed=4)
        assert est + 4 * se <= A


class TestSerialization:
    def test_round_trip_exact(self):
        g, _ = build_mixture(EXP1, 7)
        text = json.dumps(g.to_dict())
        back = ErlangMixture.from_dict(json.loads(text))
        assert back.shapes.tobytes() == g.shapes.tobytes()
        assert back.weights.tobytes() == g.weights.tobytes()
        assert back.residual == g.residual and back.n == g.n

    def test_schema(self):
        data = ErlangMixture([[1], [2]], [0.5, 0.5], 2).to_dict()
        assert set(data) == {"version", "d", "n", "components", "residual"}
        assert data["components"][0] == {"m": [1], "w": 0.5}

    def test_newer_version_rejected(self):
        data = ErlangMixture([[1]], [1.0], 2).to_dict()
        data["version"] = 99
        with pytest.raises(InvariantError, match="newer"):
            ErlangMixture.from_dict(data)

    def test_unknown_field_rejected(self):
        data = ErlangMixture([[1]], [1.0], 2).to_dict()
        data["extra"] = 1
        with pytest.raises(InvariantError, match="unknown"):
            ErlangMixture.from_dict(data)

    def test_corrupt_mass(self):
        data = ErlangMixture([[1], [2]], [0.5, 0.4], 2, residual=0.1).to_dict()
        data["residual"] = 0.0
        with pytest.raises(InvariantError, match="mass_balance"):
            ErlangMixture.from_dict(data)

    def test_invariants(self):
        bad = ErlangMixture([[1], [1]], [0.5, 0.5], 2)
        names = {name for name, ok, _ in bad.check_invariants() if not ok}
        assert names == {"unique_shapes"}
        with pytest.raises(InvariantError):
            ErlangMixture([[1]], [1.0, 0.0], 2)
        with pytest.raises(InvariantError):
            ErlangMixture([[1]], [1.0], 0)

    def test_immutable(self):
        g = ErlangMixture([[1]], [1.0], 2)
        with pytest.raises(ValueError):
            g.weights[0] = 0.3


class TestCellMassTable:
    def test_restrict_and_lookup(self):
        _, table = build_mixture(EXP1, 2)
        small = table.restrict(3)
        assert small.N_max == (3,)
        assert small[(2,)] == table[(2,)]
        assert small.total + small.residual == pytest.approx(1.0, abs=1e-15)

    def test_negative_masses_rejected(self):
        with pytest.raises(InvariantError):
            CellMassTable(np.array([0.5, -0.1]), 2, 0.6)


def test_tail_quantile_and_sup():
    g, _ = build_mixture(EXP1, 4)
    L = g.tail_quantile(1e-10)
    assert mixture_cdf(g, np.array([[L]]))[0] >= 1 - g.residual - 1e-10
    t = np.linspace(L, L + 20, 200)
    assert np.max(g.pdf(t[:, None])) <= g.tail_sup(L) * (1 + 1e-12)
