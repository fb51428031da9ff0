import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from rarblock.allocation import (
    CumulativeCounts,
    bayes_allocation,
    beta_diff_prob_quadrature,
    clamp_allocation,
    freq_allocation,
    posterior_mean_diff,
    posterior_prob_b_gt_a,
    update_gate_open,
)


class TestFreqAllocation:
    def test_symmetric_rates_give_half(self):
        counts = CumulativeCounts(n_a=40, n_b=40, y_a=10, y_b=10)
        assert update_gate_open(counts)
        assert freq_allocation(counts) == 0.5

    def test_square_root_rule_value(self):
        # p_hat_A = 0.25, p_hat_B = 0.45
        counts = CumulativeCounts(n_a=100, n_b=100, y_a=25, y_b=45)
        assert freq_allocation(counts) == pytest.approx(0.42705098312484224, abs=1e-12)

    def test_gate_closed_without_failures_in_a(self):
        counts = CumulativeCounts(n_a=5, n_b=50, y_a=5, y_b=20)
        assert not update_gate_open(counts)
        assert freq_allocation(counts) == 0.5

    def test_gate_closed_without_successes(self):
        counts = CumulativeCounts(n_a=30, n_b=30, y_a=0, y_b=12)
        assert freq_allocation(counts) == 0.5

    def test_swap_symmetry(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n_a, n_b = rng.integers(2, 80, size=2)
            y_a = rng.integers(1, n_a)
            y_b = rng.integers(1, n_b)
            counts = CumulativeCounts(n_a, n_b, y_a, y_b)
            swapped = CumulativeCounts(n_b, n_a, y_b, y_a)
            assert freq_allocation(counts) == pytest.approx(
                1.0 - freq_allocation(swapped), abs=1e-12
            )

    def test_constant_half_until_gate_opens(self):
        # feed an outcome stream and check every prefix: 0.5 before the gate,
        # inside (0,1) afterwards; the gate is monotone on cumulative data
        rng = np.random.default_rng(5)
        counts = CumulativeCounts()
        opened = False
        for _ in range(100):
            add_a, add_b = rng.integers(1, 4, size=2)
            counts = counts.add(
                int(add_a),
                int(add_b),
                int(rng.binomial(add_a, 0.3)),
                int(rng.binomial(add_b, 0.3)),
            )
            pi = freq_allocation(counts)
            if not update_gate_open(counts):
                assert not opened
                assert pi == 0.5
            else:
                opened = True
                assert 0.0 < pi < 1.0


class TestBayesAllocation:
    @pytest.mark.parametrize(
        "p,expected",
        [(0.5, 0.5), (0.75, 0.36602540378443865), (1.0, 0.0), (0.0, 1.0)],
    )
    def test_reference_values(self, p, expected):
        assert bayes_allocation(p) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
    def test_complement_sums_to_one(self, p):
        # 1-p itself rounds for p below ~5e-17, which caps the achievable
        # precision of the identity at sqrt(p) ~ 7e-9 near that edge
        assert bayes_allocation(p) + bayes_allocation(1.0 - p) == pytest.approx(
            1.0, abs=1e-8
        )

    def test_strictly_decreasing(self):
        grid = np.linspace(0.0, 1.0, 201)
        values = [bayes_allocation(p) for p in grid]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            bayes_allocation(1.5)


class TestClamp:
    @pytest.mark.parametrize(
        "pi,bounds,expected",
        [(0.05, None, 0.05), (0.05, (0.1, 0.9), 0.1), (0.5, (0.1, 0.9), 0.5),
         (0.99, (0.1, 0.9), 0.9)],
    )
    def test_cases(self, pi, bounds, expected):
        assert clamp_allocation(pi, bounds) == expected


QUAD_REFERENCE_CASES = [
    # (y_a, n_a, y_b, n_b) with beta(0.5, 0.5) prior
    (0, 0, 0, 0),
    (1, 2, 1, 2),
    (0, 1, 1, 1),
    (5, 20, 10, 20),
    (2, 10, 8, 10),
    (25, 100, 45, 100),
]


class TestQuadratureOracle:
    def test_identical_betas_give_half(self):
        assert beta_diff_prob_quadrature(2.5, 7.5, 2.5, 7.5) == pytest.approx(
            0.5, abs=1e-9
        )

    def test_uniform_vs_triangular_closed_form(self):
        # X1 ~ Beta(1,1), X2 ~ Beta(2,1): P(X2 > X1) = E[X2] = 2/3
        assert beta_diff_prob_quadrature(1, 1, 2, 1) == pytest.approx(
            2.0 / 3.0, abs=1e-9
        )

    def test_matches_adaptive_quadrature(self):
        # independent cross-check of the fixed-grid rule on posterior shapes
        for y_a, n_a, y_b, n_b in QUAD_REFERENCE_CASES:
            a1, b1 = y_a + 0.5, n_a - y_a + 0.5
            a2, b2 = y_b + 0.5, n_b - y_b + 0.5
            ref, err = integrate.quad(
                lambda x: stats.beta.pdf(x, a2, b2) * stats.beta.cdf(x, a1, b1),
                0.0,
                1.0,
                limit=200,
            )
            assert err < 1e-8
            assert beta_diff_prob_quadrature(a1, b1, a2, b2) == pytest.approx(
                ref, abs=5e-7
            )

    def test_known_single_observation_case(self):
        # posterior beta(1.5, 0.5) vs beta(0.5, 1.5), value fixed by the
        # adaptive-quadrature cross-check above
        assert beta_diff_prob_quadrature(0.5, 1.5, 1.5, 0.5) == pytest.approx(
            0.9052847345694, abs=1e-7
        )


class TestPosteriorMonteCarlo:
    def test_empty_counts_near_half(self):
        p = posterior_prob_b_gt_a(
            CumulativeCounts(), draws=40_000, rng=np.random.default_rng(1)
        )
        assert p == pytest.approx(0.5, abs=3 * math.sqrt(0.25 / 40_000))

    def test_symmetric_counts_near_half(self):
        counts = CumulativeCounts(n_a=2, n_b=2, y_a=1, y_b=1)
        p = posterior_prob_b_gt_a(counts, draws=40_000, rng=np.random.default_rng(2))
        assert p == pytest.approx(0.5, abs=3 * math.sqrt(0.25 / 40_000))

    def test_single_observation_matches_quadrature_to_3dp(self):
        counts = CumulativeCounts(n_a=1, n_b=1, y_a=0, y_b=1)
        p = posterior_prob_b_gt_a(counts, draws=1_000_000, rng=np.random.default_rng(3))
        assert p == pytest.approx(0.905, abs=2e-3)

    def test_converges_to_quadrature_at_1e6_draws(self):
        counts = CumulativeCounts(n_a=20, n_b=20, y_a=5, y_b=10)
        exact = beta_diff_prob_quadrature(5.5, 15.5, 10.5, 10.5)
        p = posterior_prob_b_gt_a(counts, draws=1_000_000, rng=np.random.default_rng(4))
        assert abs(p - exact) < 0.005

    def test_draw_floor_enforced(self):
        with pytest.raises(ValueError):
            posterior_prob_b_gt_a(CumulativeCounts(), draws=10)


def test_posterior_mean_diff_closed_form():
    counts = CumulativeCounts(n_a=100, n_b=100, y_a=25, y_b=45)
    expected = (45 + 0.5) / 101 - (25 + 0.5) / 101
    assert posterior_mean_diff(counts) == pytest.approx(expected, abs=1e-15)


def test_counts_validation():
    with pytest.raises(ValueError):
        CumulativeCounts(n_a=2, n_b=2, y_a=3, y_b=0)
