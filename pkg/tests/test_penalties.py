import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_ltr.penalties import PenaltySpec, penalty_terms, penalty_value, prox_weighted_l1, reweight


def grid_prox(z, mu, beta, half_width=None, n=200_001):
    """Minimize 0.5 (z - w)^2 + mu beta |w| on a uniform grid containing 0."""
    half_width = half_width or (abs(z) + 1.0)
    grid = np.linspace(-half_width, half_width, n)
    f = 0.5 * (z - grid) ** 2 + mu * beta * np.abs(grid)
    return grid[np.argmin(f)]


class TestValue:
    def test_l1(self):
        assert penalty_value(PenaltySpec("l1"), [3.0, -0.5]) == 3.5

    def test_weighted(self):
        assert penalty_value(PenaltySpec("weighted_l1", beta=[2.0, 0.0]), [3.0, -0.5]) == 6.0

    def test_mcp_plateau(self):
        assert penalty_value(PenaltySpec("mcp", gamma=2.0, lam=1.0), [3.0]) == 1.0

    def test_mcp_quadratic_branch(self):
        # lam |w| - w^2 / (2 gamma) at |w| = 1, gamma = 2
        assert penalty_value(PenaltySpec("mcp", gamma=2.0, lam=1.0), [-1.0]) == pytest.approx(0.75)

    @pytest.mark.parametrize("lam", [0.1, 0.5, 3.0])
    def test_mcp_scaled_by_lambda(self, lam):
        spec = PenaltySpec("mcp", gamma=2.0, lam=lam)
        for u in [0.05, 0.5 * 2.0 * lam, 2.0 * lam, 10.0 * lam]:
            standard = lam * u - u * u / 4.0 if u <= 2.0 * lam else 2.0 * lam * lam / 2.0
            assert lam * penalty_value(spec, [u]) == pytest.approx(standard, rel=1e-12)

    def test_mcp_continuous_at_knee(self):
        spec = PenaltySpec("mcp", gamma=2.0, lam=0.7)
        knee = spec.gamma * spec.lam
        assert penalty_value(spec, [knee]) == pytest.approx(penalty_value(spec, [knee + 1e-12]), abs=1e-10)

    def test_log_at_zero(self):
        assert penalty_value(PenaltySpec("log", epsilon=0.1), [0.0]) == pytest.approx(-2.302585, abs=1e-6)

    def test_lp(self):
        assert penalty_value(PenaltySpec("lp", p=0.5), [4.0, -9.0]) == pytest.approx(5.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "scad"},
            {"kind": "lp", "p": 1.0},
            {"kind": "lp", "p": 0.0},
            {"kind": "log", "epsilon": 0.0},
            {"kind": "mcp", "gamma": -1.0},
            {"kind": "l1", "lam": 0.0},
            {"kind": "weighted_l1"},
            {"kind": "weighted_l1", "beta": [1.0, -0.1]},
        ],
    )
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ValueError):
            PenaltySpec(**kwargs)


class TestReweight:
    def test_log_at_zero(self):
        assert reweight(PenaltySpec("log", epsilon=0.1), [0.0])[0] == pytest.approx(10.0)

    def test_mcp_beyond_knee(self):
        assert reweight(PenaltySpec("mcp", gamma=2.0, lam=1.0), [3.0])[0] == 0.0

    def test_mcp_inside(self):
        assert reweight(PenaltySpec("mcp", gamma=2.0, lam=1.0), [1.0])[0] == pytest.approx(0.5)

    def test_lp(self):
        assert reweight(PenaltySpec("lp", p=0.5), [4.0])[0] == pytest.approx(0.25, rel=1e-8)

    def test_lp_zero_is_finite(self):
        beta = reweight(PenaltySpec("lp", p=0.5), [0.0])
        assert np.isfinite(beta).all()
        assert beta[0] == pytest.approx(0.5 * 1e-8**-0.5)

    def test_l1_and_weighted(self):
        np.testing.assert_array_equal(reweight(PenaltySpec("l1"), [0.0, 5.0]), [1.0, 1.0])
        np.testing.assert_array_equal(reweight(PenaltySpec("weighted_l1", beta=[0.3, 2.0]), [9.0, 0.0]), [0.3, 2.0])

    def test_clamped(self):
        beta = reweight(PenaltySpec("log", epsilon=1e-14), [0.0, 1.0])
        assert beta[0] == 1e12
        assert beta[1] == pytest.approx(1.0)

    @pytest.mark.parametrize(
        "spec",
        [PenaltySpec("log", epsilon=0.1), PenaltySpec("mcp", gamma=2.0, lam=0.5), PenaltySpec("lp", p=0.5)],
    )
    def test_matches_finite_difference_of_g(self, spec):
        u = np.array([0.05, 0.3, 0.9, 1.7, 4.0])
        h = 1e-6
        fd = (penalty_terms(spec, u + h) - penalty_terms(spec, u - h)) / (2 * h)
        np.testing.assert_allclose(reweight(spec, u), fd, rtol=1e-5, atol=1e-7)

    @settings(max_examples=100, deadline=None)
    @given(
        a=st.floats(0, 100, allow_nan=False),
        b=st.floats(0, 100, allow_nan=False),
        kind=st.sampled_from(["log", "mcp"]),
    )
    def test_scale_monotone(self, a, b, kind):
        spec = PenaltySpec(kind, epsilon=0.1, gamma=2.0, lam=0.8)
        lo, hi = sorted([a, b])
        blo, bhi = reweight(spec, [lo, -hi])
        assert blo >= bhi

    def test_mcp_large_gamma_recovers_l1(self):
        w = np.linspace(-5, 5, 101)
        np.testing.assert_allclose(reweight(PenaltySpec("mcp", gamma=1e9, lam=1.0), w), 1.0, atol=1e-6)

    @pytest.mark.parametrize(
        "spec",
        [
            PenaltySpec("l1"),
            PenaltySpec("lp", p=0.5),
            PenaltySpec("lp", p=0.2),
            PenaltySpec("log", epsilon=0.1),
            PenaltySpec("mcp", gamma=2.0, lam=1.0),
            PenaltySpec("mcp", gamma=3.0, lam=0.1),
        ],
    )
    def test_tangent_majorizes(self, spec):
        rng = np.random.default_rng(0)
        # lp's smoothed weight is the slope at u0 + 1e-8, so keep u0 clear of 0
        u0 = rng.uniform(1e-2, 10, size=500)
        u = rng.uniform(0, 10, size=500)
        g = lambda x: penalty_terms(spec, x)
        rhs = g(u0) + reweight(spec, u0) * (u - u0)
        slack = 1e-12 + (1e-5 if spec.kind == "lp" else 0.0) * np.abs(u - u0)
        assert np.all(g(u) <= rhs + slack)


class TestProx:
    def test_basic(self):
        np.testing.assert_array_equal(prox_weighted_l1([3.0, -0.5], 1.0, [1.0, 1.0]), [2.0, 0.0])

    def test_identity_limit(self):
        np.testing.assert_allclose(prox_weighted_l1([3.0, -0.5], 1e-12, [1.0, 1.0]), [3.0, -0.5], atol=1e-11)

    def test_per_component(self):
        np.testing.assert_array_equal(prox_weighted_l1([3.0, -0.5], 1.0, [0.5, 2.0]), [2.5, 0.0])

    def test_exact_zeros(self):
        out = prox_weighted_l1([1.0, -1.0, 0.999], 1.0, [1.0, 1.0, 1.0])
        assert np.all(out == 0.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            prox_weighted_l1([1.0, 2.0], 1.0, [1.0])
        with pytest.raises(ValueError):
            prox_weighted_l1([1.0], 0.0, [1.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_grid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(40):
            z = rng.uniform(-5, 5)
            mu = rng.uniform(0.01, 3)
            b = rng.uniform(0, 2)
            w = prox_weighted_l1([z], mu, [b])[0]
            assert abs(w - grid_prox(z, mu, b)) < 1e-4

    @settings(max_examples=200, deadline=None)
    @given(
        z=st.floats(-50, 50, allow_nan=False),
        mu=st.floats(1e-3, 10, allow_nan=False),
        b=st.floats(0, 10, allow_nan=False),
        probe=st.floats(-60, 60, allow_nan=False),
    )
    def test_optimality(self, z, mu, b, probe):
        w = prox_weighted_l1([z], mu, [b])[0]
        f = lambda x: 0.5 * (z - x) ** 2 + mu * b * abs(x)
        assert f(w) <= f(probe) + 1e-9 * max(1.0, abs(f(probe)))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_nonexpansive(self, seed):
        rng = np.random.default_rng(seed)
        z1, z2 = rng.standard_normal((2, 8)) * 3
        beta = rng.uniform(0, 2, 8)
        mu = rng.uniform(0.01, 2)
        d_out = np.linalg.norm(prox_weighted_l1(z1, mu, beta) - prox_weighted_l1(z2, mu, beta))
        assert d_out <= np.linalg.norm(z1 - z2) + 1e-12
