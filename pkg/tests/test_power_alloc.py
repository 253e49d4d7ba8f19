import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risdsca.experiments import random_power_instance
from risdsca.oracles import classic_water_filling, project_capped_simplex, projected_gradient_power
from risdsca.power_alloc import PowerSubproblem, literal_water_filling, power_objective, solve_power, water_level_powers


def sub_of(a, b, p_prev, prices, tau, budget):
    return PowerSubproblem(np.asarray(a, float), np.asarray(b, float), np.asarray(p_prev, float), np.asarray(prices, float), tau, budget)


def test_classic_limit():
    sub = sub_of([1.0, 0.25], [1, 1], [0, 0], [0, 0], 1e-8, 3.0)
    p, mu = solve_power(sub)
    np.testing.assert_allclose(p, [3.0, 0.0], atol=1e-4)
    assert mu == pytest.approx(0.25, rel=1e-4)


def test_classic_oracle_agrees():
    p, mu = classic_water_filling([1.0, 0.25], 3.0)
    np.testing.assert_allclose(p, [3.0, 0.0], atol=1e-12)
    assert mu == pytest.approx(0.25)


def test_dead_channel_stays_at_proximal_center():
    sub = sub_of([0.0, 0.0], [1, 1], [0.4, 0.7], [0, 0], 1.0, 10.0)
    p, mu = solve_power(sub)
    np.testing.assert_allclose(p, [0.4, 0.7])
    assert mu == 0.0


def test_dead_channel_under_tight_budget():
    sub = sub_of([0.0, 0.0], [1, 1], [0.4, 0.7], [0, 0], 1.0, 0.5)
    p, mu = solve_power(sub)
    np.testing.assert_allclose(p, np.maximum(np.array([0.4, 0.7]) - mu, 0), atol=1e-12)
    assert p.sum() == pytest.approx(0.5, rel=1e-12)


def test_symmetric_instance_uniform():
    sub = sub_of([2.0] * 4, [0.5] * 4, [0.3] * 4, [-0.1] * 4, 0.2, 1.0)
    p, _ = solve_power(sub)
    np.testing.assert_allclose(p, 0.25, rtol=1e-10)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        sub_of([1, 1], [0, 1], [0, 0], [0, 0], 1, 1)
    with pytest.raises(ValueError):
        sub_of([1, -1], [1, 1], [0, 0], [0, 0], 1, 1)
    with pytest.raises(ValueError):
        sub_of([1, 1], [1, 1], [0, 0], [0, 0], 0, 1)
    with pytest.raises(ValueError):
        sub_of([1, np.nan], [1, 1], [0, 0], [0, 0], 1, 1)
    with pytest.raises(ValueError):
        sub_of([1], [1, 1], [0, 0], [0, 0], 1, 1)


@pytest.mark.parametrize("seed", range(10))
def test_matches_projected_gradient(seed):
    sub = random_power_instance(seed)
    p, _ = solve_power(sub)
    ref = projected_gradient_power(sub.a, sub.b, sub.p_prev, sub.prices, sub.tau, sub.budget, tol=1e-10)
    assert np.max(np.abs(p - ref)) <= 1e-6 * sub.budget
    # p sits on the feasible side of the budget, within the bisection tolerance
    assert power_objective(sub, p) >= power_objective(sub, ref) - 1e-10


instances = st.builds(
    lambda seed, K: random_power_instance(seed, K=K),
    st.integers(0, 2**32 - 1),
    st.integers(1, 16),
)


@given(instances)
def test_kkt(sub):
    p, mu = solve_power(sub)
    assert np.all(p >= 0) and p.sum() <= sub.budget * (1 + 1e-10)
    assert mu >= 0
    assert abs(mu * (sub.budget - p.sum())) <= 1e-10 * max(mu * sub.budget, 1e-300)
    grad = sub.a / (sub.b + sub.a * p) + sub.prices - sub.tau * (p - sub.p_prev) - mu
    active = p > 1e-9 * sub.budget
    np.testing.assert_allclose(grad[active], 0, atol=1e-7 * (1 + mu))
    assert np.all(grad[~active] <= 1e-7 * (1 + mu))


@given(instances, st.floats(0, 5))
def test_water_levels_monotone_in_mu(sub, mu):
    assert np.all(water_level_powers(sub, mu + 0.1) <= water_level_powers(sub, mu) + 1e-15)


@given(instances)
def test_literal_form_agrees_with_kkt_form(sub):
    p_prev = np.maximum(sub.p_prev, 1e-3)
    sub = sub_of(sub.a, sub.b, p_prev, sub.prices, sub.tau, sub.budget)
    _, mu = solve_power(sub)
    np.testing.assert_allclose(literal_water_filling(sub, mu), water_level_powers(sub, mu), rtol=1e-7, atol=1e-9)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10), st.floats(0.1, 5), st.integers(0, 2**32 - 1))
def test_capped_simplex_projection(y, budget, seed):
    y = np.array(y)
    x = project_capped_simplex(y, budget)
    assert np.all(x >= 0) and x.sum() <= budget * (1 + 1e-12)
    # no feasible point is closer to y
    rng = np.random.default_rng(seed)
    for _ in range(20):
        c = rng.dirichlet(np.ones(y.size)) * budget * rng.uniform()
        assert np.sum((x - y) ** 2) <= np.sum((c - y) ** 2) + 1e-12
