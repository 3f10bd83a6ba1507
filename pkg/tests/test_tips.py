import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from greensec.model import GameInstance, SocialGraph, TargetPayoffs, counterexample_instance, generate_instance
from greensec.tips import (
    allocation_utility,
    expected_gain,
    expected_utility_covered,
    expected_utility_uncovered,
    greedy_allocate,
    posterior_attack_prob,
    report_intensity,
    reported_set_prob,
    sample_reported_set,
    tip_context,
    top_r,
)

from oracles import best_allocation_value, intensity


def _graph_instance(edges, p, n=2):
    pay = TargetPayoffs(np.ones(n), -np.ones(n), np.ones(n), -np.ones(n))
    nx = 1 + max(u for u, _ in edges) if edges else 1
    g = SocialGraph(tuple(f"u{i}" for i in range(nx)), tuple(f"v{i}" for i in range(len(p))), edges, p)
    return GameInstance(pay, g, 1, nx, 1.0)


def test_report_intensity_examples():
    inst = _graph_instance({(0, 0): 0.5, (1, 0): 0.5, (0, 1): 1.0}, [1.0, 1.0])
    assert report_intensity(inst, []).tolist() == [0.0, 0.0]
    np.testing.assert_allclose(report_intensity(inst, [0]), [0.5, 1.0])
    np.testing.assert_allclose(report_intensity(inst, [0, 1]), [0.75, 1.0])


@pytest.mark.parametrize("seed", range(5))
def test_report_intensity_matches_product_oracle(seed):
    inst = generate_instance(seed, 5, 6, 3, 1, 3)
    for U in ([0], [1, 3], [0, 2, 4]):
        np.testing.assert_allclose(report_intensity(inst, U), intensity(inst, set(U)), atol=1e-15)


def test_posterior_cases():
    assert posterior_attack_prob(0.3, 0.9, reported=True) == 1.0
    assert posterior_attack_prob(1.0, 1.0, reported=False) == 0.0
    assert posterior_attack_prob(0.5, 0.5, reported=False) == pytest.approx(1 / 3)
    assert posterior_attack_prob(0.7, 0.5, reported=False, reachable=False) == 0.7


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_posterior_non_increasing_in_report_intensity(p, a, b):
    lo, hi = sorted((a, b))
    assert posterior_attack_prob(p, hi, False) <= posterior_attack_prob(p, lo, False) + 1e-12


def test_reported_set_prob_examples():
    inst = _graph_instance({(0, 0): 0.5, (0, 1): 0.5}, [1.0, 1.0])
    ctx = tip_context(inst, [0])
    assert reported_set_prob(ctx, [0]) == pytest.approx(0.25)
    empty = tip_context(inst, [])
    assert reported_set_prob(empty, []) == 1.0


@given(st.integers(0, 10_000))
def test_reported_set_probabilities_sum_to_one(seed):
    inst = generate_instance(seed, 4, 7, 2, 1, 4)
    ctx = tip_context(inst, range(4))
    total = sum(
        reported_set_prob(ctx, combo)
        for size in range(len(ctx.reachable) + 1)
        for combo in itertools.combinations(ctx.reachable, size)
    )
    assert total == pytest.approx(1.0, abs=1e-12)


def test_expected_gain_counterexample_both_on_target_two():
    inst = counterexample_instance()
    pay = inst.payoffs
    # two reported attackers on target 2, the third attacker unreported with q = 0.5
    eg = expected_gain(2, 0.5, 1.0, pay.gain[1])
    assert eg == pytest.approx(5.0, abs=1e-7)
    assert expected_utility_covered(2, 0.5, 1.0, pay.rd[1]) - expected_utility_uncovered(2, 0.5, 1.0, pay.pd[1]) == pytest.approx(eg)
    assert expected_gain(0, 0.3, 0.0, 7.0) == 0.0
    assert expected_gain(1, 0.5, 1.0, 4.0) == pytest.approx(2 * expected_gain(1, 0.5, 1.0, 2.0))


def test_greedy_allocate_small_cases():
    inst = counterexample_instance()
    q = np.array([0.5, 0.5])
    assert greedy_allocate([0, 2], q, 1.0, inst.payoffs, 1) == [1]
    assert greedy_allocate([1, 1], q, 0.0, inst.payoffs, 2) == [0, 1]
    assert top_r([1.0, 1.0, 0.5], 1) == [0]
    assert top_r([0.2, 0.9, 0.9], 2) == [1, 2]


@pytest.mark.parametrize("seed", range(40))
def test_greedy_allocation_is_optimal(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    r = int(rng.integers(1, 3))
    pay = TargetPayoffs(rng.uniform(0.01, 2, n), -rng.uniform(0.01, 2, n), np.ones(n), -np.ones(n))
    q = rng.dirichlet(np.ones(n))
    counts = rng.integers(0, 3, n)
    S = float(rng.uniform(0, 3))
    cov = greedy_allocate(counts, q, S, pay, r)
    assert len(cov) == min(r, n)
    assert allocation_utility(cov, counts, q, S, pay) == pytest.approx(best_allocation_value(counts, q, S, pay.rd, pay.pd, r), abs=1e-12)


def test_sampling_inclusion_frequency():
    inst = _graph_instance({(0, 0): 0.5, (0, 1): 1.0, (0, 2): 0.0}, [1.0, 1.0, 1.0])
    ctx = tip_context(inst, [0])
    rng = np.random.default_rng(0)
    draws = [sample_reported_set(ctx, rng) for _ in range(100_000)]
    assert np.mean([0 in d for d in draws]) == pytest.approx(0.5, abs=0.01)
    assert all(1 in d for d in draws)
    assert not any(2 in d for d in draws)


def test_unreported_mass():
    inst = _graph_instance({(0, 0): 0.5}, [0.5, 0.8])
    ctx = tip_context(inst, [0])
    assert ctx.unreported_mass([]) == pytest.approx(1 / 3 + 0.8)
    assert ctx.unreported_mass([0]) == pytest.approx(0.8)
