import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from greensec.model import (
    GameInstance,
    InstanceError,
    SocialGraph,
    TargetPayoffs,
    counterexample_instance,
    attacker_utilities,
    dumps_instance,
    generate_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    parse_informant_set,
    quantal_response,
    save_instance,
    single_attack_utility,
    validate_instance,
)

from oracles import softmax_response

beliefs = st.lists(st.floats(0, 1), min_size=1, max_size=6)


def _payoffs(n, seed=0):
    rng = np.random.default_rng(seed)
    return TargetPayoffs(rng.uniform(0.1, 2, n), -rng.uniform(0.1, 2, n), rng.uniform(0.1, 2, n), -rng.uniform(0.1, 2, n))


@given(beliefs, st.floats(0, 50))
def test_quantal_response_is_a_distribution(x, lam):
    pay = _payoffs(len(x))
    q = quantal_response(x, pay, lam)
    assert np.all(q >= 0)
    assert q.sum() == pytest.approx(1.0, abs=1e-12)


@given(beliefs, st.floats(0, 10))
def test_quantal_response_matches_softmax(x, lam):
    pay = _payoffs(len(x), 3)
    np.testing.assert_allclose(quantal_response(x, pay, lam), softmax_response(np.array(x), pay.ra, pay.pa, lam), atol=1e-12)


def test_quantal_response_uniform_at_zero_precision():
    pay = _payoffs(4)
    np.testing.assert_allclose(quantal_response([0.1, 0.9, 0.3, 0.0], pay, 0.0), np.full(4, 0.25))


def test_quantal_response_survives_huge_precision():
    pay = _payoffs(3)
    q = quantal_response([0.2, 0.5, 0.1], pay, 1e6)
    assert np.isfinite(q).all()
    assert q.max() == pytest.approx(1.0)


def test_quantal_response_two_targets_by_hand():
    pay = TargetPayoffs([1, 1], [-1, -1], [1.0, 2.0], [-1.0, -1.0])
    q = quantal_response([0.0, 0.0], pay, 1.0)
    assert q[0] == pytest.approx(np.exp(1) / (np.exp(1) + np.exp(2)))


def test_attacker_utilities_and_single_attack_utility():
    pay = TargetPayoffs([1, 2], [-1, -2], [3, 4], [-3, -4])
    np.testing.assert_allclose(attacker_utilities(np.array([0.5, 0.25]), pay), [0.0, 2.0])
    assert single_attack_utility([1.0, 0.0], [0.5, 0.5], pay) == pytest.approx(0.5 * 1 + 0.5 * -2)


def test_payoff_arrays_are_read_only():
    pay = _payoffs(2)
    with pytest.raises(ValueError):
        pay.rd[0] = 5.0


def test_validate_clean_and_dirty_instances():
    assert validate_instance(counterexample_instance()) == []
    pay = TargetPayoffs([1, -1], [-1, 1], [1, 1], [-1, -1])
    g = SocialGraph(("u1", "u1"), ("v1",), {(0, 0): 1.5, (5, 0): 0.1}, [1.2])
    bad = GameInstance(pay, g, resources=0, recruit_budget=-1, lam=-1.0)
    text = " ".join(str(v) for v in validate_instance(bad))
    for fragment in ("rd", "pd", "resources", "recruit", "lambda", "duplicate", "probab", "edge"):
        assert fragment in text.lower(), fragment


def test_generation_is_deterministic_and_valid():
    a = generate_instance(7, 6, 8, 6, 3, 4)
    b = generate_instance(7, 6, 8, 6, 3, 4)
    assert dumps_instance(a) == dumps_instance(b)
    assert validate_instance(a) == []
    assert dumps_instance(generate_instance(8, 6, 8, 6, 3, 4)) != dumps_instance(a)


def test_generation_ranges():
    inst = generate_instance(1, 10, 12, 8, 3, 4)
    p = inst.graph.attack_prob
    assert np.all((p >= 0.4) & (p <= 1.0))
    assert all(0 <= w <= 0.2 for w in inst.graph.edges.values())
    assert np.all(inst.payoffs.rd > 0) and np.all(inst.payoffs.pd < 0)
    assert np.all(np.abs(inst.payoffs.rd) <= 2.0)
    deg = inst.graph.adjacency().sum(axis=1)
    assert deg.min() >= 1 and deg.max() <= 12


@given(st.integers(0, 10_000), st.floats(0.5, 4))
def test_generation_respects_attack_mass_cap(seed, cap):
    inst = generate_instance(seed, 3, 8, 3, 1, 1, sum_pv_cap=cap)
    assert inst.graph.attack_prob.sum() <= cap + 1e-9


def test_generation_rejects_empty_attacker_set():
    with pytest.raises(InstanceError):
        generate_instance(0, 3, 0, 3, 1, 1)


def test_round_trip(tmp_path):
    inst = generate_instance(3, 4, 5, 3, 2, 2)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert instance_to_dict(back) == instance_to_dict(inst)
    assert validate_instance(back) == []


def test_unknown_edge_endpoint_is_reported():
    doc = instance_to_dict(counterexample_instance())
    doc["edges"].append({"u": "ghost", "v": "v1", "w": 0.5})
    problems = validate_instance(instance_from_dict(doc))
    assert problems and any("edge" in str(p).lower() for p in problems)


def test_load_errors_carry_the_path(tmp_path):
    with pytest.raises(InstanceError, match="nope.json"):
        load_instance(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InstanceError, match="bad.json"):
        load_instance(bad)
    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps({"targets": []}))
    with pytest.raises(InstanceError):
        load_instance(partial)


def test_parse_informant_set():
    inst = counterexample_instance()
    assert parse_informant_set(inst, "u1, u2") == frozenset({0, 1})
    assert parse_informant_set(inst, "") == frozenset()
    with pytest.raises(InstanceError):
        parse_informant_set(inst, "u9")


def test_with_params_keeps_everything_else():
    inst = counterexample_instance()
    other = inst.with_params(resources=2, lam=1.5)
    assert (other.resources, other.lam, other.recruit_budget) == (2, 1.5, 2)
    assert other.graph is inst.graph
