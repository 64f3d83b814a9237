import time
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retcap.oracle import (
    MAX_POLICIES,
    SUITE,
    OracleError,
    TinyMdp,
    builtin_mdp,
    builtin_suite,
    capped_expectation,
    enumerate_policies,
    exact_return_distribution,
    load_tiny_mdp,
    parse_tiny_mdp,
    random_stochastic_policy,
    sample_returns,
    score_policies,
    verify_proposition1,
)
from retcap.risk import ExactDistribution, empirical_cvar, exact_var_cvar

ONE_ROUND = """
initial 1
horizon 1
1 bet0 1 1 0
1 bet100 0.8 2 1
1 bet100 0.2 0 -1
"""


def reachable_decision_count(mdp):
    """Plain BFS over (state, step, return) tuples, kept separate from TinyMdp.decision_states."""
    start = (mdp.initial, 0, 0.0)
    seen = {start}
    queue = deque([start])
    decisions = 0
    while queue:
        s, t, ret = queue.popleft()
        acts = sorted({a for (st_, a) in mdp.transitions if st_ == s})
        if t >= mdp.horizon or not acts:
            continue
        decisions += 1
        for a in acts:
            for p, nxt, r in mdp.transitions[(s, a)]:
                key = (nxt, t + 1, round(ret + r, 9))
                if p > 0 and key not in seen:
                    seen.add(key)
                    queue.append(key)
    return decisions


def constant_policy(mdp, action):
    return {s: action for s in mdp.decision_states()}


# enumeration

def test_policy_counts():
    three = TinyMdp("s", 1, {("s", a): [(1.0, "end", 0.0)] for a in "abc"})
    assert len(list(enumerate_policies(three))) == 3
    two_by_two = TinyMdp("s", 2, {("s", "a"): [(1.0, "u", 0.0)], ("s", "b"): [(1.0, "u", 0.0)],
                                  ("u", "a"): [(1.0, "end", 1.0)], ("u", "b"): [(1.0, "end", 2.0)]})
    assert len(list(enumerate_policies(two_by_two))) == 4


def test_mini_betting_count_matches_reachability_bfs():
    mdp = builtin_mdp("mini_betting")
    n = reachable_decision_count(mdp)
    assert n == 3
    policies = list(enumerate_policies(mdp))
    assert len(policies) == 2 ** n == mdp.policy_count()
    assert len({tuple(sorted(p.items())) for p in policies}) == len(policies)


def test_enumeration_bound_refused():
    trans = {("s", f"a{i}"): [(1.0, f"u{i}", float(i))] for i in range(40)}
    for i in range(40):
        trans.update({(f"u{i}", f"b{j}"): [(1.0, "end", 0.0)] for j in range(2)})
    mdp = TinyMdp("s", 2, trans)
    assert mdp.policy_count() == 40 * 2 ** 40 > MAX_POLICIES
    with pytest.raises(OracleError, match=str(mdp.policy_count())):
        next(enumerate_policies(mdp))


# distributions

def test_bet_zero_is_point_mass():
    mdp = builtin_mdp("mini_betting")
    dist = exact_return_distribution(mdp, constant_policy(mdp, "bet0"))
    assert dist.atoms == [(0.0, 1.0)]


def test_one_round_all_in():
    mdp = parse_tiny_mdp(ONE_ROUND)
    dist = exact_return_distribution(mdp, constant_policy(mdp, "bet100"))
    assert dist.values.tolist() == [-1.0, 1.0]
    np.testing.assert_allclose(dist.probs, [0.2, 0.8], atol=1e-12)


def test_two_round_all_in():
    mdp = builtin_mdp("mini_betting")
    dist = exact_return_distribution(mdp, constant_policy(mdp, "bet100"))
    assert dist.values.tolist() == [-1.0, 3.0]
    np.testing.assert_allclose(dist.probs, [0.36, 0.64], atol=1e-12)


def test_capped_expectation_examples():
    dist = ExactDistribution([(-1.0, 0.36), (3.0, 0.64)])
    assert capped_expectation(dist, 1.0) == pytest.approx(0.28, abs=1e-12)
    assert capped_expectation(dist, 10.0) == pytest.approx(dist.mean(), abs=1e-12)
    assert capped_expectation(dist, -5.0) == -5.0


@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(1, 10)), min_size=1, max_size=8),
       st.floats(-30, 30), st.floats(0, 10))
def test_capped_expectation_monotone(atoms, c, dc):
    total = sum(w for _, w in atoms)
    dist = ExactDistribution([(float(v), w / total) for v, w in atoms])
    assert capped_expectation(dist, c) <= capped_expectation(dist, c + dc) + 1e-12
    top = float(dist.values.max())
    assert capped_expectation(dist, top) == pytest.approx(capped_expectation(dist, top + dc), abs=1e-12)


@pytest.mark.parametrize("name", SUITE)
def test_probabilities_sum_to_one(name):
    mdp = builtin_mdp(name)
    for pol in enumerate_policies(mdp):
        assert abs(exact_return_distribution(mdp, pol).probs.sum() - 1.0) < 1e-12


@pytest.mark.parametrize("name", ["mini_betting", "guarded_corridor", "hedge"])
def test_monte_carlo_agrees_with_exact(name):
    mdp = builtin_mdp(name)
    alpha = mdp.alpha
    rng = np.random.default_rng(0)
    # the normal approximation needs alpha strictly inside a CDF step, so pick the
    # policy with the most atoms among those whose CDF never equals alpha
    candidates = []
    for pol in enumerate_policies(mdp):
        dist = exact_return_distribution(mdp, pol)
        if np.all(np.abs(np.cumsum(dist.probs) - alpha) > 1e-3):
            candidates.append((len(dist.atoms), pol, dist))
    _, pol, dist = max(candidates, key=lambda c: c[0])
    var, exact = exact_var_cvar(dist, alpha)
    samples = sample_returns(mdp, pol, 100_000, rng)
    # asymptotic standard error of the tail mean: sd((VaR - R)+) / (alpha sqrt(n))
    se = np.maximum(var - samples, 0.0).std() / (alpha * np.sqrt(samples.size))
    assert abs(empirical_cvar(samples, alpha) - exact) <= 3 * se + 1e-9


# capped-objective optimality

def test_suite_passes_quickly():
    t0 = time.perf_counter()
    reports = [verify_proposition1(m) for m in builtin_suite()]
    assert time.perf_counter() - t0 < 10
    assert len(reports) >= 5
    assert all(r.passed for r in reports), [r.lines() for r in reports if not r.passed]
    names = {r.mdp for r in reports}
    assert {"mini_betting", "guarded_corridor"} <= names
    assert any(r.risk_neutral_differs for r in reports)


def test_single_action_trivially_passes():
    r = verify_proposition1(builtin_mdp("single_action"))
    assert r.passed and r.n_policies == 1


def test_guarded_corridor_optima_differ():
    mdp = builtin_mdp("guarded_corridor")
    r = verify_proposition1(mdp)
    assert r.passed and r.risk_neutral_differs
    assert r.optimal_cvar == pytest.approx(2.0, abs=1e-9)
    scores = score_policies(mdp, mdp.alpha)
    assert max(s.mean for s in scores) == pytest.approx(3.4, abs=1e-9)


def test_perturbed_cap_admits_non_optimal_policy():
    r = verify_proposition1(builtin_mdp("guarded_corridor"), cap_offset=100.0)
    assert not r.passed
    assert r.offending.cvar < r.optimal_cvar - 1e-9
    assert any("offending" in line for line in r.lines())


@pytest.mark.parametrize("name", ["mini_betting", "guarded_corridor", "betting_three_rounds"])
def test_stochastic_policies_do_not_beat_deterministic(name):
    mdp = builtin_mdp(name)
    scores = score_policies(mdp, mdp.alpha)
    best_cvar = max(s.cvar for s in scores)
    r = verify_proposition1(mdp)
    best_capped = max(capped_expectation(exact_return_distribution(mdp, s.policy), r.cap) for s in scores)
    rng = np.random.default_rng(1)
    for _ in range(200):
        dist = exact_return_distribution(mdp, random_stochastic_policy(mdp, rng))
        assert exact_var_cvar(dist, mdp.alpha)[1] <= best_cvar + 1e-9
        assert capped_expectation(dist, r.cap) <= best_capped + 1e-9


# parsing

def test_parse_errors_name_the_line():
    with pytest.raises(OracleError, match="x:3"):
        parse_tiny_mdp("initial s\nhorizon 1\ns a 1 end\n", name="x")
    with pytest.raises(OracleError, match="sum to"):
        parse_tiny_mdp("initial s\nhorizon 1\ns a 0.5 end 0\n")
    with pytest.raises(OracleError, match="required"):
        parse_tiny_mdp("s a 1 end 0\n")
    with pytest.raises(OracleError, match="horizon"):
        parse_tiny_mdp("initial s\nhorizon 9\ns a 1 end 0\n")


def test_parse_fractions_and_files(tmp_path):
    mdp = parse_tiny_mdp("initial s\nhorizon 1\ns a 1/3 l 0\ns a 2/3 w 3\n")
    dist = exact_return_distribution(mdp, constant_policy(mdp, "a"))
    assert dist.mean() == pytest.approx(2.0, abs=1e-12)
    path = tmp_path / "one.mdp"
    path.write_text(ONE_ROUND)
    assert load_tiny_mdp(path).policy_count() == 2
