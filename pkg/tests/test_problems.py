import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from appbench import problems as P

TRIANGLE = P.ProblemGraph(3, ((0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)))


def test_gen_maxcut_complete_and_deterministic():
    assert P.gen_maxcut(2, 1.0, 123).edges == ((0, 1, 1.0),)
    assert P.gen_maxcut(5, 0.5, 9) == P.gen_maxcut(5, 0.5, 9)


def test_gen_maxcut_edge_count_statistics():
    counts = [len(P.gen_maxcut(20, 0.5, s).edges) for s in range(200)]
    assert all(0 <= c <= 190 for c in counts)
    assert 85 <= np.mean(counts) <= 105


def test_graph_invariants_enforced():
    with pytest.raises(ValueError):
        P.ProblemGraph(3, ((0, 3, 1.0),))
    with pytest.raises(ValueError):
        P.ProblemGraph(3, ((0, 1, 1.0), (1, 0, 2.0)))
    with pytest.raises(ValueError):
        P.ProblemGraph(3, ((0, 1, float("inf")),))
    with pytest.raises(ValueError):
        P.ProblemGraph(3, ((1, 1, 1.0),))


def test_eval_cut_triangle():
    assert P.eval_cut(TRIANGLE, [0, 0, 0]) == 0
    assert P.eval_cut(TRIANGLE, [0, 0, 1]) == 2
    with pytest.raises(ValueError):
        P.eval_cut(TRIANGLE, [0, 1])


def test_brute_force_matches_full_enumeration():
    g = P.gen_maxcut(8, 0.5, 4)
    full = max(P.eval_cut(g, bits) for bits in itertools.product((0, 1), repeat=8))
    assert P.brute_force_maxcut(g) == full


def test_graph_file_roundtrip():
    weighted = P.ProblemGraph(4, ((0, 1, 2.5), (1, 3, 0.1), (2, 3, -1.0)))
    for g in (P.gen_maxcut(7, 0.6, 2), weighted):
        assert P.read_graph(P.write_graph(g)) == g
        assert P.ProblemGraph.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        P.read_graph("3 2\n0 1 1.0\n")


def test_setcover_small_cases():
    inst = P.SetCoverInstance(2, ((1, {0}), (1, {1}), (1, {0, 1})))
    sol = P.eval_setcover(inst, [2])
    assert sol.objective == 1 and sol.feasible
    bad = P.eval_setcover(inst, [0])
    assert not bad.feasible and bad.violations == ["element 1 uncovered"]
    with pytest.raises(IndexError):
        P.eval_setcover(inst, [5])


def test_setcover_generator_is_feasible_and_greedy_bounded():
    for seed in range(10):
        inst = P.gen_setcover(10, 8, 0.3, seed)
        assert P.eval_setcover(inst, range(8)).feasible
        greedy = P.eval_setcover(inst, P.greedy_setcover(inst))
        best = P.brute_force_setcover(inst)
        assert greedy.feasible and greedy.objective >= best.objective
        assert all(float(c).is_integer() and 1 <= c <= 5 for c in inst.costs)


def test_portfolio_diagonal_case():
    inst = P.PortfolioInstance(np.array([0.1, 0.2]), np.diag([0.04, 0.01]), 1, P.MINVOLA, 0.0)
    best = P.brute_force_portfolio(inst)
    assert best.assignment == [0, 1]
    assert best.objective == pytest.approx(0.01)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 6))
def test_single_asset_variance(seed, n):
    inst = P.gen_portfolio(n, 1, seed=seed)
    for i in range(n):
        sel = [int(j == i) for j in range(n)]
        assert P.portfolio_stats(inst, sel)[1] == pytest.approx(inst.cov[i, i], rel=1e-12)


def test_portfolio_validation():
    with pytest.raises(ValueError):
        P.PortfolioInstance(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), 1)
    with pytest.raises(ValueError):
        P.PortfolioInstance(np.zeros(2), np.array([[1.0, 0.1], [0.0, 1.0]]), 1)
    with pytest.raises(ValueError):
        P.PortfolioInstance(np.zeros(2), np.eye(2), 3)


def test_portfolio_formulations_and_cardinality():
    inst = P.gen_portfolio(6, 2, P.MULTIOBJ, seed=3)
    sol = P.portfolio_objective(inst, [1, 1, 1, 0, 0, 0])
    assert any("cardinality" in v for v in sol.violations)
    mu, var = P.portfolio_stats(inst, [1, 1, 0, 0, 0, 0])
    assert P.portfolio_objective(inst, [1, 1, 0, 0, 0, 0]).objective == pytest.approx(-(mu - var))
    mx = P.gen_portfolio(6, 2, P.MAXRET, seed=3)
    assert P.portfolio_objective(mx, [1, 1, 0, 0, 0, 0]).objective == pytest.approx(-mu)


def test_portfolio_csv_roundtrip():
    inst = P.gen_portfolio(5, 2, seed=1)
    back = P.read_portfolio_csv(P.write_portfolio_csv(inst), 2, P.MINVOLA, inst.target)
    assert np.array_equal(back.returns, inst.returns) and np.array_equal(back.cov, inst.cov)
    assert back.asset_ids == inst.asset_ids


def test_salbp_small_cases():
    one = P.SalbpInstance((1.0,), 1.0, (), 1)
    sol = P.eval_salbp(one, [1])
    assert sol.feasible and sol.objective == 1
    two = P.SalbpInstance((1.0, 1.0), 2.0, ((0, 1),), 2)
    bad = P.eval_salbp(two, [2, 1])
    assert "precedence 0->1 violated" in bad.violations


def test_salbp_violations():
    inst = P.SalbpInstance((3.0, 3.0), 4.0, (), 2)
    over = P.eval_salbp(inst, [1, 1])
    assert any("exceeds" in v for v in over.violations)
    multi = P.eval_salbp(inst, [None, [1, 2]])
    assert sum("assigned to" in v for v in multi.violations) == 2
    closed = P.eval_salbp(inst, [1, 2], open_stations=[1])
    assert any("station 2" in v for v in closed.violations)
    with pytest.raises(IndexError):
        P.eval_salbp(inst, [3, 1])


def test_salbp_rejects_cycles_and_long_tasks():
    with pytest.raises(ValueError, match="cycle"):
        P.SalbpInstance((1.0, 1.0), 2.0, ((0, 1), (1, 0)), 2)
    with pytest.raises(ValueError):
        P.SalbpInstance((3.0,), 2.0, (), 1)


def test_salbp_generator_and_file_roundtrip():
    for seed in range(5):
        inst = P.gen_salbp(7, 10, 0.4, seed=seed)
        assert all(1 < t < 7 for t in inst.times)
        assert P.read_salbp(P.write_salbp(inst)) == inst
        assert P.instance_from_dict(inst.to_dict()) == inst


def test_salbp_brute_force_lower_bound():
    inst = P.gen_salbp(5, 10, 0.3, max_stations=4, seed=2)
    best = P.brute_force_salbp(inst)
    stations = len(set(best.assignment))
    assert stations >= np.ceil(sum(inst.times) / inst.cycle_time)
    # objective sum(s * y_s) is minimised by using the lowest station numbers
    assert best.objective == sum(range(1, stations + 1))
