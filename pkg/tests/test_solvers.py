import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from appbench import problems as P
from appbench import qubo as Q
from appbench import solvers as S


def random_model(n, seed):
    rng = np.random.default_rng(seed)
    quad = {(i, j): float(rng.normal()) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.6}
    return Q.QuboModel(n, rng.normal(size=n), quad, float(rng.normal()))


def enumerate_min(q):
    bits = np.array(list(itertools.product((0, 1), repeat=q.n_vars)))
    e = Q.energies(q, bits)
    return e.min(), {tuple(b) for b in bits[np.isclose(e, e.min(), atol=1e-12)]}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32))
def test_brute_force_matches_enumeration(n, seed):
    q = random_model(n, seed)
    emin, argmins = enumerate_min(q)
    ss = S.brute_force(q, cap=len(argmins) + 3)
    assert ss.best_energy == pytest.approx(emin, abs=1e-12)
    assert {b for b, _, _ in ss.samples} == argmins
    assert ss.info["optimal_count"] == len(argmins)


def test_brute_force_keeps_optimum_when_penalties_dominate_scale():
    # large penalty weights once hid small objective gaps from the walk
    inst = P.gen_portfolio(8, 3, P.MINVOLA, seed=0)
    q = Q.portfolio_to_qubo(inst)
    emin, _ = enumerate_min(q)
    for cap in (1, 2, 8):
        assert S.brute_force(q, cap=cap).best_energy == pytest.approx(emin, abs=1e-15)


def test_brute_force_lists_all_triangle_optima():
    tri = Q.maxcut_to_qubo(P.ProblemGraph(3, ((0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0))))
    ss = S.brute_force(tri)
    assert len(ss.samples) == 6 and all(e == -2 for _, e, _ in ss.samples)


def test_brute_force_size_limit():
    q = Q.QuboModel(S.MAX_BRUTE_FORCE_VARS + 1, np.zeros(S.MAX_BRUTE_FORCE_VARS + 1), {})
    with pytest.raises(S.TooManyVariables):
        S.brute_force(q)


def test_annealing_finds_small_optima():
    for seed in range(5):
        g = P.gen_maxcut(12, 0.5, seed)
        ss = S.simulated_annealing(Q.maxcut_to_qubo(g), S.AnnealSchedule(200, 10), seed)
        assert -ss.best_energy == P.brute_force_maxcut(g)


def test_annealing_is_reproducible_and_prefix_stable():
    q = random_model(15, 1)
    a = S.simulated_annealing(q, S.AnnealSchedule(50, 8), 3)
    b = S.simulated_annealing(q, S.AnnealSchedule(50, 8), 3)
    assert a.samples == b.samples and a.num_reads == 8
    small = S.simulated_annealing(q, S.AnnealSchedule(50, 3), 3)
    big = {bits for bits, _, _ in a.samples}
    assert all(bits in big for bits, _, _ in small.samples)


def test_annealing_energies_are_exact():
    q = random_model(10, 2)
    ss = S.simulated_annealing(q, S.AnnealSchedule(30, 5), 0)
    for bits, e, _ in ss.samples:
        assert e == Q.qubo_energy(q, bits)


def test_schedule_validation():
    with pytest.raises(ValueError):
        S.AnnealSchedule(sweeps=0)
    with pytest.raises(ValueError):
        S.AnnealSchedule(beta_start=-1.0)
    with pytest.raises(ValueError):
        S.AnnealSchedule(beta_start=2.0, beta_end=1.0)
    b0, b1 = S.AnnealSchedule().resolve(random_model(6, 0))
    assert 0 < b0 <= b1


def test_time_limit_stops_new_reads():
    q = random_model(20, 0)
    ss = S.simulated_annealing(q, S.AnnealSchedule(2000, 500), 0, time_limit_s=0.0)
    assert ss.num_reads == 1


def test_random_sampling_mean_is_half_of_maxcut_weight():
    g = P.gen_maxcut(16, 0.5, 4)
    ss = S.random_sampling(Q.maxcut_to_qubo(g), 20000, 1)
    total = sum(w for _, _, w in g.edges)
    assert -ss.info["mean_energy"] == pytest.approx(total / 2, rel=0.02)
    assert ss.mean_energy() == pytest.approx(ss.info["mean_energy"])
    with pytest.raises(ValueError):
        S.random_sampling(Q.maxcut_to_qubo(g), 0)


def test_sampleset_roundtrip_and_bit_order():
    assert S.pack_bits([1, 0, 0, 1]) == "9"
    assert S.unpack_bits("9", 4) == [1, 0, 0, 1]
    ss = S.brute_force(random_model(7, 5), cap=4)
    back = S.SampleSet.from_dict(ss.to_dict())
    assert back.samples == ss.samples and back.n_vars == 7
