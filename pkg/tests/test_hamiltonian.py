import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from appbench import circuits as C
from appbench import hamiltonian as Hm

MATS = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def kron_pauli(n, term):
    ops = dict(term.ops)
    return term.coeff * reduce(np.kron, [MATS[ops.get(q, "I")] for q in reversed(range(n))])


def kron_hamiltonian(h):
    return sum(kron_pauli(h.n_qubits, t) for t in h.terms)


def fock_annihilators(n):
    """Fermionic ``c_m`` on occupation-number bitstrings with canonical signs."""
    dim = 2**n
    out = []
    for m in range(n):
        c = np.zeros((dim, dim))
        for x in range(dim):
            if x >> m & 1:
                sign = (-1) ** bin(x & ((1 << m) - 1)).count("1")
                c[x ^ (1 << m), x] = sign
        out.append(c)
    return out


def fock_hubbard(lattice, t, v, spin):
    ns = lattice.n_sites
    species = 2 if spin == "spinful" else 1
    n = species * ns
    c = fock_annihilators(n)
    num = [ci.T @ ci for ci in c]
    h = np.zeros((2**n, 2**n))
    for s in range(species):
        for i, j in lattice.edges:
            a, b = s * ns + i, s * ns + j
            h -= t * (c[a].T @ c[b] + c[b].T @ c[a])
    pairs = [(i, ns + i) for i in range(ns)] if species == 2 else list(lattice.edges)
    for a, b in pairs:
        h += v * (num[a] @ num[b] - 0.25 * np.eye(2**n))
    return h


pauli_strings = st.dictionaries(st.integers(0, 3), st.sampled_from("XYZ"), min_size=1, max_size=4)


@settings(max_examples=60, deadline=None)
@given(pauli_strings, st.floats(-3, 3))
def test_apply_pauli_matches_kron(ops, coeff):
    n = 4
    term = Hm.PauliTerm(coeff, tuple(ops.items()))
    psi = np.random.default_rng(len(ops)).normal(size=16) + 0j
    assert np.allclose(coeff * Hm.apply_pauli(psi, n, term), kron_pauli(n, term) @ psi)


@settings(max_examples=40, deadline=None)
@given(pauli_strings, st.floats(-2, 2))
def test_rotation_gadget_is_exact_exponential(ops, angle):
    n = 4
    term = Hm.PauliTerm(1.0, tuple(ops.items()))
    c = C.Circuit(n)
    Hm.append_pauli_rotation(c, term, angle)
    psi = C.haar_states(n, 1, np.random.default_rng(7))[0]
    got = C.run_batch(c, initial=psi)[0]
    ref = expm(-1j * angle * kron_pauli(n, term)) @ psi
    assert np.allclose(got, ref, atol=1e-10)


def test_pauli_helpers():
    t = Hm.pauli(0.5, "X0 Z2")
    assert t.label == "X0 Z2" and t.support == (0, 2) and not t.diagonal
    assert Hm.pauli(1.0, "Z1 Z0").diagonal
    with pytest.raises(ValueError):
        Hm.PauliTerm(1.0, ((0, "X"), (0, "Y")))
    with pytest.raises(ValueError):
        Hm.PauliTerm(1.0, ((0, "Q"),))


# -- lattices ---------------------------------------------------------------


def test_lattice_shapes():
    assert Hm.chain(4).edges == ((0, 1), (1, 2), (2, 3))
    sq = Hm.square(2, 2)
    assert sq.edges == ((0, 1), (0, 2), (1, 3), (2, 3)) and sq.cdw_sites() == [0, 3]
    k = Hm.kagome_patch(4)
    assert k.n_sites == 12 and len(k.edges) == 17
    assert all(d == 2 or d == 3 or d == 4 for _, d in k.graph().degree())
    k8 = Hm.kagome_patch(4, 8)
    assert k8.n_sites == 8 and len(k8.perfect_matching()) == 4
    with pytest.raises(ValueError):
        Hm.chain(3).perfect_matching()
    with pytest.raises(ValueError):
        Hm.Lattice("x", 2, ((0, 0),))


def test_kagome_cells_are_triangles():
    k = Hm.kagome_patch((2, 2))
    g = k.graph()
    for cell in range(4):
        a = 3 * cell
        assert g.has_edge(a, a + 1) and g.has_edge(a, a + 2) and g.has_edge(a + 1, a + 2)


# -- model construction -----------------------------------------------------


@pytest.mark.parametrize(
    "lattice,v,spin",
    [
        (Hm.chain(4), 0.0, "spinless"),
        (Hm.chain(5), 1.3, "spinless"),
        (Hm.square(2, 2), 0.7, "spinless"),
        (Hm.chain(2), 2.0, "spinful"),
        (Hm.square(2, 2), 1.0, "spinful"),
    ],
)
def test_hubbard_matches_fock_space_oracle(lattice, v, spin):
    h = Hm.build_hubbard(lattice, t=0.8, v=v, spin=spin)
    assert np.allclose(Hm.hamiltonian_matrix(h).toarray(), fock_hubbard(lattice, 0.8, v, spin), atol=1e-12)


def test_hamiltonian_matrix_matches_kron_sum():
    for h in (Hm.build_heisenberg(Hm.chain(4), -1.0), Hm.build_hubbard(Hm.square(2, 2), 1.0, 0.5)):
        assert np.allclose(Hm.hamiltonian_matrix(h).toarray(), kron_hamiltonian(h))


def test_heisenberg_reference_energies():
    # two-site antiferromagnet: singlet at -3, ferromagnet: triplet at -1
    assert Hm.ground_energy(Hm.build_heisenberg(Hm.chain(2), -1.0)) == pytest.approx(-3.0)
    assert Hm.ground_energy(Hm.build_heisenberg(Hm.chain(2), 1.0)) == pytest.approx(-1.0)
    # ferromagnet on any lattice: all bonds satisfied
    k = Hm.kagome_patch(4, 8)
    assert Hm.ground_energy(Hm.build_heisenberg(k, 1.0)) == pytest.approx(-len(k.edges))


def test_lanczos_agrees_with_dense():
    h = Hm.build_heisenberg(Hm.kagome_patch(4, 8), -1.0)
    assert Hm.ground_energy(h, "lanczos") == pytest.approx(Hm.ground_energy(h, "dense"), abs=1e-9)


def test_energy_expectation_batched_and_checks():
    h = Hm.build_heisenberg(Hm.chain(3), -1.0)
    states = C.haar_states(3, 4, np.random.default_rng(0))
    m = kron_hamiltonian(h)
    ref = np.real(np.einsum("bi,ij,bj->b", states.conj(), m, states))
    assert np.allclose(Hm.energy_expectation(states, h), ref)
    with pytest.raises(ValueError):
        Hm.energy_expectation(np.ones(4), h)


# -- Trotter dynamics -------------------------------------------------------


def test_single_step_exact_for_commuting_terms():
    h = Hm.build_heisenberg(Hm.chain(2), -1.0)
    c = Hm.trotter_step_circuit(h, 0.37)
    psi = C.haar_states(2, 1, np.random.default_rng(1))[0]
    assert np.allclose(C.run_batch(c, initial=psi)[0], Hm.exact_evolve(h, psi, 0.37), atol=1e-10)


def test_trotter_error_shrinks_first_order():
    h = Hm.build_hubbard(Hm.chain(2), 1.0, 2.0, "spinful")
    psi = C.haar_states(h.n_qubits, 1, np.random.default_rng(2))[0]
    exact = Hm.exact_evolve(h, psi, 1.0)
    errs = []
    for k in (8, 16, 32, 64):
        out = C.run_batch(Hm.trotter_step_circuit(h, 1.0 / k), initial=psi)
        for _ in range(k - 1):
            out = C.run_batch(Hm.trotter_step_circuit(h, 1.0 / k), initial=out)
        errs.append(np.linalg.norm(out[0] - exact))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(1.7 < r < 2.3 for r in ratios)


def test_free_fermion_oracle_conserves_particles():
    lat = Hm.square(2, 2)
    occ = np.array([1.0, 0, 0, 1.0])
    n_t = Hm.free_fermion_oracle(lat, 1.0, occ, 1.3)
    assert n_t.sum() == pytest.approx(2.0)
    assert Hm.cdw_imbalance(lat, occ) == 1.0


def test_noiseless_dynamics_tracks_oracle():
    lat = Hm.square(2, 2)
    h = Hm.build_hubbard(lat, 1.0)
    tr = Hm.evolve_dynamics(h, 2.0, [64])
    occ = np.array([1.0 if i in lat.cdw_sites() else 0.0 for i in range(4)])
    ref = Hm.cdw_imbalance(lat, Hm.free_fermion_oracle(lat, 1.0, occ, 2.0))
    assert abs(tr.values()[0] - ref) < 0.01
    assert tr.rows[0]["shots"] == 1


def test_noise_trajectories_are_reproducible_and_nested():
    h = Hm.build_hubbard(Hm.chain(4), 1.0)
    a = Hm.evolve_dynamics(h, 1.0, [4, 8], Hm.NoiseModel(0.05), shots=50, seed=3)
    b = Hm.evolve_dynamics(h, 1.0, [4, 8], Hm.NoiseModel(0.05), shots=50, seed=3)
    assert a.rows == b.rows and a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "steps,observable,stderr,p,shots,seed"
    # noiseless runs collapse to one deterministic shot
    assert Hm.evolve_dynamics(h, 1.0, 4, Hm.NoiseModel(0.0), shots=50).rows[0]["stderr"] == 0.0


def test_noise_model_checks():
    with pytest.raises(ValueError):
        Hm.NoiseModel(1.5)
    h = Hm.build_hubbard(Hm.chain(2), 1.0)
    with pytest.raises(ValueError):
        Hm.evolve_dynamics(h, 1.0, 4, Hm.NoiseModel(0.1), shots=0)
    with pytest.raises(ValueError):
        Hm.evolve_dynamics(h, 1.0, [0])


def test_noise_reduces_imbalance_amplitude():
    h = Hm.build_hubbard(Hm.chain(4), 1.0)
    clean = Hm.evolve_dynamics(h, 0.5, 8).values()[0]
    noisy = Hm.evolve_dynamics(h, 0.5, 8, Hm.NoiseModel(0.2), shots=200, seed=1).values()[0]
    assert abs(noisy) < abs(clean)


# -- adiabatic preparation --------------------------------------------------


def test_dimer_state_is_ground_state_of_dimer_terms():
    h = Hm.build_heisenberg(Hm.chain(4), -1.0)
    dimers = h.lattice.perfect_matching()
    psi = Hm.dimer_state(h, dimers)
    init = Hm.HamiltonianSpec("init", h.lattice, Hm.dimer_terms(h, dimers), 4)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    assert Hm.energy_expectation(psi, init) == pytest.approx(Hm.ground_energy(init))


def test_adiabatic_converges_to_ground_energy():
    h = Hm.build_heisenberg(Hm.chain(4), -1.0)
    e0 = Hm.ground_energy(h) / 4
    tr = Hm.adiabatic_prepare(h, [64], 20.0)
    assert tr.values()[0] == pytest.approx(e0, rel=0.01)
    assert tr.values()[0] >= e0 - 1e-9


def test_adiabatic_circuit_schedule():
    h = Hm.build_heisenberg(Hm.chain(2), -1.0)
    circuits = Hm.adiabatic_circuits(h, Hm.dimer_terms(h, [(0, 1)]), 5, 1.0)
    assert len(circuits) == 5
    assert math.isclose(sum(1 for _ in circuits[0].gates), sum(1 for _ in circuits[-1].gates))
