import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm
from scipy.spatial.distance import jensenshannon

from appbench import circuits as C

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
P0, P1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])


def embed(n, ops):
    """Dense operator with ``ops[q]`` on qubit q; qubit 0 is the rightmost factor."""
    return reduce(np.kron, [ops.get(q, I2) for q in reversed(range(n))])


def dense_gate(n, g, theta):
    k, t = g.kind, g.targets
    if k in ("H", "X"):
        return embed(n, {t[0]: H if k == "H" else X})
    if k in ("RX", "RY", "RZ"):
        p = {"RX": X, "RY": Y, "RZ": Z}[k]
        return embed(n, {t[0]: expm(-0.5j * theta * p)})
    if k == "CNOT":
        return embed(n, {t[0]: P0}) + embed(n, {t[0]: P1, t[1]: X})
    if k == "CZ":
        return embed(n, {t[0]: P0}) + embed(n, {t[0]: P1, t[1]: Z})
    return expm(-0.5j * theta * embed(n, {t[0]: Z, t[1]: Z}))


gate_strategy = st.tuples(
    st.sampled_from(C.GATE_KINDS), st.integers(0, 3), st.integers(1, 3), st.floats(-7, 7)
)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.lists(gate_strategy, min_size=1, max_size=12))
def test_simulator_matches_dense_kron_oracle(n, gates):
    c = C.Circuit(n)
    for kind, a, off, theta in gates:
        a %= n
        targets = (a,) if kind in C.ONE_QUBIT else (a, (a + off % (n - 1) + 1) % n) if n > 1 else (a,)
        if len(targets) == 2 and targets[0] == targets[1]:
            continue
        c.add(kind, *targets, param=theta if kind in C.PARAMETRIC else None)
    psi = C.simulate(c).amplitudes
    ref = np.zeros(2**n, dtype=complex)
    ref[0] = 1
    for g in c.gates:
        ref = dense_gate(n, g, g.param) @ ref
    assert np.allclose(psi, ref, atol=1e-10)


def test_qubit_zero_is_least_significant():
    s = C.simulate(C.Circuit(3).add("X", 0))
    assert np.argmax(np.abs(s.amplitudes)) == 1
    s = C.simulate(C.Circuit(3).add("X", 2))
    assert np.argmax(np.abs(s.amplitudes)) == 4


def test_bell_state():
    s = C.simulate(C.bell_template())
    assert np.allclose(s.amplitudes, [1 / math.sqrt(2), 0, 0, 1 / math.sqrt(2)])


def test_batched_run_matches_single_runs():
    c = C.qcnn_ansatz(3, 2)
    rng = np.random.default_rng(0)
    vals = {s: rng.uniform(0, 2 * math.pi, 5) for s in c.symbols()}
    batch = C.run_batch(c, vals)
    for b in range(5):
        one = C.simulate(c, {s: v[b] for s, v in vals.items()})
        assert np.allclose(batch[b], one.amplitudes, atol=1e-12)


def test_unbound_symbol_and_bad_gates():
    c = C.Circuit(2).add("RX", 0, param="a")
    with pytest.raises(C.UnboundSymbol):
        C.simulate(c)
    with pytest.raises(ValueError):
        C.Circuit(2).add("CNOT", 0, 0)
    with pytest.raises(ValueError):
        C.Circuit(2).add("RX", 5, param=0.1)
    with pytest.raises(ValueError):
        C.Circuit(2).add("TOFFOLI", 0, 1)
    with pytest.raises(ValueError):
        C.Circuit(C.MAX_QUBITS + 1)


def test_text_roundtrip_and_relabel():
    c = C.qcnn_ansatz(3, 2).add("RZZ", 0, 2, param=0.1 + 1e-15)
    back = C.Circuit.from_text(c.to_text())
    assert back.to_text() == c.to_text() and back.gates == c.gates
    r = C.Circuit(2).add("X", 0).relabel([1, 0])
    assert np.argmax(np.abs(C.simulate(r).amplitudes)) == 2


def test_strongly_entangling_layer_structure():
    for n in range(2, 7):
        layer = C.strongly_entangling_layer(n, 0)
        assert len(layer.symbols()) == 3 * n
        assert layer.counts()["CNOT"] == n
        assert layer.two_qubit_count == n
    ring = [g.targets for g in C.strongly_entangling_layer(4, 1).gates if g.kind == "CNOT"]
    assert ring == [(0, 2), (1, 3), (2, 0), (3, 1)]
    c = C.qcnn_ansatz(4, 3)
    assert len(c.symbols()) == 36 and c.counts()["H"] == 4


def test_depth_counts_parallel_layers():
    c = C.Circuit(3).add("H", 0).add("H", 1).add("CNOT", 0, 1).add("H", 2)
    assert c.depth() == 2


# -- expressibility ---------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=30), st.integers(0, 2**32))
def test_js_divergence_matches_scipy(p, seed):
    p = np.asarray(p)
    if p.sum() == 0:
        return
    q = np.random.default_rng(seed).random(len(p))
    p, q = p / p.sum(), q / q.sum()
    assert C.js_divergence(p, q) == pytest.approx(jensenshannon(p, q, base=2) ** 2, abs=1e-12)
    assert 0 <= C.js_divergence(p, q) <= 1
    assert C.js_divergence(p, p) == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_haar_bins_match_integrated_pdf(n):
    probs = C.haar_bin_probabilities(20, n)
    assert probs.sum() == pytest.approx(1.0)
    for k in (0, 7, 19):
        ref, _ = quad(lambda f: C.haar_fidelity_pdf(f, n), k / 20, (k + 1) / 20)
        assert probs[k] == pytest.approx(ref, rel=1e-8, abs=1e-14)


def test_haar_sampled_fidelities_follow_pdf():
    rng = np.random.default_rng(4)
    a, b = C.haar_states(2, 20000, rng), C.haar_states(2, 20000, rng)
    f = np.abs(np.einsum("ij,ij->i", a.conj(), b)) ** 2
    assert f.mean() == pytest.approx(1 / 4, abs=0.01)
    hist = C.fidelity_histogram(f, 75)
    assert 1 - C.js_divergence(hist.probabilities(), C.haar_bin_probabilities(75, 2)) > 0.99


def test_expressibility_extremes():
    assert C.expressibility(C.euler_template(), 5000, 75, seed=1) > 0.99
    assert C.expressibility(C.bell_template(), 1000, 75) < 0.5
    with pytest.raises(ValueError):
        C.expressibility(C.euler_template(), bins=0)
    with pytest.raises(ValueError):
        C.expressibility(C.euler_template(), n_pairs=10)


# -- Meyer-Wallach ----------------------------------------------------------


def ghz(n):
    amp = np.zeros(2**n, dtype=complex)
    amp[0] = amp[-1] = 1 / math.sqrt(2)
    return C.Statevector(amp, n)


def test_mw_reference_states():
    assert C.meyer_wallach(C.Statevector.zero(3)) == pytest.approx(0, abs=1e-15)
    for n in (2, 3, 5):
        assert C.meyer_wallach(ghz(n)) == pytest.approx(1.0)
        assert C.meyer_wallach(ghz(n), "von_neumann") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        C.meyer_wallach(C.Statevector.zero(1))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32))
def test_mw_purity_and_distance_forms_agree(n, seed):
    psi = C.haar_states(n, 1, np.random.default_rng(seed))[0]
    s = C.Statevector(psi, n)
    assert C.meyer_wallach(s) == pytest.approx(C.meyer_wallach_distance_form(s), abs=1e-10)
    assert -1e-12 <= C.meyer_wallach(s) <= 1 + 1e-12


@pytest.mark.parametrize("n", [2, 3, 4])
def test_mw_haar_average(n):
    # E tr(rho^2) = (dA + dB) / (dA dB + 1) for a 2 x 2^(n-1) split
    d = 2**n
    expected = (d - 2) / (d + 1)
    states = C.haar_states(n, 4000, np.random.default_rng(n))
    mean = np.mean([C.meyer_wallach(C.Statevector(s, n)) for s in states])
    assert mean == pytest.approx(expected, abs=0.02)


def test_mw_of_template_product_vs_entangling():
    product = C.Circuit(3)
    for q in range(3):
        product.add("RY", q, param=f"t{q}")
    assert C.mw_of_template(product, 200) == pytest.approx(0, abs=1e-12)
    assert C.mw_of_template(C.qcnn_ansatz(4, 2), 300) > 0.5
