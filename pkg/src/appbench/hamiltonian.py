"""Lattice Hamiltonians, Trotterized dynamics and adiabatic preparation.

Fermions are encoded with Jordan–Wigner: mode ``m`` is qubit ``m``, with
modes ordered spin-major (all spin-up sites, then spin-down) and sites
row-major. An occupied mode is ``|1>``, so ``n = (1 - Z) / 2``.

Noise is simulated with Pauli trajectories: after every two-qubit gate,
each trajectory suffers a uniformly random non-identity two-qubit Pauli
with probability ``p``. The random draws do not depend on ``p``, so runs
that share a seed see nested error sets as ``p`` grows.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.linalg import eigsh, expm_multiply

from appbench.circuits import TWO_QUBIT, Circuit, Statevector, apply_gate
from appbench.pipeline import PayloadKind, register_payload_type
from appbench.seeding import derive_seed

# -- lattices ---------------------------------------------------------------


@dataclass(frozen=True)
class Lattice:
    kind: str
    n_sites: int
    edges: tuple[tuple[int, int], ...]
    shape: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        norm = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError("self-pair in lattice")
            if not (0 <= i < self.n_sites and 0 <= j < self.n_sites):
                raise ValueError("edge endpoint out of range")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    def neighbors(self) -> list[tuple[int, int]]:
        """Both orientations of every bond."""
        return sorted(self.edges + tuple((j, i) for i, j in self.edges))

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_sites))
        g.add_edges_from(self.edges)
        return g

    def cdw_sites(self) -> list[int]:
        """Initially occupied sites of the charge-density wave.

        Bipartite lattices use their sublattice containing site 0 (even
        ``i`` on a chain, even ``r + c`` on a square grid); otherwise even
        site indices.
        """
        if self.kind == "square":
            cols = self.shape[1]
            return [s for s in range(self.n_sites) if (s // cols + s % cols) % 2 == 0]
        return list(range(0, self.n_sites, 2))

    def perfect_matching(self) -> list[tuple[int, int]]:
        m = nx.max_weight_matching(self.graph(), maxcardinality=True)
        if 2 * len(m) != self.n_sites:
            raise ValueError(f"{self.kind} lattice with {self.n_sites} sites has no perfect matching")
        return sorted((min(a, b), max(a, b)) for a, b in m)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_sites": self.n_sites, "edges": [list(e) for e in self.edges], "shape": list(self.shape)}


def chain(n: int) -> Lattice:
    if n < 1:
        raise ValueError("chain needs at least one site")
    return Lattice("chain", n, tuple((i, i + 1) for i in range(n - 1)), (n,))


def square(rows: int, cols: int) -> Lattice:
    edges = []
    for r in range(rows):
        for c in range(cols):
            s = r * cols + c
            if c + 1 < cols:
                edges.append((s, s + 1))
            if r + 1 < rows:
                edges.append((s, s + cols))
    return Lattice("square", rows * cols, tuple(edges), (rows, cols))


def kagome_patch(cells: int | tuple[int, int], n_sites: int | None = None) -> Lattice:
    """Open-boundary kagome patch tiled from three-site unit cells.

    ``cells`` is ``(width, height)`` or a count laid out row by row on a
    grid ``ceil(sqrt(count))`` wide. Cell ``(x, y)`` holds sites A, B, C
    forming a triangle; B links to A of the right neighbour, C to A of the
    upper neighbour and C to B of the upper-left neighbour. ``n_sites``
    truncates to the first sites (induced subgraph).
    """
    if isinstance(cells, int):
        if cells < 1:
            raise ValueError("need at least one cell")
        width = math.isqrt(cells - 1) + 1
        coords = [(k % width, k // width) for k in range(cells)]
    else:
        coords = [(x, y) for y in range(cells[1]) for x in range(cells[0])]
    index = {xy: 3 * k for k, xy in enumerate(coords)}
    edges = []
    for (x, y), a in index.items():
        b, c = a + 1, a + 2
        edges += [(a, b), (a, c), (b, c)]
        if (x + 1, y) in index:
            edges.append((b, index[(x + 1, y)]))
        if (x, y + 1) in index:
            edges.append((c, index[(x, y + 1)]))
        if (x - 1, y + 1) in index:
            edges.append((c, index[(x - 1, y + 1)] + 1))
    total = 3 * len(coords)
    if n_sites is not None:
        if not 1 <= n_sites <= total:
            raise ValueError("n_sites out of range for the patch")
        edges = [e for e in edges if max(e) < n_sites]
        total = n_sites
    return Lattice("kagome_patch", total, tuple(edges), (len(coords),))


# -- Pauli algebra ----------------------------------------------------------


@dataclass(frozen=True)
class PauliTerm:
    coeff: float
    ops: tuple[tuple[int, str], ...]

    def __post_init__(self) -> None:
        ops = tuple(sorted(self.ops))
        qs = [q for q, _ in ops]
        if len(set(qs)) != len(qs):
            raise ValueError("repeated qubit in Pauli string")
        if any(p not in "XYZ" for _, p in ops):
            raise ValueError("Pauli letters must be X, Y or Z")
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "coeff", float(self.coeff))

    @property
    def label(self) -> str:
        return " ".join(f"{p}{q}" for q, p in self.ops) or "I"

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.ops)

    @property
    def diagonal(self) -> bool:
        return all(p == "Z" for _, p in self.ops)

    def scaled(self, s: float) -> "PauliTerm":
        return PauliTerm(self.coeff * s, self.ops)


def pauli(coeff: float, label: str) -> PauliTerm:
    """``pauli(0.5, "X0 X1")``."""
    ops = [] if label.strip() in ("", "I") else [(int(tok[1:]), tok[0]) for tok in label.split()]
    return PauliTerm(coeff, tuple(ops))


@lru_cache(maxsize=4096)
def _pauli_action(n: int, ops: tuple[tuple[int, str], ...]) -> tuple[np.ndarray, np.ndarray]:
    """Permutation and phase with ``(P psi)[b ^ m] = phase[b] psi[b]``."""
    flip = sign_mask = n_y = 0
    for q, p in ops:
        if p in "XY":
            flip |= 1 << q
        if p in "YZ":
            sign_mask |= 1 << q
        n_y += p == "Y"
    idx = np.arange(2**n)
    parity = np.zeros(2**n, dtype=np.int64)
    masked = idx & sign_mask
    while masked.any():
        parity ^= masked & 1
        masked >>= 1
    phase = (1j**n_y) * (1.0 - 2.0 * parity)
    return idx ^ flip, phase


def apply_pauli(psi: np.ndarray, n: int, term: PauliTerm) -> np.ndarray:
    """``P psi`` (coefficient not applied) for 1-D or batched ``psi``."""
    perm, phase = _pauli_action(n, term.ops)
    return (psi * phase)[..., perm]


@dataclass
class HamiltonianSpec:
    model: str
    lattice: Lattice
    terms: list[PauliTerm]
    n_qubits: int
    params: dict = field(default_factory=dict)
    grouping: str = "kind"

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "grouping": self.grouping,
            "lattice": self.lattice.to_dict(),
            "n_qubits": self.n_qubits,
            "params": dict(self.params),
            "encoding": "jordan-wigner" if self.model == "hubbard" else "spin",
            "terms": [[t.coeff, t.label] for t in self.terms],
        }


def _collect(terms: Iterable[PauliTerm]) -> list[PauliTerm]:
    acc: dict[tuple, float] = {}
    for t in terms:
        acc[t.ops] = acc.get(t.ops, 0.0) + t.coeff
    return [PauliTerm(c, ops) for ops, c in acc.items() if c != 0.0]


def build_hubbard(lattice: Lattice, t: float = 1.0, v: float = 0.0, spin: str = "spinless") -> HamiltonianSpec:
    """``-t sum_<ij>,s (c+_i c_j + h.c.) + V sum (n n' - 1/4)`` under Jordan–Wigner.

    Spinful: the interaction is on-site, ``n_up n_down``. Spinless: there is
    no second spin species, so ``V`` couples nearest-neighbour densities
    ``n_i n_j`` instead. Either way ``n n' - 1/4 = (Z Z' - Z - Z') / 4``.
    """
    if spin not in ("spinless", "spinful"):
        raise ValueError("spin must be 'spinless' or 'spinful'")
    ns = lattice.n_sites
    species = 2 if spin == "spinful" else 1
    terms: list[PauliTerm] = []
    for s in range(species):
        for i, j in lattice.edges:
            a, b = s * ns + i, s * ns + j
            tail = tuple((k, "Z") for k in range(a + 1, b))
            for p in "XY":
                terms.append(PauliTerm(-0.5 * t, ((a, p), *tail, (b, p))))
    if v != 0.0:
        pairs = [(i, ns + i) for i in range(ns)] if species == 2 else list(lattice.edges)
        for a, b in pairs:
            terms += [
                PauliTerm(v / 4, ((a, "Z"), (b, "Z"))),
                PauliTerm(-v / 4, ((a, "Z"),)),
                PauliTerm(-v / 4, ((b, "Z"),)),
            ]
    return HamiltonianSpec(
        "hubbard", lattice, _collect(terms), species * ns, {"t": t, "V": v, "spin": spin}
    )


def build_heisenberg(lattice: Lattice, j: float = 1.0) -> HamiltonianSpec:
    """``-j sum_<ij> (X X + Y Y + Z Z)``; ``j = 1`` is the ferromagnetic
    convention, ``j = -1`` the antiferromagnet."""
    terms = [
        PauliTerm(-j, ((a, p), (b, p))) for a, b in lattice.edges for p in "XYZ"
    ]
    return HamiltonianSpec("heisenberg", lattice, terms, lattice.n_sites, {"j": j}, grouping="bond")


def hamiltonian_matrix(h: HamiltonianSpec | Sequence[PauliTerm], n_qubits: int | None = None) -> sp.csr_matrix:
    terms = h.terms if isinstance(h, HamiltonianSpec) else list(h)
    n = h.n_qubits if isinstance(h, HamiltonianSpec) else n_qubits
    dim = 2**n
    idx = np.arange(dim)
    out = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for t in terms:
        perm, phase = _pauli_action(n, t.ops)
        out = out + sp.csr_matrix((t.coeff * phase, (perm, idx)), shape=(dim, dim))
    return out


def energy_expectation(state: Statevector | np.ndarray, h: HamiltonianSpec):
    """``<psi|H|psi>``; batched rows give an array."""
    psi = state.amplitudes if isinstance(state, Statevector) else np.asarray(state)
    if psi.shape[-1] != 2**h.n_qubits:
        raise ValueError("state dimension does not match the Hamiltonian")
    total = 0.0
    for t in h.terms:
        total = total + t.coeff * np.sum(psi.conj() * apply_pauli(psi, h.n_qubits, t), axis=-1)
    imag = np.max(np.abs(np.imag(total)))
    scale = max(1.0, float(np.max(np.abs(total))))
    if imag > 1e-10 * scale:
        raise ArithmeticError(f"energy has imaginary part {imag:g}")
    return np.real(total) if np.ndim(total) else float(np.real(total))


def ground_energy(h: HamiltonianSpec, method: str = "lanczos") -> float:
    m = hamiltonian_matrix(h)
    if method == "dense" or m.shape[0] <= 16:
        return float(np.linalg.eigvalsh(m.toarray())[0])
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    vals = eigsh(m, k=1, which="SA", tol=1e-12, return_eigenvectors=False)
    return float(vals[0])


def exact_evolve(h: HamiltonianSpec, psi0: np.ndarray, time: float) -> np.ndarray:
    return expm_multiply(-1j * time * hamiltonian_matrix(h).tocsc(), np.asarray(psi0, dtype=np.complex128))


# -- Trotter circuits -------------------------------------------------------


def term_order(terms: Sequence[PauliTerm], grouping: str = "kind") -> list[PauliTerm]:
    """Fixed Trotter order.

    ``"kind"``: off-diagonal (hopping, XX/YY) terms first, then diagonal
    ones. ``"bond"``: terms grouped by support, XX/YY before ZZ within a
    group; a Heisenberg bond's terms commute, so each bond is exact.
    """
    if grouping == "kind":
        return sorted(terms, key=lambda t: t.diagonal)
    if grouping == "bond":
        return sorted(terms, key=lambda t: (t.support, t.diagonal))
    raise ValueError(f"unknown grouping {grouping!r}")


def append_pauli_rotation(c: Circuit, term: PauliTerm, angle: float) -> None:
    """Append ``exp(-i angle P)`` for the string of ``term`` (coefficient ignored)."""
    if not term.ops:
        return
    for q, p in term.ops:
        if p == "X":
            c.add("H", q)
        elif p == "Y":
            c.add("RX", q, param=math.pi / 2)
    qs = term.support
    if len(qs) == 1:
        c.add("RZ", qs[0], param=2 * angle)
    elif len(qs) == 2:
        c.add("RZZ", qs[0], qs[1], param=2 * angle)
    else:
        for a, b in zip(qs, qs[1:]):
            c.add("CNOT", a, b)
        c.add("RZ", qs[-1], param=2 * angle)
        for a, b in reversed(list(zip(qs, qs[1:]))):
            c.add("CNOT", a, b)
    for q, p in term.ops:
        if p == "X":
            c.add("H", q)
        elif p == "Y":
            c.add("RX", q, param=-math.pi / 2)


def trotter_step_circuit(
    h: HamiltonianSpec | Sequence[PauliTerm], dt: float, n_qubits: int | None = None, grouping: str | None = None
) -> Circuit:
    """One first-order Trotter step ``prod_k exp(-i c_k dt P_k)``."""
    if not math.isfinite(dt):
        raise ValueError("dt must be finite")
    if isinstance(h, HamiltonianSpec):
        terms, n, grouping = h.terms, h.n_qubits, grouping or h.grouping
    else:
        terms, n = list(h), n_qubits
    c = Circuit(n)
    for t in term_order(terms, grouping or "kind"):
        append_pauli_rotation(c, t, t.coeff * dt)
    return c


# -- noisy execution --------------------------------------------------------

_TWO_QUBIT_PAULIS = [(a, b) for a in "IXYZ" for b in "IXYZ"][1:]


@dataclass(frozen=True)
class NoiseModel:
    p: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("noise probability must lie in [0, 1]")


def run_trajectories(
    circuits: Iterable[Circuit], psi: np.ndarray, n: int, noise: NoiseModel, rng: np.random.Generator
) -> np.ndarray:
    """Advance each row of ``psi`` through the circuits with Pauli noise."""
    b = psi.shape[0]
    for c in circuits:
        for g in c.gates:
            psi = apply_gate(psi, n, g, g.param)
            if g.kind not in TWO_QUBIT:
                continue
            u = rng.random(b)
            k = rng.integers(0, 15, b)
            hit = u < noise.p
            if not hit.any():
                continue
            q0, q1 = g.targets
            for choice in np.unique(k[hit]):
                rows = np.flatnonzero(hit & (k == choice))
                pa, pb = _TWO_QUBIT_PAULIS[choice]
                ops = tuple((q, p) for q, p in ((q0, pa), (q1, pb)) if p != "I")
                psi[rows] = apply_pauli(psi[rows], n, PauliTerm(1.0, ops))
    return psi


@dataclass
class Trace:
    observable: str
    rows: list[dict]
    meta: dict = field(default_factory=dict)

    def values(self) -> list[float]:
        return [r["observable"] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["steps", "observable", "stderr", "p", "shots", "seed"]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in cols])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"observable": self.observable, "rows": self.rows, "meta": self.meta}


def _steps_list(steps: int | Sequence[int]) -> list[int]:
    out = [steps] if isinstance(steps, (int, np.integer)) else list(steps)
    if not out or any(int(s) < 1 for s in out):
        raise ValueError("steps must be >= 1")
    return [int(s) for s in out]


def _check_shots(noise: NoiseModel, shots: int) -> int:
    if noise.p > 0 and shots < 1:
        raise ValueError("noisy runs need shots >= 1")
    return shots if noise.p > 0 else 1


def basis_index(occupied_modes: Iterable[int]) -> int:
    return sum(1 << m for m in occupied_modes)


def cdw_modes(h: HamiltonianSpec) -> tuple[list[int], list[int]]:
    """Modes on the initially occupied and unoccupied sublattices."""
    ns = h.lattice.n_sites
    species = h.n_qubits // ns
    occ_sites = set(h.lattice.cdw_sites())
    occ = [s * ns + i for s in range(species) for i in range(ns) if i in occ_sites]
    unocc = [s * ns + i for s in range(species) for i in range(ns) if i not in occ_sites]
    return occ, unocc


def _occupations(psi: np.ndarray, n: int) -> np.ndarray:
    """``<n_m>`` per row and mode, shape ``(batch, n)``."""
    probs = np.abs(psi) ** 2
    bits = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    return probs @ bits


def evolve_dynamics(
    h: HamiltonianSpec,
    total_time: float,
    steps: int | Sequence[int],
    noise: NoiseModel = NoiseModel(),
    shots: int = 1000,
    seed: int = 0,
) -> Trace:
    """Imbalance of a charge-density wave after Trotterized evolution.

    For each step count ``k`` the CDW state evolves under ``k`` Trotter
    steps of ``dt = total_time / k``. The imbalance is
    ``(N_occ - N_unocc) / (N_occ + N_unocc)`` from mean sublattice
    occupations (averaged over trajectories when noisy).
    """
    shots = _check_shots(noise, shots)
    n = h.n_qubits
    occ, unocc = cdw_modes(h)
    rows = []
    for k in _steps_list(steps):
        step = trotter_step_circuit(h, total_time / k)
        psi = np.zeros((shots, 2**n), dtype=np.complex128)
        psi[:, basis_index(occ)] = 1.0
        psi = run_trajectories([step] * k, psi, n, noise, np.random.default_rng(derive_seed(seed, k)))
        nocc = _occupations(psi, n)
        a = nocc[:, occ].sum(axis=1)
        b = nocc[:, unocc].sum(axis=1)
        ma, mb = math.fsum(a) / shots, math.fsum(b) / shots
        value = (ma - mb) / (ma + mb)
        # delta-method error of a ratio of means
        resid = (a - b) - value * (a + b)
        err = float(np.std(resid, ddof=1) / math.sqrt(shots) / (ma + mb)) if shots > 1 else 0.0
        rows.append({"steps": k, "observable": value, "stderr": err, "p": noise.p, "shots": shots, "seed": seed})
    meta = {"T": total_time, "encoding": "jordan-wigner", "n_qubits": n, "gates_per_step": step.counts()}
    return Trace("imbalance", rows, meta)


def free_fermion_oracle(lattice: Lattice, t: float, occupation: Sequence[float], time: float) -> np.ndarray:
    """Exact ``<n_i(T)>`` for non-interacting spinless fermions.

    ``c_i(T) = sum_j U_ij c_j`` with ``U = exp(-i h T)`` and the
    single-particle hopping matrix ``h_ij = -t`` on bonds, so for a
    localized product state ``<n_i(T)> = sum_j |U_ij|^2 n_j``.
    """
    occ = np.asarray(occupation, dtype=float)
    if occ.shape != (lattice.n_sites,):
        raise ValueError("occupation must have one entry per site")
    hsp = np.zeros((lattice.n_sites, lattice.n_sites))
    for i, j in lattice.edges:
        hsp[i, j] = hsp[j, i] = -t
    u = expm(-1j * time * hsp)
    return (np.abs(u) ** 2) @ occ


def cdw_imbalance(lattice: Lattice, occupations: np.ndarray) -> float:
    occ_sites = set(lattice.cdw_sites())
    a = sum(occupations[i] for i in range(lattice.n_sites) if i in occ_sites)
    b = sum(occupations[i] for i in range(lattice.n_sites) if i not in occ_sites)
    return float((a - b) / (a + b))


# -- adiabatic preparation --------------------------------------------------


def dimer_terms(h: HamiltonianSpec, dimers: Sequence[tuple[int, int]]) -> list[PauliTerm]:
    pairs = {tuple(sorted(d)) for d in dimers}
    return [t for t in h.terms if len(t.support) == 2 and t.support in pairs]


def dimer_state(h: HamiltonianSpec, dimers: Sequence[tuple[int, int]]) -> np.ndarray:
    """Product of two-qubit ground states of each dimer's terms.

    Degenerate ground spaces are resolved by projecting computational
    basis states ``|00>, |01>, ...`` in order and keeping the first with
    non-zero overlap, which makes the choice deterministic.
    """
    n = h.n_qubits
    psi = np.zeros(2**n, dtype=np.complex128)
    psi[0] = 1.0
    local: list[tuple[tuple[int, int], np.ndarray]] = []
    for a, b in dimers:
        sub = [PauliTerm(t.coeff, tuple((0 if q == a else 1, p) for q, p in t.ops)) for t in dimer_terms(h, [(a, b)])]
        m = hamiltonian_matrix(sub, 2).toarray()
        w, v = np.linalg.eigh(m)
        ground = v[:, np.abs(w - w[0]) < 1e-9]
        for basis in range(4):
            proj = ground @ ground.conj().T[:, basis]
            if np.linalg.norm(proj) > 1e-9:
                local.append(((a, b), proj / np.linalg.norm(proj)))
                break
    tensor = psi.reshape([2] * n)
    for (a, b), vec in local:
        # vec index = bit_a + 2 * bit_b; tensor axis for qubit q is n - 1 - q
        block = vec.reshape(2, 2).T  # [bit_a, bit_b]
        ax_a, ax_b = n - 1 - a, n - 1 - b
        idx = [slice(None)] * n
        idx[ax_a] = 0
        idx[ax_b] = 0
        base = tensor[tuple(idx)].copy()
        tensor = np.zeros_like(tensor)
        for ba in range(2):
            for bb in range(2):
                idx[ax_a], idx[ax_b] = ba, bb
                tensor[tuple(idx)] = block[ba, bb] * base
    return tensor.reshape(-1)


def adiabatic_circuits(h_final: HamiltonianSpec, h_init: Sequence[PauliTerm], steps: int, total_time: float) -> list[Circuit]:
    """Linear schedule ``s_j = j / steps``, one Trotter step of ``H(s_j)`` each."""
    dt = total_time / steps
    out = []
    for j in range(1, steps + 1):
        s = j / steps
        terms = [t.scaled(1 - s) for t in h_init] + [t.scaled(s) for t in h_final.terms]
        out.append(trotter_step_circuit(_collect(terms), dt, h_final.n_qubits, h_final.grouping))
    return out


def adiabatic_prepare(
    h_final: HamiltonianSpec,
    steps: int | Sequence[int],
    total_time: float,
    noise: NoiseModel = NoiseModel(),
    shots: int = 100,
    seed: int = 0,
    dimers: Sequence[tuple[int, int]] | None = None,
) -> Trace:
    """Energy density ``<H_final> / n_sites`` after adiabatic evolution.

    ``H_init`` keeps only the terms of ``h_final`` inside a dimer cover of
    the lattice (a perfect matching unless ``dimers`` is given); the
    initial state is its ground state.
    """
    shots = _check_shots(noise, shots)
    if dimers is None:
        dimers = h_final.lattice.perfect_matching()
    h_init = dimer_terms(h_final, dimers)
    psi0 = dimer_state(h_final, dimers)
    n = h_final.n_qubits
    sites = h_final.lattice.n_sites
    rows = []
    for k in _steps_list(steps):
        psi = np.tile(psi0, (shots, 1))
        psi = run_trajectories(
            adiabatic_circuits(h_final, h_init, k, total_time), psi, n, noise, np.random.default_rng(derive_seed(seed, k))
        )
        e = np.asarray(energy_expectation(psi, h_final)) / sites
        value = math.fsum(e) / shots
        err = float(np.std(e, ddof=1) / math.sqrt(shots)) if shots > 1 else 0.0
        rows.append({"steps": k, "observable": value, "stderr": err, "p": noise.p, "shots": shots, "seed": seed})
    meta = {"total_time": total_time, "dimers": [list(d) for d in dimers], "n_qubits": n}
    return Trace("energy_density", rows, meta)


register_payload_type(HamiltonianSpec, PayloadKind.HAMILTONIAN_SPEC)
