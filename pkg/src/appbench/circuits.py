"""Dense statevector simulation and parametrized-circuit metrics.

Qubit ``q`` is bit ``q`` of the basis-state index (qubit 0 is the least
significant bit). Rotation gates are ``R_P(theta) = exp(-i theta P / 2)``
and ``RZZ(theta) = exp(-i theta Z Z / 2)``.

Kernels act on arrays of shape ``(batch, 2**n)`` so that many parameter
assignments or noise trajectories advance together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from appbench.pipeline import PayloadKind, register_payload_type

MAX_QUBITS = 24
ONE_QUBIT = ("H", "X", "RX", "RY", "RZ")
TWO_QUBIT = ("CNOT", "CZ", "RZZ")
PARAMETRIC = ("RX", "RY", "RZ", "RZZ")
GATE_KINDS = ONE_QUBIT + TWO_QUBIT


class UnboundSymbol(KeyError):
    pass


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    param: float | str | None = None


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must lie in 1..{MAX_QUBITS}")
        gates, self.gates = self.gates, []
        for g in gates:
            self.add(g.kind, *g.targets, param=g.param)

    def add(self, kind: str, *targets: int, param: float | str | None = None) -> "Circuit":
        kind = kind.upper()
        if kind not in GATE_KINDS:
            raise ValueError(f"unknown gate {kind!r}")
        arity = 2 if kind in TWO_QUBIT else 1
        targets = tuple(int(t) for t in targets)
        if len(targets) != arity:
            raise ValueError(f"{kind} takes {arity} target(s)")
        if any(not 0 <= t < self.n_qubits for t in targets):
            raise ValueError(f"target out of range for {self.n_qubits} qubits")
        if arity == 2 and targets[0] == targets[1]:
            raise ValueError("two-qubit gate needs distinct targets")
        if (kind in PARAMETRIC) != (param is not None):
            raise ValueError(f"{kind} parameter mismatch")
        if isinstance(param, (int, float, np.floating)):
            param = float(param)
        self.gates.append(Gate(kind, targets, param))
        return self

    def extend(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        self.gates.extend(other.gates)
        return self

    def symbols(self) -> list[str]:
        seen: dict[str, None] = {}
        for g in self.gates:
            if isinstance(g.param, str):
                seen.setdefault(g.param)
        return list(seen)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for g in self.gates:
            out[g.kind] = out.get(g.kind, 0) + 1
        return out

    @property
    def two_qubit_count(self) -> int:
        return sum(1 for g in self.gates if g.kind in TWO_QUBIT)

    def depth(self) -> int:
        level = [0] * self.n_qubits
        for g in self.gates:
            d = max(level[t] for t in g.targets) + 1
            for t in g.targets:
                level[t] = d
        return max(level, default=0)

    def relabel(self, perm: Sequence[int]) -> "Circuit":
        """Copy with qubit ``q`` renamed to ``perm[q]``."""
        out = Circuit(self.n_qubits)
        for g in self.gates:
            out.add(g.kind, *(perm[t] for t in g.targets), param=g.param)
        return out

    def to_text(self) -> str:
        lines = [f"qubits {self.n_qubits}"]
        for g in self.gates:
            parts = [g.kind, *map(str, g.targets)]
            if isinstance(g.param, float):
                parts.append(format(g.param, ".17g"))
            elif g.param is not None:
                parts.append(g.param)
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows or rows[0][0] != "qubits":
            raise ValueError("circuit text must start with 'qubits N'")
        c = cls(int(rows[0][1]))
        for row in rows[1:]:
            kind = row[0].upper()
            arity = 2 if kind in TWO_QUBIT else 1
            targets = [int(t) for t in row[1 : 1 + arity]]
            param = None
            if len(row) > 1 + arity:
                raw = row[1 + arity]
                try:
                    param = float(raw)
                except ValueError:
                    param = raw
            c.add(kind, *targets, param=param)
        return c

    def to_dict(self) -> dict:
        return {"n_qubits": self.n_qubits, "text": self.to_text(), "depth": self.depth()}


@dataclass
class Statevector:
    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError("amplitude count must be 2**n_qubits")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def zero(cls, n: int) -> "Statevector":
        a = np.zeros(2**n, dtype=np.complex128)
        a[0] = 1.0
        return cls(a, n)

    @classmethod
    def basis(cls, n: int, index: int) -> "Statevector":
        a = np.zeros(2**n, dtype=np.complex128)
        a[index] = 1.0
        return cls(a, n)

    def to_dict(self) -> dict:
        return {"n_qubits": self.n_qubits, "amplitudes": self.amplitudes}


# -- kernels ----------------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def rotation(kind: str, theta) -> np.ndarray:
    """2x2 rotation matrix (or a ``(B, 2, 2)`` stack for array ``theta``)."""
    t = np.asarray(theta, dtype=float)
    c, s = np.cos(t / 2), np.sin(t / 2)
    m = np.zeros(t.shape + (2, 2), dtype=np.complex128)
    if kind == "RX":
        m[..., 0, 0] = c
        m[..., 1, 1] = c
        m[..., 0, 1] = -1j * s
        m[..., 1, 0] = -1j * s
    elif kind == "RY":
        m[..., 0, 0] = c
        m[..., 1, 1] = c
        m[..., 0, 1] = -s
        m[..., 1, 0] = s
    elif kind == "RZ":
        m[..., 0, 0] = np.exp(-0.5j * t)
        m[..., 1, 1] = np.exp(0.5j * t)
    else:
        raise ValueError(kind)
    return m


def apply_1q(psi: np.ndarray, n: int, q: int, u: np.ndarray) -> np.ndarray:
    """Apply ``u`` (2x2, or one 2x2 per batch row) to qubit ``q`` in place."""
    b = psi.shape[0]
    v = psi.reshape(b, 2 ** (n - q - 1), 2, 2**q)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    if u.ndim == 2:
        v[:, :, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
        v[:, :, 1, :] = u[1, 0] * a0 + u[1, 1] * a1
    else:
        uu = u[:, :, :, None, None]
        v[:, :, 0, :] = uu[:, 0, 0] * a0 + uu[:, 0, 1] * a1
        v[:, :, 1, :] = uu[:, 1, 0] * a0 + uu[:, 1, 1] * a1
    return psi


@lru_cache(maxsize=256)
def _bit(n: int, q: int) -> np.ndarray:
    return (np.arange(2**n) >> q) & 1


@lru_cache(maxsize=256)
def _cnot_perm(n: int, c: int, t: int) -> np.ndarray:
    idx = np.arange(2**n)
    return idx ^ (((idx >> c) & 1) << t)


@lru_cache(maxsize=256)
def _zz_sign(n: int, a: int, b: int) -> np.ndarray:
    return 1.0 - 2.0 * (_bit(n, a) ^ _bit(n, b))


def apply_gate(psi: np.ndarray, n: int, g: Gate, theta=None) -> np.ndarray:
    """Apply one gate to a ``(batch, 2**n)`` array; returns the result."""
    k = g.kind
    if k == "H":
        return apply_1q(psi, n, g.targets[0], _H)
    if k == "X":
        return apply_1q(psi, n, g.targets[0], _X)
    if k in ("RX", "RY", "RZ"):
        return apply_1q(psi, n, g.targets[0], rotation(k, theta))
    if k == "CNOT":
        return psi[:, _cnot_perm(n, *g.targets)]
    if k == "CZ":
        both = _bit(n, g.targets[0]) & _bit(n, g.targets[1])
        psi *= 1.0 - 2.0 * both
        return psi
    if k == "RZZ":
        sign = _zz_sign(n, *g.targets)
        t = np.asarray(theta, dtype=float)
        phase = np.exp(-0.5j * np.multiply.outer(t, sign))
        psi *= phase if phase.ndim == 2 else phase[None, :]
        return psi
    raise ValueError(k)


def run_batch(
    c: Circuit,
    params: Mapping[str, np.ndarray | float] | None = None,
    initial: np.ndarray | None = None,
    batch: int | None = None,
) -> np.ndarray:
    """Simulate ``c`` for a batch; symbol values may be arrays of length B."""
    params = dict(params or {})
    missing = [s for s in c.symbols() if s not in params]
    if missing:
        raise UnboundSymbol(f"unbound symbols: {missing}")
    n = c.n_qubits
    if initial is None:
        size = batch or _batch_size(params)
        psi = np.zeros((size, 2**n), dtype=np.complex128)
        psi[:, 0] = 1.0
    else:
        psi = np.array(np.atleast_2d(initial), dtype=np.complex128)
    for g in c.gates:
        theta = params[g.param] if isinstance(g.param, str) else g.param
        psi = apply_gate(psi, n, g, theta)
    return psi


def _batch_size(params: Mapping) -> int:
    sizes = {np.size(v) for v in params.values() if np.ndim(v) > 0}
    if len(sizes) > 1:
        raise ValueError("inconsistent batch sizes in parameters")
    return sizes.pop() if sizes else 1


def simulate(
    c: Circuit, params: Mapping[str, float] | None = None, initial: Statevector | None = None
) -> Statevector:
    """Apply the gates of ``c`` in order to ``|0...0>`` (or ``initial``)."""
    init = initial.amplitudes if initial is not None else None
    psi = run_batch(c, {k: float(v) for k, v in (params or {}).items()}, init, batch=1)
    return Statevector(psi[0], c.n_qubits)


# -- states and fidelities --------------------------------------------------


def fidelity(a: Statevector, b: Statevector) -> float:
    if a.n_qubits != b.n_qubits:
        raise ValueError("dimension mismatch")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def haar_states(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure states as rows (normalised complex Gaussians)."""
    z = rng.standard_normal((count, 2**n)) + 1j * rng.standard_normal((count, 2**n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def haar_fidelity_pdf(f, n_qubits: int):
    """Density of ``|<a|b>|^2`` for Haar-random states: ``(d-1)(1-F)^(d-2)``."""
    d = 2**n_qubits
    return (d - 1) * (1.0 - np.asarray(f, dtype=float)) ** (d - 2)


def haar_bin_probabilities(bins: int, n_qubits: int) -> np.ndarray:
    """Exact Haar fidelity mass per equal-width bin on ``[0, 1]``."""
    d = 2**n_qubits
    edges = np.linspace(0.0, 1.0, bins + 1)
    cdf_tail = (1.0 - edges) ** (d - 1)
    return cdf_tail[:-1] - cdf_tail[1:]


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen–Shannon divergence in bits (lies in ``[0, 1]``).

    Zero-probability bins contribute nothing; the mixture ``(p + q) / 2``
    is positive wherever either argument is.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / m[nz])))

    return 0.5 * kl(p) + 0.5 * kl(q)


@dataclass(frozen=True)
class FidelityHistogram:
    bins: int
    counts: np.ndarray
    n_samples: int

    def probabilities(self) -> np.ndarray:
        return self.counts / self.n_samples


def fidelity_histogram(fids: np.ndarray, bins: int) -> FidelityHistogram:
    if bins < 1:
        raise ValueError("bins must be positive")
    counts, _ = np.histogram(np.clip(fids, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return FidelityHistogram(bins, counts, int(counts.sum()))


def sample_fidelities(template: Circuit, n_pairs: int, seed: int) -> np.ndarray:
    """Fidelities of ``n_pairs`` state pairs from uniform ``[0, 2pi)`` parameters."""
    rng = np.random.default_rng(seed)
    syms = template.symbols()
    theta = rng.uniform(0.0, 2 * math.pi, size=(2, n_pairs, len(syms)))
    a = run_batch(template, {s: theta[0, :, k] for k, s in enumerate(syms)}, batch=n_pairs)
    b = run_batch(template, {s: theta[1, :, k] for k, s in enumerate(syms)}, batch=n_pairs)
    return np.abs(np.einsum("ij,ij->i", a.conj(), b)) ** 2


def expressibility(template: Circuit, n_pairs: int = 5000, bins: int = 75, seed: int = 0) -> float:
    """``1 - JSD`` between the template's fidelity histogram and Haar's.

    Near 1 means Haar-like output states; near 0 means the template covers
    a tiny region of state space.
    """
    if bins < 1:
        raise ValueError("bins must be positive")
    if n_pairs < 100:
        raise ValueError("n_pairs must be at least 100")
    hist = fidelity_histogram(sample_fidelities(template, n_pairs, seed), bins)
    return 1.0 - js_divergence(hist.probabilities(), haar_bin_probabilities(bins, template.n_qubits))


# -- entanglement -----------------------------------------------------------


def _marginals(psi: np.ndarray, n: int) -> list[np.ndarray]:
    """Single-qubit reduced density matrices."""
    out = []
    for k in range(n):
        v = psi.reshape(2 ** (n - k - 1), 2, 2**k)
        a0, a1 = v[:, 0, :], v[:, 1, :]
        r00 = float(np.sum(np.abs(a0) ** 2))
        r11 = float(np.sum(np.abs(a1) ** 2))
        r01 = complex(np.sum(a0 * a1.conj()))
        out.append(np.array([[r00, r01], [r01.conjugate(), r11]]))
    return out


def meyer_wallach(s: Statevector, entropy: str = "linear") -> float:
    """Meyer–Wallach global entanglement ``2 (1 - mean_k tr(rho_k^2))``.

    ``entropy="von_neumann"`` instead averages the von Neumann entropy (in
    bits) of the single-qubit marginals; kept for comparison only.
    """
    n = s.n_qubits
    if n < 2:
        raise ValueError("Meyer-Wallach needs at least two qubits")
    rhos = _marginals(s.amplitudes, n)
    if entropy == "linear":
        purity = sum(float(np.real(np.trace(r @ r))) for r in rhos)
        return 2.0 * (1.0 - purity / n)
    if entropy == "von_neumann":
        total = 0.0
        for r in rhos:
            ev = np.clip(np.linalg.eigvalsh(r), 0.0, 1.0)
            total -= sum(float(x * math.log2(x)) for x in ev if x > 1e-15)
        return total / n
    raise ValueError(f"unknown entropy {entropy!r}")


def meyer_wallach_distance_form(s: Statevector) -> float:
    """Original wedge-product form ``(4/n) sum_k D(i_k(0) psi, i_k(1) psi)``
    with ``D(u, v) = 1/2 sum_{i,j} |u_i v_j - u_j v_i|^2``."""
    n = s.n_qubits
    total = 0.0
    for k in range(n):
        v = s.amplitudes.reshape(2 ** (n - k - 1), 2, 2**k)
        u = v[:, 0, :].ravel()
        w = v[:, 1, :].ravel()
        m = np.outer(u, w) - np.outer(w, u)
        total += 0.5 * float(np.sum(np.abs(m) ** 2))
    return 4.0 * total / n


def mw_of_template(template: Circuit, n_samples: int = 1000, seed: int = 0) -> float:
    """Mean Meyer–Wallach value over uniform ``[0, 2pi)`` parameter draws."""
    rng = np.random.default_rng(seed)
    syms = template.symbols()
    theta = rng.uniform(0.0, 2 * math.pi, size=(n_samples, len(syms)))
    psi = run_batch(template, {s: theta[:, k] for k, s in enumerate(syms)}, batch=n_samples)
    n = template.n_qubits
    vals = [meyer_wallach(Statevector(row, n)) for row in psi]
    return math.fsum(vals) / len(vals)


# -- ansatz builders --------------------------------------------------------


def strongly_entangling_layer(n_qubits: int, layer_index: int, prefix: str = "w") -> Circuit:
    """Per-qubit RZ, RY, RZ with fresh symbols, then a CNOT ring.

    Qubit ``q`` controls ``(q + r) mod n`` with ``r = layer_index mod (n - 1) + 1``.
    """
    if n_qubits < 2:
        raise ValueError("strongly entangling layer needs at least two qubits")
    c = Circuit(n_qubits)
    for q in range(n_qubits):
        for k, kind in enumerate(("RZ", "RY", "RZ")):
            c.add(kind, q, param=f"{prefix}{layer_index}_{q}_{k}")
    r = layer_index % (n_qubits - 1) + 1
    for q in range(n_qubits):
        c.add("CNOT", q, (q + r) % n_qubits)
    return c


def qcnn_ansatz(n_qubits: int, layers: int) -> Circuit:
    """Hadamard on every qubit followed by ``layers`` strongly entangling layers."""
    c = Circuit(n_qubits)
    for q in range(n_qubits):
        c.add("H", q)
    for layer in range(layers):
        c.extend(strongly_entangling_layer(n_qubits, layer))
    return c


def euler_template() -> Circuit:
    return Circuit(1).add("RZ", 0, param="a").add("RY", 0, param="b").add("RZ", 0, param="c")


def bell_template() -> Circuit:
    return Circuit(2).add("H", 0).add("CNOT", 0, 1)


register_payload_type(Circuit, PayloadKind.CIRCUIT)
register_payload_type(Statevector, PayloadKind.STATEVECTOR)
