"""Classical QUBO baselines: simulated annealing, exhaustive search, random sampling.

Bitstrings are 0/1 ``int8`` arrays with variable 0 first; packed hex
strings use variable 0 as the least significant bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numba
import numpy as np

from appbench.pipeline import PayloadKind, register_payload_type
from appbench.qubo import QuboModel, energies, qubo_energy
from appbench.seeding import MASK64, derive_seed

MAX_BRUTE_FORCE_VARS = 30


class TooManyVariables(ValueError):
    pass


def pack_bits(bits: Sequence[int]) -> str:
    value = 0
    for i, b in enumerate(bits):
        if b:
            value |= 1 << i
    return format(value, "x")


def unpack_bits(hexstr: str, n: int) -> list[int]:
    value = int(hexstr, 16)
    return [(value >> i) & 1 for i in range(n)]


@dataclass
class SampleSet:
    samples: list[tuple[tuple[int, ...], float, int]]
    solver: str
    runtime_s: float = 0.0
    seed: int = 0
    n_vars: int = 0
    info: dict = field(default_factory=dict)

    @classmethod
    def from_samples(
        cls,
        bits: np.ndarray,
        energies_: np.ndarray,
        solver: str,
        runtime_s: float,
        seed: int,
        info: dict | None = None,
    ) -> "SampleSet":
        """Aggregate duplicate bitstrings and sort by (energy, bitstring)."""
        counts: dict[tuple[int, ...], list] = {}
        for row, e in zip(np.asarray(bits), energies_):
            key = tuple(int(x) for x in row)
            if key in counts:
                counts[key][1] += 1
            else:
                counts[key] = [float(e), 1]
        samples = [(k, e, c) for k, (e, c) in counts.items()]
        ss = cls(samples, solver, runtime_s, seed, int(np.shape(bits)[1]), info or {})
        ss.finalize()
        return ss

    def finalize(self) -> None:
        self.samples.sort(key=lambda s: (s[1], s[0]))

    @property
    def best(self) -> tuple[tuple[int, ...], float, int]:
        return self.samples[0]

    @property
    def best_energy(self) -> float:
        return self.samples[0][1]

    @property
    def num_reads(self) -> int:
        return sum(c for _, _, c in self.samples)

    def mean_energy(self) -> float:
        return sum(e * c for _, e, c in self.samples) / self.num_reads

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "seed": self.seed,
            "n_vars": self.n_vars,
            "bit_order": "variable 0 = least significant bit",
            "samples": [
                {"bits": pack_bits(b), "energy": e, "count": c} for b, e, c in self.samples
            ],
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SampleSet":
        n = int(d["n_vars"])
        samples = [
            (tuple(unpack_bits(s["bits"], n)), float(s["energy"]), int(s["count"]))
            for s in d["samples"]
        ]
        return cls(samples, d["solver"], 0.0, int(d["seed"]), n, dict(d.get("info", {})))


# -- simulated annealing ----------------------------------------------------


@dataclass(frozen=True)
class AnnealSchedule:
    sweeps: int = 1000
    reads: int = 10
    beta_start: float | None = None
    beta_end: float | None = None

    def __post_init__(self) -> None:
        if self.sweeps < 1 or self.reads < 1:
            raise ValueError("sweeps and reads must be at least 1")
        if self.beta_start is not None and self.beta_start <= 0:
            raise ValueError("beta_start must be positive")
        if (
            self.beta_start is not None
            and self.beta_end is not None
            and self.beta_end < self.beta_start
        ):
            raise ValueError("beta_end must not be below beta_start")

    def resolve(self, q: QuboModel) -> tuple[float, float]:
        """Scale-aware defaults: hot enough to accept the largest single-flip
        uphill move with probability ``exp(-0.1)``, cold enough that the
        smallest one survives with probability ``exp(-10)``."""
        b0, b1 = default_betas(q)
        start = self.beta_start if self.beta_start is not None else b0
        end = self.beta_end if self.beta_end is not None else max(b1, start)
        return start, end


def default_betas(q: QuboModel) -> tuple[float, float]:
    row = np.abs(q.linear).copy()
    for (i, j), w in q.quadratic.items():
        row[i] += abs(w)
        row[j] += abs(w)
    coeffs = np.concatenate([np.abs(q.linear), np.abs(list(q.quadratic.values()) or [0.0])])
    nz = coeffs[coeffs > 0]
    max_delta = float(row.max()) if row.size and row.max() > 0 else 1.0
    min_delta = float(nz.min()) if nz.size else 1.0
    return 0.1 / max_delta, 10.0 / min_delta


@numba.njit(cache=True)
def _next_u64(state):
    # splitmix64; the state is a 1-element uint64 array
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _uniform(state):
    return (_next_u64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _anneal_chain(linear, indptr, indices, weights, betas, seed):
    n = linear.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    x = np.empty(n, dtype=np.int8)
    for i in range(n):
        x[i] = 1 if _uniform(state) < 0.5 else 0
    field_ = linear.copy()
    for i in range(n):
        if x[i]:
            for p in range(indptr[i], indptr[i + 1]):
                field_[indices[p]] += weights[p]
    energy = 0.0
    for i in range(n):
        if x[i]:
            energy += linear[i]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j > i and x[j]:
                    energy += weights[p]
    best = x.copy()
    best_e = energy
    for s in range(betas.shape[0]):
        beta = betas[s]
        for i in range(n):
            delta = field_[i] if x[i] == 0 else -field_[i]
            if delta <= 0.0 or _uniform(state) < math.exp(-beta * delta):
                sign = 1.0 if x[i] == 0 else -1.0
                x[i] = 1 - x[i]
                energy += delta
                for p in range(indptr[i], indptr[i + 1]):
                    field_[indices[p]] += sign * weights[p]
                if energy < best_e - 1e-12:
                    best_e = energy
                    best[:] = x
    return best


def simulated_annealing(
    q: QuboModel,
    sched: AnnealSchedule = AnnealSchedule(),
    seed: int = 0,
    time_limit_s: float | None = None,
) -> SampleSet:
    """Independent single-flip Metropolis chains, one sample per read.

    Inverse temperature follows a geometric ramp from ``beta_start`` to
    ``beta_end``. Each read returns the lowest-energy state its chain
    visited; reported energies are recomputed exactly from the bits.
    Read ``r`` uses the stream ``derive_seed(seed, r)`` so the first ``m``
    reads do not depend on the total read count. ``time_limit_s`` stops
    launching new reads once exceeded (at least one read always runs).
    """
    if q.n_vars < 1:
        raise ValueError("model has no variables")
    t0 = time.perf_counter()
    b0, b1 = sched.resolve(q)
    betas = np.geomspace(b0, b1, sched.sweeps) if sched.sweeps > 1 else np.array([b1])
    indptr, indices, weights = q.adjacency()
    linear = q.linear.astype(np.float64)
    rows = []
    for r in range(sched.reads):
        if time_limit_s is not None and r > 0 and time.perf_counter() - t0 > time_limit_s:
            break
        s = np.uint64(derive_seed(seed, r) & MASK64)
        rows.append(_anneal_chain(linear, indptr, indices, weights, betas, s))
    bits = np.array(rows, dtype=np.int8)
    es = np.array([qubo_energy(q, row) for row in bits])
    return SampleSet.from_samples(
        bits,
        es,
        "simulated_annealing",
        time.perf_counter() - t0,
        seed,
        {"sweeps": sched.sweeps, "reads": len(rows), "beta_start": b0, "beta_end": b1},
    )


# -- exhaustive search ------------------------------------------------------


@numba.njit(cache=True)
def _replace_worst(found, found_e, code, energy):
    w = 0
    for m in range(1, found_e.shape[0]):
        if found_e[m] > found_e[w]:
            w = m
    if energy < found_e[w]:
        found[w] = code
        found_e[w] = energy


@numba.njit(cache=True)
def _gray_search(linear, indptr, indices, weights, offset, tol, cap):
    n = linear.shape[0]
    x = np.zeros(n, dtype=np.int8)
    field_ = linear.copy()
    energy = offset
    best_e = energy
    found = np.zeros(cap, dtype=np.int64)
    found_e = np.zeros(cap)
    nfound = 1
    found[0] = 0
    found_e[0] = energy
    code = np.int64(0)
    total = np.int64(1) << n
    for k in range(1, total):
        # bit flipped between Gray codes k-1 and k
        i = 0
        kk = k
        while (kk & 1) == 0:
            kk >>= 1
            i += 1
        if x[i] == 0:
            energy += field_[i]
            sign = 1.0
        else:
            energy -= field_[i]
            sign = -1.0
        x[i] = 1 - x[i]
        code ^= np.int64(1) << i
        for p in range(indptr[i], indptr[i + 1]):
            field_[indices[p]] += sign * weights[p]
        if energy < best_e - tol:
            best_e = energy
            # drop candidates no longer within tolerance of the best
            keep = 0
            for m in range(nfound):
                if found_e[m] <= best_e + tol:
                    found[keep] = found[m]
                    found_e[keep] = found_e[m]
                    keep += 1
            nfound = keep
            if nfound < cap:
                found[nfound] = code
                found_e[nfound] = energy
                nfound += 1
            else:
                _replace_worst(found, found_e, code, energy)
        elif energy <= best_e + tol:
            if energy < best_e:
                best_e = energy
            if nfound < cap:
                found[nfound] = code
                found_e[nfound] = energy
                nfound += 1
            else:
                _replace_worst(found, found_e, code, energy)
    return found[:nfound]


def brute_force(q: QuboModel, cap: int = 4096) -> SampleSet:
    """Exact minimum over all ``2**n_vars`` bitstrings (Gray-code walk).

    Returns every optimal bitstring up to ``cap``; ties are decided after
    an exact recomputation of each candidate's energy.
    """
    n = q.n_vars
    if n > MAX_BRUTE_FORCE_VARS:
        raise TooManyVariables(f"{n} variables exceed the exhaustive limit {MAX_BRUTE_FORCE_VARS}")
    t0 = time.perf_counter()
    indptr, indices, weights = q.adjacency()
    scale = float(np.abs(q.linear).sum() + sum(abs(w) for w in q.quadratic.values()) + 1.0)
    # bound on accumulated rounding in the incremental energy updates
    tol = 1e-12 * scale
    # candidate buffer is larger than the cap so near-ties can be filtered exactly
    codes = _gray_search(
        q.linear.astype(np.float64), indptr, indices, weights, float(q.offset), tol, 4 * cap
    )
    bits = np.array([[(int(c) >> i) & 1 for i in range(n)] for c in codes], dtype=np.int8)
    exact = np.array([qubo_energy(q, row) for row in bits])
    emin = exact.min()
    keep = exact <= emin + 1e-12 * scale
    bits, exact = bits[keep], exact[keep]
    order = sorted(range(len(bits)), key=lambda k: (exact[k], tuple(bits[k])))[:cap]
    return SampleSet.from_samples(
        bits[order], exact[order], "brute_force", time.perf_counter() - t0, 0,
        {"optimal_count": int(keep.sum())},
    )


# -- random sampling --------------------------------------------------------


def random_sampling(q: QuboModel, n_samples: int = 1000, seed: int = 0) -> SampleSet:
    """Uniform i.i.d. bitstrings; ``info["mean_energy"]`` is the sample mean."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(n_samples, q.n_vars), dtype=np.int8)
    es = energies(q, bits)
    return SampleSet.from_samples(
        bits, es, "random_sampling", time.perf_counter() - t0, seed,
        {"mean_energy": float(es.mean()), "n_samples": n_samples},
    )


register_payload_type(SampleSet, PayloadKind.SAMPLE_SET)
