"""QUBO models, penalty encodings and decoding back to domain solutions.

Energy convention::

    E(b) = offset + sum_i linear[i] * b_i + sum_{i<j} quadratic[i, j] * b_i * b_j

Constraints become penalties. With ``method="slack"`` an inequality is
turned into an equality with a binary-expanded slack register and
penalised by ``lagrange * residual**2``. With ``method="unbalanced"`` the
slack register is dropped and the violation ``g`` (positive when the
constraint is broken) is penalised by ``l1 * g + l2 * g**2``. Equality
constraints always use the squared form.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from appbench import problems as P
from appbench.pipeline import PayloadKind, register_payload_type

log = logging.getLogger(__name__)

SLACK = "slack"
UNBALANCED = "unbalanced"


@dataclass(frozen=True)
class PenaltyConfig:
    """``lagrange=None`` selects the per-instance default: twice an upper
    bound on the range of the unpenalised objective."""

    method: str = SLACK
    lagrange: float | None = None
    unbalanced_l1: float = 0.96
    unbalanced_l2: float = 0.0371
    resolution: float = 1.0
    max_vars: int = 1024

    def __post_init__(self) -> None:
        if self.method not in (SLACK, UNBALANCED):
            raise ValueError(f"unknown penalty method {self.method!r}")
        for name in ("unbalanced_l1", "unbalanced_l2", "resolution"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lagrange is not None and self.lagrange <= 0:
            raise ValueError("lagrange must be positive")


class VariableBudgetExceeded(ValueError):
    pass


@dataclass
class Constraint:
    """``residual = const + sum(a * x) + sum(c * slack)``; zero when satisfied."""

    name: str
    const: float
    terms: list[tuple[int, float]]
    slack: list[tuple[int, float]] = field(default_factory=list)
    kind: str = "eq"

    def residual(self, bits: Sequence[int]) -> float:
        return (
            self.const
            + sum(a * bits[i] for i, a in self.terms)
            + sum(c * bits[i] for i, c in self.slack)
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "const": self.const,
            "terms": [list(t) for t in self.terms],
            "slack": [list(t) for t in self.slack],
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Constraint":
        return cls(
            d["name"],
            d["const"],
            [(int(i), a) for i, a in d["terms"]],
            [(int(i), c) for i, c in d["slack"]],
            d["kind"],
        )


@dataclass
class QuboModel:
    n_vars: int
    linear: np.ndarray
    quadratic: dict[tuple[int, int], float]
    offset: float = 0.0
    decode_map: list[tuple[str, str]] = field(default_factory=list)
    source: Any = None
    constraints: list[Constraint] = field(default_factory=list)
    lagrange: float | None = None

    def __post_init__(self) -> None:
        self.linear = np.asarray(self.linear, dtype=float)
        if self.linear.shape != (self.n_vars,):
            raise ValueError("linear vector length must equal n_vars")
        for (i, j), w in self.quadratic.items():
            if not 0 <= i < j < self.n_vars:
                raise ValueError(f"quadratic key {(i, j)} not strictly upper-triangular")
            if not math.isfinite(w):
                raise ValueError("non-finite quadratic coefficient")
        if not np.all(np.isfinite(self.linear)) or not math.isfinite(self.offset):
            raise ValueError("non-finite coefficient")
        if not self.decode_map:
            self.decode_map = [("generic", f"v[i={i}]") for i in range(self.n_vars)]
        if len(self.decode_map) != self.n_vars:
            raise ValueError("decode_map must label every variable")

    @property
    def problem(self) -> str:
        return self.decode_map[0][0] if self.decode_map else "generic"

    def labels(self) -> list[str]:
        return [lbl for _, lbl in self.decode_map]

    def index_of(self, label: str) -> int:
        return self.labels().index(label)

    def to_matrix(self) -> np.ndarray:
        """Upper-triangular matrix with the linear terms on the diagonal."""
        m = np.diag(self.linear.astype(float))
        for (i, j), w in self.quadratic.items():
            m[i, j] += w
        return m

    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric CSR neighbour lists ``(indptr, indices, weights)``."""
        nbrs: list[list[tuple[int, float]]] = [[] for _ in range(self.n_vars)]
        for (i, j), w in sorted(self.quadratic.items()):
            if w != 0.0:
                nbrs[i].append((j, w))
                nbrs[j].append((i, w))
        indptr = np.zeros(self.n_vars + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(x) for x in nbrs])
        indices = np.array([j for x in nbrs for j, _ in x], dtype=np.int64)
        weights = np.array([w for x in nbrs for _, w in x], dtype=float)
        return indptr, indices, weights

    def to_dict(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "offset": self.offset,
            "linear": [[i, float(v)] for i, v in enumerate(self.linear) if v != 0.0],
            "quadratic": [[i, j, w] for (i, j), w in sorted(self.quadratic.items())],
            "decode_map": [[i, p, lbl] for i, (p, lbl) in enumerate(self.decode_map)],
            "constraints": [c.to_dict() for c in self.constraints],
            "lagrange": self.lagrange,
            "source": self.source.to_dict() if self.source is not None else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "QuboModel":
        n = int(d["n_vars"])
        lin = np.zeros(n)
        for i, v in d["linear"]:
            lin[int(i)] = v
        dmap: list[tuple[str, str]] = [("", "")] * n
        for i, p, lbl in d["decode_map"]:
            dmap[int(i)] = (p, lbl)
        src = d.get("source")
        return cls(
            n,
            lin,
            {(int(i), int(j)): w for i, j, w in d["quadratic"]},
            d["offset"],
            dmap,
            P.instance_from_dict(src) if src else None,
            [Constraint.from_dict(c) for c in d.get("constraints", [])],
            d.get("lagrange"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "QuboModel":
        return cls.from_dict(json.loads(text))


# -- evaluation -------------------------------------------------------------


def qubo_energy(q: QuboModel, bits: Sequence[int]) -> float:
    if len(bits) != q.n_vars:
        raise ValueError(f"bits has length {len(bits)}, model has {q.n_vars} variables")
    b = [int(x) for x in bits]
    e = q.offset + sum(float(q.linear[i]) for i in range(q.n_vars) if b[i])
    e += sum(w for (i, j), w in q.quadratic.items() if b[i] and b[j])
    return float(e)


def energies(q: QuboModel, bits: np.ndarray) -> np.ndarray:
    """Vectorised energies for a ``(m, n_vars)`` 0/1 array."""
    b = np.atleast_2d(np.asarray(bits, dtype=float))
    m = q.to_matrix()
    np.fill_diagonal(m, 0.0)
    return q.offset + b @ q.linear + np.einsum("ki,ij,kj->k", b, m, b)


def to_ising(q: QuboModel) -> tuple[np.ndarray, dict[tuple[int, int], float], float]:
    """Map to spins with ``b = (1 - s) / 2``: E = c + sum h s + sum J s s."""
    h = -q.linear / 2.0
    J: dict[tuple[int, int], float] = {}
    c = q.offset + q.linear.sum() / 2.0
    for (i, j), w in q.quadratic.items():
        J[(i, j)] = w / 4.0
        h[i] -= w / 4.0
        h[j] -= w / 4.0
        c += w / 4.0
    return h, J, float(c)


def ising_energy(h, J, c, spins: Sequence[int]) -> float:
    return float(c + np.dot(h, spins) + sum(w * spins[i] * spins[j] for (i, j), w in J.items()))


# -- construction -----------------------------------------------------------


class QuboBuilder:
    def __init__(self, problem: str) -> None:
        self.problem = problem
        self.labels: list[str] = []
        self.lin: dict[int, float] = {}
        self.quad: dict[tuple[int, int], float] = {}
        self.offset = 0.0
        self.constraints: list[Constraint] = []

    def var(self, label: str) -> int:
        self.labels.append(label)
        return len(self.labels) - 1

    def slack_register(self, prefix: str, upper: int) -> list[tuple[int, float]]:
        """Binary slack covering exactly ``0..upper``.

        ``ceil(log2(upper + 1))`` bits with weights 1, 2, 4, ... and the
        remainder on the top bit.
        """
        upper = int(upper)
        if upper <= 0:
            return []
        nbits = math.ceil(math.log2(upper + 1))
        coeffs = [2**b for b in range(nbits - 1)]
        coeffs.append(upper - (2 ** (nbits - 1) - 1))
        return [(self.var(f"{prefix},bit={b}]"), float(c)) for b, c in enumerate(coeffs)]

    def add_linear(self, i: int, w: float) -> None:
        self.lin[i] = self.lin.get(i, 0.0) + w

    def add_quadratic(self, i: int, j: int, w: float) -> None:
        if i == j:
            self.add_linear(i, w)
            return
        key = (i, j) if i < j else (j, i)
        self.quad[key] = self.quad.get(key, 0.0) + w

    def add_squared(self, weight: float, const: float, terms: Sequence[tuple[int, float]]) -> None:
        """Add ``weight * (const + sum a_i x_i)**2`` using ``x**2 = x``."""
        self.offset += weight * const * const
        for k, (i, a) in enumerate(terms):
            self.add_linear(i, weight * (2 * const * a + a * a))
            for j, b in terms[k + 1 :]:
                self.add_quadratic(i, j, weight * 2 * a * b)

    def add_unbalanced(
        self, l1: float, l2: float, const: float, terms: Sequence[tuple[int, float]]
    ) -> None:
        """Add ``l1 * g + l2 * g**2`` with ``g = const + sum a_i x_i``."""
        self.offset += l1 * const
        for i, a in terms:
            self.add_linear(i, l1 * a)
        self.add_squared(l2, const, terms)

    def objective_bound(self) -> float:
        """Upper bound on ``max E - min E`` of what has been added so far."""
        return sum(abs(v) for v in self.lin.values()) + sum(abs(v) for v in self.quad.values())

    def inequality(
        self,
        cfg: PenaltyConfig,
        lagrange: float,
        name: str,
        const: float,
        terms: list[tuple[int, float]],
        slack_upper: int,
        slack_prefix: str,
    ) -> None:
        """Penalise ``const + sum a x <= 0``."""
        if cfg.method == SLACK:
            slack = self.slack_register(slack_prefix, slack_upper)
            self.constraints.append(Constraint(name, const, terms, slack, "slack"))
            self.add_squared(lagrange, const, terms + slack)
        else:
            self.constraints.append(Constraint(name, const, terms, [], "unbalanced"))
            self.add_unbalanced(cfg.unbalanced_l1, cfg.unbalanced_l2, const, terms)

    def equality(
        self, lagrange: float, name: str, const: float, terms: list[tuple[int, float]]
    ) -> None:
        self.constraints.append(Constraint(name, const, terms, [], "eq"))
        self.add_squared(lagrange, const, terms)

    def build(self, source: Any, cfg: PenaltyConfig | None, lagrange: float | None) -> QuboModel:
        n = len(self.labels)
        if cfg is not None and n > cfg.max_vars:
            raise VariableBudgetExceeded(f"{n} variables exceed the budget of {cfg.max_vars}")
        lin = np.zeros(n)
        for i, v in self.lin.items():
            lin[i] = v
        return QuboModel(
            n,
            lin,
            {k: v for k, v in self.quad.items() if v != 0.0},
            self.offset,
            [(self.problem, lbl) for lbl in self.labels],
            source,
            self.constraints,
            lagrange,
        )


def _lagrange(cfg: PenaltyConfig, builder: QuboBuilder) -> float:
    if cfg.lagrange is not None:
        return cfg.lagrange
    return 2.0 * max(builder.objective_bound(), 1.0)


def _integral(x: float, resolution: float, what: str) -> int:
    v = x / resolution
    r = round(v)
    if abs(v - r) > 1e-9 * max(1.0, abs(v)):
        raise ValueError(f"{what} {x!r} is not a multiple of resolution {resolution!r}")
    return int(r)


def maxcut_to_qubo(g: P.ProblemGraph) -> QuboModel:
    """Energy equals minus the cut: each edge contributes ``w(2 b_u b_v - b_u - b_v)``."""
    b = QuboBuilder("maxcut")
    for v in range(g.n):
        b.var(f"x[v={v}]")
    for u, v, w in g.edges:
        b.add_linear(u, -w)
        b.add_linear(v, -w)
        b.add_quadratic(u, v, 2 * w)
    return b.build(g, None, None)


def setcover_to_qubo(inst: P.SetCoverInstance, cfg: PenaltyConfig = PenaltyConfig()) -> QuboModel:
    for e in range(inst.universe_size):
        if not inst.covering(e):
            raise ValueError(f"infeasible instance: element {e} is in no subset")
    b = QuboBuilder("setcover")
    xs = [b.var(f"b[j={j}]") for j in range(len(inst.subsets))]
    for j, (c, _) in enumerate(inst.subsets):
        b.add_linear(xs[j], c)
    lam = _lagrange(cfg, b)
    for e in range(inst.universe_size):
        cover = inst.covering(e)
        # 1 - sum b_j <= 0; surplus sum b_j - 1 lies in [0, deg - 1]
        b.inequality(
            cfg, lam, f"cover[e={e}]", 1.0, [(xs[j], -1.0) for j in cover],
            len(cover) - 1, f"slack[e={e}",
        )
    return b.build(inst, cfg, lam)


def salbp_to_qubo(inst: P.SalbpInstance, cfg: PenaltyConfig = PenaltyConfig()) -> QuboModel:
    """Variables ``x[t,s]`` and ``y[s]`` plus capacity and precedence slacks.

    Task times and the cycle time are expressed in units of
    ``cfg.resolution`` and must be integral there.
    """
    S, T = inst.max_stations, inst.n_tasks
    v = [_integral(t, cfg.resolution, "task time") for t in inst.times]
    c = _integral(inst.cycle_time, cfg.resolution, "cycle time")
    nbits_cap = math.ceil(math.log2(c + 1)) if cfg.method == SLACK else 0
    nbits_prec = math.ceil(math.log2(S)) if cfg.method == SLACK and S > 1 else 0
    expected = T * S + S + S * nbits_cap + len(inst.precedence) * nbits_prec
    if expected > cfg.max_vars:
        raise VariableBudgetExceeded(f"{expected} variables exceed the budget of {cfg.max_vars}")

    b = QuboBuilder("salbp")
    x = {(t, s): b.var(f"x[t={t},s={s}]") for t in range(T) for s in range(1, S + 1)}
    y = {s: b.var(f"y[s={s}]") for s in range(1, S + 1)}
    for s in range(1, S + 1):
        b.add_linear(y[s], float(s))
    lam = _lagrange(cfg, b)
    for t in range(T):
        b.equality(lam, f"assign[t={t}]", -1.0, [(x[t, s], 1.0) for s in range(1, S + 1)])
    for s in range(1, S + 1):
        terms = [(x[t, s], float(v[t])) for t in range(T)] + [(y[s], -float(c))]
        b.inequality(cfg, lam, f"capacity[s={s}]", 0.0, terms, c, f"slack[s={s}")
    for a, d in inst.precedence:
        terms = [(x[a, s], float(s)) for s in range(1, S + 1)]
        terms += [(x[d, s], -float(s)) for s in range(1, S + 1)]
        b.inequality(cfg, lam, f"precedence[t={a},u={d}]", 0.0, terms, S - 1, f"slack[t={a},u={d}")
    return b.build(inst, cfg, lam)


def portfolio_to_qubo(
    inst: P.PortfolioInstance,
    cfg: PenaltyConfig = PenaltyConfig(resolution=1e-3),
) -> QuboModel:
    """Selection bits with cardinality penalty ``lagrange * (sum b - k)**2``.

    Minvola encodes the return floor ``sum r_i b_i >= k * R_min`` on the
    integer grid ``r / cfg.resolution``. Maxret's volatility cap is
    quadratic in the bits, so its square would be quartic; it enters as the
    linear surrogate ``unbalanced_l1 * (sigma^2(b) - V_max)`` only and
    feasibility is left to the decoder.
    """
    n, k = inst.n, inst.k
    b = QuboBuilder("portfolio")
    xs = [b.var(f"b[i={i}]") for i in range(n)]
    cov, r = inst.cov, inst.returns

    def add_variance(weight: float) -> None:
        for i in range(n):
            b.add_linear(xs[i], weight * cov[i, i] / k**2)
            for j in range(i + 1, n):
                b.add_quadratic(xs[i], xs[j], weight * 2 * cov[i, j] / k**2)

    if inst.formulation == P.MINVOLA:
        add_variance(1.0)
    elif inst.formulation == P.MAXRET:
        for i in range(n):
            b.add_linear(xs[i], -r[i] / k)
    else:
        add_variance(inst.target)
        for i in range(n):
            b.add_linear(xs[i], -r[i] / k)
    lam = _lagrange(cfg, b)
    b.equality(lam, "cardinality", -float(k), [(x, 1.0) for x in xs])

    if inst.formulation == P.MINVOLA:
        rq = np.round(r / cfg.resolution)
        if np.max(np.abs(rq * cfg.resolution - r)) > 1e-9:
            log.warning("returns quantised to resolution %g; floor is approximate", cfg.resolution)
        floor = math.ceil(k * inst.target / cfg.resolution - 1e-9)
        top = float(np.sort(rq)[::-1][:k].sum())
        upper = max(0, int(top - floor))
        # floor - sum r_i b_i <= 0
        b.inequality(
            cfg, lam, "return_floor", float(floor), [(xs[i], -float(rq[i])) for i in range(n)],
            upper, "slack[c=ret",
        )
    elif inst.formulation == P.MAXRET:
        add_variance(cfg.unbalanced_l1)
        b.offset -= cfg.unbalanced_l1 * inst.target
    return b.build(inst, cfg, lam)


def to_qubo(instance: Any, cfg: PenaltyConfig | None = None) -> QuboModel:
    if isinstance(instance, P.ProblemGraph):
        return maxcut_to_qubo(instance)
    if isinstance(instance, P.SetCoverInstance):
        return setcover_to_qubo(instance, cfg or PenaltyConfig())
    if isinstance(instance, P.SalbpInstance):
        return salbp_to_qubo(instance, cfg or PenaltyConfig())
    if isinstance(instance, P.PortfolioInstance):
        return portfolio_to_qubo(instance, cfg or PenaltyConfig(resolution=1e-3))
    raise TypeError(f"no QUBO mapping for {type(instance).__name__}")


# -- decoding ---------------------------------------------------------------

_LABEL = re.compile(r"^(\w+)\[(.*)\]$")


def parse_label(label: str) -> tuple[str, dict[str, str]]:
    m = _LABEL.match(label)
    if not m:
        raise ValueError(f"malformed variable label {label!r}")
    fields = {}
    for part in m.group(2).split(","):
        key, _, value = part.partition("=")
        fields[key] = value
    return m.group(1), fields


def decode(q: QuboModel, bits: Sequence[int]) -> P.DomainSolution:
    """Rebuild the domain assignment from ``bits`` and re-evaluate it.

    Slack variables are dropped; feasibility comes from the domain
    evaluator, never from penalty values.
    """
    if len(bits) != q.n_vars:
        raise ValueError(f"bits has length {len(bits)}, model has {q.n_vars} variables")
    if q.source is None:
        raise ValueError("model carries no source instance to decode against")
    parsed = [parse_label(lbl) for lbl in q.labels()]
    inst = q.source
    if isinstance(inst, P.ProblemGraph):
        side = [0] * inst.n
        for (name, f), bit in zip(parsed, bits):
            side[int(f["v"])] = int(bit)
        return P.maxcut_solution(inst, side)
    if isinstance(inst, P.SetCoverInstance):
        chosen = [int(f["j"]) for (name, f), bit in zip(parsed, bits) if name == "b" and bit]
        return P.eval_setcover(inst, chosen)
    if isinstance(inst, P.PortfolioInstance):
        sel = [0] * inst.n
        for (name, f), bit in zip(parsed, bits):
            if name == "b":
                sel[int(f["i"])] = int(bit)
        if not any(sel):
            return P.DomainSolution(
                "portfolio", sel, math.inf, ["no assets selected"], details={}
            )
        return P.portfolio_objective(inst, sel)
    if isinstance(inst, P.SalbpInstance):
        stations: list[list[int]] = [[] for _ in range(inst.n_tasks)]
        open_st = []
        for (name, f), bit in zip(parsed, bits):
            if not bit:
                continue
            if name == "x":
                stations[int(f["t"])].append(int(f["s"]))
            elif name == "y":
                open_st.append(int(f["s"]))
        assignment = [s[0] if len(s) == 1 else (s or None) for s in stations]
        return P.eval_salbp(inst, assignment, open_stations=open_st)
    raise TypeError(f"cannot decode against {type(inst).__name__}")


def encode(q: QuboModel, solution: P.DomainSolution) -> list[int]:
    """Bitstring for a domain solution with slack registers set to match.

    For slack constraints the register value making the residual zero is
    chosen when one exists; otherwise the residual-minimising value.
    """
    inst = q.source
    parsed = [parse_label(lbl) for lbl in q.labels()]
    bits = [0] * q.n_vars
    a = solution.assignment
    for i, (name, f) in enumerate(parsed):
        if isinstance(inst, P.ProblemGraph):
            bits[i] = int(a[int(f["v"])])
        elif isinstance(inst, P.SetCoverInstance) and name == "b":
            bits[i] = int(int(f["j"]) in set(a))
        elif isinstance(inst, P.PortfolioInstance) and name == "b":
            bits[i] = int(a[int(f["i"])])
        elif isinstance(inst, P.SalbpInstance):
            if name == "x":
                st = a[int(f["t"])]
                sts = [] if st is None else ([st] if isinstance(st, int) else list(st))
                bits[i] = int(int(f["s"]) in sts)
            elif name == "y":
                opened = solution.details.get("open_stations")
                if opened is None:
                    opened = [s for s in (a or []) if isinstance(s, int)]
                bits[i] = int(int(f["s"]) in opened)
    for con in q.constraints:
        if not con.slack:
            continue
        base = con.const + sum(w * bits[i] for i, w in con.terms)
        best, best_res = 0, math.inf
        for value in range(1 << len(con.slack)):
            res = base + sum(c for k, (_, c) in enumerate(con.slack) if value >> k & 1)
            if abs(res) < best_res - 1e-12:
                best, best_res = value, abs(res)
        for k, (i, _) in enumerate(con.slack):
            bits[i] = best >> k & 1
    return bits


def constraint_residuals(q: QuboModel, bits: Sequence[int]) -> dict[str, float]:
    """Residual of every encoded constraint; all zero on a zero-penalty bitstring
    (slack and equality kinds)."""
    return {con.name: con.residual(bits) for con in q.constraints}


register_payload_type(QuboModel, PayloadKind.QUBO)
