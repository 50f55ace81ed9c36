"""Problem instances, generators and domain-level evaluators.

Covers MaxCut, set cover, cardinality-constrained portfolio selection and
the simple assembly line balancing problem (SALBP-1). Generators are pure
functions of their parameters and seed.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from appbench.pipeline import PayloadKind, register_payload_type

MINVOLA = "Minvola"
MAXRET = "Maxret"
MULTIOBJ = "Multiobj"
FORMULATIONS = (MINVOLA, MAXRET, MULTIOBJ)


@dataclass
class DomainSolution:
    problem: str
    assignment: Any
    objective: float
    violations: list[str] = field(default_factory=list)
    sense: str = "min"
    details: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "assignment": self.assignment,
            "objective": self.objective,
            "feasible": self.feasible,
            "violations": list(self.violations),
            "sense": self.sense,
            "details": self.details,
        }


# -- MaxCut -----------------------------------------------------------------


@dataclass(frozen=True)
class ProblemGraph:
    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self) -> None:
        seen = set()
        norm = []
        for u, v, w in self.edges:
            u, v = int(u), int(v)
            if u > v:
                u, v = v, u
            if not 0 <= u < v < self.n:
                raise ValueError(f"invalid edge ({u}, {v}) for n={self.n}")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            if not math.isfinite(w):
                raise ValueError("edge weights must be finite")
            seen.add((u, v))
            norm.append((u, v, float(w)))
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def total_weight(self) -> float:
        return sum(w for _, _, w in self.edges)

    def with_edge(self, u: int, v: int, w: float = 1.0) -> "ProblemGraph":
        return ProblemGraph(self.n, self.edges + ((u, v, w),))

    def to_dict(self) -> dict:
        return {"type": "maxcut", "n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProblemGraph":
        return cls(int(d["n"]), tuple(tuple(e) for e in d["edges"]))


def gen_maxcut(n: int, edge_prob: float = 0.5, seed: int = 0) -> ProblemGraph:
    """Erdős–Rényi G(n, p) graph with unit weights."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0.0 < edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < edge_prob
    return ProblemGraph(n, tuple((int(u), int(v), 1.0) for u, v in zip(iu[keep], ju[keep])))


def eval_cut(g: ProblemGraph, side: Sequence[int]) -> float:
    """Total weight of edges whose endpoints fall on different sides."""
    if len(side) != g.n:
        raise ValueError(f"side has length {len(side)}, graph has {g.n} vertices")
    return float(sum(w for u, v, w in g.edges if side[u] != side[v]))


def maxcut_solution(g: ProblemGraph, side: Sequence[int]) -> DomainSolution:
    side = [int(b) for b in side]
    return DomainSolution("maxcut", side, eval_cut(g, side), sense="max")


def brute_force_maxcut(g: ProblemGraph) -> float:
    """Exhaustive maximum cut; vertex 0 is pinned to side 0 by symmetry."""
    if g.n > 24:
        raise ValueError("exhaustive MaxCut limited to 24 vertices")
    best = 0.0
    for rest in itertools.product((0, 1), repeat=g.n - 1):
        best = max(best, eval_cut(g, (0,) + rest))
    return best


def write_graph(g: ProblemGraph) -> str:
    lines = [f"{g.n} {len(g.edges)}"]
    lines += [f"{u} {v} {w!r}" for u, v, w in g.edges]
    return "\n".join(lines) + "\n"


def read_graph(text: str) -> ProblemGraph:
    """Parse the edge-list format: header ``n m`` then ``u v weight`` lines."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ValueError("empty graph file")
    n, m = int(rows[0][0]), int(rows[0][1])
    edges = tuple((int(r[0]), int(r[1]), float(r[2]) if len(r) > 2 else 1.0) for r in rows[1:])
    if len(edges) != m:
        raise ValueError(f"header announces {m} edges, found {len(edges)}")
    return ProblemGraph(n, edges)


# -- set cover --------------------------------------------------------------


@dataclass(frozen=True)
class SetCoverInstance:
    universe_size: int
    subsets: tuple[tuple[float, frozenset], ...]

    def __post_init__(self) -> None:
        subs = tuple((float(c), frozenset(int(e) for e in els)) for c, els in self.subsets)
        for c, els in subs:
            if c < 0:
                raise ValueError("subset costs must be non-negative")
            if any(not 0 <= e < self.universe_size for e in els):
                raise ValueError("subset element outside the universe")
        object.__setattr__(self, "subsets", subs)

    @property
    def costs(self) -> list[float]:
        return [c for c, _ in self.subsets]

    def covering(self, element: int) -> list[int]:
        return [j for j, (_, els) in enumerate(self.subsets) if element in els]

    def to_dict(self) -> dict:
        return {
            "type": "setcover",
            "universe_size": self.universe_size,
            "subsets": [{"cost": c, "elements": sorted(els)} for c, els in self.subsets],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SetCoverInstance":
        return cls(
            int(d["universe_size"]),
            tuple((s["cost"], frozenset(s["elements"])) for s in d["subsets"]),
        )


def gen_setcover(
    universe_size: int,
    n_subsets: int,
    density: float = 0.3,
    seed: int = 0,
    max_cost: int = 5,
) -> SetCoverInstance:
    """Random feasible instance with integer costs in ``[1, max_cost]``.

    Each element joins each subset with probability ``density``; elements
    left uncovered are placed into one random subset.
    """
    if universe_size < 1 or n_subsets < 1:
        raise ValueError("universe_size and n_subsets must be positive")
    rng = np.random.default_rng(seed)
    member = rng.random((n_subsets, universe_size)) < density
    for e in np.flatnonzero(~member.any(axis=0)):
        member[rng.integers(n_subsets), e] = True
    costs = rng.integers(1, max_cost + 1, size=n_subsets)
    return SetCoverInstance(
        universe_size,
        tuple(
            (float(costs[j]), frozenset(np.flatnonzero(member[j]).tolist()))
            for j in range(n_subsets)
        ),
    )


def eval_setcover(inst: SetCoverInstance, chosen: Iterable[int]) -> DomainSolution:
    chosen = sorted(set(int(j) for j in chosen))
    for j in chosen:
        if not 0 <= j < len(inst.subsets):
            raise IndexError(f"subset index {j} out of range")
    covered = set().union(*(inst.subsets[j][1] for j in chosen)) if chosen else set()
    violations = [f"element {e} uncovered" for e in range(inst.universe_size) if e not in covered]
    cost = float(sum(inst.subsets[j][0] for j in chosen))
    return DomainSolution("setcover", chosen, cost, violations)


def greedy_setcover(inst: SetCoverInstance) -> list[int]:
    """Classic cost-per-new-element greedy heuristic."""
    uncovered = set(range(inst.universe_size))
    chosen: list[int] = []
    while uncovered:
        best, best_ratio = None, math.inf
        for j, (c, els) in enumerate(inst.subsets):
            gain = len(els & uncovered)
            if gain and c / gain < best_ratio:
                best, best_ratio = j, c / gain
        if best is None:
            raise ValueError("instance is infeasible")
        chosen.append(best)
        uncovered -= inst.subsets[best][1]
    return sorted(chosen)


def brute_force_setcover(inst: SetCoverInstance) -> DomainSolution:
    best = None
    for bits in itertools.product((0, 1), repeat=len(inst.subsets)):
        sol = eval_setcover(inst, [j for j, b in enumerate(bits) if b])
        if sol.feasible and (best is None or sol.objective < best.objective):
            best = sol
    if best is None:
        raise ValueError("instance is infeasible")
    return best


# -- portfolio --------------------------------------------------------------


@dataclass(frozen=True)
class PortfolioInstance:
    """Equal-weight selection of ``k`` out of ``n`` assets.

    ``target`` is the return floor (Minvola), the volatility cap (Maxret)
    or the trade-off weight lambda (Multiobj).
    """

    returns: np.ndarray
    cov: np.ndarray
    k: int
    formulation: str = MINVOLA
    target: float = 0.0
    asset_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        r = np.asarray(self.returns, dtype=float).copy()
        s = np.asarray(self.cov, dtype=float).copy()
        n = r.size
        if s.shape != (n, n):
            raise ValueError("covariance shape does not match returns")
        if not np.allclose(s, s.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if n and np.linalg.eigvalsh(s).min() < -1e-9:
            raise ValueError("covariance must be positive semidefinite")
        if not 1 <= self.k <= n:
            raise ValueError("cardinality k must satisfy 1 <= k <= n")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        r.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "cov", s)
        ids = tuple(self.asset_ids) or tuple(f"a{i}" for i in range(n))
        object.__setattr__(self, "asset_ids", ids)

    @property
    def n(self) -> int:
        return self.returns.size

    def to_dict(self) -> dict:
        return {
            "type": "portfolio",
            "returns": self.returns.tolist(),
            "cov": self.cov.tolist(),
            "k": self.k,
            "formulation": self.formulation,
            "target": self.target,
            "asset_ids": list(self.asset_ids),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PortfolioInstance":
        return cls(
            np.array(d["returns"]),
            np.array(d["cov"]),
            int(d["k"]),
            d["formulation"],
            float(d["target"]),
            tuple(d.get("asset_ids", ())),
        )


def gen_portfolio(
    n: int,
    k: int,
    formulation: str = MINVOLA,
    target: float | None = None,
    seed: int = 0,
    return_resolution: float = 1e-3,
) -> PortfolioInstance:
    """Synthetic instance: covariance ``A A^T / n`` from a standard normal A.

    Returns are drawn around 5% and rounded to ``return_resolution`` so a
    return floor can be encoded exactly with integer slack. Default
    targets: the mean return (Minvola), the expected variance of a random
    k-subset (Maxret), and lambda = 1 (Multiobj).
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    cov = a @ a.T / n * 0.01
    cov = (cov + cov.T) / 2
    returns = np.round(rng.normal(0.05, 0.03, size=n) / return_resolution) * return_resolution
    if target is None:
        if formulation == MINVOLA:
            target = round(float(returns.mean()) / return_resolution) * return_resolution
        elif formulation == MAXRET:
            diag = float(np.trace(cov)) / n
            off = (float(cov.sum()) - float(np.trace(cov))) / (n * (n - 1)) if n > 1 else 0.0
            target = diag / k + off * (k - 1) / k
        else:
            target = 1.0
    return PortfolioInstance(returns, cov, k, formulation, float(target))


def portfolio_stats(inst: PortfolioInstance, selection: Sequence[int]) -> tuple[float, float]:
    """(mu, sigma^2) of the equal-weight portfolio over the selected assets."""
    b = np.asarray(selection, dtype=float)
    m = b.sum()
    if m == 0:
        raise ValueError("no assets selected")
    w = b / m
    return float(w @ inst.returns), float(w @ inst.cov @ w)


def portfolio_objective(inst: PortfolioInstance, selection: Sequence[int]) -> DomainSolution:
    if len(selection) != inst.n:
        raise ValueError(f"selection has length {len(selection)}, instance has {inst.n} assets")
    sel = [int(b) for b in selection]
    mu, var = portfolio_stats(inst, sel)
    count = sum(sel)
    violations = []
    if count != inst.k:
        violations.append(f"cardinality {count} != {inst.k}")
    if inst.formulation == MINVOLA:
        objective = var
        if mu < inst.target - 1e-12:
            violations.append(f"return {mu:.6g} below floor {inst.target:.6g}")
    elif inst.formulation == MAXRET:
        objective = -mu
        if var > inst.target + 1e-12:
            violations.append(f"volatility {var:.6g} above cap {inst.target:.6g}")
    else:
        objective = -(mu - inst.target * var)
    return DomainSolution(
        "portfolio", sel, objective, violations, details={"mu": mu, "sigma2": var}
    )


def brute_force_portfolio(inst: PortfolioInstance) -> DomainSolution | None:
    """Best feasible k-subset by enumeration, ``None`` if none is feasible."""
    best = None
    for combo in itertools.combinations(range(inst.n), inst.k):
        sel = [0] * inst.n
        for i in combo:
            sel[i] = 1
        sol = portfolio_objective(inst, sel)
        if sol.feasible and (best is None or sol.objective < best.objective):
            best = sol
    return best


def read_portfolio_csv(
    text: str, k: int, formulation: str = MINVOLA, target: float = 0.0
) -> PortfolioInstance:
    """Columns: asset id, expected return, then that asset's covariance row."""
    rows = list(csv.reader(io.StringIO(text)))
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    ids = tuple(r[0].strip() for r in body)
    returns = np.array([float(r[1]) for r in body])
    cov = np.array([[float(x) for x in r[2:]] for r in body])
    return PortfolioInstance(returns, cov, k, formulation, target, ids)


def write_portfolio_csv(inst: PortfolioInstance) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["asset", "return", *inst.asset_ids])
    for i, aid in enumerate(inst.asset_ids):
        w.writerow([aid, repr(float(inst.returns[i])), *(repr(float(x)) for x in inst.cov[i])])
    return buf.getvalue()


# -- assembly line balancing ------------------------------------------------


@dataclass(frozen=True)
class SalbpInstance:
    """Tasks are 0-based; stations are numbered ``1..max_stations``."""

    times: tuple[float, ...]
    cycle_time: float
    precedence: tuple[tuple[int, int], ...]
    max_stations: int

    def __post_init__(self) -> None:
        times = tuple(float(v) for v in self.times)
        prec = tuple(sorted({(int(a), int(b)) for a, b in self.precedence}))
        n = len(times)
        if self.cycle_time <= 0 or any(v <= 0 for v in times):
            raise ValueError("cycle time and task times must be positive")
        if any(v > self.cycle_time for v in times):
            raise ValueError("a task exceeds the cycle time")
        if any(not (0 <= a < n and 0 <= b < n) or a == b for a, b in prec):
            raise ValueError("precedence pair out of range")
        if self.max_stations < 1:
            raise ValueError("max_stations must be positive")
        _topological_order(n, prec)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "precedence", prec)
        object.__setattr__(self, "cycle_time", float(self.cycle_time))

    @property
    def n_tasks(self) -> int:
        return len(self.times)

    def with_cycle_time(self, c: float) -> "SalbpInstance":
        return SalbpInstance(self.times, c, self.precedence, self.max_stations)

    def to_dict(self) -> dict:
        return {
            "type": "salbp",
            "times": list(self.times),
            "cycle_time": self.cycle_time,
            "precedence": [list(p) for p in self.precedence],
            "max_stations": self.max_stations,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SalbpInstance":
        return cls(
            tuple(d["times"]),
            float(d["cycle_time"]),
            tuple(tuple(p) for p in d["precedence"]),
            int(d["max_stations"]),
        )


def _topological_order(n: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        succ[a].append(b)
        indeg[b] += 1
    ready = [t for t in range(n) if indeg[t] == 0]
    order = []
    while ready:
        t = ready.pop()
        order.append(t)
        for u in succ[t]:
            indeg[u] -= 1
            if indeg[u] == 0:
                ready.append(u)
    if len(order) != n:
        raise ValueError("precedence graph has a cycle")
    return order


def gen_salbp(
    n_tasks: int,
    cycle_time: int = 10,
    precedence_density: float = 0.3,
    max_stations: int | None = None,
    seed: int = 0,
    n_layers: int | None = None,
) -> SalbpInstance:
    """Layered random DAG with integer task times in ``(0.1c, 0.7c)``.

    Tasks are spread over layers; each pair of consecutive-layer tasks is
    linked with probability ``precedence_density``.
    """
    rng = np.random.default_rng(seed)
    lo = max(1, math.floor(0.1 * cycle_time) + 1)
    hi = max(lo, math.ceil(0.7 * cycle_time) - 1)
    times = rng.integers(lo, hi + 1, size=n_tasks).astype(float)
    layers_n = n_layers or max(1, round(math.sqrt(n_tasks)))
    layer = np.sort(rng.integers(0, layers_n, size=n_tasks))
    edges = [
        (a, b)
        for a in range(n_tasks)
        for b in range(n_tasks)
        if layer[b] == layer[a] + 1 and rng.random() < precedence_density
    ]
    return SalbpInstance(
        tuple(times.tolist()), float(cycle_time), tuple(edges), max_stations or n_tasks
    )


def eval_salbp(
    inst: SalbpInstance,
    assignment: Sequence[int | None | Iterable[int]],
    open_stations: Iterable[int] | None = None,
) -> DomainSolution:
    """Score a task -> station assignment.

    ``assignment[t]`` is a station number, ``None`` (unassigned) or a
    collection of stations (multiple assignment). The objective is
    ``sum(s * y_s)``; ``y_s`` defaults to "station s holds a task", or is
    taken from ``open_stations`` when given.
    """
    if len(assignment) != inst.n_tasks:
        raise ValueError("assignment length differs from task count")
    S = inst.max_stations
    stations: list[list[int]] = []
    for a in assignment:
        if a is None:
            sts = []
        elif isinstance(a, (int, np.integer)):
            sts = [int(a)]
        else:
            sts = sorted(int(s) for s in a)
        for s in sts:
            if not 1 <= s <= S:
                raise IndexError(f"station {s} outside 1..{S}")
        stations.append(sts)

    violations = []
    for t, sts in enumerate(stations):
        if len(sts) != 1:
            violations.append(f"task {t} assigned to {len(sts)} stations")
    load = [0.0] * (S + 1)
    for t, sts in enumerate(stations):
        for s in sts:
            load[s] += inst.times[t]
    used = {s for sts in stations for s in sts}
    y = set(used) if open_stations is None else {int(s) for s in open_stations}
    for s in range(1, S + 1):
        cap = inst.cycle_time if s in y else 0.0
        if load[s] > cap + 1e-9:
            violations.append(f"station {s} load {load[s]:g} exceeds {cap:g}")
    for a, b in inst.precedence:
        if stations[a] and stations[b] and max(stations[a]) > min(stations[b]):
            violations.append(f"precedence {a}->{b} violated")
    flat = [sts[0] if len(sts) == 1 else (sts or None) for sts in stations]
    return DomainSolution(
        "salbp",
        flat,
        float(sum(y)),
        violations,
        details={"stations_used": len(used), "open_stations": sorted(y)},
    )


def brute_force_salbp(inst: SalbpInstance) -> DomainSolution | None:
    """Best feasible single-assignment by enumeration over S^n maps."""
    best = None
    S = inst.max_stations
    for assign in itertools.product(range(1, S + 1), repeat=inst.n_tasks):
        sol = eval_salbp(inst, list(assign))
        if sol.feasible and (best is None or sol.objective < best.objective):
            best = sol
    return best


def write_salbp(inst: SalbpInstance) -> str:
    lines = [
        f"tasks {inst.n_tasks}",
        f"stations {inst.max_stations}",
        f"cycle_time {inst.cycle_time!r}",
        "times " + " ".join(repr(v) for v in inst.times),
        f"precedence {len(inst.precedence)}",
    ]
    lines += [f"{a} {b}" for a, b in inst.precedence]
    return "\n".join(lines) + "\n"


def read_salbp(text: str) -> SalbpInstance:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    head = {r[0]: r[1:] for r in rows[:5]}
    n = int(head["tasks"][0])
    times = tuple(float(x) for x in head["times"])
    if len(times) != n:
        raise ValueError("task-time list length differs from task count")
    m = int(head["precedence"][0])
    pairs = tuple((int(r[0]), int(r[1])) for r in rows[5 : 5 + m])
    if len(pairs) != m:
        raise ValueError("truncated precedence list")
    return SalbpInstance(times, float(head["cycle_time"][0]), pairs, int(head["stations"][0]))


def instance_from_dict(d: Mapping):
    kinds = {
        "maxcut": ProblemGraph,
        "setcover": SetCoverInstance,
        "portfolio": PortfolioInstance,
        "salbp": SalbpInstance,
    }
    return kinds[d["type"]].from_dict(d)


register_payload_type(ProblemGraph, PayloadKind.PROBLEM_GRAPH)
register_payload_type(SetCoverInstance, PayloadKind.SET_COVER_INSTANCE)
register_payload_type(PortfolioInstance, PayloadKind.PORTFOLIO_INSTANCE)
register_payload_type(SalbpInstance, PayloadKind.SALBP_INSTANCE)
register_payload_type(DomainSolution, PayloadKind.DOMAIN_SOLUTION)
