"""Solution-quality metrics, the beta score and the Q-score procedure."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from appbench import problems as P
from appbench import qubo as Q
from appbench import solvers as S
from appbench.pipeline import BenchmarkRun
from appbench.seeding import derive_seed

DEFAULT_THRESHOLD = 0.2
DEFAULT_TIME_LIMIT_S = 60.0


@dataclass(frozen=True)
class QualityReport:
    f_qc: float
    f_opt: float
    delta_abs: float
    delta_rel: float | None
    theta: float | None

    @property
    def relative_defined(self) -> bool:
        return self.delta_rel is not None


def quality(f_qc: float, f_opt: float) -> QualityReport:
    """Absolute/relative optimality gap and approximation ratio.

    Both values must be non-negative. With ``f_opt == 0`` the relative
    quantities are undefined and reported as ``None``. ``theta`` is formed
    as ``1 + delta_rel`` so the identity holds bit-for-bit.
    """
    if f_qc < 0 or f_opt < 0:
        raise ValueError("objective values must be non-negative")
    delta_abs = f_qc - f_opt
    if f_opt == 0:
        return QualityReport(f_qc, f_opt, delta_abs, None, None)
    delta_rel = delta_abs / f_opt
    return QualityReport(f_qc, f_opt, delta_abs, delta_rel, 1.0 + delta_rel)


def beta_score(c: float, c_opt: float, c_rand: float) -> float:
    """``(C - C_rand) / (C_opt - C_rand)``, unclamped."""
    denom = c_opt - c_rand
    if denom == 0:
        raise ZeroDivisionError("degenerate beta score: C_opt equals C_rand")
    return (c - c_rand) / denom


def expected_maxcut_optimum(n: int) -> float:
    """Large-N estimate of the mean optimal cut of G(n, 1/2) graphs."""
    return n * n / 8 + 0.178 * n**1.5


# -- Q-score ----------------------------------------------------------------

Solver = Callable[[Q.QuboModel, "float | None", int], S.SampleSet]


def exact_solver() -> Solver:
    def solve(q, time_limit_s, seed):
        return S.brute_force(q, cap=1)

    solve.__name__ = "brute_force"
    return solve


def annealing_solver(sweeps: int = 200, reads: int = 10) -> Solver:
    sched = S.AnnealSchedule(sweeps=sweeps, reads=reads)

    def solve(q, time_limit_s, seed):
        return S.simulated_annealing(q, sched, seed, time_limit_s)

    solve.__name__ = f"simulated_annealing(sweeps={sweeps},reads={reads})"
    return solve


def uniform_solver(n_samples: int = 1000, statistic: str = "mean") -> Solver:
    """Random guessing.

    By default the sampler is scored by its mean cut, i.e. the expected
    cut of its output distribution; ``statistic="best"`` scores the best
    of ``n_samples`` draws instead.
    """

    def solve(q, time_limit_s, seed):
        return S.random_sampling(q, n_samples, seed)

    solve.__name__ = f"random_sampling(n_samples={n_samples})"
    solve.statistic = statistic
    return solve


@dataclass(frozen=True)
class SizeResult:
    n: int
    c: float
    c_opt: float
    c_rand: float
    beta: float
    elapsed_s: float
    c_opt_estimated: bool = False
    timeouts: int = 0
    instances: int = 0

    def passes(self, threshold: float) -> bool:
        return self.beta >= threshold and self.timeouts == 0


@dataclass
class QScoreResult:
    per_size: list[SizeResult]
    q_score: int | None
    threshold: float
    time_limit_s: float | None
    solver: str = ""
    stop_at_first_failure: bool = True
    meta: dict = field(default_factory=dict)

    def audit(self, tol: float = 1e-12) -> bool:
        """Recombine stored components and confirm every beta."""
        return all(
            abs(beta_score(r.c, r.c_opt, r.c_rand) - r.beta) <= tol * max(1.0, abs(r.beta))
            for r in self.per_size
        )

    def rescore(self, threshold: float) -> int | None:
        return _score(self.per_size, threshold, self.stop_at_first_failure)

    def to_dict(self) -> dict:
        return {
            "q_score": self.q_score,
            "threshold": self.threshold,
            "time_limit_s": self.time_limit_s,
            "solver": self.solver,
            "stop_at_first_failure": self.stop_at_first_failure,
            "per_size": [
                {
                    "N": r.n,
                    "C": r.c,
                    "C_opt": r.c_opt,
                    "C_rand": r.c_rand,
                    "beta": r.beta,
                    "elapsed_s": r.elapsed_s,
                    "C_opt_estimated": r.c_opt_estimated,
                    "timeouts": r.timeouts,
                    "instances": r.instances,
                }
                for r in self.per_size
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "C", "C_opt", "C_rand", "beta", "elapsed_s", "C_opt_estimated", "passed"])
        for r in self.per_size:
            w.writerow([
                r.n, repr(r.c), repr(r.c_opt), repr(r.c_rand), repr(r.beta),
                repr(r.elapsed_s), int(r.c_opt_estimated), int(r.passes(self.threshold)),
            ])
        return buf.getvalue()


def _score(per_size: Sequence[SizeResult], threshold: float, stop: bool) -> int | None:
    best = None
    for r in per_size:
        if r.passes(threshold):
            best = r.n
        elif stop:
            break
    return best


def q_score(
    solver: Solver,
    sizes: Sequence[int],
    instances_per_size: int = 20,
    time_limit_s: float | None = DEFAULT_TIME_LIMIT_S,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    edge_prob: float = 0.5,
    exhaustive_max: int = 26,
    rand_samples: int = 1000,
    stop_at_first_failure: bool = True,
    statistic: str | None = None,
) -> QScoreResult:
    """Largest MaxCut size at which ``solver`` keeps ``beta >= threshold``.

    Per size N, ``instances_per_size`` G(N, edge_prob) graphs are drawn.
    ``C`` is the mean of the solver's best cut, ``C_rand`` the mean cut of
    ``rand_samples`` uniform assignments, and ``C_opt`` the exhaustive
    optimum (N <= ``exhaustive_max``) or :func:`expected_maxcut_optimum`.
    An instance whose solve exceeds ``time_limit_s`` fails its size.

    ``statistic`` picks the per-instance cut taken from the solver's
    samples: ``"best"`` or ``"mean"`` (count-weighted). It defaults to the
    handle's ``statistic`` attribute, else ``"best"``.
    """
    stat = statistic or getattr(solver, "statistic", "best")
    if stat not in ("best", "mean"):
        raise ValueError(f"unknown statistic {stat!r}")
    sizes = list(sizes)
    if not sizes:
        raise ValueError("sizes must not be empty")
    if sorted(sizes) != sizes:
        raise ValueError("sizes must be ascending")
    per_size = []
    for n in sizes:
        cuts, opts, rands, times = [], [], [], []
        timeouts = 0
        estimated = n > exhaustive_max
        for i in range(instances_per_size):
            g = P.gen_maxcut(n, edge_prob, derive_seed(seed, n, i))
            q = Q.maxcut_to_qubo(g)
            t0 = time.perf_counter()
            ss = solver(q, time_limit_s, derive_seed(seed, n, i, 1))
            dt = time.perf_counter() - t0
            times.append(dt)
            if time_limit_s is not None and dt > time_limit_s:
                timeouts += 1
            cuts.append(-(ss.best_energy if stat == "best" else ss.mean_energy()))
            if not estimated:
                opts.append(-S.brute_force(q, cap=1).best_energy)
            rs = S.random_sampling(q, rand_samples, derive_seed(seed, n, i, 2))
            rands.append(-rs.info["mean_energy"])
        c = math.fsum(cuts) / len(cuts)
        c_opt = expected_maxcut_optimum(n) if estimated else math.fsum(opts) / len(opts)
        c_rand = math.fsum(rands) / len(rands)
        per_size.append(
            SizeResult(
                n, c, c_opt, c_rand, beta_score(c, c_opt, c_rand),
                math.fsum(times) / len(times), estimated, timeouts, instances_per_size,
            )
        )
        if stop_at_first_failure and not per_size[-1].passes(threshold):
            break
    return QScoreResult(
        per_size,
        _score(per_size, threshold, stop_at_first_failure),
        threshold,
        time_limit_s,
        getattr(solver, "__name__", "solver"),
        stop_at_first_failure,
        {
            "edge_prob": edge_prob,
            "instances_per_size": instances_per_size,
            "seed": seed,
            "statistic": stat,
        },
    )


# -- time accounting --------------------------------------------------------


def time_split(run: BenchmarkRun) -> tuple[float, float, float]:
    """(quantum seconds, classical seconds, quantum share) from phase clocks.

    Modules are tagged by ``run.devices`` (class default or config
    override); "quantum" means simulator-execution stages here.
    """
    quantum = classical = 0.0
    for t in run.wall_times:
        spent = t.pre_s + t.post_s
        if run.devices.get(t.module, "classical") == "quantum":
            quantum += spent
        else:
            classical += spent
    total = quantum + classical
    if total <= 0:
        raise ZeroDivisionError("total recorded time is zero")
    return quantum, classical, quantum / total
