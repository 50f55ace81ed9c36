"""Built-in pipeline modules.

Optimization pipelines follow the three-stage shape application ->
mapping -> solver. Preprocess builds the problem, maps it and solves it;
postprocess walks back, turning samples into a domain solution and the
domain solution into application metrics.
"""

from __future__ import annotations

from typing import Any

from appbench import circuits as C
from appbench import hamiltonian as H
from appbench import metrics as M
from appbench import problems as P
from appbench import qubo as Q
from appbench import solvers as S
from appbench.pipeline import Capability, Core, ModuleContext, PayloadKind, register

SER = frozenset({Capability.SERIALIZABLE})

# -- applications -----------------------------------------------------------


class Application(Core):
    """Generates an instance in preprocess, scores the solution in postprocess."""

    input_kind = PayloadKind.NOTHING
    exact_limit = 20

    def build(self, seed: int) -> Any:
        raise NotImplementedError

    def optimum(self) -> P.DomainSolution | None:
        return None

    def preprocess(self, data, ctx: ModuleContext):
        self.instance = self.build(ctx.seed)
        return self.instance

    def postprocess(self, data, ctx: ModuleContext):
        if not isinstance(data, P.DomainSolution):
            return data
        ctx.emit("objective", data.objective, "application")
        ctx.emit("feasible", int(data.feasible), "application")
        ctx.emit("violations", len(data.violations), "application")
        out = {"objective": data.objective, "feasible": data.feasible, "assignment": data.assignment}
        best = self.optimum()
        if best is not None:
            ctx.emit("optimum", best.objective, "application")
            out["optimum"] = best.objective
            if data.feasible and data.objective >= 0 and best.objective >= 0:
                rep = M.quality(data.objective, best.objective)
                ctx.emit("delta_abs", rep.delta_abs, "application")
                if rep.relative_defined:
                    ctx.emit("delta_rel", rep.delta_rel, "application")
                    ctx.emit("theta", rep.theta, "application")
        return out


@register
class MaxCut(Application):
    name = "MaxCut"
    output_kind = PayloadKind.PROBLEM_GRAPH
    capabilities = SER
    defaults = {"n": 10, "edge_prob": 0.5}

    def build(self, seed):
        return P.gen_maxcut(self.params["n"], self.params["edge_prob"], seed)

    def optimum(self):
        g = self.instance
        if g.n > self.exact_limit:
            return None
        bits = S.brute_force(Q.maxcut_to_qubo(g), cap=1).best[0]
        return P.maxcut_solution(g, bits)


@register
class SetCover(Application):
    name = "SetCover"
    output_kind = PayloadKind.SET_COVER_INSTANCE
    capabilities = SER
    defaults = {"universe_size": 6, "n_subsets": 6, "density": 0.3, "max_cost": 5}

    def build(self, seed):
        p = self.params
        return P.gen_setcover(p["universe_size"], p["n_subsets"], p["density"], seed, p["max_cost"])

    def optimum(self):
        if len(self.instance.subsets) > self.exact_limit:
            return None
        return P.brute_force_setcover(self.instance)


@register
class Portfolio(Application):
    name = "Portfolio"
    output_kind = PayloadKind.PORTFOLIO_INSTANCE
    capabilities = SER
    defaults = {"n": 8, "k": 3, "formulation": P.MINVOLA, "target": None}

    def build(self, seed):
        p = self.params
        return P.gen_portfolio(p["n"], p["k"], p["formulation"], p["target"], seed)

    def optimum(self):
        if self.instance.n > self.exact_limit:
            return None
        return P.brute_force_portfolio(self.instance)


@register
class Salbp(Application):
    name = "SALBP"
    output_kind = PayloadKind.SALBP_INSTANCE
    capabilities = SER
    defaults = {"n_tasks": 4, "cycle_time": 10, "precedence_density": 0.3, "max_stations": None}
    exact_limit = 6

    def build(self, seed):
        p = self.params
        return P.gen_salbp(p["n_tasks"], p["cycle_time"], p["precedence_density"], p["max_stations"], seed)

    def optimum(self):
        if self.instance.n_tasks > self.exact_limit:
            return None
        return P.brute_force_salbp(self.instance)


# -- mapping ----------------------------------------------------------------


class QuboMapping(Core):
    """Maps an instance to a QUBO; decodes the best sample on the way back."""

    output_kind = PayloadKind.QUBO
    capabilities = SER
    defaults = {"method": Q.SLACK, "lagrange": None, "max_vars": 1024}
    resolution = 1.0

    def preprocess(self, data, ctx):
        p = self.params
        cfg = Q.PenaltyConfig(method=p["method"], lagrange=p["lagrange"], max_vars=p["max_vars"], resolution=self.resolution)
        self.qubo = Q.to_qubo(data, cfg)
        ctx.emit("num_variables", self.qubo.n_vars, "complexity")
        ctx.emit("num_interactions", len(self.qubo.quadratic), "complexity")
        if self.qubo.lagrange is not None:
            ctx.emit("lagrange", self.qubo.lagrange, "complexity")
        return self.qubo

    def postprocess(self, data, ctx):
        if not isinstance(data, S.SampleSet):
            return data
        return Q.decode(self.qubo, data.best[0])


@register
class MaxCutQubo(QuboMapping):
    name = "MaxCutQubo"
    input_kind = PayloadKind.PROBLEM_GRAPH


@register
class SetCoverQubo(QuboMapping):
    name = "SetCoverQubo"
    input_kind = PayloadKind.SET_COVER_INSTANCE


@register
class PortfolioQubo(QuboMapping):
    name = "PortfolioQubo"
    input_kind = PayloadKind.PORTFOLIO_INSTANCE
    resolution = 1e-3


@register
class SalbpQubo(QuboMapping):
    name = "SALBPQubo"
    input_kind = PayloadKind.SALBP_INSTANCE


# -- solvers ----------------------------------------------------------------


class Solver(Core):
    """Solves in preprocess and passes the QUBO on; returns samples in postprocess."""

    input_kind = PayloadKind.QUBO
    output_kind = PayloadKind.QUBO
    capabilities = SER
    device = "quantum"

    def solve(self, q: Q.QuboModel, seed: int) -> S.SampleSet:
        raise NotImplementedError

    def preprocess(self, data, ctx):
        self.samples = self.solve(data, ctx.seed)
        ctx.emit("best_energy", self.samples.best_energy, "performance")
        ctx.emit("num_reads", self.samples.num_reads, "performance")
        ctx.emit("runtime_s", self.samples.runtime_s, "performance", unit="s")
        return data

    def postprocess(self, data, ctx):
        return self.samples


@register
class SimulatedAnnealer(Solver):
    name = "SimulatedAnnealer"
    defaults = {"sweeps": 1000, "reads": 10, "beta_start": None, "beta_end": None, "time_limit_s": None}

    def solve(self, q, seed):
        p = self.params
        sched = S.AnnealSchedule(p["sweeps"], p["reads"], p["beta_start"], p["beta_end"])
        return S.simulated_annealing(q, sched, seed, p["time_limit_s"])


@register
class BruteForce(Solver):
    name = "BruteForce"
    defaults = {"cap": 16}

    def solve(self, q, seed):
        return S.brute_force(q, self.params["cap"])


@register
class RandomSampler(Solver):
    name = "RandomSampler"
    defaults = {"n_samples": 1000}

    def solve(self, q, seed):
        return S.random_sampling(q, self.params["n_samples"], seed)


# -- circuits ---------------------------------------------------------------


@register
class QcnnAnsatz(Core):
    name = "QcnnAnsatz"
    output_kind = PayloadKind.CIRCUIT
    capabilities = SER
    defaults = {"n_qubits": 4, "layers": 1}

    def preprocess(self, data, ctx):
        c = C.qcnn_ansatz(self.params["n_qubits"], self.params["layers"])
        ctx.emit("qubits", c.n_qubits, "hardware")
        return c


@register
class CircuitMetrics(Core):
    name = "CircuitMetrics"
    input_kind = PayloadKind.CIRCUIT
    output_kind = PayloadKind.CIRCUIT
    capabilities = SER
    defaults = {"n_pairs": 5000, "bins": 75, "mw_samples": 1000}

    def preprocess(self, data: C.Circuit, ctx):
        p = self.params
        ctx.emit("depth", data.depth(), "circuit")
        ctx.emit("gate_count", len(data.gates), "circuit")
        ctx.emit("two_qubit_gates", data.two_qubit_count, "circuit")
        ctx.emit("parameters", len(data.symbols()), "circuit")
        ctx.emit("expressibility", C.expressibility(data, p["n_pairs"], p["bins"], ctx.seed), "circuit")
        if data.n_qubits >= 2:
            ctx.emit("meyer_wallach", C.mw_of_template(data, p["mw_samples"], ctx.seed), "circuit")
        return data


# -- Hamiltonian simulation -------------------------------------------------


def make_lattice(kind: str, size) -> H.Lattice:
    if kind == "chain":
        return H.chain(int(size))
    if kind == "square":
        rows, cols = size
        return H.square(int(rows), int(cols))
    if kind == "kagome_patch":
        if isinstance(size, (list, tuple)):
            return H.kagome_patch(int(size[0]), int(size[1]))
        return H.kagome_patch(int(size))
    raise ValueError(f"unknown lattice kind {kind!r}")


@register
class HubbardModel(Core):
    name = "HubbardModel"
    output_kind = PayloadKind.HAMILTONIAN_SPEC
    capabilities = SER
    defaults = {"lattice": "square", "size": [2, 2], "t": 1.0, "V": 0.0, "spin": "spinless"}

    def preprocess(self, data, ctx):
        p = self.params
        h = H.build_hubbard(make_lattice(p["lattice"], p["size"]), p["t"], p["V"], p["spin"])
        ctx.emit("qubits", h.n_qubits, "hardware")
        ctx.emit("pauli_terms", len(h.terms), "complexity")
        return h


@register
class HeisenbergModel(Core):
    name = "HeisenbergModel"
    output_kind = PayloadKind.HAMILTONIAN_SPEC
    capabilities = SER
    defaults = {"lattice": "chain", "size": 4, "j": 1.0}

    def preprocess(self, data, ctx):
        p = self.params
        h = H.build_heisenberg(make_lattice(p["lattice"], p["size"]), p["j"])
        ctx.emit("qubits", h.n_qubits, "hardware")
        ctx.emit("pauli_terms", len(h.terms), "complexity")
        return h


def _emit_trace(ctx, trace: H.Trace) -> dict:
    for row in trace.rows:
        ctx.emit(f"{trace.observable}@steps={row['steps']}", row["observable"], "application")
        ctx.emit(f"stderr@steps={row['steps']}", row["stderr"], "application")
    return {"trace": trace.rows, "meta": {**trace.meta, "observable": trace.observable}}


@register
class TrotterDynamics(Core):
    name = "TrotterDynamics"
    input_kind = PayloadKind.HAMILTONIAN_SPEC
    output_kind = PayloadKind.METRIC_BUNDLE
    device = "quantum"
    defaults = {"T": 2.0, "steps": [4, 8, 16, 32, 64], "p": 0.0, "shots": 1000}

    def preprocess(self, data: H.HamiltonianSpec, ctx):
        p = self.params
        step = H.trotter_step_circuit(data, p["T"] / max(H._steps_list(p["steps"])))
        ctx.emit("gates_per_step", len(step.gates), "circuit")
        ctx.emit("two_qubit_gates_per_step", step.two_qubit_count, "circuit")
        trace = H.evolve_dynamics(data, p["T"], p["steps"], H.NoiseModel(p["p"]), p["shots"], ctx.seed)
        return _emit_trace(ctx, trace)


@register
class AdiabaticPreparation(Core):
    name = "AdiabaticPreparation"
    input_kind = PayloadKind.HAMILTONIAN_SPEC
    output_kind = PayloadKind.METRIC_BUNDLE
    device = "quantum"
    defaults = {"total_time": 16.0, "steps": [8, 16, 32, 64], "p": 0.0, "shots": 100}

    def preprocess(self, data: H.HamiltonianSpec, ctx):
        p = self.params
        trace = H.adiabatic_prepare(data, p["steps"], p["total_time"], H.NoiseModel(p["p"]), p["shots"], ctx.seed)
        out = _emit_trace(ctx, trace)
        ctx.emit("min_energy_density", min(trace.values()), "application")
        return out


# -- Q-score ----------------------------------------------------------------

SOLVERS = {
    "exact": lambda p: M.exact_solver(),
    "annealing": lambda p: M.annealing_solver(p["sweeps"], p["reads"]),
    "uniform": lambda p: M.uniform_solver(p["n_samples"]),
}


@register
class QScore(Core):
    name = "QScore"
    output_kind = PayloadKind.METRIC_BUNDLE
    device = "quantum"
    defaults = {
        "solver": "annealing",
        "sizes": [5, 6, 7, 8, 9, 10],
        "instances_per_size": 20,
        "time_limit_s": M.DEFAULT_TIME_LIMIT_S,
        "threshold": M.DEFAULT_THRESHOLD,
        "sweeps": 200,
        "reads": 10,
        "n_samples": 1000,
    }

    def preprocess(self, data, ctx):
        p = self.params
        if p["solver"] not in SOLVERS:
            raise ValueError(f"unknown solver {p['solver']!r}; choose from {sorted(SOLVERS)}")
        res = M.q_score(
            SOLVERS[p["solver"]](p), p["sizes"], p["instances_per_size"], p["time_limit_s"], p["threshold"], ctx.seed
        )
        for r in res.per_size:
            ctx.emit(f"beta@N={r.n}", r.beta, "performance")
            ctx.emit(f"elapsed_s@N={r.n}", r.elapsed_s, "resource", unit="s")
        ctx.emit("q_score", res.q_score if res.q_score is not None else 0, "performance")
        return res.to_dict()
