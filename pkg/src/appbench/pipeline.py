"""Typed module composition and the two-phase execution engine.

A pipeline is an ordered list of modules. Execution calls every module's
``preprocess`` in order and then every ``postprocess`` in reverse order,
handing each phase the payload produced by the phase before it::

    pre(1) -> pre(2) -> ... -> pre(k) -> post(k) -> ... -> post(1)

Modules emit :class:`MetricRecord` entries into an append-only log held by
the :class:`BenchmarkRun`.
"""

from __future__ import annotations

import enum
import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, ClassVar, Mapping, Sequence

import numpy as np

from appbench.seeding import derive_seed


class PayloadKind(str, enum.Enum):
    NOTHING = "Nothing"
    PROBLEM_GRAPH = "ProblemGraph"
    PORTFOLIO_INSTANCE = "PortfolioInstance"
    SALBP_INSTANCE = "SalbpInstance"
    SET_COVER_INSTANCE = "SetCoverInstance"
    QUBO = "Qubo"
    SAMPLE_SET = "SampleSet"
    DOMAIN_SOLUTION = "DomainSolution"
    CIRCUIT = "Circuit"
    STATEVECTOR = "Statevector"
    HAMILTONIAN_SPEC = "HamiltonianSpec"
    METRIC_BUNDLE = "MetricBundle"

    @classmethod
    def parse(cls, value: "str | PayloadKind") -> "PayloadKind":
        if isinstance(value, PayloadKind):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown payload kind {value!r}") from None


class Category(str, enum.Enum):
    HARDWARE = "hardware"
    CIRCUIT = "circuit"
    RESOURCE = "resource"
    PERFORMANCE = "performance"
    COMPLEXITY = "complexity"
    APPLICATION = "application"


class Capability(str, enum.Enum):
    SERIALIZABLE = "serializable"
    VISUALIZABLE = "visualizable"


# -- errors -----------------------------------------------------------------


class PipelineError(Exception):
    """Base class for composition and configuration errors."""


class EmptyPipeline(PipelineError):
    def __init__(self) -> None:
        super().__init__("pipeline empty")


class UnknownModule(PipelineError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown module {name!r}")
        self.name = name


class InterfaceMismatch(PipelineError):
    def __init__(self, index: int, expected: PayloadKind, found: PayloadKind) -> None:
        super().__init__(
            f"interface mismatch at position {index}: module expects "
            f"{expected.value} but previous module produces {found.value}"
        )
        self.index = index
        self.expected = expected
        self.found = found


class ModuleFailure(Exception):
    """A module raised during one of its phases; aborts the run."""

    def __init__(self, module: str, phase: str, message: str) -> None:
        super().__init__(f"{module}.{phase} failed: {message}")
        self.module = module
        self.phase = phase
        self.message = message

    def to_dict(self) -> dict:
        return {"module": self.module, "phase": self.phase, "message": self.message}


# -- records and runs -------------------------------------------------------


@dataclass(frozen=True)
class MetricRecord:
    module: str
    key: str
    value: float | int | str
    category: Category
    unit: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "category", Category(self.category))

    @property
    def is_clock(self) -> bool:
        """Clock readings differ between otherwise identical runs."""
        return self.unit == "s"

    def to_dict(self) -> dict:
        return {
            "module": self.module,
            "key": self.key,
            "value": _jsonable(self.value),
            "category": self.category.value,
            "unit": self.unit,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricRecord":
        return cls(d["module"], d["key"], d["value"], Category(d["category"]), d.get("unit"))


@dataclass(frozen=True)
class ModuleSpec:
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)
    input_kind: PayloadKind = PayloadKind.NOTHING
    output_kind: PayloadKind = PayloadKind.NOTHING
    capabilities: frozenset = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_kind", PayloadKind.parse(self.input_kind))
        object.__setattr__(self, "output_kind", PayloadKind.parse(self.output_kind))
        object.__setattr__(
            self, "capabilities", frozenset(Capability(c) for c in self.capabilities)
        )
        object.__setattr__(self, "params", dict(self.params))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": {k: _jsonable(v) for k, v in sorted(self.params.items())},
            "input_kind": self.input_kind.value,
            "output_kind": self.output_kind.value,
            "capabilities": sorted(c.value for c in self.capabilities),
        }


@dataclass(frozen=True)
class Pipeline:
    modules: tuple[ModuleSpec, ...]
    run_id: str = "run"
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "modules": [m.to_dict() for m in self.modules],
        }


@dataclass(frozen=True)
class Payload:
    """Tagged value flowing between phases."""

    kind: PayloadKind
    value: Any

    def to_dict(self, include_clock: bool = True) -> dict:
        value = _jsonable(self.value)
        return {"kind": self.kind.value, "value": value if include_clock else strip_clock(value)}


CLOCK_FIELDS = frozenset({"runtime_s", "elapsed_s", "total_s"})


def strip_clock(value: Any) -> Any:
    """Drop wall-clock fields from a JSON-ready payload."""
    if isinstance(value, dict):
        return {k: strip_clock(v) for k, v in value.items() if k not in CLOCK_FIELDS}
    if isinstance(value, list):
        return [strip_clock(v) for v in value]
    return value


@dataclass
class PhaseTiming:
    module: str
    pre_s: float = 0.0
    post_s: float = 0.0


@dataclass
class BenchmarkRun:
    pipeline: Pipeline
    records: list[MetricRecord] = field(default_factory=list)
    wall_times: list[PhaseTiming] = field(default_factory=list)
    final_payload: Payload | None = None
    failure: ModuleFailure | None = None
    phases: list[tuple[str, str]] = field(default_factory=list)
    total_s: float = 0.0
    devices: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.failure is None

    def query(
        self,
        module: str | None = None,
        key: str | None = None,
        category: Category | str | None = None,
    ) -> list[MetricRecord]:
        cat = Category(category) if category is not None else None
        return [
            r
            for r in self.records
            if (module is None or r.module == module)
            and (key is None or r.key == key)
            and (cat is None or r.category == cat)
        ]

    def to_dict(self, include_clock: bool = True) -> dict:
        """Result document; ``include_clock=False`` drops every clock reading."""
        records = [r for r in self.records if include_clock or not r.is_clock]
        doc = {
            "pipeline": self.pipeline.to_dict(),
            "status": "ok" if self.ok else "failed",
            "failure": self.failure.to_dict() if self.failure else None,
            "phases": [f"{m}.{p}" for m, p in self.phases],
            "devices": dict(sorted(self.devices.items())),
            "records": [r.to_dict() for r in records],
            "final_payload": self.final_payload.to_dict(include_clock) if self.final_payload else None,
        }
        if include_clock:
            doc["wall_times"] = self.timing_dict()
        return doc

    def timing_dict(self) -> dict:
        return {
            "total_s": self.total_s,
            "modules": [
                {"module": t.module, "pre_s": t.pre_s, "post_s": t.post_s}
                for t in self.wall_times
            ],
            "clock_records": [r.to_dict() for r in self.records if r.is_clock],
        }


def emit_metric(run: BenchmarkRun, record: MetricRecord) -> None:
    """Append ``record`` to the run's metric log."""
    if not isinstance(record.category, Category):
        raise ValueError(f"invalid category {record.category!r}")
    run.records.append(record)


# -- modules ----------------------------------------------------------------


class ModuleContext:
    """Per-phase handle given to modules: seed stream, config, metric sink."""

    def __init__(self, run: BenchmarkRun, name: str, index: int, config: Mapping) -> None:
        self._run = run
        self.module = name
        self.index = index
        self.seed = derive_seed(run.pipeline.seed, index)
        self.config = config

    def emit(self, key: str, value, category: Category | str, unit: str | None = None) -> None:
        emit_metric(self._run, MetricRecord(self.module, key, value, Category(category), unit))


class Core(ABC):
    """Base class of every pipeline module.

    Subclasses set ``name``, ``input_kind`` and ``output_kind`` and
    implement :meth:`preprocess`; :meth:`postprocess` defaults to passing
    data through unchanged.
    """

    name: ClassVar[str]
    input_kind: ClassVar[PayloadKind] = PayloadKind.NOTHING
    output_kind: ClassVar[PayloadKind] = PayloadKind.NOTHING
    capabilities: ClassVar[frozenset] = frozenset()
    device: ClassVar[str] = "classical"
    defaults: ClassVar[Mapping[str, Any]] = {}

    def __init__(self, **params: Any) -> None:
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise PipelineError(f"{self.name}: unknown parameters {sorted(unknown)}")
        self.params = {**self.defaults, **params}

    @abstractmethod
    def preprocess(self, data: Any, ctx: ModuleContext) -> Any: ...

    def postprocess(self, data: Any, ctx: ModuleContext) -> Any:
        return data


class Registry:
    """Name -> module class map; names are unique."""

    def __init__(self) -> None:
        self._classes: dict[str, type[Core]] = {}

    def register(self, cls: type[Core]) -> type[Core]:
        if cls.name in self._classes and self._classes[cls.name] is not cls:
            raise PipelineError(f"module name {cls.name!r} already registered")
        self._classes[cls.name] = cls
        return cls

    def __contains__(self, name: str) -> bool:
        return name in self._classes

    def get(self, name: str) -> type[Core]:
        try:
            return self._classes[name]
        except KeyError:
            raise UnknownModule(name) from None

    def names(self) -> list[str]:
        return sorted(self._classes)

    def spec(self, name: str, params: Mapping[str, Any] | None = None) -> ModuleSpec:
        cls = self.get(name)
        return ModuleSpec(
            name=name,
            params=dict(params or {}),
            input_kind=cls.input_kind,
            output_kind=cls.output_kind,
            capabilities=cls.capabilities,
        )


registry = Registry()


def register(cls: type[Core]) -> type[Core]:
    return registry.register(cls)


# -- validation and execution -----------------------------------------------


def validate_pipeline(
    modules: Sequence[ModuleSpec],
    registry: Registry | None = None,
    run_id: str = "run",
    seed: int = 0,
) -> Pipeline:
    """Check names and adjacent interface kinds; return a :class:`Pipeline`.

    Raises:
        EmptyPipeline: no modules given.
        UnknownModule: a name is not in the registry.
        InterfaceMismatch: ``output_kind(i-1) != input_kind(i)``.
    """
    reg = registry if registry is not None else globals()["registry"]
    modules = tuple(modules)
    if not modules:
        raise EmptyPipeline()
    for m in modules:
        reg.get(m.name)
    for i in range(1, len(modules)):
        if modules[i - 1].output_kind != modules[i].input_kind:
            raise InterfaceMismatch(i, modules[i].input_kind, modules[i - 1].output_kind)
    if not 0 <= int(seed) < 2**64:
        raise PipelineError("seed must be an unsigned 64-bit integer")
    return Pipeline(modules, run_id, int(seed))


_payload_kinds: list[tuple[type, PayloadKind]] = []


def register_payload_type(cls: type, kind: PayloadKind) -> None:
    _payload_kinds.append((cls, kind))


def kind_of(value: Any) -> PayloadKind:
    if value is None:
        return PayloadKind.NOTHING
    for cls, kind in _payload_kinds:
        if isinstance(value, cls):
            return kind
    if isinstance(value, Mapping):
        return PayloadKind.METRIC_BUNDLE
    raise TypeError(f"no payload kind for {type(value).__name__}")


def execute(
    pipeline: Pipeline,
    config: Mapping[str, Any] | None = None,
    registry: Registry | None = None,
    initial: Any = None,
) -> BenchmarkRun:
    """Run every preprocess in order, then every postprocess in reverse.

    A module exception aborts the run; the failure is stored on the
    returned run and no later phase executes. ``config["devices"]`` may map
    module names to ``"quantum"``/``"classical"`` to override the class tag.
    """
    reg = registry if registry is not None else globals()["registry"]
    config = dict(config or {})
    run = BenchmarkRun(pipeline=pipeline)
    run.wall_times = [PhaseTiming(m.name) for m in pipeline.modules]
    device_overrides = config.get("devices", {})
    start = time.perf_counter()

    instances: list[Core] = []
    contexts: list[ModuleContext] = []
    try:
        for i, spec in enumerate(pipeline.modules):
            cls = reg.get(spec.name)
            instances.append(cls(**spec.params))
            contexts.append(ModuleContext(run, spec.name, i, config))
            run.devices[spec.name] = device_overrides.get(spec.name, cls.device)
    except Exception as exc:  # bad params are a failure of that module
        name = pipeline.modules[len(instances)].name
        run.failure = ModuleFailure(name, "init", _message(exc))
        run.total_s = time.perf_counter() - start
        return run

    data = initial
    order = [(i, "preprocess") for i in range(len(instances))]
    order += [(i, "postprocess") for i in reversed(range(len(instances)))]
    for i, phase in order:
        module, ctx = instances[i], contexts[i]
        t0 = time.perf_counter()
        try:
            data = getattr(module, phase)(data, ctx)
        except Exception as exc:
            run.phases.append((module.name, phase))
            run.failure = ModuleFailure(module.name, phase, _message(exc))
            break
        finally:
            elapsed = time.perf_counter() - t0
            if phase == "preprocess":
                run.wall_times[i].pre_s = elapsed
            else:
                run.wall_times[i].post_s = elapsed
        run.phases.append((module.name, phase))
    if run.failure is None:
        run.final_payload = Payload(kind_of(data), data)
    run.total_s = time.perf_counter() - start
    return run


def _message(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


def _jsonable(value: Any) -> Any:
    """Convert payload values to JSON-compatible structures."""
    if hasattr(value, "to_dict"):
        return _jsonable(value.to_dict())
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [_jsonable(v) for v in items]
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return {"re": value.real.tolist(), "im": value.imag.tolist()}
        return value.tolist()
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return value


def jsonable(value: Any) -> Any:
    return _jsonable(value)


def spy_module(name: str, log: list, kind: PayloadKind = PayloadKind.NOTHING) -> type[Core]:
    """Build an identity module class that appends its phases to ``log``.

    Used to instrument execution order in tests and demos.
    """

    def pre(self, data, ctx):
        log.append((name, "preprocess"))
        return data

    def post(self, data, ctx):
        log.append((name, "postprocess"))
        return data

    return type(
        f"Spy_{name}",
        (Core,),
        {
            "name": name,
            "input_kind": kind,
            "output_kind": kind,
            "preprocess": pre,
            "postprocess": post,
        },
    )

