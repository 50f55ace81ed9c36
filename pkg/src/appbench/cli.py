"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 execution failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import yaml

import appbench.modules  # noqa: F401  (registers the built-in modules)
from appbench import hamiltonian as H
from appbench import metrics as M
from appbench.pipeline import (
    Category,
    ModuleSpec,
    Pipeline,
    PipelineError,
    execute,
    registry,
    validate_pipeline,
)
from appbench.seeding import derive_seed

OUTPUT_ENV = "APPBENCH_OUTPUT_ROOT"
INDEX = "index.json"
EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


class ConfigError(Exception):
    pass


# -- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    run_id: str
    seed: int
    repetitions: int
    modules: list[tuple[str, dict]]
    sweep: dict[str, list]
    devices: dict[str, str]

    def points(self) -> list[dict[str, Any]]:
        """Cross product of the sweep values, in declaration order."""
        keys = list(self.sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]

    def specs(self, point: dict[str, Any]) -> list[ModuleSpec]:
        out = []
        for name, params in self.modules:
            merged = dict(params)
            for key, value in point.items():
                mod, _, param = key.partition(".")
                if mod == name:
                    merged[param] = value
            out.append(registry.spec(name, merged))
        return out


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(doc or {})


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    modules = []
    for entry in doc.get("modules") or []:
        if isinstance(entry, str):
            modules.append((entry, {}))
        elif isinstance(entry, dict) and "name" in entry:
            modules.append((entry["name"], dict(entry.get("params") or {})))
        else:
            raise ConfigError(f"bad module entry {entry!r}")
    sweep = doc.get("sweep") or {}
    if not isinstance(sweep, dict) or any(not isinstance(v, list) or not v for v in sweep.values()):
        raise ConfigError("sweep must map 'Module.param' to non-empty lists")
    reps = doc.get("repetitions", 1)
    if not isinstance(reps, int) or reps < 1:
        raise ConfigError("repetitions must be >= 1")
    return RunConfig(
        str(doc.get("run_id", "run")),
        int(doc.get("seed", 0)),
        reps,
        modules,
        dict(sweep),
        dict(doc.get("devices") or {}),
    )


def validate_config(cfg: RunConfig) -> list[Pipeline]:
    """Full static check; everything run-time validation could reject."""
    names = [n for n, _ in cfg.modules]
    for key in cfg.sweep:
        mod, dot, param = key.partition(".")
        if not dot or mod not in names:
            raise ConfigError(f"sweep key {key!r} does not name a pipeline module")
        if param not in registry.get(mod).defaults:
            raise ConfigError(f"sweep key {key!r}: {mod} has no parameter {param!r}")
    for name, params in cfg.modules:
        allowed = registry.get(name).defaults
        unknown = sorted(set(params) - set(allowed))
        if unknown:
            raise ConfigError(f"{name}: unknown parameters {unknown}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return [validate_pipeline(cfg.specs(p), run_id=cfg.run_id, seed=cfg.seed) for p in cfg.points()]


# -- run --------------------------------------------------------------------


@dataclass(frozen=True)
class Job:
    name: str
    point_index: int
    rep: int
    point: dict
    seed: int
    specs: tuple[ModuleSpec, ...]
    run_id: str
    devices: dict
    out_dir: str


def _dump(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def run_job(job: Job) -> dict:
    pipeline = validate_pipeline(job.specs, run_id=f"{job.run_id}/{job.name}", seed=job.seed)
    run = execute(pipeline, {"devices": job.devices})
    doc = run.to_dict(include_clock=False)
    doc["point"] = job.point
    doc["repetition"] = job.rep
    out = Path(job.out_dir)
    (out / f"{job.name}.json").write_text(_dump(doc))
    (out / f"{job.name}.timing.json").write_text(_dump(run.timing_dict()))
    value = run.final_payload.value if run.final_payload else None
    if isinstance(value, dict) and "trace" in value:
        meta = value.get("meta", {})
        trace = H.Trace(meta.get("observable", "observable"), value["trace"], meta)
        (out / f"{job.name}.trace.csv").write_text(trace.to_csv())
    return {
        "name": job.name,
        "file": f"{job.name}.json",
        "timing": f"{job.name}.timing.json",
        "point": job.point,
        "repetition": job.rep,
        "seed": job.seed,
        "status": doc["status"],
    }


def plan_jobs(cfg: RunConfig, out_dir: Path) -> list[Job]:
    jobs = []
    for pi, point in enumerate(cfg.points()):
        specs = tuple(cfg.specs(point))
        for rep in range(cfg.repetitions):
            jobs.append(
                Job(f"run-{pi:03d}-{rep:03d}", pi, rep, point, derive_seed(cfg.seed, rep), specs, cfg.run_id, cfg.devices, str(out_dir))
            )
    return jobs


def run_all(cfg: RunConfig, out_dir: Path, jobs: int = 1) -> list[dict]:
    out_dir.mkdir(parents=True, exist_ok=True)
    planned = plan_jobs(cfg, out_dir)
    if jobs > 1 and len(planned) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(run_job, planned))
    else:
        entries = [run_job(j) for j in planned]
    index = {"run_id": cfg.run_id, "seed": cfg.seed, "repetitions": cfg.repetitions, "sweep": cfg.sweep, "runs": entries}
    (out_dir / INDEX).write_text(_dump(index))
    return entries


# -- report -----------------------------------------------------------------


def _point_label(point: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in point.items())


def build_report(out_dir: Path) -> tuple[dict[str, list[list]], list[str]]:
    """Aggregate numeric records per category; returns (tables, warnings)."""
    try:
        index = json.loads((out_dir / INDEX).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {out_dir / INDEX}: {exc}") from None
    groups: dict[tuple, list[float]] = {}
    warnings = []
    for entry in index.get("runs", []):
        try:
            doc = json.loads((out_dir / entry["file"]).read_text())
            records = list(doc["records"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            warnings.append(f"{entry.get('file')}: {type(exc).__name__}")
            continue
        try:
            timing = json.loads((out_dir / entry["timing"]).read_text())
            records += timing.get("clock_records", [])
        except (OSError, ValueError, KeyError):
            pass
        label = _point_label(entry.get("point", {}))
        for r in records:
            v = r.get("value")
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                continue
            groups.setdefault((r["category"], label, r["module"], r["key"], r.get("unit") or ""), []).append(float(v))
    tables: dict[str, list[list]] = {c.value: [] for c in Category}
    for (cat, label, module, key, unit), vals in groups.items():
        tables[cat].append([label, module, key, unit, len(vals), math.fsum(vals) / len(vals), min(vals), max(vals)])
    return tables, warnings


def write_report(out_dir: Path) -> tuple[list[Path], list[str]]:
    tables, warnings = build_report(out_dir)
    paths = []
    for cat, rows in tables.items():
        if not rows:
            continue
        path = out_dir / f"report_{cat}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["point", "module", "key", "unit", "count", "mean", "min", "max"])
            for row in rows:
                w.writerow([*row[:5], *(repr(x) for x in row[5:])])
        paths.append(path)
    return paths, warnings


# -- commands ---------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    pipelines = validate_config(cfg)
    n = len(pipelines[0].modules)
    extra = f", {len(pipelines)} sweep points" if len(pipelines) > 1 else ""
    print(f"valid, {n} modules{extra}")
    return EXIT_OK


def _out_dir(args, cfg: RunConfig) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ENV, "results")) / cfg.run_id


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.reps is not None:
        if args.reps < 1:
            raise ConfigError("--reps must be >= 1")
        overrides["repetitions"] = args.reps
    if overrides:
        cfg = RunConfig(**{**cfg.__dict__, **overrides})
    validate_config(cfg)
    out = _out_dir(args, cfg)
    entries = run_all(cfg, out, max(1, args.jobs))
    failed = [e["name"] for e in entries if e["status"] != "ok"]
    print(f"{len(entries)} runs written to {out}" + (f"; {len(failed)} failed: {', '.join(failed)}" if failed else ""))
    return EXIT_FAILED if failed else EXIT_OK


def cmd_report(args) -> int:
    paths, warnings = write_report(Path(args.dir))
    for p in paths:
        print(p)
    for w in warnings:
        print(f"warning: skipped {w}", file=sys.stderr)
    return EXIT_OK


def cmd_list(args) -> int:
    for name in registry.names():
        cls = registry.get(name)
        caps = ",".join(sorted(c.value for c in cls.capabilities)) or "-"
        print(f"{name}: {cls.input_kind.value} -> {cls.output_kind.value} [{caps}] {dict(cls.defaults)}")
    return EXIT_OK


def _sizes(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        out += list(range(int(lo), int(hi) + 1)) if hi else [int(lo)]
    return out


def cmd_qscore(args) -> int:
    solvers = {
        "exact": M.exact_solver,
        "annealing": lambda: M.annealing_solver(args.sweeps, args.reads),
        "uniform": M.uniform_solver,
    }
    res = M.q_score(
        solvers[args.solver](),
        _sizes(args.sizes),
        args.instances,
        args.time_limit,
        args.threshold,
        args.seed,
        stop_at_first_failure=not args.all_sizes,
    )
    text = res.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    print(f"q_score={res.q_score}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="appbench", description="Application-oriented benchmark pipelines.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a run-config without executing it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="execute a run-config")
    p.add_argument("config")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<run_id>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate a run directory into per-category CSVs")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("list-modules", help="list registered modules")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("qscore", help="run the MaxCut Q-score procedure")
    p.add_argument("--solver", choices=["exact", "annealing", "uniform"], default="annealing")
    p.add_argument("--sizes", default="5-15", help="e.g. 5-15 or 5,8,12")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--time-limit", type=float, default=M.DEFAULT_TIME_LIMIT_S)
    p.add_argument("--threshold", type=float, default=M.DEFAULT_THRESHOLD)
    p.add_argument("--sweeps", type=int, default=200)
    p.add_argument("--reads", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--all-sizes", action="store_true", help="do not stop at the first failing size")
    p.add_argument("--out", help="also write the per-size CSV here")
    p.set_defaults(func=cmd_qscore)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
