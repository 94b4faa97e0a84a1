"""Command-line experiment runner.

    plap <experiment> [--config FILE] [--seed S] [--out DIR] [--threads T] [--replicates R]
         [--set key=value ...]

A config file is JSON of the form
``{"experiment": "rates", "seed": 0, "out": "results/rates", "params": {...}}``;
command-line flags override its fields.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

import plap
from plap.experiments import EXPERIMENTS, Check, ConfigError, params_from_dict

__all__ = ["ExperimentConfig", "ExperimentReport", "load_config", "run_experiment", "main"]


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "results"
    threads: int = 1
    replicates: int | None = None

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown id {self.experiment!r}; "
                              f"choose from {', '.join(EXPERIMENTS)}")
        if not isinstance(self.params, dict):
            raise ConfigError("params: expected a JSON object")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed: expected a nonnegative integer, got {self.seed!r}")
        if isinstance(self.threads, bool) or not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError(f"threads: expected a positive integer, got {self.threads!r}")
        if self.replicates is not None:
            if isinstance(self.replicates, bool) or not isinstance(self.replicates, int) or self.replicates < 1:
                raise ConfigError(f"replicates: expected a positive integer, got {self.replicates!r}")
            if "replicates" not in EXPERIMENTS[self.experiment][0].__dataclass_fields__:
                raise ConfigError(f"replicates: experiment {self.experiment} has no replicate count")
        if not isinstance(self.out, str) or not self.out:
            raise ConfigError("out: expected a nonempty path")

    def resolved_params(self):
        raw = dict(self.params)
        if self.replicates is not None:
            raw["replicates"] = self.replicates
        return params_from_dict(self.experiment, raw)


@dataclass
class ExperimentReport:
    out: Path
    files: list[Path]
    checks: list[Check]
    wall_time: float
    manifest: Path

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    allowed = {"experiment", "params", "seed", "out", "threads", "replicates"}
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"{extra[0]}: unknown config field; expected one of {', '.join(sorted(allowed))}")
    return data


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    config.validate()
    params = config.resolved_params()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    runner = EXPERIMENTS[config.experiment][1]
    start = time.perf_counter()
    outcome = runner(params, config.seed, out, config.threads)
    wall = time.perf_counter() - start
    files = sorted(set(outcome.files))
    manifest = {
        "experiment": config.experiment,
        "config": {"seed": config.seed, "threads": config.threads, "out": str(out),
                   "params": asdict(params)},
        "versions": {"plap": plap.__version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_seconds": round(wall, 3),
        "checks": [asdict(c) for c in outcome.checks],
        "all_passed": all(c.passed for c in outcome.checks),
        "files": [{"path": p.name, "sha256": _sha256(p)} for p in files],
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return ExperimentReport(out, files, outcome.checks, wall, path)


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set: expected key=value, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plap", description="Run a p-Laplacian experiment.")
    ap.add_argument("experiment", choices=list(EXPERIMENTS))
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--threads", type=int, help="worker processes for replicates")
    ap.add_argument("--replicates", type=int)
    ap.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override one experiment parameter (value parsed as JSON)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = load_config(args.config) if args.config else {}
        if data.get("experiment", args.experiment) != args.experiment:
            raise ConfigError(f"experiment: config file is for {data['experiment']!r}, "
                              f"command line asks for {args.experiment!r}")
        params = dict(data.get("params", {}))
        params.update(_parse_set(args.set))
        config = ExperimentConfig(
            experiment=args.experiment,
            params=params,
            seed=args.seed if args.seed is not None else data.get("seed", 0),
            out=args.out or data.get("out", f"results/{args.experiment}"),
            threads=args.threads if args.threads is not None else data.get("threads", 1),
            replicates=args.replicates if args.replicates is not None else data.get("replicates"),
        )
        report = run_experiment(config)
    except ConfigError as exc:
        print(f"plap: invalid configuration: {exc}", file=sys.stderr)
        return 2
    for c in report.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    print(f"{len(report.files)} files written to {report.out} in {report.wall_time:.1f}s")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
