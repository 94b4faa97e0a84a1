"""Run every experiment config in scripts/configs and print a one-line verdict per run.

    python3 scripts/run_all.py [--skip rates] [--threads T] [--out-root DIR]
"""
import argparse
import json
import sys
from pathlib import Path

from plap.cli import ExperimentConfig, run_experiment
from plap.experiments import ConfigError

HERE = Path(__file__).resolve().parent


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--skip", action="append", default=[], help="config stem to skip (repeatable)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out-root", default=None, help="prefix for every output directory")
    args = ap.parse_args(argv)
    failed = 0
    for path in sorted((HERE / "configs").glob("*.json")):
        if path.stem in args.skip:
            continue
        data = json.loads(path.read_text())
        out = data.get("out", f"results/{path.stem}")
        if args.out_root:
            out = str(Path(args.out_root) / Path(out).name)
        cfg = ExperimentConfig(data["experiment"], data.get("params", {}), data.get("seed", 0), out,
                               args.threads, data.get("replicates"))
        try:
            rep = run_experiment(cfg)
        except ConfigError as exc:
            print(f"{path.stem:16s} CONFIG ERROR {exc}")
            failed += 1
            continue
        bad = [c for c in rep.checks if not c.passed]
        failed += bool(bad)
        print(f"{path.stem:16s} {'PASS' if not bad else 'FAIL'} "
              f"{len(rep.checks) - len(bad)}/{len(rep.checks)} checks, {rep.wall_time:.1f}s -> {rep.out}")
        for c in bad:
            print(f"{'':16s}   failed: {c.name}: {c.detail}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
