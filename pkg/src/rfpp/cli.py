"""Command line entry point: ``rfpp <experiment> --config run.toml --seed N --out dir``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, default_config, load_config, validate
from .harness import RunManifest, compare_manifests, rerun, run

COMMANDS = {
    "sample-field": "field",
    "distance": "distance",
    "mu": "mu",
    "shape": "shape",
    "lattice-verify": "lattice-verify",
    "geodesic": "geodesic",
    "enumerate": "enumerate",
}


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfpp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=f"run the {COMMANDS[name]} experiment")
        s.add_argument("--config", type=Path, help="TOML config (default: a small built-in one)")
        s.add_argument("--seed", type=_u64, help="base seed, overrides stats.base_seed")
        s.add_argument("--out", type=Path, help="output directory, overrides output_dir")
        s.add_argument("--workers", type=int, help="worker processes for ensembles")
    v = sub.add_parser("validate", help="check a config and list every invalid field")
    v.add_argument("config", type=Path)
    r = sub.add_parser("rerun", help="re-execute a run from its manifest and compare outputs")
    r.add_argument("manifest", type=Path)
    r.add_argument("--out", type=Path, required=True)
    d = sub.add_parser("default-config", help="print a small valid config for an experiment")
    d.add_argument("experiment", choices=sorted(COMMANDS))
    return p


def _print_summary(out: Path) -> None:
    summary = json.loads((out / "summary.json").read_text())
    for name in summary["selected_checks"]:
        c = summary["checks"][name]
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}  value={c.get('value')}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        _, errors = load_config(args.config)
        for e in errors:
            print(e, file=sys.stderr)
        print("valid" if not errors else f"{len(errors)} invalid field(s)")
        return 0 if not errors else 2
    if args.command == "default-config":
        print(default_config(COMMANDS[args.experiment]).to_toml(), end="")
        return 0
    if args.command == "rerun":
        old = RunManifest.load(args.manifest)
        new = rerun(args.manifest, args.out)
        diff = compare_manifests(old, new)
        for name in diff:
            print(f"differs: {name}")
        print("identical" if not diff else f"{len(diff)} file(s) differ")
        return 0 if not diff else 1

    kind = COMMANDS[args.command]
    if args.config is not None:
        cfg, errors = load_config(args.config)
        if cfg is not None and cfg.kind != kind:
            errors = errors + [f"kind: config is for {cfg.kind!r}, command runs {kind!r}"]
    else:
        cfg, errors = default_config(kind), []
    if cfg is not None:
        if args.seed is not None:
            cfg.stats.base_seed = args.seed
        if args.out is not None:
            cfg.output_dir = str(args.out)
        if args.workers is not None:
            cfg.stats.workers = args.workers
        errors = errors or validate(cfg)
    if errors:
        for e in errors:
            print(e, file=sys.stderr)
        return 2
    try:
        manifest = run(cfg)
    except ConfigError as exc:
        for e in exc.errors:
            print(e, file=sys.stderr)
        return 2
    _print_summary(Path(cfg.output_dir))
    print(f"output: {cfg.output_dir}  config: {manifest.config_hash[:12]}")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
