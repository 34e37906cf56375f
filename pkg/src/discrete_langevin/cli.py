"""Command-line entry point ``dlp``.

Subcommands::

    dlp run <config> [--seed-override N] [--out-dir DIR] [--threads N] [--state-cap N]
    dlp validate <config>
    dlp list-experiments
    dlp oracle <model-config> [--out-dir DIR] [--state-cap N]

Exit codes: 0 success, 1 config error, 2 runtime error (including partially
failed runs; completed results are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .config import EXPERIMENT_KINDS, ConfigError, load_text, parse_model_spec, parse_sampler_spec, validate_config
from .core import StateSpaceTooLarge
from .experiments import DESCRIPTIONS, build_model, build_sampler, oracle_dump, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from None


def _cmd_run(args) -> int:
    cfg = validate_config(_read(args.config))
    changes = {}
    if args.seed_override is not None:
        changes["seeds"] = (args.seed_override,)
    if args.out_dir is not None:
        changes["output_dir"] = args.out_dir
    if args.state_cap is not None:
        changes["state_cap"] = args.state_cap
    if changes:
        cfg = cfg.replace(**changes)
    result = run_experiment(cfg, threads=args.threads, base_dir=Path(args.config).parent)
    for row in result.summary:
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    print(f"wrote {', '.join(result.manifest['outputs'])} to {result.output_dir}")
    if result.failed:
        for r in result.failed:
            print(f"run {r.label} alpha={r.alpha} seed={r.seed} failed: {r.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = validate_config(_read(args.config))
    print(f"ok: {cfg.experiment} with {len(cfg.samplers)} sampler(s), seeds {list(cfg.seeds)}")
    return EXIT_OK


def _cmd_list(args) -> int:
    width = max(map(len, EXPERIMENT_KINDS))
    for kind in EXPERIMENT_KINDS:
        print(f"{kind:<{width}}  {DESCRIPTIONS[kind]}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    data = load_text(_read(args.config))
    errors: list[str] = []
    if not isinstance(data, dict) or "model" not in data:
        raise ConfigError(["model: required"])
    model_spec = parse_model_spec(data["model"], "model", errors)
    sampler_spec = None
    if data.get("sampler") is not None:
        sampler_spec = parse_sampler_spec(data["sampler"], "sampler", errors)
        if sampler_spec is not None and isinstance(sampler_spec.alpha, tuple):
            errors.append("sampler.alpha: the oracle takes a single stepsize")
    if errors:
        raise ConfigError(errors)
    model = build_model(model_spec, Path(args.config).parent)
    sampler = build_sampler(sampler_spec, sampler_spec.alpha) if sampler_spec else None
    cap = args.state_cap or 2**12
    out = Path(args.out_dir or "oracle_out")
    for path in oracle_dump(model, out, sampler, cap):
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dlp", description="Discrete Langevin proposal experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed-override", type=int, help="replace the seed list with this single seed")
    r.add_argument("--out-dir", help="write results here instead of the config's output_dir")
    r.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
    r.add_argument("--state-cap", type=int, help="largest state space to enumerate exactly")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check a config and report every problem")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)

    ls = sub.add_parser("list-experiments", help="show the experiment kinds")
    ls.set_defaults(func=_cmd_list)

    o = sub.add_parser("oracle", help="dump the exact distribution (and a sampler's kernel)")
    o.add_argument("config", help="YAML/JSON with a 'model' mapping and an optional 'sampler' mapping")
    o.add_argument("--out-dir")
    o.add_argument("--state-cap", type=int)
    o.set_defaults(func=_cmd_oracle)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (StateSpaceTooLarge, ValueError, FloatingPointError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
