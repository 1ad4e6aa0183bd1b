"""Command line entry point: ``viscolab run|describe|schema``.

Exit codes: 0 all expectations pass, 1 an expectation failed, 2 the
config is invalid, 3 a solver failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import operator
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, schema_text
from .reports import Report, dumps
from .solve import SolverError

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq}

log = logging.getLogger("viscolab")


def check_expectations(cfg: ExperimentConfig, metrics: dict) -> list[dict]:
    """Evaluate the [expect] block against run metrics."""
    out = []
    for key, (op, target) in cfg.expect.items():
        value = metrics.get(key)
        if value is None:
            out.append({"metric": key, "op": op, "target": target, "value": None, "pass": False,
                        "note": "metric not produced by this run"})
            continue
        ok = bool(_OPS[op](float(value), target))
        out.append({"metric": key, "op": op, "target": target, "value": value, "pass": ok})
    return out


def validate_metrics(cfg: ExperimentConfig) -> None:
    from .pipelines import METRICS

    allowed = METRICS[cfg.kind]
    for key in cfg.expect:
        if key not in allowed:
            raise ConfigError(f"unknown metric 'expect.{key}' for kind {cfg.kind!r}; known: {', '.join(allowed)}",
                              f"expect.{key}", cfg.lines.get(f"expect.{key}"))


def write_manifest(out: Path, files) -> Path:
    """manifest.json listing every written file with its sha256 and size."""
    entries = []
    for f in sorted({Path(p).resolve() for p in files}):
        data = f.read_bytes()
        entries.append({"path": f.relative_to(out.resolve()).as_posix(), "sha256": hashlib.sha256(data).hexdigest(),
                        "bytes": len(data)})
    path = out / "manifest.json"
    path.write_text(json.dumps({"schema": "viscolab.manifest.v1", "files": entries}, indent=2) + "\n",
                    encoding="utf-8")
    return path


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config, seed=getattr(args, "seed", None), out=getattr(args, "out", None))
    validate_metrics(cfg)
    return cfg


def cmd_run(args) -> int:
    from .pipelines import run_pipeline

    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out or Path("runs") / (cfg.name or cfg.kind))
    try:
        res = run_pipeline(cfg, out)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"invalid problem: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    checks = check_expectations(cfg, res.metrics)
    passed = all(c["pass"] for c in checks)
    run_path = out / "run.json"
    run_path.write_text(dumps(Report("run", passed, {
        "kind": cfg.kind, "seed": cfg.seed, "config": cfg.to_dict(), "metrics": res.metrics,
        "expectations": checks,
    }).to_dict()) + "\n", encoding="utf-8")
    write_manifest(out, [*res.files, run_path])
    for k, v in res.metrics.items():
        print(f"{k:>22} = {v}")
    for c in checks:
        print(f"[{'PASS' if c['pass'] else 'FAIL'}] {c['metric']} {c['op']} {c['target']:g} (value {c['value']})")
    print(f"outputs: {out}")
    if not passed:
        print(f"expectation failed; see {run_path}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def cmd_describe(args) -> int:
    from .pipelines import plan

    try:
        cfg = _load(args)
        lines = plan(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("\n".join(lines))
    return EXIT_OK


def cmd_schema(args) -> int:
    print(schema_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscolab", description="Fully nonlinear elliptic experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_run)
    d = sub.add_parser("describe", help="print the resolved plan without computing")
    d.add_argument("config")
    d.add_argument("--seed", type=int, default=None)
    d.set_defaults(func=cmd_describe)
    s = sub.add_parser("schema", help="print the config grammar")
    s.set_defaults(func=cmd_schema)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
