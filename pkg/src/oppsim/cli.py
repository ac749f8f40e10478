"""Command line entry point: ``oppsim run|validate|gen-trace|trace-stats``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .core import ConfigError, TraceError
from .experiment import (build_spec, load_spec_text, run_experiment, synthetic_config,
                         write_outputs, apply_env_overrides)
from .traces import generate_synthetic, load_trace, serialize_trace, trace_stats

EXIT_OK, EXIT_CONFIG, EXIT_TRACE = 0, 2, 3
ENV_PREFIX = "OPPSIM_"

log = logging.getLogger("oppsim")


def _env(name: str, default):
    return os.environ.get(ENV_PREFIX + name, default)


def _read_spec(path: str):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        return None, p, [f"error: {path}: {e.strerror}"]
    raw, diags = load_spec_text(text, p.parent)
    return raw, p, diags


def cmd_validate(args) -> int:
    raw, _, diags = _read_spec(args.spec)
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return EXIT_CONFIG if any(str(d).startswith("error") for d in diags) else EXIT_OK


def cmd_run(args) -> int:
    raw, path, diags = _read_spec(args.spec)
    errors = [d for d in diags if str(d).startswith("error")]
    for d in diags:
        print(d, file=sys.stderr)
    if errors:
        return EXIT_CONFIG
    raw = apply_env_overrides(raw, os.environ, ENV_PREFIX)
    out_dir = Path(args.out or _env("OUT", None) or raw.get("output") or "results")
    jobs = int(args.jobs if args.jobs is not None else _env("JOBS", os.cpu_count() or 1))
    seed_base = int(args.seed_base if args.seed_base is not None else _env("SEED_BASE", 0))
    try:
        spec = build_spec(raw, path.parent)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(done, total, result):
        log.info("run %d/%d done: %d/%d delivered, %d forwardings", done, total,
                 len(result.deliveries), result.expected, result.forwardings)

    csv_path = out_dir / f"{spec.name}.csv"
    meta_path = out_dir / f"{spec.name}.meta"
    try:
        result = run_experiment(spec, jobs=jobs, seed_base=seed_base, progress=progress)
        write_outputs(result, out_dir, spec.name)
    except ConfigError as e:
        _cleanup(csv_path, meta_path)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceError as e:
        _cleanup(csv_path, meta_path)
        print(f"trace error: {e}", file=sys.stderr)
        return EXIT_TRACE
    except BaseException:
        _cleanup(csv_path, meta_path)
        raise
    print(csv_path)
    return EXIT_OK


def _cleanup(*paths: Path) -> None:
    for p in paths:
        p.unlink(missing_ok=True)
        p.with_suffix(p.suffix + ".tmp").unlink(missing_ok=True)


def cmd_gen_trace(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        syn = raw.get("trace", {}).get("synthetic", raw)
        days = float(args.days if args.days is not None else raw.get("days", 1))
        cfg = synthetic_config(syn, days, int(args.seed))
        records = generate_synthetic(cfg)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    text = serialize_trace(records)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_trace_stats(args) -> int:
    try:
        records = load_trace(args.trace)
        st = trace_stats(records)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TRACE
    except TraceError as e:
        print(f"trace error: {e}", file=sys.stderr)
        return EXIT_TRACE
    print(f"contacts={st.contacts}")
    print(f"nodes={st.nodes}")
    print(f"span_hours={st.span_hours:.6g}")
    print(f"contacts_per_hour={st.contacts_per_hour:.6g}")
    print(f"pairs={len(st.pair_totals)}")
    counts, edges = st.histogram
    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
        print(f"duration[{lo:g},{hi:g})={c}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oppsim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every sweep point and seed of an experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed-base", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check an experiment spec without running it")
    p.add_argument("--spec", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen-trace", help="write a synthetic contact trace")
    p.add_argument("--config", required=True, help="spec file or bare synthetic section")
    p.add_argument("--days", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("trace-stats", help="summarize a contact trace file")
    p.add_argument("trace")
    p.set_defaults(func=cmd_trace_stats)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
