"""Shared runner for the sweep scripts."""

import argparse
import sys
import time
from pathlib import Path

from oppsim.experiment import load_spec, run_experiment, write_outputs

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "oppsim" / "fixtures"


def _fmt(est, digits=3):
    return "-" if est.mean is None else f"{est.mean:.{digits}f}±{est.ci:.{digits}f}"


def sweep_main(fixture: str, column: str, argv=None) -> int:
    ap = argparse.ArgumentParser(description=f"Run the bundled {fixture} experiment.")
    ap.add_argument("--out", default="results")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seeds", type=int, help="override the fixture's seed count")
    ap.add_argument("--days", type=float, help="override the fixture's run length")
    args = ap.parse_args(argv)
    env = {}
    if args.seeds is not None:
        env["OPPSIM_SEEDS"] = str(args.seeds)
    if args.days is not None:
        env["OPPSIM_DAYS"] = str(args.days)
    spec = load_spec(FIXTURES / f"{fixture}.json", env=env)

    def progress(done, total, _):
        print(f"\r{done}/{total} runs", end="", file=sys.stderr, flush=True)

    t0 = time.perf_counter()
    result = run_experiment(spec, jobs=args.jobs,
                            progress=progress if sys.stderr.isatty() else None)
    print(f"\r{len(result.rows) * spec.seeds} runs in {time.perf_counter() - t0:.1f} s",
          file=sys.stderr)
    csv_path, _ = write_outputs(result, args.out, spec.name)
    print(f"{'protocol':<8} {column:>10} {'delivery':>14} {'cost':>16} {'latency (s)':>20}")
    for row in result.rows:
        s = row.summary
        key = row.ttl if column == "ttl" else row.msg_int
        print(f"{row.protocol:<8} {key:>10g} {_fmt(s.delivery_probability):>14} "
              f"{_fmt(s.cost):>16} {_fmt(s.latency, 0):>20}")
    print(f"wrote {csv_path}")
    return 0
