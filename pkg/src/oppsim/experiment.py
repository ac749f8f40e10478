"""Experiment specs: loading, validation, traffic construction and sweep execution."""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .core import SECONDS_PER_DAY, ConfigError, Message, TraceError
from .engine import ProtocolParams, RunResult, Scenario, expected_deliveries, run
from .protocols import get_protocol
from .report import DesignDefaults, SweepRow, render_csv, render_metadata, summarize
from .traces import Group, SyntheticConfig, TraceRecord, clip_trace, generate_synthetic, load_trace

log = logging.getLogger(__name__)

_DURATION = re.compile(r"^\s*([0-9.]+)\s*([smhdw]?)\s*$")
_UNIT = {"": 1, "s": 1, "m": 60, "h": 3600, "d": 86400, "w": 7 * 86400}

# message rate per day by load, used when a hub spec gives no rates
DEFAULT_HUB_RATES = {20: 70.0, 35: 140.0}


def parse_duration(v) -> float:
    """Seconds from a number or a string like ``"2d"`` / ``"1w"`` / ``"90m"``."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if isinstance(v, str):
        m = _DURATION.match(v)
        if m:
            return float(m.group(1)) * _UNIT[m.group(2)]
    raise ValueError(f"bad duration {v!r}")


@dataclass
class Diagnostic:
    level: str  # "error" or "warning"
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.where}: {self.message}"


@dataclass
class SweepPoint:
    protocol: str
    ttl: float
    msg_int: Optional[int]


@dataclass
class ExperimentSpec:
    name: str
    raw: dict
    base_dir: Path
    protocols: list[str]
    ttls: list[float]
    msg_ints: list[Optional[int]]
    seeds: int = 1
    days: float = 1.0
    nodes: Optional[int] = None
    ci: str = "normal"
    output: Optional[str] = None

    def points(self) -> list[SweepPoint]:
        return [SweepPoint(get_protocol(p).name, t, mi)
                for p, t, mi in itertools.product(self.protocols, self.ttls, self.msg_ints)]

    @property
    def duration(self) -> float:
        return self.days * SECONDS_PER_DAY


# -- loading & validation ----------------------------------------------------

def _members(g: dict) -> list[int]:
    if "range" in g:
        lo, hi = g["range"]
        return list(range(int(lo), int(hi)))
    return [int(n) for n in g["members"]]


def synthetic_config(raw: dict, days: float, seed: int) -> SyntheticConfig:
    groups = [Group(_members(g), float(g.get("intra_rate", 0.0)), float(g.get("inter_rate", 0.0)))
              for g in raw["groups"]]
    windows = [tuple(map(float, w)) for w in raw.get("windows", [[9 * 3600, 17 * 3600]])]
    dmin, dmax = raw.get("duration", [60, 600])
    return SyntheticConfig(groups, windows, float(dmin), float(dmax),
                           days=int(np.ceil(days)), seed=int(raw.get("seed", 0)) + seed)


def _infer_nodes(raw: dict) -> Optional[int]:
    if raw.get("nodes") is not None:
        return int(raw["nodes"])
    syn = raw.get("trace", {}).get("synthetic")
    if syn:
        return max(max(_members(g)) for g in syn["groups"]) + 1
    return None


def check_spec(raw: Any, base_dir: Path = Path(".")) -> list[Diagnostic]:
    """Every error and warning in a parsed spec, without running anything."""
    out: list[Diagnostic] = []

    def err(where, msg):
        out.append(Diagnostic("error", where, msg))

    def warn(where, msg):
        out.append(Diagnostic("warning", where, msg))

    if not isinstance(raw, dict):
        err("<root>", "spec must be a JSON object")
        return out
    if not isinstance(raw.get("name", "x"), str):
        err("name", "must be a string")
    seeds = raw.get("seeds", 1)
    if not isinstance(seeds, int) or seeds < 1:
        err("seeds", "must be an integer >= 1")
    try:
        days = float(raw.get("days", 1))
        if days <= 0:
            err("days", "must be positive")
    except (TypeError, ValueError):
        err("days", "must be a number")
        days = 1.0
    if raw.get("ci", "normal") not in ("normal", "t"):
        err("ci", "must be 'normal' or 't'")

    sweep = raw.get("sweep")
    protocols: list[str] = []
    if not isinstance(sweep, dict):
        err("sweep", "missing sweep section")
        sweep = {}
    else:
        protocols = sweep.get("protocol") or []
        if not protocols:
            err("sweep.protocol", "needs at least one protocol")
        for n, p in enumerate(protocols):
            try:
                get_protocol(p)
            except (ValueError, AttributeError) as e:
                err(f"sweep.protocol[{n}]", str(e))
        ttls = sweep.get("ttl") or []
        if not ttls:
            err("sweep.ttl", "needs at least one TTL")
        for n, t in enumerate(ttls):
            try:
                if parse_duration(t) <= 0:
                    err(f"sweep.ttl[{n}]", "TTL must be positive")
            except ValueError as e:
                err(f"sweep.ttl[{n}]", str(e))
        for n, mi in enumerate(sweep.get("msg_int", [None])):
            if mi is not None and (not isinstance(mi, int) or mi < 1):
                err(f"sweep.msg_int[{n}]", "must be a positive integer")

    trace = raw.get("trace")
    if not isinstance(trace, dict) or not ({"file", "synthetic"} & set(trace)):
        err("trace", "needs 'file' or 'synthetic'")
    elif "file" in trace:
        if not (base_dir / trace["file"]).exists():
            err("trace.file", f"{trace['file']} not found")
    else:
        try:
            synthetic_config(trace["synthetic"], days, 0).validate()
        except (KeyError, TypeError, ValueError) as e:
            err("trace.synthetic", f"invalid: {e}")

    nodes = _infer_nodes(raw)
    if nodes is None and isinstance(trace, dict) and "file" in trace:
        err("nodes", "required when the trace comes from a file")

    params = raw.get("params", {})
    if not isinstance(params, dict):
        err("params", "must be an object")
    else:
        fields = {f.name for f in dataclasses.fields(ProtocolParams)}
        for k in sorted(set(params) - fields):
            err(f"params.{k}", f"unknown parameter; expected one of {sorted(fields)}")

    buffer = raw.get("buffer", {})
    capacity = buffer.get("capacity", 2_000_000) if isinstance(buffer, dict) else None
    if capacity is not None and (not isinstance(capacity, int) or capacity < 0):
        err("buffer.capacity", "must be a non-negative integer or null")
        capacity = None

    traffic = raw.get("traffic")
    if not isinstance(traffic, dict):
        err("traffic", "missing traffic section")
        return out
    model = traffic.get("model")
    if model not in ("hub", "groups", "unicast", "content"):
        err("traffic.model", f"unknown model {model!r}; use hub, groups, unicast or content")
        return out
    kinds = {get_protocol(p).receiver_driven for p in protocols
             if isinstance(p, str) and p.lower() in _known()}
    if model == "unicast" and True in kinds:
        err("traffic.model", "SCORP needs content-typed traffic, not destination-addressed messages")
    if model == "content" and False in kinds:
        warn("traffic.model", "receiver-driven traffic paired with a source-driven protocol")
    if model in ("hub",) and sweep.get("msg_int", [None]) == [None] and "msg_int" not in traffic:
        err("sweep.msg_int", "hub traffic needs msg_int values")
    if model == "hub" and False in kinds and nodes:
        _check_hub_schedule(traffic, sweep, nodes, days, warn)

    sizes = traffic.get("size", [1000, 100_000])
    if model in ("unicast", "content"):
        sizes = [m.get("size", 1000) for m in traffic.get("messages", [])] or [1000]
    try:
        smin, smax = min(sizes), max(sizes)
    except (TypeError, ValueError):
        err("traffic.size", "must be [min, max] bytes")
        return out
    if smin <= 0:
        err("traffic.size", "message sizes must be positive")
    if capacity is not None:
        if smin > capacity:
            warn("traffic.size", f"every message ({smin}..{smax} B) exceeds the {capacity} B buffer: all NoFit")
        elif smax > capacity:
            warn("traffic.size", f"messages up to {smax} B exceed the {capacity} B buffer")
    return out


def _check_hub_schedule(traffic: dict, sweep: dict, nodes: int, days: float, warn) -> None:
    """Warn when source-driven hub messages would be scheduled after the run ends."""
    try:
        receivers = traffic.get("receivers", "others")
        n_recv = nodes - 1 if receivers == "others" else len(receivers)
        start = parse_duration(traffic.get("start", 0))
        rates = {int(k): float(v) for k, v in traffic.get("rates", {}).items()}
    except (TypeError, ValueError):
        return
    for mi in sweep.get("msg_int", [traffic.get("msg_int")]):
        if not isinstance(mi, int) or mi < 1:
            continue
        rate = rates.get(mi, DEFAULT_HUB_RATES.get(mi, float(traffic.get("rate_per_day", 35))))
        total = mi * n_recv
        late = sum(1 for k in range(total) if start + k * SECONDS_PER_DAY / rate >= days * SECONDS_PER_DAY)
        if late:
            warn(f"sweep.msg_int={mi}", f"{late} of {total} source-driven messages fall after the "
                 f"{days:g}-day run and can never be delivered")


def _known() -> set[str]:
    from .protocols import ALIASES, PROTOCOLS
    return set(PROTOCOLS) | set(ALIASES)


def load_spec_text(text: str, base_dir: Path = Path(".")) -> tuple[Any, list[Diagnostic]]:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        return None, [Diagnostic("error", f"line {e.lineno} col {e.colno}", e.msg)]
    return raw, check_spec(raw, base_dir)


def apply_env_overrides(raw: dict, env=os.environ, prefix: str = "OPPSIM_") -> dict:
    """Top-level overrides such as ``OPPSIM_SEEDS=2`` or ``OPPSIM_DAYS=3`` (values parsed as JSON)."""
    raw = dict(raw)
    for k, v in env.items():
        if not k.startswith(prefix):
            continue
        key = k[len(prefix):].lower()
        if key in ("jobs", "out", "seed_base"):
            continue
        try:
            raw[key] = json.loads(v)
        except json.JSONDecodeError:
            raw[key] = v
    return raw


def build_spec(raw: dict, base_dir: Path = Path(".")) -> ExperimentSpec:
    diags = [d for d in check_spec(raw, base_dir) if d.level == "error"]
    if diags:
        raise ConfigError("; ".join(map(str, diags)))
    sweep = raw["sweep"]
    return ExperimentSpec(
        name=raw.get("name", "experiment"),
        raw=raw,
        base_dir=base_dir,
        protocols=list(sweep["protocol"]),
        ttls=[parse_duration(t) for t in sweep["ttl"]],
        msg_ints=list(sweep.get("msg_int", [raw["traffic"].get("msg_int")])),
        seeds=int(raw.get("seeds", 1)),
        days=float(raw.get("days", 1)),
        nodes=_infer_nodes(raw),
        ci=raw.get("ci", "normal"),
        output=raw.get("output"),
    )


def load_spec(path, env=None) -> ExperimentSpec:
    path = Path(path)
    raw, diags = load_spec_text(path.read_text(encoding="utf-8"), path.parent)
    errors = [d for d in diags if d.level == "error"]
    if errors:
        raise ConfigError("; ".join(map(str, errors)))
    if env is not None:
        raw = apply_env_overrides(raw, env)
    return build_spec(raw, path.parent)


# -- traffic -----------------------------------------------------------------

def _sizes(rng: np.random.Generator, traffic: dict, n: int) -> list[int]:
    lo, hi = traffic.get("size", [1000, 100_000])
    return [int(s) for s in rng.integers(int(lo), int(hi), size=n, endpoint=True)]


def hub_traffic(traffic: dict, nodes: int, msg_int: int, ttl: float, receiver_driven: bool,
                rng: np.random.Generator):
    """One source, ``msg_int`` messages per receiver (source-driven) or ``msg_int``
    interests per receiver over one message per content type (receiver-driven)."""
    source = int(traffic.get("source", 0))
    receivers = traffic.get("receivers", "others")
    if receivers == "others":
        receivers = [n for n in range(nodes) if n != source]
    receivers = [int(r) for r in receivers]
    n_types = int(traffic.get("types", len(receivers)))
    if msg_int > n_types:
        raise ConfigError(f"msg_int {msg_int} exceeds the {n_types} content types")
    start = parse_duration(traffic.get("start", 0))
    # interests are drawn first so both protocol families see the same random stream
    interests = {r: frozenset(int(x) for x in rng.choice(n_types, size=msg_int, replace=False))
                 for r in receivers}
    if receiver_driven:
        sizes = _sizes(rng, traffic, n_types)
        messages = [Message(x, source, sizes[x], start, ttl, content_type=x) for x in range(n_types)]
        return messages, interests
    rates = {int(k): float(v) for k, v in traffic.get("rates", {}).items()}
    rate = rates.get(msg_int, DEFAULT_HUB_RATES.get(msg_int, float(traffic.get("rate_per_day", 35))))
    total = msg_int * len(receivers)
    sizes = _sizes(rng, traffic, total)
    messages = [Message(k, source, sizes[k], start + k * SECONDS_PER_DAY / rate, ttl,
                        destination=receivers[k % len(receivers)])
                for k in range(total)]
    return messages, {}


def _interested_counts(types: list[int], sources: list[int], interests: dict) -> list[int]:
    return [sum(1 for n, ints in interests.items() if n != s and x in ints)
            for x, s in zip(types, sources)]


def solve_message_types(types: list[int], sources: list[int], interests: dict, n_types: int,
                        target: int, rng: np.random.Generator, max_iter: int = 20000) -> list[int]:
    """Re-draw message types by local search until the expected deliveries hit ``target``."""
    types = list(types)
    counts = _interested_counts(types, sources, interests)
    total = sum(counts)
    for _ in range(max_iter):
        if total == target:
            break
        k = int(rng.integers(len(types)))
        x = int(rng.integers(n_types))
        c = _interested_counts([x], [sources[k]], interests)[0]
        new_total = total - counts[k] + c
        if abs(new_total - target) < abs(total - target):
            types[k], counts[k], total = x, c, new_total
    return types


def groups_traffic(traffic: dict, groups: list[list[int]], nodes: int, msg_int: Optional[int],
                   ttl: float, receiver_driven: bool, rng: np.random.Generator):
    """Each group shares a random interest set; messages carry random content types.

    Source-driven protocols get the unicast expansion of the same content
    traffic: one message per (content message, interested node) pair,
    created at the same time, so expected deliveries match exactly.
    """
    n_types = int(traffic.get("types", 10))
    per_group = int(msg_int if msg_int is not None else traffic.get("interests_per_group", 3))
    if per_group > n_types:
        raise ConfigError(f"{per_group} interests per group exceed the {n_types} types")
    interests = {}
    for g in groups:
        chosen = frozenset(int(x) for x in rng.choice(n_types, size=per_group, replace=False))
        for n in g:
            interests[n] = chosen
    n_msgs = int(traffic.get("messages", 20))
    rate = float(traffic.get("rate_per_day", n_msgs))
    start = parse_duration(traffic.get("start", 0))
    sources = [int(s) for s in rng.integers(nodes, size=n_msgs)]
    types = [int(x) for x in rng.integers(n_types, size=n_msgs)]
    sizes = _sizes(rng, traffic, n_msgs)
    if traffic.get("target") is not None:
        types = solve_message_types(types, sources, interests, n_types, int(traffic["target"]), rng)
    times = [start + k * SECONDS_PER_DAY / rate for k in range(n_msgs)]
    if receiver_driven:
        msgs = [Message(k, sources[k], sizes[k], times[k], ttl, content_type=types[k])
                for k in range(n_msgs)]
        return msgs, interests
    msgs = []
    for k in range(n_msgs):
        for n in sorted(interests):
            if n != sources[k] and types[k] in interests[n]:
                msgs.append(Message(len(msgs), sources[k], sizes[k], times[k], ttl, destination=n))
    return msgs, {}


def explicit_traffic(traffic: dict, ttl: float, receiver_driven: bool):
    msgs, interests = [], {}
    for k, m in enumerate(traffic.get("messages", [])):
        at = parse_duration(m.get("at", 0))
        size = int(m.get("size", 1000))
        if traffic["model"] == "content":
            msgs.append(Message(k, int(m["src"]), size, at, ttl, content_type=int(m["type"])))
        else:
            msgs.append(Message(k, int(m["src"]), size, at, ttl, destination=int(m["dst"])))
    for n, ints in traffic.get("interests", {}).items():
        interests[int(n)] = frozenset(int(x) for x in ints)
    return msgs, interests


# -- running -----------------------------------------------------------------

def build_trace(spec: ExperimentSpec, seed: int) -> list[TraceRecord]:
    trace = spec.raw["trace"]
    if "file" in trace:
        records = load_trace(spec.base_dir / trace["file"])
    else:
        records = generate_synthetic(synthetic_config(trace["synthetic"], spec.days, seed))
    return clip_trace(records, spec.duration)


def _groups_for(spec: ExperimentSpec) -> list[list[int]]:
    traffic = spec.raw["traffic"]
    if "groups" in traffic:
        return [_members(g) if isinstance(g, dict) else list(g) for g in traffic["groups"]]
    syn = spec.raw["trace"].get("synthetic")
    if not syn:
        raise ConfigError("groups traffic needs traffic.groups when the trace is a file")
    return [_members(g) for g in syn["groups"]]


def build_scenario(spec: ExperimentSpec, point: SweepPoint, seed: int) -> Scenario:
    raw = spec.raw
    proto = get_protocol(point.protocol)
    traffic = raw["traffic"]
    nodes = spec.nodes
    # traffic randomness depends on seed and load only, never on protocol or TTL
    rng = np.random.default_rng([seed, point.msg_int or 0])
    model = traffic["model"]
    if model == "hub":
        msgs, interests = hub_traffic(traffic, nodes, point.msg_int, point.ttl, proto.receiver_driven, rng)
    elif model == "groups":
        msgs, interests = groups_traffic(traffic, _groups_for(spec), nodes, point.msg_int,
                                         point.ttl, proto.receiver_driven, rng)
    else:
        msgs, interests = explicit_traffic(traffic, point.ttl, proto.receiver_driven)
    buffer = raw.get("buffer", {})
    overrides = {int(k): (None if v is None else int(v))
                 for k, v in buffer.get("overrides", {}).items()}
    params = ProtocolParams(**{k: v for k, v in raw.get("params", {}).items()})
    spd = int(raw.get("samples_per_day", 24))
    return Scenario(
        name=spec.name, protocol=proto.name, nodes=nodes, duration=spec.duration,
        messages=msgs, interests=interests,
        buffer_capacity=buffer.get("capacity", 2_000_000), buffer_overrides=overrides,
        bandwidth=raw.get("bandwidth"), samples_per_day=spd, sample_duration=SECONDS_PER_DAY / spd,
        params=params, seed=seed,
        meta={"ttl": point.ttl, "msg_int": point.msg_int, "traffic": model},
    )


def _run_one(args) -> RunResult:
    scenario, trace = args
    result = run(scenario, trace)
    result.hops = []  # not needed for aggregation; keeps worker payloads small
    return result


@dataclass
class ExperimentResult:
    rows: list[SweepRow]
    csv: str
    metadata: str
    expected: list[int] = field(default_factory=list)


def run_experiment(spec: ExperimentSpec, jobs: int = 1, seed_base: int = 0,
                   progress=None) -> ExperimentResult:
    seeds = [seed_base + s for s in range(spec.seeds)]
    traces = {}
    for s in seeds:
        try:
            traces[s] = build_trace(spec, s)
        except (OSError, ValueError) as e:
            raise TraceError(str(e)) from e
    if spec.nodes is None:
        spec.nodes = max(max(r.b for r in t) for t in traces.values() if t) + 1
    points = spec.points()
    tasks = []
    for p in points:
        for s in seeds:
            sc = build_scenario(spec, p, s)
            sc.validate()
            tasks.append((sc, traces[s]))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = []
            for n, r in enumerate(pool.map(_run_one, tasks)):
                results.append(r)
                if progress:
                    progress(n + 1, len(tasks), r)
    else:
        results = []
        for n, t in enumerate(tasks):
            results.append(_run_one(t))
            if progress:
                progress(n + 1, len(tasks), results[-1])
    rows, expected = [], []
    for k, p in enumerate(points):
        chunk = results[k * len(seeds):(k + 1) * len(seeds)]
        summary = summarize(chunk, ci_method=spec.ci)
        rows.append(SweepRow(spec.name, p.protocol, p.ttl, p.msg_int, summary))
        expected.append(summary.expected)
    meta = {"experiment": spec.name, "seeds": ",".join(map(str, seeds)), "points": len(points)}
    defaults = DesignDefaults()
    if spec.ci == "t":
        defaults.ci_method = "student t"
    meta.update(defaults.items())
    first = tasks[0][0]
    meta.update({k: v for k, v in first.echo().items()
                 if k not in ("protocol", "messages") and not k.startswith("meta.")})
    meta["trace"] = json.dumps(spec.raw["trace"], sort_keys=True)
    meta["traffic"] = json.dumps(spec.raw["traffic"], sort_keys=True)
    return ExperimentResult(rows, render_csv(rows), render_metadata(meta), expected)


def write_outputs(result: ExperimentResult, out_dir, name: str) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = out_dir / f"{name}.csv", out_dir / f"{name}.meta"
    written = []
    try:
        for path, text in ((csv_path, result.csv), (meta_path, result.metadata)):
            tmp = path.with_suffix(path.suffix + ".tmp")
            written.append(tmp)
            tmp.write_text(text, encoding="utf-8")
            tmp.replace(path)
            written[-1] = path
    except OSError:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return csv_path, meta_path
