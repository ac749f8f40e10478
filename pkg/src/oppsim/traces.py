"""Contact traces: the ``a b start end`` text format and a Poisson contact generator."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, TextIO

import numpy as np

from .core import SECONDS_PER_DAY, TraceError


class ParseError(TraceError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class EmptyTrace(TraceError):
    pass


@dataclass(frozen=True, order=True)
class TraceRecord:
    a: int
    b: int
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


def _canonical(a: int, b: int, start: float, end: float) -> TraceRecord:
    if a > b:
        a, b = b, a
    return TraceRecord(a, b, float(start), float(end))


def merge_records(records: Iterable[TraceRecord]) -> list[TraceRecord]:
    """Canonicalize, sort by start and merge overlapping or touching intervals of a pair."""
    by_pair: dict[tuple[int, int], list[tuple[float, float]]] = defaultdict(list)
    for r in records:
        c = _canonical(r.a, r.b, r.start, r.end)
        by_pair[(c.a, c.b)].append((c.start, c.end))
    out = []
    for (a, b), spans in by_pair.items():
        spans.sort()
        cur_s, cur_e = spans[0]
        for s, e in spans[1:]:
            if s <= cur_e:
                cur_e = max(cur_e, e)
            else:
                out.append(TraceRecord(a, b, cur_s, cur_e))
                cur_s, cur_e = s, e
        out.append(TraceRecord(a, b, cur_s, cur_e))
    out.sort(key=lambda r: (r.start, r.a, r.b, r.end))
    return out


def parse_trace(stream: TextIO | Iterable[str]) -> list[TraceRecord]:
    records = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(lineno, f"expected 4 fields 'a b start end', got {len(parts)}")
        try:
            a, b = int(parts[0]), int(parts[1])
            start, end = float(parts[2]), float(parts[3])
        except ValueError as e:
            raise ParseError(lineno, str(e)) from None
        if a < 0 or b < 0:
            raise ParseError(lineno, "node ids must be non-negative")
        if a == b:
            raise ParseError(lineno, f"self-contact on node {a}")
        if not (math.isfinite(start) and math.isfinite(end)) or start < 0:
            raise ParseError(lineno, "times must be finite and non-negative")
        if start >= end:
            raise ParseError(lineno, f"start {start} >= end {end}")
        records.append(_canonical(a, b, start, end))
    return merge_records(records)


def load_trace(path) -> list[TraceRecord]:
    with open(path, encoding="utf-8") as f:
        return parse_trace(f)


def serialize_trace(records: Iterable[TraceRecord]) -> str:
    lines = [f"{r.a} {r.b} {r.start:.3f} {r.end:.3f}" for r in merge_records(records)]
    return "\n".join(lines) + ("\n" if lines else "")


def clip_trace(records: Iterable[TraceRecord], duration: float) -> list[TraceRecord]:
    """Cut records to ``[0, duration)``, dropping those that start later."""
    out = []
    for r in records:
        if r.start >= duration:
            continue
        out.append(TraceRecord(r.a, r.b, r.start, min(r.end, duration)))
    return out


@dataclass
class Group:
    members: list[int]
    intra_rate: float  # contacts per hour per pair inside the group
    inter_rate: float = 0.0  # contacts per hour per pair with other groups


@dataclass
class SyntheticConfig:
    groups: list[Group]
    # active windows as (start, end) seconds within a day
    windows: list[tuple[float, float]] = field(default_factory=lambda: [(9 * 3600.0, 17 * 3600.0)])
    duration_min: float = 60.0
    duration_max: float = 600.0
    days: int = 1
    seed: int = 0

    def validate(self) -> None:
        for g in self.groups:
            if g.intra_rate < 0 or g.inter_rate < 0:
                raise ValueError("contact rates must be non-negative")
        for s, e in self.windows:
            if not 0 <= s < e <= SECONDS_PER_DAY:
                raise ValueError(f"window ({s}, {e}) not inside one day")
        if not 0 < self.duration_min <= self.duration_max:
            raise ValueError("need 0 < duration_min <= duration_max")
        if self.days < 1:
            raise ValueError("days must be >= 1")
        seen = set()
        for g in self.groups:
            if seen & set(g.members):
                raise ValueError("a node belongs to two groups")
            seen |= set(g.members)

    def pair_rates(self) -> dict[tuple[int, int], float]:
        """Contacts per hour for every node pair; inter-group pairs use the mean of both groups' rates."""
        group_of = {}
        for gi, g in enumerate(self.groups):
            for n in g.members:
                group_of[n] = gi
        rates = {}
        for a, b in combinations(sorted(group_of), 2):
            ga, gb = self.groups[group_of[a]], self.groups[group_of[b]]
            if group_of[a] == group_of[b]:
                r = ga.intra_rate
            else:
                r = 0.5 * (ga.inter_rate + gb.inter_rate)
            if r > 0:
                rates[(a, b)] = r
        return rates


def poisson_arrivals(rng: np.random.Generator, rate_per_s: float, start: float,
                     end: float) -> np.ndarray:
    n = rng.poisson(rate_per_s * (end - start))
    return np.sort(rng.uniform(start, end, size=n))


def generate_synthetic(config: SyntheticConfig, merge: bool = True) -> list[TraceRecord]:
    """Poisson contacts per pair inside each daily active window, clipped to the window."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    records = []
    for (a, b), rate in sorted(config.pair_rates().items()):
        for day in range(config.days):
            base = day * SECONDS_PER_DAY
            for ws, we in config.windows:
                starts = poisson_arrivals(rng, rate / 3600.0, base + ws, base + we)
                durations = rng.uniform(config.duration_min, config.duration_max, size=len(starts))
                for s, d in zip(starts, durations):
                    e = min(s + d, base + we)
                    if e > s:
                        records.append(TraceRecord(a, b, float(s), float(e)))
    if merge:
        return merge_records(records)
    records.sort(key=lambda r: (r.start, r.a, r.b))
    return records


@dataclass
class TraceStats:
    contacts: int
    span_hours: float
    contacts_per_hour: float
    pair_totals: dict[tuple[int, int], float]
    histogram: tuple[np.ndarray, np.ndarray]
    nodes: int


def trace_stats(records: list[TraceRecord], bins: Optional[Iterable[float]] = None) -> TraceStats:
    if not records:
        raise EmptyTrace("trace has no records")
    span = max(r.end for r in records) - min(r.start for r in records)
    totals: dict[tuple[int, int], float] = defaultdict(float)
    for r in records:
        totals[(r.a, r.b)] += r.duration
    durations = np.array([r.duration for r in records])
    if bins is None:
        bins = [0, 60, 300, 900, 1800, 3600, 7200, max(7200.0, float(durations.max())) + 1]
    hist = np.histogram(durations, bins=np.asarray(list(bins), dtype=float))
    nodes = len({r.a for r in records} | {r.b for r in records})
    hours = span / 3600.0
    return TraceStats(len(records), hours, len(records) / hours, dict(sorted(totals.items())),
                      hist, nodes)
