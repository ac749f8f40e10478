"""Aggregation across seeds, CSV/metadata output and the analytic calculators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .engine import RunResult


class EmptyInput(ValueError):
    pass


class MixedScenarios(ValueError):
    pass


@dataclass(frozen=True)
class Estimate:
    mean: Optional[float]
    ci: Optional[float]  # half-width
    n: int

    @property
    def low(self):
        return None if self.mean is None else self.mean - self.ci

    @property
    def high(self):
        return None if self.mean is None else self.mean + self.ci


@dataclass
class MetricsSummary:
    delivery_probability: Estimate
    cost: Estimate
    latency: Estimate
    drops: dict[str, int]
    runs: int
    excluded: int  # runs with no delivery, left out of cost and latency
    expected: int
    ci_method: str = "normal"


def confidence_interval(values: Sequence[float], method: str = "normal",
                        level: float = 0.95) -> Estimate:
    """Mean and CI half-width; a single value gives a zero-width interval."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n == 0:
        return Estimate(None, None, 0)
    mean = float(x.mean())
    if n == 1:
        return Estimate(mean, 0.0, 1)
    sd = float(x.std(ddof=1))
    if method == "normal":
        q = 1.96 if level == 0.95 else stats.norm.ppf(0.5 + level / 2)
    elif method == "t":
        q = stats.t.ppf(0.5 + level / 2, df=n - 1)
    else:
        raise ValueError(f"unknown ci method {method!r}")
    return Estimate(mean, q * sd / math.sqrt(n), n)


def _fingerprint(r: RunResult) -> tuple:
    return tuple(sorted((k, repr(v)) for k, v in r.config.items() if k != "seed"))


def summarize(results: Sequence[RunResult], expected: Optional[int] = None,
              ci_method: str = "normal") -> MetricsSummary:
    if not results:
        raise EmptyInput("no runs to summarize")
    if len({_fingerprint(r) for r in results}) > 1:
        raise MixedScenarios("runs come from different scenarios")
    dps, costs, lats = [], [], []
    drops: dict[str, int] = {}
    for r in results:
        exp = r.expected if expected is None else expected
        n = len(r.deliveries)
        if n > exp:
            raise ValueError(f"{n} deliveries exceed the {exp} expected")
        dps.append(n / exp if exp else 0.0)
        if n:
            costs.append(r.forwardings / n)
            lats.append(sum(d.latency for d in r.deliveries) / n)
        for k, v in r.drops.items():
            drops[k] = drops.get(k, 0) + v
    exp = results[0].expected if expected is None else expected
    return MetricsSummary(
        delivery_probability=confidence_interval(dps, ci_method),
        cost=confidence_interval(costs, ci_method),
        latency=confidence_interval(lats, ci_method),
        drops=drops,
        runs=len(results),
        excluded=len(results) - len(costs),
        expected=exp,
        ci_method=ci_method,
    )


def teci_alloc(m: int, k: int, x_bits: int) -> int:
    """Bits needed per node to compute weights over ``m`` interests and ``k`` slots."""
    for name, v in (("m", m), ("k", k), ("x_bits", x_bits)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer")
    return int(m) * (int(k) + 2) * int(x_bits)


UNITS = {"B": 0, "KB": 1, "MB": 2, "GB": 3, "TB": 4}


def convert_bytes(n_bytes: float, unit: str, binary: bool = True) -> float:
    base = 1024 if binary else 1000
    return n_bytes / base ** UNITS[unit]


def buffer_estimate(forwardings: float, days: float, nodes: int, avg_msg_bytes: float) -> float:
    """Worst-case per-node buffer occupancy in bytes if every replica stays for a day."""
    if forwardings == 0:
        return 0.0
    if min(forwardings, days, nodes, avg_msg_bytes) <= 0:
        raise ValueError("inputs must be positive")
    return forwardings / (days * nodes) * avg_msg_bytes


CSV_COLUMNS = ["scenario", "protocol", "ttl", "msg_int", "dp_mean", "dp_ci", "cost_mean",
               "cost_ci", "lat_mean_s", "lat_ci", "runs", "drops_ttl", "drops_evict", "expected"]


def _g(v) -> str:
    return "" if v is None else f"{v:.6g}"


@dataclass
class SweepRow:
    scenario: str
    protocol: str
    ttl: float
    msg_int: Optional[int]
    summary: MetricsSummary

    def cells(self) -> list[str]:
        s = self.summary
        return [self.scenario, self.protocol, _g(self.ttl),
                "" if self.msg_int is None else str(self.msg_int),
                _g(s.delivery_probability.mean), _g(s.delivery_probability.ci),
                _g(s.cost.mean), _g(s.cost.ci), _g(s.latency.mean), _g(s.latency.ci),
                str(s.runs), str(s.drops.get("ttl", 0)), str(s.drops.get("eviction", 0)),
                str(s.expected)]


def render_csv(rows: Iterable[SweepRow]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(",".join(r.cells()) for r in rows)
    return "\n".join(lines) + "\n"


def render_metadata(items: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in items.items())


@dataclass
class DesignDefaults:
    """Choices that stand in for parameters the source leaves open; echoed in every metadata file."""

    ttl_boundary: str = "expired at created_at+ttl"
    eviction_policy: str = "fifo-by-reception"
    ci_method: str = "normal z=1.96"
    teci_index_wrap: str = "modulo samples_per_day"
    interest_credit: str = "full duration per interest"
    straddling_contacts: str = "split at sample boundaries"
    partial_sample_in_weight: str = "excluded until sample closes"
    snw_split: str = "floor(c/2) to peer"
    encounter_order: str = "lower node id first, ascending message id"
    dlife_importance: str = "stand-in: alpha*sum(w*I_prev)+(1-alpha)"
    transfer_model: str = "instantaneous unless bandwidth set"
    zero_delivery_runs: str = "dp=0, excluded from cost and latency"
    event_tie_order: str = "down<boundary<create<up<transfer"
    extra: dict = field(default_factory=dict)

    def items(self) -> dict:
        d = {f"default.{k}": v for k, v in self.__dict__.items() if k != "extra"}
        d.update(self.extra)
        return d
