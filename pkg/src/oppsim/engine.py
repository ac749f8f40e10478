"""Deterministic discrete-event simulator for contact-driven forwarding."""

from __future__ import annotations

import dataclasses
import heapq
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (Buffer, ConfigError, Contact, DeliveryRecord, Message, NoFit, NodeId,
                   TraceError, sample_index, split_interval)
from .protocols import EncounterSummary, ForwardAction, Kind, get_protocol
from .social import (CentralityState, CommunityState, InterestSocialState, PeerSocialState,
                     cwindow_update, dlife_importance, kclique_update)

log = logging.getLogger(__name__)

# simultaneous events are processed in this order
CONTACT_DOWN, SAMPLE_BOUNDARY, CREATE_MESSAGE, CONTACT_UP, TRANSFER_COMPLETE = range(5)

EVICTION_POLICY = "fifo-by-reception"


@dataclass
class ProtocolParams:
    snw_copies: int = 10
    kclique_k: int = 5
    familiar_threshold: float = 7200.0
    window_duration: float = 6 * 3600.0
    # dLife importance: stand-in recurrence, not the published dLife formula
    importance_alpha: float = 0.8
    importance_init: float = 1.0
    # importances are rescaled by their max once it passes this bound; ordering is preserved
    importance_rescale: float = 1e12


@dataclass
class Scenario:
    """A fully concrete run description: every message and interest is listed."""

    name: str
    protocol: str
    nodes: int
    duration: float
    messages: list[Message] = field(default_factory=list)
    interests: dict[NodeId, frozenset[int]] = field(default_factory=dict)
    buffer_capacity: Optional[int] = 2_000_000
    buffer_overrides: dict[NodeId, Optional[int]] = field(default_factory=dict)
    bandwidth: Optional[float] = None
    samples_per_day: int = 24
    sample_duration: float = 3600.0
    params: ProtocolParams = field(default_factory=ProtocolParams)
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def capacity_of(self, node: NodeId) -> Optional[int]:
        return self.buffer_overrides.get(node, self.buffer_capacity)

    def validate(self) -> None:
        proto = get_protocol(self.protocol)
        if self.nodes < 1:
            raise ConfigError("nodes must be >= 1")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if abs(self.samples_per_day * self.sample_duration - 86400.0) > 1e-9:
            raise ConfigError("samples_per_day * sample_duration must equal 86400")
        if proto.name == "bubble":
            ratio = self.params.window_duration / self.sample_duration
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError("window_duration must be a multiple of sample_duration")
        if self.buffer_capacity is not None and self.buffer_capacity < 0:
            raise ConfigError("buffer capacity must be non-negative")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive")
        if self.params.snw_copies < 1:
            raise ConfigError("snw_copies must be >= 1")
        seen = set()
        for m in self.messages:
            if m.id in seen:
                raise ConfigError(f"duplicate message id {m.id}")
            seen.add(m.id)
            if not 0 <= m.source < self.nodes:
                raise ConfigError(f"message {m.id}: source {m.source} out of range")
            if proto.receiver_driven and m.content_type is None:
                raise ConfigError(f"{proto.name} needs content-typed messages (message {m.id})")
            if not proto.receiver_driven:
                if m.destination is None:
                    raise ConfigError(f"{proto.name} needs destination-addressed messages (message {m.id})")
                if not 0 <= m.destination < self.nodes or m.destination == m.source:
                    raise ConfigError(f"message {m.id}: bad destination {m.destination}")
        for n in self.interests:
            if not 0 <= n < self.nodes:
                raise ConfigError(f"interest list for unknown node {n}")

    def interest_universe(self) -> list[int]:
        keys = set()
        for s in self.interests.values():
            keys |= s
        keys |= {m.content_type for m in self.messages if m.content_type is not None}
        return sorted(keys)

    def echo(self) -> dict:
        return {
            "scenario": self.name,
            "protocol": get_protocol(self.protocol).name,
            "nodes": self.nodes,
            "duration_s": self.duration,
            "buffer_capacity": self.buffer_capacity,
            "buffer_overrides": dict(sorted(self.buffer_overrides.items())),
            "bandwidth": self.bandwidth,
            "samples_per_day": self.samples_per_day,
            "sample_duration_s": self.sample_duration,
            "eviction_policy": EVICTION_POLICY,
            **{f"param.{k}": v for k, v in dataclasses.asdict(self.params).items()},
            **{f"meta.{k}": v for k, v in sorted(self.meta.items())},
        }


def expected_deliveries(scenario: Scenario) -> int:
    if get_protocol(scenario.protocol).receiver_driven:
        total = 0
        for m in scenario.messages:
            total += sum(1 for n, ints in scenario.interests.items()
                         if n != m.source and m.content_type in ints)
        return total
    return len(scenario.messages)


@dataclass
class RunResult:
    deliveries: list[DeliveryRecord]
    forwardings: int
    drops: dict[str, int]
    peak_occupancy: list[int]
    config: dict
    expected: int
    hops: list[tuple[float, NodeId, NodeId, int]] = field(default_factory=list)


class _Node:
    __slots__ = ("id", "buffer", "consumed", "carried", "interests", "copies", "social",
                 "community", "centrality", "peak")

    def __init__(self, node_id: NodeId, capacity: Optional[int], interests: frozenset):
        self.id = node_id
        self.buffer = Buffer(capacity)
        self.consumed: set[int] = set()
        # ids buffered or consumed: what peers must not send again
        self.carried: set[int] = set()
        self.interests = interests
        self.copies: dict[int, int] = {}
        self.social = None
        self.community: Optional[CommunityState] = None
        self.centrality: Optional[CentralityState] = None
        self.peak = 0


class _Link:
    __slots__ = ("contact", "accrued_until", "snap", "sent", "busy", "gen")

    def __init__(self, contact: Contact, gen: int):
        self.contact = contact
        self.accrued_until = contact.start
        self.snap: dict[NodeId, EncounterSummary] = {}
        self.sent: set[tuple[NodeId, int]] = set()
        self.busy = False
        self.gen = gen


class Simulation:
    """One run of a scenario over a contact trace.

    Keep the object around after ``run()`` to inspect per-node social state.
    """

    def __init__(self, scenario: Scenario, trace: Sequence, exact_social: bool = False):
        scenario.validate()
        self.scenario = scenario
        self.protocol = get_protocol(scenario.protocol)
        self.kind = self.protocol.name
        self.spd = scenario.samples_per_day
        self.sd = scenario.sample_duration
        self.contacts = self._check_trace(trace)
        self.nodes = [_Node(n, scenario.capacity_of(n), frozenset(scenario.interests.get(n, ())))
                      for n in range(scenario.nodes)]
        p = scenario.params
        if self.kind == "scorp":
            keys = scenario.interest_universe()
            for nd in self.nodes:
                nd.social = InterestSocialState(nd.id, keys, self.spd, exact_social)
        elif self.kind == "dlife":
            for nd in self.nodes:
                nd.social = PeerSocialState(nd.id, range(scenario.nodes), self.spd, exact_social,
                                            importance=p.importance_init)
        elif self.kind == "bubble":
            for nd in self.nodes:
                nd.community = CommunityState(nd.id, p.kclique_k, p.familiar_threshold)
                nd.centrality = CentralityState(nd.id, p.window_duration)
        self.now = 0.0
        self.queue: list = []
        self._seq = itertools.count()
        self._gen = itertools.count()
        self.links: dict[tuple[NodeId, NodeId], _Link] = {}
        self.adj: dict[NodeId, set[NodeId]] = {n: set() for n in range(scenario.nodes)}
        self.deliveries: list[DeliveryRecord] = []
        self.forwardings = 0
        self.drops = {"ttl": 0, "eviction": 0, "nofit": 0}
        self.hops: list[tuple[float, NodeId, NodeId, int]] = []
        self.sample = 0

    def _check_trace(self, trace) -> list[Contact]:
        out = []
        for r in trace:
            a, b = r.a, r.b
            if not (0 <= a < self.scenario.nodes and 0 <= b < self.scenario.nodes):
                raise TraceError(f"contact {a}-{b}: node id outside 0..{self.scenario.nodes - 1}")
            if r.start < 0 or r.end > self.scenario.duration:
                raise TraceError(f"contact {a}-{b} [{r.start}, {r.end}) outside scenario duration")
            try:
                out.append(Contact(a, b, r.start, r.end))
            except ValueError as e:
                raise TraceError(str(e)) from None
        out.sort(key=lambda c: (c.start, c.a, c.b))
        last_end: dict[tuple[int, int], float] = {}
        for c in out:
            if c.start < last_end.get((c.a, c.b), -1.0):
                raise TraceError(f"overlapping contacts for pair {c.a}-{c.b} at t={c.start}")
            last_end[(c.a, c.b)] = c.end
        return out

    def _push(self, t: float, rank: int, key: tuple, payload) -> None:
        heapq.heappush(self.queue, (t, rank, key, next(self._seq), payload))

    # -- main loop -------------------------------------------------------

    def run(self) -> RunResult:
        sc = self.scenario
        for c in self.contacts:
            self._push(c.start, CONTACT_UP, (c.a, c.b), c)
            self._push(c.end, CONTACT_DOWN, (c.a, c.b), c)
        for m in sc.messages:
            if m.created_at < sc.duration:
                self._push(m.created_at, CREATE_MESSAGE, (m.id,), m)
        if self.kind in ("scorp", "dlife", "bubble"):
            k = 1
            while k * self.sd <= sc.duration + 1e-9:
                self._push(k * self.sd, SAMPLE_BOUNDARY, (k,), k)
                k += 1
        while self.queue:
            t, rank, key, _, payload = heapq.heappop(self.queue)
            self.now = t
            if rank == CONTACT_DOWN:
                self._contact_down(payload)
            elif rank == SAMPLE_BOUNDARY:
                self._boundary(payload)
            elif rank == CREATE_MESSAGE:
                self._create(payload)
            elif rank == CONTACT_UP:
                self._contact_up(payload)
            else:
                self._transfer_complete(*payload)
        return RunResult(
            deliveries=self.deliveries,
            forwardings=self.forwardings,
            drops=dict(self.drops),
            peak_occupancy=[nd.peak for nd in self.nodes],
            config=sc.echo(),
            expected=expected_deliveries(sc),
            hops=self.hops,
        )

    # -- social bookkeeping ---------------------------------------------

    def _accrue(self, link: _Link, until: float) -> None:
        if self.kind not in ("scorp", "dlife") or until <= link.accrued_until:
            return
        a, b = self.nodes[link.contact.a], self.nodes[link.contact.b]
        for _, i, length in split_interval(link.accrued_until, until, self.spd, self.sd):
            if self.kind == "scorp":
                a.social.accrue(b.interests, length, i)
                b.social.accrue(a.interests, length, i)
            else:
                a.social.accrue((b.id,), length, i)
                b.social.accrue((a.id,), length, i)
        link.accrued_until = until

    def _boundary(self, k: int) -> None:
        j, i = (k - 1) // self.spd + 1, (k - 1) % self.spd
        self.sample = k % self.spd
        for link in self.links.values():
            self._accrue(link, self.now)
        if self.kind in ("scorp", "dlife"):
            for nd in self.nodes:
                nd.social.close_all(i, j)
        if self.kind == "dlife":
            self._update_importance()
        if self.kind == "bubble":
            per_window = int(round(self.scenario.params.window_duration / self.sd))
            if k % per_window == 0:
                for nd in self.nodes:
                    cwindow_update(nd.centrality, nd.community.community, self.adj[nd.id])
        for nd in self.nodes:
            self._purge(nd)

    def _update_importance(self) -> None:
        p = self.scenario.params
        weights = np.vstack([nd.social.weights(self.sample) for nd in self.nodes]).astype(float)
        prev = np.array([nd.social.importance for nd in self.nodes], dtype=float)
        new = dlife_importance(weights, prev, p.importance_alpha)
        top = new.max()
        if top > p.importance_rescale:
            new = new / top
        for nd, v in zip(self.nodes, new):
            nd.social.importance = float(v)

    # -- buffers -----------------------------------------------------------

    def _purge(self, nd: _Node) -> None:
        for m in nd.buffer.purge_expired(self.now):
            self.drops["ttl"] += 1
            self._forget(nd, m)

    def _forget(self, nd: _Node, m: Message) -> None:
        nd.copies.pop(m.id, None)
        if m.id not in nd.consumed:
            nd.carried.discard(m.id)

    def _store(self, nd: _Node, msg: Message, copies: Optional[int] = None) -> bool:
        self._purge(nd)
        try:
            evicted = nd.buffer.insert(msg, self.now)
        except NoFit:
            self.drops["nofit"] += 1
            return False
        for m in evicted:
            self.drops["eviction"] += 1
            self._forget(nd, m)
        nd.carried.add(msg.id)
        if copies is not None:
            nd.copies[msg.id] = copies
        nd.peak = max(nd.peak, nd.buffer.occupancy)
        return True

    # -- events ------------------------------------------------------------

    def _create(self, msg: Message) -> None:
        nd = self.nodes[msg.source]
        # the source has the content already; losing its copy must not make it a recipient
        nd.consumed.add(msg.id)
        nd.carried.add(msg.id)
        copies = self.scenario.params.snw_copies if self.kind == "snw" else None
        if self._store(nd, msg, copies):
            self._service(self._links_of(nd.id))

    def _contact_up(self, c: Contact) -> None:
        key = (c.a, c.b)
        if key in self.links:
            raise TraceError(f"pair {c.a}-{c.b} already in contact at t={self.now}")
        link = _Link(c, next(self._gen))
        self.links[key] = link
        self.adj[c.a].add(c.b)
        self.adj[c.b].add(c.a)
        if self.kind == "bubble":
            self.nodes[c.a].centrality.record(c.b)
            self.nodes[c.b].centrality.record(c.a)
        link.snap = {c.a: self._snapshot(self.nodes[c.a]), c.b: self._snapshot(self.nodes[c.b])}
        self._service([link])

    def _contact_down(self, c: Contact) -> None:
        link = self.links.pop((c.a, c.b), None)
        if link is None:
            return
        self.adj[c.a].discard(c.b)
        self.adj[c.b].discard(c.a)
        self._accrue(link, c.end)
        if self.kind == "bubble":
            kclique_update({c.a: self.nodes[c.a].community, c.b: self.nodes[c.b].community}, c)

    def _transfer_complete(self, gen: int, src: NodeId, dst: NodeId, message_id: int) -> None:
        link = self.links.get((min(src, dst), max(src, dst)))
        if link is None or link.gen != gen:
            return  # contact went down mid-transfer
        link.busy = False
        carrier, peer = self.nodes[src], self.nodes[dst]
        action = next((a for a in self._decide(link, carrier, peer) if a.message_id == message_id), None)
        touched = [link]
        if action is not None and self._apply(link, carrier, peer, action):
            touched.extend(self._links_of(dst))
        self._service(touched)

    # -- forwarding ----------------------------------------------------------

    def _snapshot(self, nd: _Node) -> EncounterSummary:
        """Social state frozen at contact start; carried ids and copy counts stay live."""
        live = {"carried": nd.carried, "copies": nd.copies}
        if self.kind == "scorp":
            return EncounterSummary(nd.id, interests=nd.interests,
                                    weights=nd.social.frozen_weights(self.sample), **live)
        if self.kind == "dlife":
            return EncounterSummary(nd.id, weights=nd.social.frozen_weights(self.sample),
                                    importance=nd.social.importance, **live)
        if self.kind == "bubble":
            return EncounterSummary(nd.id, community=frozenset(nd.community.community),
                                    global_centrality=nd.centrality.global_centrality,
                                    local_centrality=nd.centrality.local_centrality, **live)
        return EncounterSummary(nd.id, **live)

    def _decide(self, link: _Link, carrier: _Node, peer: _Node) -> list[ForwardAction]:
        self._purge(carrier)
        actions = self.protocol.decide(link.snap[carrier.id], list(carrier.buffer),
                                       link.snap[peer.id])
        return [a for a in actions if (carrier.id, a.message_id) not in link.sent]

    def _links_of(self, n: NodeId) -> list[_Link]:
        return [self.links[(min(n, p), max(n, p))] for p in sorted(self.adj[n])]

    def _service(self, links: list[_Link]) -> None:
        """Run forwarding on the given links until nothing new moves."""
        work = deque(links)
        queued = {id(l) for l in links}
        bw = self.scenario.bandwidth
        while work:
            link = work.popleft()
            queued.discard(id(link))
            c = link.contact
            if self.links.get((c.a, c.b)) is not link:
                continue
            if bw is not None:
                self._start_transfer(link)
                continue
            received = set()
            for x, y in ((c.a, c.b), (c.b, c.a)):
                carrier, peer = self.nodes[x], self.nodes[y]
                for action in self._decide(link, carrier, peer):
                    if self._apply(link, carrier, peer, action):
                        received.add(y)
            for r in sorted(received):
                for other in self._links_of(r):
                    if id(other) not in queued:
                        work.append(other)
                        queued.add(id(other))

    def _start_transfer(self, link: _Link) -> None:
        if link.busy:
            return
        c = link.contact
        for x, y in ((c.a, c.b), (c.b, c.a)):
            actions = self._decide(link, self.nodes[x], self.nodes[y])
            if actions:
                msg = self.nodes[x].buffer.get(actions[0].message_id)
                link.busy = True
                done = self.now + msg.size / self.scenario.bandwidth
                self._push(done, TRANSFER_COMPLETE, (msg.id, x, y), (link.gen, x, y, msg.id))
                return

    def _apply(self, link: _Link, carrier: _Node, peer: _Node, action: ForwardAction) -> bool:
        """Perform one transmission; True if the peer now buffers a new message."""
        msg = carrier.buffer.get(action.message_id)
        if msg is None or not msg.is_live(self.now):
            return False
        link.sent.add((carrier.id, msg.id))
        self.forwardings += 1
        self.hops.append((self.now, carrier.id, peer.id, msg.id))
        if action.kind is Kind.DELIVER:
            if msg.id not in peer.consumed:
                peer.consumed.add(msg.id)
                peer.carried.add(msg.id)
                self.deliveries.append(DeliveryRecord(msg.id, peer.id, self.now, msg.created_at))
            if not self.protocol.receiver_driven:
                return False
            return self._store(peer, msg)
        if action.kind is Kind.TRANSFER:
            carrier.copies[msg.id] -= action.copies
            return self._store(peer, msg, action.copies)
        return self._store(peer, msg)


def run(scenario: Scenario, trace: Sequence, seed: Optional[int] = None) -> RunResult:
    """Simulate ``scenario`` over ``trace``. The engine itself draws no random numbers;
    ``seed`` is only echoed so results can be traced back to their inputs."""
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    result = Simulation(scenario, trace).run()
    result.config["seed"] = scenario.seed
    return result


def audit_run(result: RunResult, trace: Sequence, messages: Sequence[Message]) -> list[str]:
    """Check causality: each hop happens during a real contact and from a node
    that already held the message; each delivery sits at the end of such a path."""
    problems = []
    windows: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for r in trace:
        windows.setdefault((min(r.a, r.b), max(r.a, r.b)), []).append((r.start, r.end))
    by_id = {m.id: m for m in messages}
    holders: dict[int, dict[NodeId, float]] = {m.id: {m.source: m.created_at} for m in messages}
    received: set[tuple[int, NodeId, float]] = set()
    for t, x, y, mid in sorted(result.hops, key=lambda h: h[0]):
        key = (min(x, y), max(x, y))
        if not any(s <= t <= e for s, e in windows.get(key, ())):
            problems.append(f"hop {x}->{y} of message {mid} at t={t} outside any contact")
        held = holders[mid].get(x)
        if held is None or held > t:
            problems.append(f"hop {x}->{y} of message {mid} at t={t} from a non-holder")
        holders[mid].setdefault(y, t)
        received.add((mid, y, t))
        if t >= by_id[mid].expires_at:
            problems.append(f"hop of message {mid} at t={t} after expiry")
    for d in result.deliveries:
        if (d.message_id, d.recipient, d.delivered_at) not in received:
            problems.append(f"delivery of {d.message_id} to {d.recipient} has no matching hop")
        if d.delivered_at >= by_id[d.message_id].expires_at:
            problems.append(f"delivery of {d.message_id} past TTL")
    return problems
