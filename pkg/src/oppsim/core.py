"""Domain types shared by the simulator: time, messages, contacts, buffers."""

from __future__ import annotations

import heapq
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterator, Optional

SECONDS_PER_DAY = 86400.0

SimTime = float
NodeId = int
InterestId = int


class ConfigError(Exception):
    """Invalid scenario or experiment configuration."""


class TraceError(Exception):
    """Malformed or out-of-range contact trace."""


class NoFit(Exception):
    """Message is larger than the whole buffer; counted as a drop."""


class DuplicateId(Exception):
    """Message already present in the buffer."""


@dataclass(frozen=True)
class Message:
    """A content unit addressed either to a node or to a content type.

    Exactly one of ``destination`` (source-driven protocols) and
    ``content_type`` (receiver-driven) is set.
    """

    id: int
    source: NodeId
    size: int
    created_at: SimTime
    ttl: float
    destination: Optional[NodeId] = None
    content_type: Optional[InterestId] = None

    def __post_init__(self):
        if (self.destination is None) == (self.content_type is None):
            raise ValueError(f"message {self.id}: set exactly one of destination/content_type")
        if self.size <= 0:
            raise ValueError(f"message {self.id}: size must be positive")
        if self.ttl <= 0:
            raise ValueError(f"message {self.id}: ttl must be positive")
        if self.created_at < 0:
            raise ValueError(f"message {self.id}: negative creation time")

    @property
    def expires_at(self) -> SimTime:
        return self.created_at + self.ttl

    def is_live(self, now: SimTime) -> bool:
        # expired at exactly created_at + ttl
        return now < self.expires_at


@dataclass(frozen=True, order=True)
class Contact:
    """Undirected contact interval, canonicalized so that ``a < b``."""

    a: NodeId
    b: NodeId
    start: SimTime
    end: SimTime

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"self-contact on node {self.a}")
        if not self.start < self.end:
            raise ValueError(f"contact {self.a}-{self.b}: start {self.start} >= end {self.end}")
        if self.a > self.b:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    @property
    def duration(self) -> float:
        return self.end - self.start

    def other(self, node: NodeId) -> NodeId:
        return self.b if node == self.a else self.a


@dataclass(frozen=True)
class DeliveryRecord:
    message_id: int
    recipient: NodeId
    delivered_at: SimTime
    created_at: SimTime

    @property
    def latency(self) -> float:
        return self.delivered_at - self.created_at


class Buffer:
    """Bounded FIFO message store.

    ``capacity=None`` means unlimited. Expired entries are purged before
    every operation; when space is needed the oldest received entries are
    evicted first.
    """

    def __init__(self, capacity: Optional[int] = None):
        if capacity is not None and capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.capacity = capacity
        self._entries: "OrderedDict[int, tuple[Message, SimTime]]" = OrderedDict()
        self._expiry: list[tuple[SimTime, int]] = []  # lazy min-heap of (expires_at, id)
        self.occupancy = 0
        # while inserts arrive in time order the first entry is the oldest
        self._ordered = True
        self._last = -math.inf

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, message_id: int) -> bool:
        return message_id in self._entries

    def __iter__(self) -> Iterator[Message]:
        return (m for m, _ in self._entries.values())

    @property
    def unlimited(self) -> bool:
        return self.capacity is None

    def ids(self) -> set[int]:
        return set(self._entries)

    def get(self, message_id: int) -> Optional[Message]:
        entry = self._entries.get(message_id)
        return entry[0] if entry else None

    def entries(self) -> list[tuple[Message, SimTime]]:
        return list(self._entries.values())

    def purge_expired(self, now: SimTime) -> list[Message]:
        """Drop every entry that is no longer live and return the dropped messages."""
        expired = []
        heap = self._expiry
        while heap and heap[0][0] <= now:
            _, mid = heapq.heappop(heap)
            entry = self._entries.get(mid)
            if entry is not None and not entry[0].is_live(now):
                expired.append(self._remove(mid))
        return expired

    def remove(self, message_id: int) -> Message:
        return self._remove(message_id)

    def _remove(self, message_id: int) -> Message:
        msg, _ = self._entries.pop(message_id)
        self.occupancy -= msg.size
        return msg

    def insert(self, msg: Message, now: SimTime) -> list[Message]:
        """Store ``msg`` and return the messages evicted to make room.

        Raises NoFit if the message can never fit and DuplicateId if it is
        already buffered. Expired entries are purged first (and not
        reported here; call purge_expired beforehand to count them).
        """
        if not msg.is_live(now):
            raise ValueError(f"message {msg.id} is not live at t={now}")
        self.purge_expired(now)
        if msg.id in self._entries:
            raise DuplicateId(msg.id)
        if self.capacity is not None and msg.size > self.capacity:
            raise NoFit(msg.id)
        evicted = []
        if self.capacity is not None:
            while self.occupancy + msg.size > self.capacity:
                if self._ordered:
                    oldest = next(iter(self._entries))
                else:
                    oldest = min(self._entries.items(), key=lambda kv: kv[1][1])[0]
                evicted.append(self._remove(oldest))
        if now < self._last:
            self._ordered = False
        self._last = now
        self._entries[msg.id] = (msg, now)
        heapq.heappush(self._expiry, (msg.expires_at, msg.id))
        self.occupancy += msg.size
        return evicted


def _check_grid(samples_per_day: int, sample_duration: float) -> None:
    if not math.isclose(samples_per_day * sample_duration, SECONDS_PER_DAY):
        raise ValueError("samples_per_day * sample_duration must equal one day")


def sample_index(t: SimTime, samples_per_day: int = 24,
                 sample_duration: float = 3600.0) -> tuple[int, int]:
    """Map a time to ``(day, sample)``; days are 1-based, samples 0-based."""
    _check_grid(samples_per_day, sample_duration)
    if t < 0:
        raise ValueError("negative time")
    k = int(t // sample_duration)
    return k // samples_per_day + 1, k % samples_per_day


def sample_start(day: int, i: int, samples_per_day: int = 24,
                 sample_duration: float = 3600.0) -> SimTime:
    """Inverse of sample_index: the start time of sample ``i`` on ``day``."""
    return ((day - 1) * samples_per_day + i) * sample_duration


def split_interval(start: SimTime, end: SimTime, samples_per_day: int = 24,
                   sample_duration: float = 3600.0) -> Iterator[tuple[int, int, float]]:
    """Split ``[start, end)`` at sample boundaries into ``(day, sample, length)`` cells."""
    _check_grid(samples_per_day, sample_duration)
    t = start
    k = int(t // sample_duration)
    while t < end:
        cell_end = min(end, (k + 1) * sample_duration)
        if cell_end > t:
            yield k // samples_per_day + 1, k % samples_per_day, cell_end - t
            t = cell_end
        k += 1
