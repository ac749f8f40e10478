"""Per-node social metric state.

Interest-indexed connected-time accumulators drive SCORP's forwarding
weights; the same machinery indexed by peer drives dLife. Bubble Rap's
k-clique communities and cumulative-window centrality live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import Contact, NodeId


class CalledTwice(Exception):
    """A (key, sample, day) cell was closed more than once."""


def teci_coefficients(t: int, exact: bool = False) -> np.ndarray:
    """Time-transitive coefficients ``t / (t + d)`` for ``d = 0 .. t-1``."""
    if exact:
        return np.array([Fraction(t, t + d) for d in range(t)], dtype=object)
    return t / (t + np.arange(t, dtype=float))


class SlotState:
    """Connected-time accumulators indexed by ``(key, daily sample)``.

    ``tcti`` holds today's running total for each cell, ``atcti`` the
    cumulative moving average over closed days and ``days`` the number of
    days folded into that average. With ``exact=True`` every cell is a
    ``Fraction`` so the average can be checked without rounding.
    """

    def __init__(self, owner: NodeId, keys: Iterable[int], samples_per_day: int = 24,
                 exact: bool = False):
        self.owner = owner
        self.keys = sorted(set(keys))
        self.index = {k: n for n, k in enumerate(self.keys)}
        self.samples_per_day = samples_per_day
        self.exact = exact
        shape = (len(self.keys), samples_per_day)
        if exact:
            self.tcti = np.full(shape, Fraction(0), dtype=object)
            self.atcti = np.full(shape, Fraction(0), dtype=object)
        else:
            self.tcti = np.zeros(shape)
            self.atcti = np.zeros(shape)
        # closed-day counts: a per-column part from close_all plus per-cell extras
        # from close_sample, so closing a whole column touches no arrays
        self._col_days = [0] * samples_per_day
        self._cell_days = np.zeros(shape, dtype=np.int64)
        self._col_last = [0] * samples_per_day
        self._cell_last = np.zeros(shape, dtype=np.int64)
        self._coef = teci_coefficients(samples_per_day, exact)
        self._weights: dict[int, np.ndarray] = {}
        # rows ever credited, per sample; the exact path only visits these
        self._touched: list[set[int]] = [set() for _ in range(samples_per_day)]
        self._col_closed = [0] * samples_per_day  # latest day closed in any cell of the column
        # set when a WeightView holds the current atcti array; the next change copies it first
        self._shared = False

    def accrue(self, keys: Iterable[int], length: float, i: int) -> None:
        """Credit ``length`` seconds of contact to every key in ``keys`` for sample ``i``.

        The whole length is credited to each key; it is not divided.
        """
        if length == 0:
            return
        if length < 0:
            raise ValueError("negative overlap")
        if self.exact:
            length = Fraction(length)
        for k in keys:
            n = self.index.get(k)
            if n is not None:
                self.tcti[n, i] += length
                self._touched[i].add(n)

    @property
    def days(self) -> np.ndarray:
        """Number of closed days folded into each cell's average."""
        return self._cell_days + np.array(self._col_days, dtype=np.int64)

    @property
    def last_closed(self) -> np.ndarray:
        return np.maximum(self._cell_last, np.array(self._col_last, dtype=np.int64))

    def _days_of(self, n: int, i: int) -> int:
        return self._col_days[i] + int(self._cell_days[n, i])

    def close_sample(self, key: int, i: int, j: int) -> None:
        n = self.index[key]
        if max(self._col_last[i], self._cell_last[n, i]) >= j:
            raise CalledTwice(f"node {self.owner}: sample {i} of day {j} already closed")
        if n in self._touched[i]:
            self._fold((n,), i)
        self._cell_days[n, i] += 1
        self._cell_last[n, i] = j
        self._col_closed[i] = max(self._col_closed[i], j)

    def close_all(self, i: int, j: int) -> None:
        """Fold today's sample ``i`` into the running average for every key."""
        if not self.keys:
            return
        if self._col_closed[i] >= j:
            raise CalledTwice(f"node {self.owner}: sample {i} of day {j} already closed")
        # untouched cells are zero and stay zero; only their day count moves
        self._fold(self._touched[i], i)
        self._col_days[i] += 1
        self._col_last[i] = j
        self._col_closed[i] = j

    def _fold(self, rows: Iterable[int], i: int) -> None:
        """Cumulative moving average step for the given rows of sample ``i``."""
        if not rows:
            return
        if self._shared:
            self.atcti = self.atcti.copy()
            self._shared = False
        tcti, atcti = self.tcti, self.atcti
        for n in rows:
            d = self._days_of(n, i) + 1
            tc, avg = tcti[n, i], atcti[n, i]
            if self.exact:
                # (tc + (d-1)*avg) / d over one common denominator
                num = tc.numerator * avg.denominator + (d - 1) * avg.numerator * tc.denominator
                atcti[n, i] = Fraction(num, tc.denominator * avg.denominator * d)
                tcti[n, i] = Fraction(0)
            else:
                atcti[n, i] = (tc + (d - 1) * avg) / d
                tcti[n, i] = 0.0
        self._weights.clear()

    def weights(self, i: int) -> np.ndarray:
        """Social weight toward every key for current sample ``i`` (cached until the next close)."""
        w = self._weights.get(i)
        if w is None:
            w = self._weights[i] = self._weights_from(self.atcti, i)
        return w

    def _weights_from(self, atcti: np.ndarray, i: int) -> np.ndarray:
        t = self.samples_per_day
        cols = (i + np.arange(t)) % t
        if not self.exact:
            return atcti[:, cols].dot(self._coef)
        w = np.full(len(self.keys), Fraction(0), dtype=object)
        for n in set().union(*self._touched):
            w[n] = sum((c * v for c, v in zip(self._coef, atcti[n, cols]) if v), Fraction(0))
        return w

    def frozen_weights(self, i: int) -> "WeightView":
        """Weights as of now, computed only if someone looks at them."""
        self._shared = True
        return WeightView(self, self.atcti, i)

    def weight(self, key: int, i: int):
        n = self.index.get(key)
        if n is None:
            return 0.0
        return self.weights(i)[n]

    def weight_map(self, i: int) -> dict[int, float]:
        w = self.weights(i)
        return {k: w[n] for n, k in enumerate(self.keys) if w[n] != 0}


class WeightView(Mapping):
    """Read-only key -> weight mapping over a frozen atcti array."""

    __slots__ = ("_state", "_atcti", "_i", "_w")

    def __init__(self, state: SlotState, atcti: np.ndarray, i: int):
        self._state, self._atcti, self._i = state, atcti, i
        self._w = None

    def _values(self) -> np.ndarray:
        if self._w is None:
            st = self._state
            if st.atcti is self._atcti:
                self._w = st.weights(self._i)
            else:
                self._w = st._weights_from(self._atcti, self._i)
        return self._w

    def __getitem__(self, key):
        n = self._state.index[key]
        return self._values()[n]

    def get(self, key, default=None):
        n = self._state.index.get(key)
        return default if n is None else self._values()[n]

    def __iter__(self):
        return iter(self._state.keys)

    def __len__(self) -> int:
        return len(self._state.keys)


class InterestSocialState(SlotState):
    """Connected time toward each interest (content type)."""


class PeerSocialState(SlotState):
    """Connected time toward each peer, plus the node's importance."""

    def __init__(self, owner: NodeId, keys: Iterable[int], samples_per_day: int = 24,
                 exact: bool = False, importance: float = 1.0):
        super().__init__(owner, keys, samples_per_day, exact)
        self.importance = importance


def accrue_contact(state: SlotState, peer_keys: Iterable[int], length: float, i: int) -> None:
    state.accrue(peer_keys, length, i)


def close_sample(state: SlotState, key: int, i: int, j: int) -> None:
    state.close_sample(key, i, j)


def teci_weight(state: SlotState, key: int, i: int):
    return state.weight(key, i)


def dlife_weight(state: PeerSocialState, peer: NodeId, i: int):
    return state.weight(peer, i)


def dlife_importance(weights: np.ndarray, previous: np.ndarray, alpha: float = 0.8) -> np.ndarray:
    """One synchronous step of the damped importance recurrence.

    ``weights[a, b]`` is node a's social weight toward b; nodes never met
    have weight 0 and drop out of the sum.
    """
    weights = np.asarray(weights, dtype=float)
    previous = np.asarray(previous, dtype=float)
    return alpha * weights.dot(previous) + (1.0 - alpha)


@dataclass
class CommunityState:
    owner: NodeId
    k: int = 5
    familiar_threshold: float = 7200.0
    cumulative: dict[NodeId, float] = field(default_factory=dict)
    familiar: set[NodeId] = field(default_factory=set)
    community: set[NodeId] = field(default_factory=set)

    def __post_init__(self):
        self.community.add(self.owner)


def kclique_update(states: Mapping[NodeId, CommunityState], contact: Contact) -> None:
    """Distributed k-clique step run by both ends of a finished contact."""
    pairs = ((contact.a, contact.b), (contact.b, contact.a))
    for x, y in pairs:
        s = states[x]
        s.cumulative[y] = s.cumulative.get(y, 0.0) + contact.duration
        if s.cumulative[y] >= s.familiar_threshold:
            s.familiar.add(y)
            s.community.add(y)
    for x, y in pairs:
        s, peer = states[x], states[y]
        if y not in s.community and len(peer.familiar & s.community) >= s.k - 1:
            s.community.add(y)


@dataclass
class CentralityState:
    owner: NodeId
    window_duration: float = 6 * 3600.0
    current: set[NodeId] = field(default_factory=set)
    history: list[frozenset[NodeId]] = field(default_factory=list)
    global_centrality: float = 0.0
    local_centrality: float = 0.0

    def record(self, peer: NodeId) -> None:
        self.current.add(peer)


def cwindow_update(state: CentralityState, community: Optional[set[NodeId]] = None,
                   carry_over: Iterable[NodeId] = ()) -> None:
    """Close the current window and refresh both centralities.

    ``carry_over`` seeds the next window with peers whose contact is still up.
    """
    state.history.append(frozenset(state.current))
    state.current = set(carry_over)
    n = len(state.history)
    state.global_centrality = sum(len(w) for w in state.history) / n
    members = (community or set()) - {state.owner}
    state.local_centrality = sum(len(w & members) for w in state.history) / n


def _render(value) -> str:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def dump_states(states: Sequence[SlotState]) -> str:
    """Flat ``node,kind,key,sample,value`` table for golden tests and debugging."""
    lines = ["node,kind,key,sample,value"]
    for s in sorted(states, key=lambda s: s.owner):
        for kind in ("tcti", "atcti", "days"):
            arr = getattr(s, kind)
            for n, key in enumerate(s.keys):
                for i in range(s.samples_per_day):
                    lines.append(f"{s.owner},{kind},{key},{i},{_render(arr[n, i])}")
        if isinstance(s, PeerSocialState):
            lines.append(f"{s.owner},importance,,,{_render(s.importance)}")
    return "\n".join(lines) + "\n"
