"""Forwarding decisions for SCORP, dLife, Bubble Rap and binary Spray and Wait.

Every decision function is pure: it takes the carrier's and the peer's
encounter summaries plus the carrier's live messages and returns the
actions to perform, in ascending message id.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Container, Iterable, Mapping

from .core import Message, NodeId


class Kind(enum.Enum):
    REPLICATE = "replicate"
    TRANSFER = "transfer"
    DELIVER = "deliver"


@dataclass(frozen=True)
class ForwardAction:
    message_id: int
    kind: Kind
    copies: int = 0


@dataclass(frozen=True)
class EncounterSummary:
    """What one side of a contact tells the other when the contact comes up.

    ``carried`` lists the messages a node holds or has already consumed.
    ``weights`` maps interest -> weight under SCORP and node -> weight under
    dLife. Fields a protocol does not use stay empty.
    """

    node: NodeId
    carried: Container[int] = frozenset()
    interests: frozenset[int] = frozenset()
    weights: Mapping[int, float] = field(default_factory=dict)
    importance: float = 0.0
    community: frozenset[NodeId] = frozenset()
    global_centrality: float = 0.0
    local_centrality: float = 0.0
    copies: Mapping[int, int] = field(default_factory=dict)


def _candidates(messages: Iterable[Message], peer: EncounterSummary) -> list[Message]:
    return sorted((m for m in messages if m.id not in peer.carried), key=lambda m: m.id)


def scorp_on_encounter(carrier: EncounterSummary, messages: Iterable[Message],
                       peer: EncounterSummary) -> list[ForwardAction]:
    actions = []
    for m in _candidates(messages, peer):
        x = m.content_type
        if x in peer.interests:
            # the interested peer consumes the message and keeps a replica
            actions.append(ForwardAction(m.id, Kind.DELIVER))
        elif peer.weights.get(x, 0.0) > carrier.weights.get(x, 0.0):
            actions.append(ForwardAction(m.id, Kind.REPLICATE))
    return actions


def dlife_on_encounter(carrier: EncounterSummary, messages: Iterable[Message],
                       peer: EncounterSummary) -> list[ForwardAction]:
    actions = []
    for m in _candidates(messages, peer):
        d = m.destination
        if d == peer.node:
            actions.append(ForwardAction(m.id, Kind.DELIVER))
            continue
        pw, cw = peer.weights.get(d, 0.0), carrier.weights.get(d, 0.0)
        if pw > cw or (pw == 0 and cw == 0 and peer.importance > carrier.importance):
            actions.append(ForwardAction(m.id, Kind.REPLICATE))
    return actions


def bubble_on_encounter(carrier: EncounterSummary, messages: Iterable[Message],
                        peer: EncounterSummary) -> list[ForwardAction]:
    actions = []
    for m in _candidates(messages, peer):
        d = m.destination
        if d == peer.node:
            actions.append(ForwardAction(m.id, Kind.DELIVER))
            continue
        peer_in, carrier_in = d in peer.community, d in carrier.community
        if peer_in and not carrier_in:
            forward = True
        elif peer_in:
            forward = peer.local_centrality > carrier.local_centrality
        elif carrier_in:
            forward = False
        else:
            forward = peer.global_centrality > carrier.global_centrality
        if forward:
            actions.append(ForwardAction(m.id, Kind.REPLICATE))
    return actions


def snw_on_encounter(carrier: EncounterSummary, messages: Iterable[Message],
                     peer: EncounterSummary) -> list[ForwardAction]:
    actions = []
    for m in _candidates(messages, peer):
        if m.destination == peer.node:
            actions.append(ForwardAction(m.id, Kind.DELIVER))
            continue
        c = carrier.copies.get(m.id, 1)
        if c > 1:
            actions.append(ForwardAction(m.id, Kind.TRANSFER, c // 2))
    return actions


@dataclass(frozen=True)
class Protocol:
    name: str
    decide: Callable[[EncounterSummary, Iterable[Message], EncounterSummary], list[ForwardAction]]
    receiver_driven: bool = False


PROTOCOLS = {
    "scorp": Protocol("scorp", scorp_on_encounter, receiver_driven=True),
    "dlife": Protocol("dlife", dlife_on_encounter),
    "bubble": Protocol("bubble", bubble_on_encounter),
    "snw": Protocol("snw", snw_on_encounter),
}

ALIASES = {"bubblerap": "bubble", "sprayandwait": "snw", "spray_and_wait": "snw",
           "bubble_rap": "bubble"}


def get_protocol(name: str) -> Protocol:
    key = name.lower()
    key = ALIASES.get(key, key)
    try:
        return PROTOCOLS[key]
    except KeyError:
        raise ValueError(f"unknown protocol {name!r}; expected one of {sorted(PROTOCOLS)}") from None
