"""Discrete-event laboratory for social-aware opportunistic routing."""

from .core import Buffer, Contact, DeliveryRecord, Message, sample_index
from .engine import ProtocolParams, RunResult, Scenario, Simulation, expected_deliveries, run
from .report import buffer_estimate, summarize, teci_alloc

__all__ = [
    "Buffer", "Contact", "DeliveryRecord", "Message", "sample_index",
    "ProtocolParams", "RunResult", "Scenario", "Simulation", "expected_deliveries", "run",
    "buffer_estimate", "summarize", "teci_alloc",
]
