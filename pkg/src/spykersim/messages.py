"""Wire messages exchanged between nodes, with payload size accounting.

Model-bearing messages cost 4 bytes per parameter (32-bit on the wire) plus
a fixed 64-byte header; age and token messages carry the header plus 8 bytes
per age entry.  Sizes feed the link transfer-time and bandwidth metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEADER_BYTES = 64
PARAM_BYTES = 4
AGE_BYTES = 8


@dataclass(frozen=True)
class Token:
    """Circulating permission object serializing server model exchanges."""

    bid: int
    ages: tuple[float, ...]


@dataclass(frozen=True)
class ModelDispatch:
    """Server -> client: model to train, its age, and the client's current lr."""

    params: np.ndarray
    age: float
    lr: float


@dataclass(frozen=True)
class ClientUpdate:
    """Client -> server: trained model plus the age echoed from the dispatch."""

    params: np.ndarray
    age_sent: float


@dataclass(frozen=True)
class ModelBroadcast:
    """Server -> server: full model with age, tagged by synchronization bid.

    Synchronous exchanges reuse this with bid = exchange round number.
    """

    params: np.ndarray
    age: float
    bid: int


@dataclass(frozen=True)
class AgeBroadcast:
    """Server -> server: age gossip from a server not holding the token."""

    age: float


@dataclass(frozen=True)
class TokenPass:
    """Server -> ring successor: hands over the token."""

    token: Token


@dataclass(frozen=True)
class EdgeReport:
    """Edge server -> cloud: edge model and the data count behind it."""

    params: np.ndarray
    weight: int


@dataclass(frozen=True)
class CloudModel:
    """Cloud -> edge servers: the averaged model to resume from."""

    params: np.ndarray


@dataclass(frozen=True)
class ReplayedUpdate:
    """Self-addressed wrapper for a client update buffered during a sync."""

    inner: ClientUpdate
    orig_src: int


def payload_bytes(msg) -> int:
    if isinstance(msg, (ModelDispatch, ClientUpdate, ModelBroadcast, EdgeReport, CloudModel)):
        return PARAM_BYTES * len(msg.params) + HEADER_BYTES
    if isinstance(msg, AgeBroadcast):
        return HEADER_BYTES + AGE_BYTES
    if isinstance(msg, TokenPass):
        return HEADER_BYTES + AGE_BYTES * len(msg.token.ages)
    if isinstance(msg, ReplayedUpdate):
        return 0
    raise TypeError(f"unknown message type {type(msg).__name__}")


def describe(msg) -> str:
    """Compact single-token description used in event traces."""
    name = type(msg).__name__
    if isinstance(msg, ModelBroadcast):
        return f"{name}(bid={msg.bid},age={msg.age:.6f})"
    if isinstance(msg, TokenPass):
        return f"{name}(bid={msg.token.bid})"
    if isinstance(msg, AgeBroadcast):
        return f"{name}(age={msg.age:.6f})"
    if isinstance(msg, ClientUpdate):
        return f"{name}(age_sent={msg.age_sent:.6f})"
    if isinstance(msg, ModelDispatch):
        return f"{name}(age={msg.age:.6f},lr={msg.lr:.9f})"
    if isinstance(msg, ReplayedUpdate):
        return f"{name}(src={msg.orig_src})"
    return name
