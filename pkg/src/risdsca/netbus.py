"""Synchronous round-based price exchange between users.

Each round every user j computes, for each neighbor q, how q's powers and
RIS profile affect j's own rate, and posts that as a :class:`PriceMessage`.
The bus delivers all messages at a barrier; user q then sums its inbox to
obtain its interference prices. Each user also measures its own
interference-plus-noise locally (:class:`MuiReport`), which is not sent.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelSet
from .rate_model import NetworkState, _cache, phi_price_term, power_price_term

__all__ = [
    "HEADER_BYTES",
    "REAL_BYTES",
    "COMPLEX_BYTES",
    "ProtocolError",
    "PriceMessage",
    "MuiReport",
    "Inbox",
    "Agent",
    "MessageBus",
    "FaultyBus",
    "full_neighbors",
    "round_exchange",
    "message_bytes",
    "overhead_report",
    "dump_message_log",
]

HEADER_BYTES = 24
REAL_BYTES = 8
COMPLEX_BYTES = 16


class ProtocolError(RuntimeError):
    """A round barrier found missing or unexpected messages."""


@dataclass(frozen=True)
class PriceMessage:
    from_user: int
    to_user: int
    t: int
    power_prices: np.ndarray  # (K,)
    phi_prices: np.ndarray  # (K, M)

    def __post_init__(self):
        if self.from_user == self.to_user:
            raise ValueError("a user does not send prices to itself")

    @property
    def nbytes(self) -> int:
        return HEADER_BYTES + REAL_BYTES * self.power_prices.size + COMPLEX_BYTES * self.phi_prices.size


@dataclass(frozen=True)
class MuiReport:
    user: int
    t: int
    mui: np.ndarray


@dataclass
class Inbox:
    user: int
    t: int
    prices: list
    mui: MuiReport

    def aggregate(self, K: int, M: int):
        """Sum of received price contributions in ascending sender order."""
        power = phi = None
        for msg in sorted(self.prices, key=lambda m: m.from_user):
            power = msg.power_prices if power is None else power + msg.power_prices
            phi = msg.phi_prices if phi is None else phi + msg.phi_prices
        if power is None:
            return np.zeros(K), np.zeros((K, M), complex)
        return power, phi


def full_neighbors(Q: int) -> dict[int, set[int]]:
    return {q: {j for j in range(Q) if j != q} for q in range(Q)}


@dataclass
class Agent:
    """One BS-RIS-UE user; ``neighbors`` are the users it sends prices to."""

    user: int
    neighbors: set = field(default_factory=set)

    def outgoing(self, state: NetworkState, channels: ChannelSet, t: int, cache) -> list[PriceMessage]:
        H, snr, mui = cache
        cascade = channels.cascade()
        j = self.user
        return [
            PriceMessage(
                from_user=j,
                to_user=q,
                t=t,
                power_prices=power_price_term(q, j, H, snr, mui),
                phi_prices=phi_price_term(q, j, H, snr, mui, state.p, cascade),
            )
            for q in sorted(self.neighbors)
        ]

    def measure_mui(self, t: int, cache) -> MuiReport:
        return MuiReport(self.user, t, cache[2][self.user].copy())


class MessageBus:
    """Reliable, ordered in-process transport with a per-round barrier."""

    def __init__(self, Q: int, neighbors: dict[int, set[int]] | None = None):
        self.Q = Q
        self.neighbors = full_neighbors(Q) if neighbors is None else {q: set(neighbors.get(q, ())) for q in range(Q)}
        for q, nb in self.neighbors.items():
            if q in nb or not nb <= set(range(Q)):
                raise ValueError(f"invalid neighbor set for user {q}: {sorted(nb)}")
        self._lock = threading.Lock()
        self._pending: list[PriceMessage] = []
        self.log: list[dict] = []
        self.allow_stale = False

    def agents(self) -> list[Agent]:
        return [Agent(q, set(self.neighbors[q])) for q in range(self.Q)]

    def post(self, msg: PriceMessage) -> None:
        with self._lock:
            self._pending.append(msg)

    def expected(self) -> set[tuple[int, int]]:
        return {(j, q) for j in range(self.Q) for q in self.neighbors[j]}

    def deliver(self, t: int) -> dict[int, list[PriceMessage]]:
        """Barrier for round ``t``: check completeness and hand out inboxes."""
        with self._lock:
            pending, self._pending = self._pending, []
        ok_rounds = (t, t - 1) if self.allow_stale else (t,)
        got = {}
        for msg in pending:
            if msg.t not in ok_rounds:
                raise ProtocolError(f"message {msg.from_user}->{msg.to_user} from round {msg.t} at barrier {t}")
            key = (msg.from_user, msg.to_user)
            if key in got:
                raise ProtocolError(f"duplicate message {key} in round {t}")
            got[key] = msg
        missing = self.expected() - set(got)
        if missing:
            raise ProtocolError(f"round {t}: missing messages {sorted(missing)}")
        inboxes = {q: [] for q in range(self.Q)}
        for key in sorted(got):
            inboxes[key[1]].append(got[key])
        self.log.append(
            {
                "t": t,
                "messages": [
                    {"from": m.from_user, "to": m.to_user, "sent_t": m.t, "bytes": m.nbytes}
                    for m in (got[k] for k in sorted(got))
                ],
            }
        )
        return inboxes


class FaultyBus(MessageBus):
    """Bus with message drops and/or stale-by-one delivery, for robustness experiments."""

    def __init__(self, Q, neighbors=None, drop_prob: float = 0.0, stale: bool = False, seed: int = 0):
        super().__init__(Q, neighbors)
        self.drop_prob = drop_prob
        self.stale = stale
        self.allow_stale = stale
        self._rng = np.random.default_rng(seed)
        self._previous: dict[tuple[int, int], PriceMessage] = {}

    def post(self, msg: PriceMessage) -> None:
        if self.drop_prob > 0 and self._rng.random() < self.drop_prob:
            return
        key = (msg.from_user, msg.to_user)
        if self.stale:
            prev = self._previous.get(key)
            self._previous[key] = msg
            if prev is not None:
                msg = prev
        super().post(msg)


def round_exchange(bus: MessageBus, state: NetworkState, channels: ChannelSet, sigma_sq, t: int, agents=None):
    """Run one synchronous price round and return ``{user: Inbox}``."""
    agents = bus.agents() if agents is None else agents
    # every agent measures the same physical quantities; compute them once
    cache = _cache(state, channels, sigma_sq)
    for agent in agents:
        for msg in agent.outgoing(state, channels, t, cache):
            bus.post(msg)
    delivered = bus.deliver(t)
    return {a.user: Inbox(a.user, t, delivered[a.user], a.measure_mui(t, cache)) for a in agents}


def message_bytes(K: int, M: int) -> int:
    return HEADER_BYTES + REAL_BYTES * K + COMPLEX_BYTES * K * M


def overhead_report(log: list[dict]) -> dict:
    """Bytes exchanged per round and in total, from a bus log."""
    per_round = [sum(m["bytes"] for m in entry["messages"]) for entry in log]
    return {
        "rounds": len(per_round),
        "bytes_per_round": per_round,
        "total_bytes": int(sum(per_round)),
        "messages_per_round": [len(entry["messages"]) for entry in log],
    }


def dump_message_log(log: list[dict], path: str | Path) -> None:
    with open(path, "w") as fh:
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
