"""Token-coordinated asynchronous multi-server training.

Each server absorbs its own clients' updates immediately (age-weighted
convex merge) and gossips ages.  Model exchange between servers is
serialized by a single circulating token: when the age spread across
servers or the local age growth exceeds its threshold, the token holder
broadcasts its model; every other server echoes its own model once per bid;
after the holder has seen all n models it forwards the token around the
ring.
"""

from __future__ import annotations

import numpy as np

from ..aggregation import (
    client_staleness_weight,
    decay,
    server_merge,
    spyker_client_merge,
)
from ..errors import ProtocolViolation
from ..hyperparams import HyperParams
from ..messages import (
    AgeBroadcast,
    ClientUpdate,
    ModelBroadcast,
    ModelDispatch,
    Token,
    TokenPass,
)
from ..models import TinyModel
from ..simulation import SERVER, Node, Simulator


class SpykerServer(Node):
    kind = SERVER

    def __init__(
        self,
        node_id: int,
        location: str,
        server_index: int,
        server_ids: list[int],
        model: TinyModel,
        ring_successor: int,
        client_ids: list[int],
        hp: HyperParams,
        agg_ms: float,
        token: Token | None = None,
    ):
        if len(set(server_ids)) != len(server_ids):
            raise ProtocolViolation(f"duplicate server ids {server_ids}")
        self.node_id = node_id
        self.location = location
        self.server_index = server_index
        self.server_ids = list(server_ids)
        self.n_servers = len(server_ids)
        self.index_of = {sid: i for i, sid in enumerate(server_ids)}
        self.peer_ids = [sid for sid in server_ids if sid != node_id]
        self.ring_successor = ring_successor
        self.hp = hp
        self.agg_ms = agg_ms

        self.model = model
        self.age = 0.0
        self.age_prev = 0.0
        self.u = {cid: 0 for cid in client_ids}
        self.eta = {cid: hp.eta_init for cid in client_ids}
        self.known_ages = np.zeros(self.n_servers)
        self.token = token
        self.did_broadcast: set[int] = set()
        self.cnt: dict[int, int] = {}
        self.ongoing_synchro = False
        self.updates_absorbed = 0
        self._last_age_broadcast: float | None = None

    # -- engine hooks -------------------------------------------------------

    def instant(self, msg) -> bool:
        return isinstance(msg, (AgeBroadcast, TokenPass))

    def service_ms(self, sim: Simulator, msg, src: int) -> float:
        return self.agg_ms

    def bootstrap(self, sim: Simulator) -> None:
        for cid in sorted(self.u):
            sim.send(self.node_id, cid, ModelDispatch(self.model.params, self.age, self.eta[cid]))

    def handle(self, sim: Simulator, src: int, msg) -> None:
        if isinstance(msg, ClientUpdate):
            self._on_client_update(sim, src, msg)
        elif isinstance(msg, ModelBroadcast):
            self._on_model_broadcast(sim, src, msg)
        elif isinstance(msg, AgeBroadcast):
            self._on_age(sim, src, msg)
        elif isinstance(msg, TokenPass):
            self._on_token(sim, msg)
        else:
            raise ProtocolViolation(f"server cannot handle {type(msg).__name__}")

    # -- state transitions ---------------------------------------------------

    def effective_ages(self) -> np.ndarray:
        ages = self.known_ages.copy()
        ages[self.server_index] = self.age
        return ages

    def _on_client_update(self, sim: Simulator, src: int, msg: ClientUpdate) -> None:
        if src not in self.u:
            raise ProtocolViolation(f"update from unknown client {src} at server {self.node_id}")
        # Server-server merges can pull the age below an outstanding
        # dispatch; treat such echoes as fresh rather than rejecting them.
        age_sent = min(msg.age_sent, self.age)
        w = client_staleness_weight(self.age, age_sent, self.hp.staleness_mode)
        self.model = self.model.with_params(
            spyker_client_merge(self.model.params, msg.params, w, self.hp.eta_server)
        )
        self.age += 1.0
        self.u[src] += 1
        base = self.hp.base_lr(self.u[src])
        if self.hp.decay_enabled:
            u_mean = sum(self.u.values()) / len(self.u)
            self.eta[src] = decay(base, self.u[src], u_mean, self.hp.beta, self.hp.eta_min)
        else:
            self.eta[src] = base
        self.updates_absorbed += 1
        sim.send(self.node_id, src, ModelDispatch(self.model.params, self.age, self.eta[src]))
        self._check_synchronization(sim)

    def _check_synchronization(self, sim: Simulator) -> None:
        ages = self.effective_ages()
        triggered = (ages.max() - ages.min() >= self.hp.h_inter) or (
            self.age - self.age_prev >= self.hp.h_intra
        )
        if not triggered:
            return
        if self.token is not None:
            if self.ongoing_synchro:
                return
            self.age_prev = self.age
            self.ongoing_synchro = True
            bid = self.token.bid
            self.did_broadcast.add(bid)
            self.cnt[bid] = 1
            for p in self.peer_ids:
                sim.send(self.node_id, p, ModelBroadcast(self.model.params, self.age, bid))
            self._maybe_pass_token(sim, bid)
        else:
            # Throttle: re-gossip only after the local age has grown by >= 1.
            if self._last_age_broadcast is None or self.age - self._last_age_broadcast >= 1.0:
                self._last_age_broadcast = self.age
                for p in self.peer_ids:
                    sim.send(self.node_id, p, AgeBroadcast(self.age))

    def _on_age(self, sim: Simulator, src: int, msg: AgeBroadcast) -> None:
        j = self.index_of[src]
        self.known_ages[j] = max(self.known_ages[j], msg.age)
        self._check_synchronization(sim)

    def _on_token(self, sim: Simulator, msg: TokenPass) -> None:
        if self.token is not None:
            raise ProtocolViolation(f"server {self.node_id} received a token while holding one")
        t = msg.token
        self.known_ages = np.maximum(self.known_ages, np.asarray(t.ages))
        self.token = Token(t.bid + 1, t.ages)
        self._check_synchronization(sim)

    def _on_model_broadcast(self, sim: Simulator, src: int, msg: ModelBroadcast) -> None:
        j = self.index_of[src]
        self.known_ages[j] = max(self.known_ages[j], msg.age)
        if msg.bid not in self.did_broadcast:
            self.did_broadcast.add(msg.bid)
            self.age_prev = self.age
            for p in self.peer_ids:
                sim.send(self.node_id, p, ModelBroadcast(self.model.params, self.age, msg.bid))
        params, self.age = server_merge(
            self.model.params, self.age, msg.params, msg.age, self.hp.eta_a, self.hp.phi
        )
        self.model = self.model.with_params(params)
        if self.token is not None and self.token.bid == msg.bid:
            self.cnt[msg.bid] = self.cnt.get(msg.bid, 0) + 1
            self._maybe_pass_token(sim, msg.bid)

    def _maybe_pass_token(self, sim: Simulator, bid: int) -> None:
        if self.token is None or self.token.bid != bid:
            return
        if self.cnt.get(bid, 0) >= self.n_servers:
            out = Token(bid, tuple(self.effective_ages()))
            self.token = None
            self.ongoing_synchro = False
            sim.send(self.node_id, self.ring_successor, TokenPass(out))
