"""Synchronous variant: periodic blocking all-to-all model exchange.

When a server's age has grown by `sync_period` since the last exchange it
broadcasts its model (tagged with the exchange round number) and stops
absorbing client updates, buffering them instead.  Any server receiving a
round-r broadcast joins round r immediately.  Once a server holds all n
round-r models it folds them in ascending server order, which makes every
server's post-exchange model bitwise identical, then replays its buffered
updates in arrival order.
"""

from __future__ import annotations

from ..aggregation import client_staleness_weight, decay, server_merge, spyker_client_merge
from ..errors import ProtocolViolation
from ..hyperparams import HyperParams
from ..messages import ClientUpdate, ModelBroadcast, ModelDispatch, ReplayedUpdate
from ..models import TinyModel
from ..simulation import SERVER, Node, Simulator


class SyncSpykerServer(Node):
    kind = SERVER

    def __init__(
        self,
        node_id: int,
        location: str,
        server_index: int,
        server_ids: list[int],
        model: TinyModel,
        client_ids: list[int],
        hp: HyperParams,
        agg_ms: float,
        sync_period: float,
    ):
        self.node_id = node_id
        self.location = location
        self.server_index = server_index
        self.server_ids = list(server_ids)
        self.n_servers = len(server_ids)
        self.index_of = {sid: i for i, sid in enumerate(server_ids)}
        self.peer_ids = [sid for sid in server_ids if sid != node_id]
        self.hp = hp
        self.agg_ms = agg_ms
        self.sync_period = sync_period

        self.model = model
        self.age = 0.0
        self.age_prev = 0.0
        self.u = {cid: 0 for cid in client_ids}
        self.eta = {cid: hp.eta_init for cid in client_ids}
        self.updates_absorbed = 0
        self.syncs_completed = 0
        self.syncing = False
        self._broadcast_round = 0
        self._peer_models: dict[int, dict[int, tuple]] = {}
        self._buffer: list[tuple[int, ClientUpdate]] = []
        self.buffered_total = 0
        self.replayed_total = 0

    # -- engine hooks -------------------------------------------------------

    def service_ms(self, sim: Simulator, msg, src: int) -> float:
        if isinstance(msg, (ClientUpdate, ReplayedUpdate)):
            return 0.0 if self.syncing else self.agg_ms
        if isinstance(msg, ModelBroadcast):
            have = len(self._peer_models.get(msg.bid, ()))
            if have + 1 == self.n_servers - 1 or self.n_servers == 1:
                # This arrival completes the set; folding n models costs
                # n-1 pairwise merges.
                return self.agg_ms * max(self.n_servers - 1, 1)
            return 0.0
        return 0.0

    def bootstrap(self, sim: Simulator) -> None:
        for cid in sorted(self.u):
            sim.send(self.node_id, cid, ModelDispatch(self.model.params, self.age, self.eta[cid]))

    def handle(self, sim: Simulator, src: int, msg) -> None:
        if isinstance(msg, ClientUpdate):
            if self.syncing:
                self._buffer.append((src, msg))
                self.buffered_total += 1
            else:
                self._absorb(sim, src, msg)
        elif isinstance(msg, ReplayedUpdate):
            if self.syncing:
                self._buffer.append((msg.orig_src, msg.inner))
            else:
                self.replayed_total += 1
                self._absorb(sim, msg.orig_src, msg.inner)
        elif isinstance(msg, ModelBroadcast):
            self._on_peer_model(sim, src, msg)
        else:
            raise ProtocolViolation(f"server cannot handle {type(msg).__name__}")

    # -- state transitions ---------------------------------------------------

    def _absorb(self, sim: Simulator, src: int, msg: ClientUpdate) -> None:
        if src not in self.u:
            raise ProtocolViolation(f"update from unknown client {src} at server {self.node_id}")
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
        if not self.syncing and self.age - self.age_prev >= self.sync_period:
            self._start_sync(sim)

    def _start_sync(self, sim: Simulator) -> None:
        r = self.syncs_completed + 1
        self.syncing = True
        self._broadcast_round = r
        for p in self.peer_ids:
            sim.send(self.node_id, p, ModelBroadcast(self.model.params, self.age, r))
        if len(self._peer_models.get(r, ())) == self.n_servers - 1:
            self._fold(sim, r)

    def _on_peer_model(self, sim: Simulator, src: int, msg: ModelBroadcast) -> None:
        r = msg.bid
        if r <= self.syncs_completed:
            raise ProtocolViolation(
                f"server {self.node_id} got a round-{r} model after completing round "
                f"{self.syncs_completed}"
            )
        self._peer_models.setdefault(r, {})[self.index_of[src]] = (msg.params, msg.age)
        if not self.syncing and self._broadcast_round < r:
            self._start_sync(sim)
        if self._broadcast_round == r and len(self._peer_models[r]) == self.n_servers - 1:
            self._fold(sim, r)

    def _fold(self, sim: Simulator, r: int) -> None:
        entries = dict(self._peer_models.get(r, {}))
        entries[self.server_index] = (self.model.params, self.age)
        order = sorted(entries)
        params, age = entries[order[0]]
        for idx in order[1:]:
            pj, aj = entries[idx]
            params, age = server_merge(params, age, pj, aj, self.hp.eta_a, self.hp.phi)
        self.model = self.model.with_params(params)
        self.age = age
        self.age_prev = age
        self.syncs_completed = r
        self.syncing = False
        self._peer_models.pop(r, None)
        replay, self._buffer = self._buffer, []
        for src, upd in replay:
            sim.send(self.node_id, self.node_id, ReplayedUpdate(upd, src))
