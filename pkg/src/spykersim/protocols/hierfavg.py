"""Two-level hierarchical averaging: edge servers plus a cloud aggregator.

Edges run synchronous rounds over their own clients exactly like the flat
averaging server.  Every `cloud_period` edge rounds they report their model
(weighted by their clients' data) to the cloud and pause; the cloud
averages all reports and redistributes, after which edges resume.
"""

from __future__ import annotations

import numpy as np

from ..aggregation import fedavg_aggregate
from ..errors import ProtocolViolation
from ..messages import ClientUpdate, CloudModel, EdgeReport, ModelDispatch
from ..models import TinyModel
from ..simulation import SERVER, Node, Simulator


class HierEdgeServer(Node):
    kind = SERVER

    def __init__(
        self,
        node_id: int,
        location: str,
        model: TinyModel,
        client_ids: list[int],
        client_data_sizes: dict[int, int],
        lr: float,
        agg_ms: float,
        cloud_id: int,
        cloud_period: int,
    ):
        if cloud_period < 1:
            raise ProtocolViolation("cloud_period must be >= 1")
        self.node_id = node_id
        self.location = location
        self.model = model
        self.client_ids = sorted(client_ids)
        self.data_sizes = dict(client_data_sizes)
        self.total_data = sum(self.data_sizes.values())
        self.lr = lr
        self.agg_ms = agg_ms
        self.cloud_id = cloud_id
        self.cloud_period = cloud_period
        self.round = 0
        self.updates_absorbed = 0
        self.u = {cid: 0 for cid in self.client_ids}
        self._pending: dict[int, np.ndarray] = {}

    def _dispatch_round(self, sim: Simulator) -> None:
        self._pending = {}
        for cid in self.client_ids:
            sim.send(self.node_id, cid, ModelDispatch(self.model.params, float(self.round), self.lr))

    def bootstrap(self, sim: Simulator) -> None:
        self._dispatch_round(sim)

    def service_ms(self, sim: Simulator, msg, src: int) -> float:
        if isinstance(msg, ClientUpdate) and len(self._pending) + 1 == len(self.client_ids):
            return self.agg_ms
        return 0.0

    def handle(self, sim: Simulator, src: int, msg) -> None:
        if isinstance(msg, CloudModel):
            self.model = self.model.with_params(msg.params)
            self._dispatch_round(sim)
            return
        if not isinstance(msg, ClientUpdate):
            raise ProtocolViolation(f"edge server cannot handle {type(msg).__name__}")
        if src not in self.u:
            raise ProtocolViolation(f"update from unknown client {src}")
        self._pending[src] = msg.params
        self.u[src] += 1
        if len(self._pending) == len(self.client_ids):
            updates = [(self._pending[cid], self.data_sizes[cid]) for cid in self.client_ids]
            self.model = self.model.with_params(fedavg_aggregate(updates))
            self.updates_absorbed += len(updates)
            self.round += 1
            if self.round % self.cloud_period == 0:
                sim.send(self.node_id, self.cloud_id, EdgeReport(self.model.params, self.total_data))
            else:
                self._dispatch_round(sim)


class HierCloud(Node):
    kind = SERVER

    def __init__(self, node_id: int, location: str, model: TinyModel, edge_ids: list[int], agg_ms: float):
        self.node_id = node_id
        self.location = location
        self.model = model
        self.edge_ids = sorted(edge_ids)
        self.agg_ms = agg_ms
        self.cloud_rounds = 0
        self._reports: dict[int, tuple[np.ndarray, int]] = {}

    def service_ms(self, sim: Simulator, msg, src: int) -> float:
        if len(self._reports) + 1 == len(self.edge_ids):
            return self.agg_ms
        return 0.0

    def handle(self, sim: Simulator, src: int, msg) -> None:
        if not isinstance(msg, EdgeReport):
            raise ProtocolViolation(f"cloud cannot handle {type(msg).__name__}")
        if src not in self.edge_ids:
            raise ProtocolViolation(f"report from unknown edge {src}")
        self._reports[src] = (msg.params, msg.weight)
        if len(self._reports) == len(self.edge_ids):
            updates = [self._reports[eid] for eid in self.edge_ids]
            self.model = self.model.with_params(fedavg_aggregate(updates))
            self.cloud_rounds += 1
            self._reports = {}
            for eid in self.edge_ids:
                sim.send(self.node_id, eid, CloudModel(self.model.params))
