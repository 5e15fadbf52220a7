"""Event-driven state machines for the five training schemes."""

from .clients import TrainingClient
from .fedasync import FedAsyncServer
from .fedavg import FedAvgServer
from .hierfavg import HierCloud, HierEdgeServer
from .spyker import SpykerServer
from .sync_spyker import SyncSpykerServer

__all__ = [
    "TrainingClient",
    "FedAsyncServer",
    "FedAvgServer",
    "HierCloud",
    "HierEdgeServer",
    "SpykerServer",
    "SyncSpykerServer",
]
