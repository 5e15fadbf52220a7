"""Deterministic discrete-event simulator for asynchronous multi-server
federated learning, with five interchangeable training schemes."""

__version__ = "0.1.0"
