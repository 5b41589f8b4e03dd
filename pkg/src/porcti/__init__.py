"""Reputation-gated consensus for threat-intelligence sharing, with a seeded simulator."""

from porcti.domain import ProtocolParams, Proposal, AttackAttribute, NodeState
from porcti.kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["ProtocolParams", "Proposal", "AttackAttribute", "NodeState", "BACKEND", "__version__"]
