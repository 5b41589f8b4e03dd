"""Wire messages exchanged between simulated nodes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from porcti.domain import Entries, NodeId, Proposal
from porcti.reputation import Detection, ReputationTable


@dataclass(frozen=True, slots=True)
class RequestVote:
    term: int
    candidate_id: NodeId
    last_index: int = 0
    last_term: int = 0
    round_index = 0


@dataclass(frozen=True, slots=True)
class RequestVoteReply:
    term: int
    vote_granted: bool
    round_index = 0


@dataclass(frozen=True, slots=True)
class TimeoutNow:
    """Leadership transfer: the retiring leader asks one follower to campaign at once."""

    term: int
    leader_id: NodeId
    round_index = 0


@dataclass(frozen=True, slots=True)
class ReputationValue:
    term: int
    candidate_id: NodeId
    round_index = 0


@dataclass(frozen=True, slots=True)
class ReputationValueReply:
    term: int
    candidate_id: NodeId
    trust_granted: bool
    round_index = 0


@dataclass(frozen=True, slots=True)
class ProposalBroadcast:
    """Phase-2 broadcast of a pending proposal so followers can run detection."""

    term: int
    leader_id: NodeId
    proposal: Proposal
    supervisor_id: Optional[NodeId]
    attempt: int = 0

    @property
    def round_index(self) -> int:
        return self.proposal.index


@dataclass(frozen=True, slots=True)
class ReputationCompute:
    term: int
    node_id: NodeId
    prev_index: int
    entries: Entries
    attempt: int = 0

    @property
    def round_index(self) -> int:
        return self.prev_index + 1


@dataclass(frozen=True, slots=True)
class ReputationComputeReply:
    """Supervisor verdict; goes to the leader and, as a verdict copy, to every follower."""

    term: int
    success: bool
    index: int
    outcome: Detection
    entries: Entries
    table: ReputationTable
    table_version: tuple[int, int, int]
    revoke_leader: Optional[NodeId] = None
    attempt: int = 0
    posterior: float = 0.0

    @property
    def round_index(self) -> int:
        return self.index


@dataclass(frozen=True, slots=True)
class AppendEntries:
    term: int
    leader_id: NodeId
    prev_index: int
    entries: tuple[Proposal, ...]
    leader_commit: int
    prev_term: int = 0
    supervisor_id: Optional[NodeId] = None
    table: Optional[ReputationTable] = None
    table_version: tuple[int, int, int] = (0, 0, 0)

    @property
    def round_index(self) -> int:
        return self.entries[-1].index if self.entries else 0


@dataclass(frozen=True, slots=True)
class AppendEntriesReply:
    term: int
    success: bool
    index: int = 0
    match_index: int = 0

    @property
    def round_index(self) -> int:
        return self.index


@dataclass(frozen=True, slots=True)
class Verification:
    """All-pairs echo used by the BFT baseline."""

    index: int
    sender: NodeId
    entries: Entries
    phase: int = 1

    @property
    def round_index(self) -> int:
        return self.index
