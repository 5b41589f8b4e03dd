"""Comparison protocols sharing the simulator: CFT (plain Raft) and an all-pairs BFT echo."""

from __future__ import annotations

from collections import defaultdict
from typing import Any, Optional

from porcti.cti import CtiRecord, GroundTruth, generate_proposal
from porcti.domain import LedgerEntry, NodeId, NodeState, Proposal, ProtocolParams
from porcti.errors import RoleError
from porcti.messages import ProposalBroadcast, Verification
from porcti.protocol import SEND, TIMER, TRACE, RaftCore, node_rng


class CftNode(RaftCore):
    """Raft-like crash-fault-tolerant node: term-only voting, majority commit."""

    protocol = "cft"


class BftNode:
    """All-pairs verification: every node echoes what it verified to every other node.

    A node commits an index once more than two thirds of the cluster sent
    matching verifications for it. With ``params.bft_phases == 2`` the echo
    is repeated once more (prevote then precommit) before committing.
    """

    protocol = "bft"

    def __init__(
        self,
        node_id: NodeId,
        cluster: tuple[NodeId, ...],
        params: ProtocolParams,
        ground_truth: Optional[GroundTruth] = None,
        seed: int = 0,
    ):
        self.id = node_id
        self.cluster = tuple(sorted(cluster))
        self.n = len(self.cluster)
        self.peers = tuple(x for x in self.cluster if x != node_id)
        self.params = params
        self.rng = node_rng(seed, node_id)
        self.ground_truth = ground_truth
        self.phases = params.bft_phases
        self.proposer = self.cluster[0]
        self.is_proposer = node_id == self.proposer
        self.state = NodeState.LEADER if self.is_proposer else NodeState.FOLLOWER
        self.current_term = 1
        self.now = 0
        self.log: list[Proposal] = []
        self.ledger: list[LedgerEntry] = []
        self.commit_index = 0
        self.pending: Optional[Proposal] = None
        self.pending_since = 0
        self.attempt = 0
        self.proposals: dict[int, Proposal] = {}
        self.sent_phase: dict[int, int] = {}
        self.tally: dict[tuple[int, int], dict[tuple, set[NodeId]]] = defaultdict(lambda: defaultdict(set))
        self.decided: dict[int, tuple] = {}
        self.out: list = []

    def drain(self) -> list:
        out, self.out = self.out, []
        return out

    def trace(self, kind: str, index: int = 0, detail: str = "") -> None:
        self.out.append((TRACE, kind, self.current_term, index, detail))

    @property
    def last_index(self) -> int:
        return len(self.log)

    @property
    def is_idle_leader(self) -> bool:
        return self.is_proposer and self.pending is None

    def start(self, now: int) -> list:
        self.now = now
        if self.is_proposer:
            self.trace("state", detail=NodeState.LEADER.value)
        return self.drain()

    def propose(self, record: CtiRecord, now: int) -> list:
        self.now = now
        if not self.is_proposer:
            raise RoleError(f"node {self.id} is not the proposer")
        if self.pending is not None:
            raise RoleError(f"proposal {self.pending.index} still pending")
        p = generate_proposal(record, self.current_term, self.commit_index + 1, self.id)
        self.pending = p
        self.pending_since = now
        self.attempt += 1
        self.trace("propose", p.index, f"cti={p.cti_id}")
        for dst in self.peers:
            self.out.append((SEND, dst, ProposalBroadcast(self.current_term, self.id, p, None, self.attempt), 0))
        self.out.append((TIMER, now + self.params.verdict_timeout, "round", (p.index, self.attempt)))
        self._verify(p)
        return self.drain()

    def deliver(self, src: NodeId, msg: Any, now: int) -> list:
        self.now = now
        if isinstance(msg, ProposalBroadcast):
            self._verify(msg.proposal)
        elif isinstance(msg, Verification):
            self._count(msg.index, msg.phase, msg.entries, src)
        else:
            self.trace("protocol_violation", detail=f"unknown message {type(msg).__name__} from {src}")
        return self.drain()

    def fire(self, name: str, token: Any, now: int) -> list:
        self.now = now
        if name == "round":
            p = self.pending
            if p is not None and token == (p.index, self.attempt):
                # no leader change to fall back on: the round either completes or the run stalls
                self.trace("stalled", p.index, f"cti={p.cti_id}")
        return self.drain()

    def detect(self, p: Proposal) -> tuple:
        truth = self.ground_truth.detect(p.cti_id) if self.ground_truth is not None else None
        if truth is None:
            return p.entries
        by_key = {a.key: a for a in truth}
        return tuple(by_key.get(a.key, a) for a in p.entries)

    def _echo(self, index: int, phase: int, entries: tuple) -> None:
        if self.sent_phase.get(index, 0) >= phase:
            return
        self.sent_phase[index] = phase
        msg = Verification(index, self.id, entries, phase)
        for dst in self.peers:
            self.out.append((SEND, dst, msg, self.params.persist_time if phase == 1 else 0))
        self._count(index, phase, entries, self.id)

    def _verify(self, p: Proposal) -> None:
        if p.index in self.proposals:
            return
        self.proposals[p.index] = p
        self._echo(p.index, 1, self.detect(p))
        self._try_commit()

    def _count(self, index: int, phase: int, entries: tuple, sender: NodeId) -> None:
        if index <= self.commit_index:
            return
        votes = self.tally[(index, phase)][entries]
        votes.add(sender)
        if 3 * len(votes) <= 2 * self.n:
            return
        if phase < self.phases:
            self._echo(index, phase + 1, entries)
            return
        if index not in self.decided:
            self.decided[index] = entries
            self._try_commit()

    def _try_commit(self) -> None:
        while self.commit_index + 1 in self.decided and self.commit_index + 1 in self.proposals:
            idx = self.commit_index + 1
            seen = self.proposals[idx]
            p = seen.with_entries(self.decided.pop(idx))
            self.log.append(p)
            self.commit_index = idx
            self.ledger.append(LedgerEntry(p, self.now))
            for key in [k for k in self.tally if k[0] <= idx]:
                del self.tally[key]
            if self.is_proposer:
                self.trace("commit", idx, f"cti={p.cti_id}")
                if self.pending is not None and self.pending.index == idx:
                    self.trace("latency", idx, f"cti={p.cti_id};latency={self.now - self.pending_since}")
                    self.pending = None
            else:
                self.trace("follower_commit", idx, f"cti={p.cti_id}")
