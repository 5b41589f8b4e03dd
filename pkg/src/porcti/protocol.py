"""Node state machines: a Raft-style core (the CFT baseline) and the PoR node.

Nodes never touch the clock or the network directly. Every handler appends
actions to ``node.out`` and the simulator drains them:

* ``(SEND, dst, msg, delay)`` -- hand ``msg`` to the network after ``delay``
* ``(TIMER, at, name, token)`` -- call ``fire(name, token)`` at sim-time ``at``
* ``(TRACE, kind, term, index, detail)`` -- structured trace record

Given the same node state, event and rng state a handler always produces the
same actions, which is what makes whole runs replayable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from porcti.cti import CtiRecord, GroundTruth, generate_proposal
from porcti.domain import (
    LedgerEntry,
    NodeId,
    NodeState,
    Proposal,
    ProtocolParams,
    DetectionReport,
)
from porcti.errors import IndexGapError, MalformedReportError, NoSupervisorError, RoleError
from porcti.messages import (
    AppendEntries,
    AppendEntriesReply,
    ProposalBroadcast,
    ReputationCompute,
    ReputationComputeReply,
    ReputationValue,
    ReputationValueReply,
    RequestVote,
    RequestVoteReply,
    TimeoutNow,
)
from porcti.reputation import (
    Detection,
    ReputationTable,
    Verdict,
    apply_reputation_updates,
    build_evidence,
    classify_proposal,
    is_faithful,
    node_verdict,
    posterior_valid,
    select_supervisor,
)

SEND, TIMER, TRACE = 0, 1, 2

Action = tuple


def node_rng(seed: int, node: NodeId, stream: str = "node") -> random.Random:
    """Independent, reproducible stream per (seed, node, purpose)."""
    return random.Random(f"{stream}:{seed}:{node}")


def commit_check(followers: int, confirmations: int, supervisor_ok: bool) -> bool:
    """Commit once the supervisor approved and more than 51% of the cluster confirmed.

    The leader's own copy counts as one confirmation next to the
    ``confirmations`` received from followers, so the threshold is a strict
    majority of the whole cluster and still reachable with a minority crashed.
    """
    return supervisor_ok and confirmations + 1 > 0.51 * (followers + 1)


class RaftCore:
    """Leader election plus log replication without any reputation logic.

    Used directly as the CFT baseline; :class:`PorNode` layers the
    supervisor, certification and the phase-2 reputation round on top.
    """

    protocol = "cft"

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
        self.now = 0

        self.state = NodeState.FOLLOWER
        self.current_term = 0
        self.voted_for: Optional[NodeId] = None
        self.log: list[Proposal] = []
        self.commit_index = 0
        self.ledger: list[LedgerEntry] = []
        self.known_leader: Optional[NodeId] = None
        self.votes: set[NodeId] = set()
        self.election_deadline = 0
        self._election_timer_at: Optional[int] = None
        self._hb_token = 0

        self.pending: Optional[Proposal] = None
        self.pending_since = 0
        self.acks: set[NodeId] = set()
        self.term_started = 0
        self.last_ack: dict[NodeId, int] = {}
        self.attempt = 0

        self.out: list[Action] = []
        self._handlers: dict[type, Callable[[NodeId, Any], None]] = {
            RequestVote: self.on_request_vote,
            RequestVoteReply: self.on_request_vote_reply,
            TimeoutNow: self.on_timeout_now,
            AppendEntries: self.on_append_entries,
            AppendEntriesReply: self.on_append_entries_reply,
        }

    # -- plumbing ---------------------------------------------------------

    def send(self, dst: NodeId, msg: Any, delay: int = 0) -> None:
        self.out.append((SEND, dst, msg, delay))

    def broadcast(self, msg: Any, delay: int = 0) -> None:
        for p in self.peers:
            self.out.append((SEND, p, msg, delay))

    def timer(self, at: int, name: str, token: Any) -> None:
        self.out.append((TIMER, at, name, token))

    def trace(self, kind: str, index: int = 0, detail: str = "") -> None:
        self.out.append((TRACE, kind, self.current_term, index, detail))

    def drain(self) -> list[Action]:
        out, self.out = self.out, []
        return out

    # -- driver entry points ------------------------------------------------

    def start(self, now: int) -> list[Action]:
        self.now = now
        self.reset_election()
        return self.drain()

    def deliver(self, src: NodeId, msg: Any, now: int) -> list[Action]:
        self.now = now
        handler = self._handlers.get(type(msg))
        if handler is None:
            self.trace("protocol_violation", detail=f"unknown message {type(msg).__name__} from {src}")
        else:
            handler(src, msg)
        return self.drain()

    def fire(self, name: str, token: Any, now: int) -> list[Action]:
        self.now = now
        if name == "election":
            self._on_election_timer(token)
        elif name == "heartbeat":
            self._on_heartbeat_timer(token)
        elif name == "round":
            self.on_round_timeout(token)
        else:
            self.on_other_timer(name, token)
        return self.drain()

    def step(self, event: tuple, now: int) -> list[Action]:
        """Dispatch ``("msg", src, msg)`` or ``("timer", name, token)``."""
        if event[0] == "msg":
            return self.deliver(event[1], event[2], now)
        if event[0] == "timer":
            return self.fire(event[1], event[2], now)
        self.now = now
        self.trace("protocol_violation", detail=f"unknown event {event[0]!r}")
        return self.drain()

    def on_other_timer(self, name: str, token: Any) -> None:
        self.trace("protocol_violation", detail=f"unknown timer {name!r}")

    # -- log helpers ------------------------------------------------------

    @property
    def last_index(self) -> int:
        return len(self.log)

    @property
    def last_term(self) -> int:
        return self.log[-1].term if self.log else 0

    def term_at(self, index: int) -> int:
        return self.log[index - 1].term if index > 0 else 0

    def matches(self, index: int, term: int) -> bool:
        return index == 0 or (index <= self.last_index and self.log[index - 1].term == term)

    def advance_commit(self, upto: int) -> None:
        upto = min(upto, self.last_index)
        while self.commit_index < upto:
            self.commit_index += 1
            p = self.log[self.commit_index - 1]
            self.ledger.append(LedgerEntry(p, self.now))
            kind = "commit" if self.state is NodeState.LEADER else "follower_commit"
            self.trace(kind, p.index, f"cti={p.cti_id}")

    @property
    def is_idle_leader(self) -> bool:
        return self.state is NodeState.LEADER and self.pending is None and not self.term_over

    @property
    def term_over(self) -> bool:
        tl = self.params.term_length
        return tl is not None and self.now - self.term_started >= tl

    def retire(self) -> None:
        # tell followers the final commit index, hand leadership to one
        # follower so the rest do not stampede, then sit out one election
        self.send_heartbeats()
        successor = self.choose_successor()
        if successor is not None:
            self.send(successor, TimeoutNow(self.current_term, self.id))
        self.trace("term_expired", detail=f"successor={successor}")
        self.to_follower(extra=self.params.election_timeout_range[1])

    def responsive_peers(self) -> list[NodeId]:
        horizon = self.now - 3 * self.params.heartbeat_interval
        return [p for p in self.peers if self.last_ack.get(p, -1) >= horizon]

    def choose_successor(self) -> Optional[NodeId]:
        live = self.responsive_peers()
        return self.rng.choice(live) if live else None

    def on_timeout_now(self, src: NodeId, m: TimeoutNow) -> None:
        if m.term == self.current_term and self.state is not NodeState.LEADER and self.known_leader == src:
            self.on_election_timeout()

    # -- election -----------------------------------------------------------

    def reset_election(self, extra: int = 0) -> None:
        lo, hi = self.params.election_timeout_range
        self.election_deadline = self.now + self.rng.randint(lo, hi) + extra
        if self._election_timer_at is None or self.election_deadline < self._election_timer_at:
            self._election_timer_at = self.election_deadline
            self.timer(self.election_deadline, "election", self.election_deadline)

    def _on_election_timer(self, token: int) -> None:
        if token != self._election_timer_at:
            return
        self._election_timer_at = None
        if self.state is NodeState.LEADER:
            return
        if self.now < self.election_deadline:
            self._election_timer_at = self.election_deadline
            self.timer(self.election_deadline, "election", self.election_deadline)
            return
        self.on_election_timeout()

    def may_campaign(self) -> bool:
        return True

    def on_election_timeout(self) -> None:
        if self.state is NodeState.LEADER:
            return
        if not self.may_campaign():
            self.reset_election()
            self.trace("campaign_suppressed")
            return
        self.current_term += 1
        self.voted_for = self.id
        self.votes = {self.id}
        self.set_state(NodeState.CANDIDATE)
        self.reset_election()
        self.broadcast(RequestVote(self.current_term, self.id, self.last_index, self.last_term))
        if 2 * len(self.votes) > self.n:
            self.become_leader()

    def set_state(self, state: NodeState) -> None:
        if state is not self.state:
            self.state = state
            self.trace("state", detail=state.value)

    def follower_state(self) -> NodeState:
        return NodeState.FOLLOWER

    def observe_term(self, term: int) -> None:
        """Adopt a newer term seen in any message."""
        self.current_term = term
        self.voted_for = None
        if self.state in (NodeState.LEADER, NodeState.CANDIDATE):
            self.to_follower()

    def to_follower(self, extra: int = 0) -> None:
        was_leader = self.state is NodeState.LEADER
        self.set_state(self.follower_state())
        if was_leader:
            self.on_lose_leadership()
            self.reset_election(extra)

    def on_lose_leadership(self) -> None:
        if self.pending is not None:
            self.trace("abandon", self.pending.index, f"cti={self.pending.cti_id};reason=lost_leadership")
        self.pending = None
        self.acks = set()

    def on_request_vote(self, src: NodeId, m: RequestVote) -> None:
        if m.term > self.current_term:
            self.observe_term(m.term)
        if m.term < self.current_term:
            self.send(src, RequestVoteReply(self.current_term, False))
            return
        if self.voted_for is not None and self.voted_for != m.candidate_id:
            self.send(src, RequestVoteReply(self.current_term, False))
            return
        if (m.last_term, m.last_index) < (self.last_term, self.last_index):
            self.send(src, RequestVoteReply(self.current_term, False))
            return
        self.decide_vote(src, m)

    def decide_vote(self, src: NodeId, m: RequestVote) -> None:
        self.grant_vote(m.candidate_id)

    def grant_vote(self, candidate: NodeId) -> None:
        self.voted_for = candidate
        self.reset_election()
        self.send(candidate, RequestVoteReply(self.current_term, True))

    def on_request_vote_reply(self, src: NodeId, m: RequestVoteReply) -> None:
        if m.term > self.current_term:
            self.observe_term(m.term)
            return
        if self.state is not NodeState.CANDIDATE or m.term != self.current_term or not m.vote_granted:
            return
        self.votes.add(src)
        if 2 * len(self.votes) > self.n:
            self.become_leader()

    def become_leader(self) -> None:
        self.set_state(NodeState.LEADER)
        self.known_leader = self.id
        self.term_started = self.now
        self.pending = None
        self.acks = set()
        self.last_ack = {}
        self.on_become_leader()
        self.send_heartbeats()
        self._hb_token += 1
        self.timer(self.now + self.params.heartbeat_interval, "heartbeat", self._hb_token)

    def on_become_leader(self) -> None:
        pass

    def _on_heartbeat_timer(self, token: int) -> None:
        if self.state is not NodeState.LEADER or token != self._hb_token:
            return
        if self.pending is None and self.term_over:
            self.retire()
            return
        self.send_heartbeats()
        self.timer(self.now + self.params.heartbeat_interval, "heartbeat", token)

    def heartbeat_extras(self) -> dict:
        return {}

    def send_heartbeats(self) -> None:
        msg = AppendEntries(
            self.current_term,
            self.id,
            self.last_index,
            (),
            self.commit_index,
            self.last_term,
            **self.heartbeat_extras(),
        )
        self.broadcast(msg)

    # -- replication (follower side) -----------------------------------------

    def ignores_leader(self, m: AppendEntries) -> bool:
        return False

    def on_leader_contact(self, m: AppendEntries) -> None:
        pass

    def validate_entries(self, src: NodeId, m: AppendEntries) -> Optional[bool]:
        """Extra acceptance check for new entries; ``None`` defers the decision."""
        return True

    def on_append_entries(self, src: NodeId, m: AppendEntries) -> None:
        if m.term < self.current_term:
            self.send(src, AppendEntriesReply(self.current_term, False, m.round_index, self.commit_index))
            return
        if m.term > self.current_term:
            self.observe_term(m.term)
        elif self.state is NodeState.CANDIDATE:
            self.to_follower()
        if self.ignores_leader(m):
            self.send(src, AppendEntriesReply(self.current_term, False, m.round_index, self.commit_index))
            return
        self.known_leader = m.leader_id
        self.reset_election()
        self.on_leader_contact(m)

        if not m.entries:
            if self.matches(m.prev_index, m.prev_term):
                self.advance_commit(min(m.leader_commit, m.prev_index))
                match = m.prev_index
            else:
                match = self.commit_index
            self.send(src, AppendEntriesReply(self.current_term, True, 0, match))
            return

        if not self.matches(m.prev_index, m.prev_term):
            self.send(src, AppendEntriesReply(self.current_term, False, m.round_index, self.commit_index))
            return
        ok = self.validate_entries(src, m)
        if ok is None:
            return
        if not ok:
            # log is consistent up to prev_index; the new entries themselves were refused
            self.send(src, AppendEntriesReply(self.current_term, False, m.round_index, m.prev_index))
            return
        for e in m.entries:
            i = e.index
            if i <= self.last_index:
                if self.log[i - 1] == e:
                    continue
                if i <= self.commit_index:
                    self.trace("safety_violation", i, "leader tried to overwrite a committed entry")
                    self.send(src, AppendEntriesReply(self.current_term, False, m.round_index, self.commit_index))
                    return
                del self.log[i - 1 :]
            self.log.append(e)
        last = m.entries[-1].index
        self.advance_commit(min(m.leader_commit, last))
        self.send(src, AppendEntriesReply(self.current_term, True, last, last), self.params.persist_time)

    # -- replication (leader side) -------------------------------------------

    def propose(self, record: CtiRecord, now: int) -> list[Action]:
        """Client entry point: turn ``record`` into the next proposal."""
        self.now = now
        if self.state is not NodeState.LEADER:
            raise RoleError(f"node {self.id} is not leader")
        proposal = generate_proposal(record, self.current_term, self.last_index + 1, self.id)
        self.leader_propose(proposal)
        return self.drain()

    def check_proposal(self, proposal: Proposal) -> None:
        if self.state is not NodeState.LEADER:
            raise RoleError(f"node {self.id} is not leader")
        if self.pending is not None and self.pending.index == proposal.index:
            raise RoleError(f"index {proposal.index} already pending")
        if proposal.index != self.last_index + 1:
            raise IndexGapError(f"proposal index {proposal.index} after last index {self.last_index}")

    def leader_propose(self, proposal: Proposal) -> None:
        self.check_proposal(proposal)
        self.pending = proposal
        self.pending_since = self.now
        self.acks = set()
        self.attempt += 1
        self.trace("propose", proposal.index, f"cti={proposal.cti_id}")
        self.log.append(proposal)
        self.replicate(proposal)
        self.timer(self.now + self.params.verdict_timeout, "round", (proposal.index, self.attempt))

    def replicate(self, proposal: Proposal) -> None:
        msg = AppendEntries(
            self.current_term,
            self.id,
            proposal.prev_index,
            (proposal,),
            self.commit_index,
            self.term_at(proposal.prev_index),
        )
        self.broadcast(msg)

    def quorum_reached(self) -> bool:
        return 2 * (len(self.acks) + 1) > self.n

    def on_append_entries_reply(self, src: NodeId, m: AppendEntriesReply) -> None:
        if m.term > self.current_term:
            self.observe_term(m.term)
            return
        if self.state is not NodeState.LEADER or m.term != self.current_term:
            return
        self.last_ack[src] = self.now
        if m.index == 0:
            if m.match_index < self.commit_index:
                self.backfill(src, m.match_index)
            return
        if not m.success:
            p = self.pending
            needed = p.prev_index if p is not None else self.commit_index
            if m.match_index < needed:
                self.backfill(src, m.match_index)
            return
        p = self.pending
        if p is not None and m.index == p.index:
            self.acks.add(src)
            if self.quorum_reached():
                self.commit_pending()

    def backfill(self, dst: NodeId, match: int) -> None:
        # only entries the leader itself holds; the follower re-validates new ones
        upto = self.last_index
        if match >= upto:
            return
        entries = tuple(self.log[match:upto])
        self.send(
            dst,
            AppendEntries(self.current_term, self.id, match, entries, self.commit_index, self.term_at(match)),
        )

    def commit_pending(self) -> None:
        p = self.pending
        assert p is not None
        self.advance_commit(p.index)
        self.trace("latency", p.index, f"cti={p.cti_id};latency={self.now - self.pending_since}")
        self.pending = None
        self.acks = set()
        if self.term_over:
            self.retire()

    def abandon_pending(self, reason: str) -> None:
        p = self.pending
        if p is None:
            return
        if self.last_index == p.index and self.commit_index < p.index and self.log[-1] == p:
            self.log.pop()
        self.trace("abandon", p.index, f"cti={p.cti_id};reason={reason}")
        self.pending = None
        self.acks = set()
        if self.state is NodeState.LEADER and self.term_over:
            self.retire()

    def on_round_timeout(self, token: tuple[int, int]) -> None:
        p = self.pending
        if self.state is not NodeState.LEADER or p is None or token != (p.index, self.attempt):
            return
        self.abandon_pending("timeout")


@dataclass
class _SupervisionRound:
    proposal: Proposal
    attempt: int
    term: int
    reports: dict[NodeId, tuple] = field(default_factory=dict)
    done: bool = False


class PorNode(RaftCore):
    """Proof-of-Reputation node: Raft core plus supervisor-driven reputation rounds."""

    protocol = "por"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.supervising = False
        self.table: Optional[ReputationTable] = None
        self.table_version: tuple[int, int, int] = (0, 0, 0)
        self.known_supervisor: Optional[NodeId] = None
        self.pending_vote: Optional[tuple[NodeId, int]] = None
        self.revoked: set[tuple[NodeId, int]] = set()
        self.verdict_copies: dict[int, ReputationComputeReply] = {}
        self.deferred: dict[int, tuple[NodeId, AppendEntries]] = {}
        # leader side
        self.supervisor: Optional[NodeId] = None
        self.suspects: set[NodeId] = set()
        self.verdict: Optional[Detection] = None
        # supervisor side
        self.rounds: dict[int, _SupervisionRound] = {}
        self.early: dict[tuple[int, int], dict[NodeId, tuple]] = {}
        # rewrites this node's own detection when it never leaves the node
        # (the supervisor's self-report); installed by fault injection
        self.report_filter: Optional[Callable[[tuple], tuple]] = None
        self._handlers.update(
            {
                ReputationValue: self.on_reputation_value,
                ReputationValueReply: self.on_reputation_value_reply,
                ProposalBroadcast: self.on_proposal_broadcast,
                ReputationCompute: self.on_reputation_compute,
                ReputationComputeReply: self.on_reputation_compute_reply,
            }
        )

    # -- reputation knowledge ---------------------------------------------

    def adopt_table(self, table: Optional[ReputationTable], version: tuple[int, int, int]) -> None:
        if table is not None and (self.table is None or version > self.table_version):
            self.table = table
            self.table_version = version

    def local_trust(self, node: NodeId) -> bool:
        if self.table is None or node not in self.table:
            return True
        return is_faithful(self.table, node)

    def may_campaign(self) -> bool:
        return self.local_trust(self.id)

    def follower_state(self) -> NodeState:
        return NodeState.SUPERVISOR if self.supervising else NodeState.FOLLOWER

    def observe_term(self, term: int) -> None:
        self.pending_vote = None
        super().observe_term(term)

    # -- phase 1: certified voting -------------------------------------------

    def decide_vote(self, src: NodeId, m: RequestVote) -> None:
        cand = m.candidate_id
        if self.pending_vote is not None:
            if self.pending_vote != (cand, m.term):
                self.send(src, RequestVoteReply(self.current_term, False))
            return
        sup = self.known_supervisor
        if self.supervising or sup is None or sup == cand or sup == self.id:
            if self.local_trust(cand):
                self.grant_vote(cand)
            else:
                self.send(src, RequestVoteReply(self.current_term, False))
            return
        self.pending_vote = (cand, m.term)
        self.send(sup, ReputationValue(m.term, cand))
        lo = self.params.election_timeout_range[0]
        self.timer(self.now + lo, "vote_expiry", (cand, m.term))

    def on_reputation_value(self, src: NodeId, m: ReputationValue) -> None:
        if self.supervising and self.table is not None:
            trusted = self.local_trust(m.candidate_id)
        else:
            trusted = False
        self.send(src, ReputationValueReply(max(self.current_term, m.term), m.candidate_id, trusted))

    def _resolve_vote(self, cand: NodeId, trusted: bool) -> None:
        self.pending_vote = None
        if trusted and self.voted_for in (None, cand):
            self.grant_vote(cand)
        else:
            self.send(cand, RequestVoteReply(self.current_term, False))

    def on_reputation_value_reply(self, src: NodeId, m: ReputationValueReply) -> None:
        if self.pending_vote != (m.candidate_id, self.current_term):
            return
        self._resolve_vote(m.candidate_id, m.trust_granted)

    def on_other_timer(self, name: str, token: Any) -> None:
        if name == "vote_expiry":
            if self.pending_vote == token and token[1] == self.current_term:
                # certifier silent: fall back to the last reputation snapshot we hold
                self._resolve_vote(token[0], self.local_trust(token[0]))
        elif name == "report_deadline":
            r = self.rounds.get(token[0])
            if r is not None and r.attempt == token[1] and not r.done:
                self.finalize_round(r)
        else:
            super().on_other_timer(name, token)

    def on_become_leader(self) -> None:
        self.pending_vote = None
        if self.supervising:
            self.supervising = False
            self.rounds.clear()
        if self.table is None:
            self.table = ReputationTable.fresh(self.cluster, self.params)
        self.suspects = set()
        self.verdict = None
        self.appoint_supervisor()

    def appoint_supervisor(self, prefer_responsive: bool = False) -> None:
        assert self.table is not None
        eligible = {p for p in self.peers if p not in self.suspects and is_faithful(self.table, p)}
        if prefer_responsive:
            horizon = self.now - 3 * self.params.heartbeat_interval
            responsive = {p for p in eligible if self.last_ack.get(p, -1) >= horizon}
            eligible = responsive or eligible
        try:
            self.supervisor = select_supervisor(self.table, eligible, self.rng)
        except NoSupervisorError:
            self.supervisor = None
            self.trace("no_supervisor")
            return
        self.known_supervisor = self.supervisor
        self.trace("supervisor", detail=f"node={self.supervisor}")

    def choose_successor(self) -> Optional[NodeId]:
        assert self.table is not None
        live = {p for p in self.responsive_peers() if is_faithful(self.table, p)}
        if not live:
            return None
        return select_supervisor(self.table, live, self.rng)

    def heartbeat_extras(self) -> dict:
        return {"supervisor_id": self.supervisor, "table": self.table, "table_version": self.table_version}

    def on_lose_leadership(self) -> None:
        super().on_lose_leadership()
        self.verdict = None
        self.supervisor = None

    # -- follower side of leader contact --------------------------------------

    def ignores_leader(self, m: AppendEntries) -> bool:
        return (m.leader_id, m.term) in self.revoked

    def on_leader_contact(self, m: AppendEntries) -> None:
        self.adopt_table(m.table, m.table_version)
        sid = m.supervisor_id
        if sid is None:
            return
        self.known_supervisor = sid
        if sid == self.id:
            if not self.supervising:
                self.supervising = True
                if self.table is None:
                    self.table = ReputationTable.fresh(self.cluster, self.params)
                if self.state is NodeState.FOLLOWER:
                    self.set_state(NodeState.SUPERVISOR)
        elif self.supervising:
            self.supervising = False
            self.rounds.clear()
            self.early.clear()
            if self.state is NodeState.SUPERVISOR:
                self.set_state(NodeState.FOLLOWER)

    def validate_entries(self, src: NodeId, m: AppendEntries) -> Optional[bool]:
        for e in m.entries:
            if e.index <= m.leader_commit or e.term != m.term:
                continue
            copy = self.verdict_copies.get(e.index)
            if copy is None or copy.term != m.term:
                self.deferred[e.index] = (src, m)
                return None
            if copy.outcome is not Detection.CORRECT or copy.entries != e.entries:
                return False
        return True

    # -- phase 2: proposal, detection, supervision -----------------------------

    def detect(self, proposal: Proposal) -> tuple:
        """This node's independently observed values, in the proposal's key order."""
        truth = self.ground_truth.detect(proposal.cti_id) if self.ground_truth is not None else None
        if truth is None:
            return proposal.entries
        by_key = {a.key: a for a in truth}
        return tuple(by_key.get(a.key, a) for a in proposal.entries)

    def leader_propose(self, proposal: Proposal) -> None:
        self.check_proposal(proposal)
        self.pending = proposal
        self.pending_since = self.now
        self.acks = set()
        self.verdict = None
        self.trace("propose", proposal.index, f"cti={proposal.cti_id}")
        if self.supervisor is None or not self.local_trust(self.supervisor):
            self.appoint_supervisor(prefer_responsive=True)
        self._broadcast_proposal()

    def _broadcast_proposal(self) -> None:
        p = self.pending
        assert p is not None
        self.attempt += 1
        self.broadcast(ProposalBroadcast(self.current_term, self.id, p, self.supervisor, self.attempt))
        self.timer(self.now + self.params.verdict_timeout, "round", (p.index, self.attempt))

    def on_round_timeout(self, token: tuple[int, int]) -> None:
        p = self.pending
        if self.state is not NodeState.LEADER or p is None or token != (p.index, self.attempt):
            return
        if self.verdict is None:
            if self.supervisor is not None:
                self.suspects.add(self.supervisor)
            self.trace("supervisor_timeout", p.index, f"node={self.supervisor}")
            self.appoint_supervisor(prefer_responsive=True)
            if self.supervisor is None:
                self.abandon_pending("no_supervisor")
                return
            self.send_heartbeats()
            self._broadcast_proposal()
            return
        self.abandon_pending("no_quorum")

    def on_proposal_broadcast(self, src: NodeId, m: ProposalBroadcast) -> None:
        if m.term < self.current_term:
            return
        if m.term > self.current_term:
            self.observe_term(m.term)
        p = m.proposal
        if m.supervisor_id == self.id:
            if not self.supervising:
                self.supervising = True
                if self.table is None:
                    self.table = ReputationTable.fresh(self.cluster, self.params)
                if self.state is NodeState.FOLLOWER:
                    self.set_state(NodeState.SUPERVISOR)
            r = _SupervisionRound(p, m.attempt, m.term)
            # the proposal doubles as the leader's own report
            r.reports[m.leader_id] = p.entries
            own = self.detect(p)
            r.reports[self.id] = self.report_filter(own) if self.report_filter is not None else own
            r.reports.update(self.early.pop((p.index, m.attempt), {}))
            self.rounds[p.index] = r
            for key in [k for k in self.early if k[0] <= p.index]:
                del self.early[key]
            if len(r.reports) >= self.n:
                self.finalize_round(r)
            else:
                self.timer(self.now + self.params.report_timeout, "report_deadline", (p.index, m.attempt))
            return
        if m.supervisor_id is None:
            return
        self.send(
            m.supervisor_id,
            ReputationCompute(m.term, self.id, p.prev_index, self.detect(p), m.attempt),
        )

    def on_reputation_compute(self, src: NodeId, m: ReputationCompute) -> None:
        if not self.supervising:
            self.trace("stale_report", m.round_index, f"from={src}")
            return
        idx = m.prev_index + 1
        r = self.rounds.get(idx)
        if r is None or r.attempt != m.attempt:
            if r is not None and r.attempt > m.attempt:
                self.trace("stale_report", idx, f"from={src}")
                return
            self.early.setdefault((idx, m.attempt), {})[src] = m.entries
            return
        if r.done:
            self.trace("stale_report", idx, f"from={src}")
            return
        r.reports[src] = m.entries
        if len(r.reports) >= self.n:
            self.finalize_round(r)

    def finalize_round(self, r: _SupervisionRound) -> None:
        r.done = True
        p = r.proposal
        if self.table is None:
            self.table = ReputationTable.fresh(self.cluster, self.params)
        table = self.table
        reports: list[DetectionReport] = []
        verdicts: dict[NodeId, Verdict] = {}
        for node in sorted(r.reports):
            rep = DetectionReport(node, r.term, p.prev_index, tuple(r.reports[node]))
            try:
                v = node_verdict(rep, p)
            except MalformedReportError:
                v = Verdict.DISAGREE
            reports.append(rep)
            verdicts[node] = v
        evidence = build_evidence(table, verdicts, self.n)
        post = posterior_valid(evidence)
        outcome = classify_proposal(post, self.params)
        silent = [x for x in self.cluster if x not in r.reports]
        # the leader's proposal counts toward k, but proposing is not detecting:
        # the leader is only charged when its proposal is judged incorrect
        scored = [rep for rep in reports if outcome is not Detection.CORRECT or rep.reporter != p.origin]
        new_table = apply_reputation_updates(
            table, outcome, scored, [verdicts[rep.reporter] for rep in scored], silent
        )
        thld = self.params.r_thld
        for x in self.cluster:
            if table.score(x) >= thld > new_table.score(x):
                self.trace("flagged", p.index, f"node={x};score={new_table.score(x):.4f}")
        self.table = new_table
        self.table_version = (r.term, p.index, r.attempt)
        revoke = p.origin if new_table.score(p.origin) < thld else None
        self.trace(
            "verdict",
            p.index,
            f"posterior={post:.6f};outcome={outcome.value};k={len(reports)};leader={p.origin};"
            f"silent={'|'.join(map(str, silent))}",
        )
        self.trace("scores", p.index, ",".join(f"{x}={new_table.score(x):.4f}" for x in self.cluster))
        expect = Verdict.AGREE if outcome is Detection.CORRECT else Verdict.DISAGREE
        for dst in self.peers:
            reply = ReputationComputeReply(
                r.term,
                verdicts.get(dst) is expect,
                p.index,
                outcome,
                p.entries,
                new_table,
                self.table_version,
                revoke,
                r.attempt,
                post,
            )
            self.send(dst, reply)
        self.verdict_copies[p.index] = ReputationComputeReply(
            r.term, verdicts.get(self.id) is expect, p.index, outcome, p.entries,
            new_table, self.table_version, revoke, r.attempt, post,
        )
        self._flush_deferred(p.index)

    def on_reputation_compute_reply(self, src: NodeId, m: ReputationComputeReply) -> None:
        self.adopt_table(m.table, m.table_version)
        if self.state is NodeState.LEADER:
            self._on_verdict(m)
            return
        if m.revoke_leader is not None:
            self.revoked.add((m.revoke_leader, m.term))
            if self.known_leader == m.revoke_leader:
                self.known_leader = None
        self.verdict_copies[m.index] = m
        for idx in [i for i in self.verdict_copies if i < m.index - 8]:
            del self.verdict_copies[idx]
        self._flush_deferred(m.index)

    def _flush_deferred(self, index: int) -> None:
        d = self.deferred.pop(index, None)
        if d is not None:
            self.on_append_entries(*d)

    def _on_verdict(self, m: ReputationComputeReply) -> None:
        p = self.pending
        if p is None or m.term != self.current_term or m.index != p.index or m.attempt != self.attempt:
            return
        if m.revoke_leader == self.id:
            self.trace("revoked", p.index)
            self.abandon_pending("revoked")
            self.to_follower()
            return
        if m.outcome is not Detection.CORRECT:
            self.abandon_pending("rejected")
            return
        self.verdict = Detection.CORRECT
        self.log.append(p)
        self.replicate(p)

    def quorum_reached(self) -> bool:
        return commit_check(self.n - 1, len(self.acks), self.verdict is Detection.CORRECT)
