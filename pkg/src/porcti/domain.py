"""Protocol-wide value types and the shared parameter set."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

SCORE_MIN = 1.0
SCORE_MAX = 100.0

ATTRIBUTE_KEYS = (
    "attacker_ip",
    "attack_method",
    "attack_tool",
    "characteristics",
    "ttps",
    "hash",
)

NodeId = int


class NodeState(enum.Enum):
    FOLLOWER = "follower"
    CANDIDATE = "candidate"
    LEADER = "leader"
    SUPERVISOR = "supervisor"


class NodeKind(enum.Enum):
    FAITHFUL = "faithful"
    UNFAITHFUL = "unfaithful"


def clamp_score(value: float) -> float:
    return min(SCORE_MAX, max(SCORE_MIN, value))


def node_kind(score: float, r_thld: float) -> NodeKind:
    """Faithful iff ``score >= r_thld``; only strictly lower scores lose trust."""
    return NodeKind.FAITHFUL if score >= r_thld else NodeKind.UNFAITHFUL


@dataclass(frozen=True, slots=True)
class AttackAttribute:
    key: str
    value: str

    def __post_init__(self) -> None:
        if self.key not in ATTRIBUTE_KEYS:
            raise ValueError(f"unknown attribute key {self.key!r}")
        if not self.value:
            raise ValueError(f"empty value for attribute {self.key!r}")


Entries = tuple[AttackAttribute, ...]


@dataclass(frozen=True, slots=True)
class Proposal:
    term: int
    index: int
    prev_index: int
    entries: Entries
    origin: NodeId
    # opaque ground-truth token of the CTI record this proposal was derived from
    cti_id: str = ""

    def __post_init__(self) -> None:
        if self.index != self.prev_index + 1:
            raise ValueError(f"index {self.index} is not prev_index {self.prev_index} + 1")
        if not self.entries:
            raise ValueError("proposal has no entries")

    def keys(self) -> tuple[str, ...]:
        return tuple(a.key for a in self.entries)

    def with_entries(self, entries: Entries) -> "Proposal":
        return Proposal(self.term, self.index, self.prev_index, tuple(entries), self.origin, self.cti_id)


@dataclass(frozen=True, slots=True)
class DetectionReport:
    reporter: NodeId
    term: int
    prev_index: int
    entries: Entries

    @property
    def index(self) -> int:
        return self.prev_index + 1


@dataclass(frozen=True, slots=True)
class LedgerEntry:
    proposal: Proposal
    committed_at: int

    @property
    def index(self) -> int:
        return self.proposal.index

    @property
    def term(self) -> int:
        return self.proposal.term


@dataclass(frozen=True)
class ProtocolParams:
    r_init: float = 50.0
    r_thld: float = 10.0
    reputation_weight_m: float = 5.0
    posterior_threshold: float = 0.5
    election_timeout_range: tuple[int, int] = (150, 300)
    heartbeat_interval: int = 50
    rng_seed: int = 0
    # supervisor waits this long for detection reports after it sees a proposal
    report_timeout: int = 80
    # leader abandons a phase-2 round (and reappoints the supervisor) after this long
    verdict_timeout: int = 200
    # sim-time a node spends persisting an entry before acknowledging it
    persist_time: int = 60
    # leader steps down after holding a term this long; None keeps terms open-ended
    term_length: Optional[int] = None
    # one-way latency the timeout sanity check is measured against
    typical_latency: int = 6
    # echo rounds of the BFT baseline: 1 = single all-pairs echo, 2 = prevote + precommit
    bft_phases: int = 1

    def kind_of(self, score: float) -> NodeKind:
        return node_kind(score, self.r_thld)


def validate_params(params: ProtocolParams) -> list[str]:
    """Return every violated invariant of ``params``; an empty list means ok."""
    violations: list[str] = []
    for name in ("r_init", "r_thld"):
        v = getattr(params, name)
        if not SCORE_MIN <= v <= SCORE_MAX:
            violations.append(f"{name} in [{SCORE_MIN:g}, {SCORE_MAX:g}]")
    if params.r_init < params.r_thld:
        violations.append("r_init >= r_thld")
    if not params.reputation_weight_m > 0:
        violations.append("reputation_weight_m > 0")
    if not 0.0 < params.posterior_threshold < 1.0:
        violations.append("posterior_threshold in (0, 1)")
    lo, hi = params.election_timeout_range
    if lo > hi:
        violations.append("election timeout min <= max")
    if lo <= 2 * params.typical_latency:
        violations.append("election timeout min > 2 x typical latency")
    if not params.heartbeat_interval < lo:
        violations.append("heartbeat < election min")
    if params.heartbeat_interval <= 0:
        violations.append("heartbeat_interval > 0")
    if not 0 <= params.rng_seed < 2**64:
        violations.append("rng_seed is a 64-bit integer")
    for name in ("report_timeout", "verdict_timeout"):
        if getattr(params, name) <= 0:
            violations.append(f"{name} > 0")
    if params.persist_time < 0:
        violations.append("persist_time >= 0")
    if params.bft_phases not in (1, 2):
        violations.append("bft_phases in {1, 2}")
    if params.term_length is not None and params.term_length <= 0:
        violations.append("term_length > 0")
    return violations


@dataclass(frozen=True, slots=True)
class TraceRecord:
    sim_time: int
    node_id: int
    event_kind: str
    term: int
    index: int
    detail: str = ""


@dataclass
class Trace:
    """Structured event log of one run plus the counters metrics need."""

    records: list[TraceRecord] = field(default_factory=list)
    record_messages: bool = False
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    # messages tagged with a proposal index, keyed by index
    round_messages: dict[int, int] = field(default_factory=dict)
    end_time: int = 0
    quiescent: bool = False

    def add(self, t: int, node: int, kind: str, term: int = 0, index: int = 0, detail: str = "") -> None:
        self.records.append(TraceRecord(t, node, kind, term, index, detail))

    def of_kind(self, kind: str) -> list[TraceRecord]:
        return [r for r in self.records if r.event_kind == kind]
