"""Naive-Bayes reputation model.

The supervisor turns follower detection reports into a validity posterior
for the pending proposal, classifies the proposal against the posterior
threshold, and moves every participant's reputation score up or down with
the running ratio of its correct (or incorrect) detections.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from porcti import kernels
from porcti.domain import (
    NodeId,
    Proposal,
    ProtocolParams,
    DetectionReport,
    clamp_score,
)
from porcti.errors import (
    DegenerateEvidenceError,
    MalformedReportError,
    NoSupervisorError,
    ParameterError,
    UnknownNodeError,
)


class Verdict(enum.Enum):
    AGREE = "agree"
    DISAGREE = "disagree"


class Detection(enum.Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"


@dataclass(frozen=True, slots=True)
class NodeStats:
    node: NodeId
    score: float
    correct_detections: int = 0
    incorrect_detections: int = 0
    proposals_participated: int = 0
    detections_submitted: int = 0


class ReputationTable:
    """Immutable snapshot of every node's score and detection counters.

    Updates return a new table, so a snapshot can be shipped inside
    messages and shared between nodes without copying.
    """

    __slots__ = ("params", "_stats")

    def __init__(self, params: ProtocolParams, stats: Mapping[NodeId, NodeStats]):
        self.params = params
        self._stats = dict(stats)

    @classmethod
    def fresh(cls, nodes: Iterable[NodeId], params: ProtocolParams) -> "ReputationTable":
        return cls(params, {n: NodeStats(n, params.r_init) for n in nodes})

    def __contains__(self, node: object) -> bool:
        return node in self._stats

    def __len__(self) -> int:
        return len(self._stats)

    def __iter__(self):
        return iter(sorted(self._stats))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ReputationTable):
            return NotImplemented
        return self.params == other.params and self._stats == other._stats

    def __repr__(self) -> str:
        scores = ", ".join(f"{n}:{s.score:.2f}" for n, s in sorted(self._stats.items()))
        return f"ReputationTable({scores})"

    def stats(self, node: NodeId) -> NodeStats:
        try:
            return self._stats[node]
        except KeyError:
            raise UnknownNodeError(node) from None

    def score(self, node: NodeId) -> float:
        return self.stats(node).score

    def scores(self) -> dict[NodeId, float]:
        return {n: s.score for n, s in sorted(self._stats.items())}

    def with_stats(self, updates: Mapping[NodeId, NodeStats]) -> "ReputationTable":
        merged = dict(self._stats)
        merged.update(updates)
        return ReputationTable(self.params, merged)


@dataclass(frozen=True, slots=True)
class NodeEvidence:
    node: NodeId
    verdict: Verdict
    likelihood_given_valid: float
    likelihood_given_invalid: float


@dataclass(frozen=True, slots=True)
class EvidenceVector:
    prior_valid: float
    evidence: tuple[NodeEvidence, ...] = ()

    def __post_init__(self) -> None:
        probs = [self.prior_valid]
        for e in self.evidence:
            probs += [e.likelihood_given_valid, e.likelihood_given_invalid]
        if not all(0.0 <= p <= 1.0 for p in probs):
            raise ParameterError("evidence probabilities must lie in [0, 1]")


def prior_valid(responders: int, cluster_size: int) -> float:
    """Fraction of the cluster that submitted a detection report."""
    if cluster_size < 1:
        raise ParameterError("cluster_size must be >= 1")
    if not 0 <= responders <= cluster_size:
        raise ParameterError(f"responders {responders} outside [0, {cluster_size}]")
    return responders / cluster_size


def node_verdict(report: DetectionReport, proposal: Proposal) -> Verdict:
    if report.prev_index != proposal.prev_index:
        raise MalformedReportError(
            f"report for index {report.index} does not reference proposal index {proposal.index}"
        )
    if tuple(a.key for a in report.entries) != proposal.keys():
        raise MalformedReportError(f"attribute keys of report from {report.reporter} differ from proposal")
    matching = sum(1 for r, p in zip(report.entries, proposal.entries) if r.value == p.value)
    # majority of attributes must match; exact half counts as agreement
    if 2 * matching >= len(proposal.entries):
        return Verdict.AGREE
    return Verdict.DISAGREE


def node_likelihoods(stats: NodeStats) -> tuple[float, float]:
    """Laplace-smoothed historical reliability ``(P(agree|valid), P(agree|invalid))``."""
    submitted = max(stats.detections_submitted, 0)
    correct = min(max(stats.correct_detections, 0), submitted)
    p = (correct + 1) / (submitted + 2)
    return p, 1.0 - p


def build_evidence(
    table: ReputationTable,
    verdicts: Mapping[NodeId, Verdict],
    cluster_size: int,
) -> EvidenceVector:
    items = []
    for node in sorted(verdicts):
        pv, pi = node_likelihoods(table.stats(node))
        items.append(NodeEvidence(node, verdicts[node], pv, pi))
    return EvidenceVector(prior_valid(len(verdicts), cluster_size), tuple(items))


def posterior_valid(evidence: EvidenceVector) -> float:
    """Two-class naive-Bayes posterior that the proposal is valid, in log space."""
    ev = evidence.evidence
    agrees = [1 if e.verdict is Verdict.AGREE else 0 for e in ev]
    pv = [e.likelihood_given_valid for e in ev]
    pi = [e.likelihood_given_invalid for e in ev]
    post = kernels.posterior(evidence.prior_valid, agrees, pv, pi)
    if math.isnan(post):
        raise DegenerateEvidenceError("both class numerators are zero")
    return post


def classify_proposal(posterior: float, params: ProtocolParams) -> Detection:
    if posterior >= params.posterior_threshold:
        return Detection.CORRECT
    return Detection.INCORRECT


def apply_reputation_updates(
    table: ReputationTable,
    proposal_outcome: Detection,
    reports: Sequence[DetectionReport],
    verdicts: Sequence[Verdict],
    silent: Iterable[NodeId] = (),
) -> ReputationTable:
    """Reward reporters whose verdict matched the outcome and penalize the rest.

    ``silent`` lists participants that were expected to report but did not;
    they are penalized with ``proposals_participated`` as the denominator.
    """
    if len(reports) != len(verdicts):
        raise ParameterError("reports and verdicts differ in length")
    m = table.params.reputation_weight_m
    expect = Verdict.AGREE if proposal_outcome is Detection.CORRECT else Verdict.DISAGREE
    updates: dict[NodeId, NodeStats] = {}

    for report, verdict in zip(reports, verdicts):
        s = updates.get(report.reporter) or table.stats(report.reporter)
        s = replace(
            s,
            proposals_participated=s.proposals_participated + 1,
            detections_submitted=s.detections_submitted + 1,
        )
        if verdict is expect:
            correct = s.correct_detections + 1
            score = s.score + m * correct / s.proposals_participated
            s = replace(s, correct_detections=correct, score=clamp_score(score))
        else:
            incorrect = s.incorrect_detections + 1
            score = s.score - m * incorrect / s.detections_submitted
            s = replace(s, incorrect_detections=incorrect, score=clamp_score(score))
        updates[report.reporter] = s

    for node in silent:
        if node in updates:
            continue
        s = table.stats(node)
        participated = s.proposals_participated + 1
        incorrect = s.incorrect_detections + 1
        score = s.score - m * incorrect / participated
        updates[node] = replace(
            s,
            proposals_participated=participated,
            incorrect_detections=incorrect,
            score=clamp_score(score),
        )
    return table.with_stats(updates)


def is_faithful(table: ReputationTable, node: NodeId) -> bool:
    return table.score(node) >= table.params.r_thld


def select_supervisor(table: ReputationTable, eligible: Iterable[NodeId], rng: random.Random) -> NodeId:
    """Draw one eligible node with probability proportional to its score."""
    candidates = sorted(eligible)
    if not candidates:
        raise NoSupervisorError("no eligible supervisor")
    u = rng.random()
    weights = [table.score(n) for n in candidates]
    return candidates[kernels.weighted_pick(weights, u)]
