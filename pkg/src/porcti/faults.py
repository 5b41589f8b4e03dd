"""Byzantine and crash behaviors applied to a node's message streams."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from typing import Any, Optional

from porcti.cti import forge_value
from porcti.domain import ATTRIBUTE_KEYS, AttackAttribute, NodeState
from porcti.errors import ParameterError
from porcti.messages import AppendEntries, ProposalBroadcast, ReputationCompute, Verification


class BehaviorKind(enum.Enum):
    HONEST = "honest"
    FALSE_REPORTER = "false_reporter"
    CRASH_STOP = "crash_stop"
    TAMPERING_LEADER = "tampering_leader"


@dataclass(frozen=True)
class BehaviorSpec:
    kind: BehaviorKind = BehaviorKind.HONEST
    activation_time: int = 0
    false_report_probability: float = 1.0
    attribute_corruption_count: int = len(ATTRIBUTE_KEYS)

    def __post_init__(self) -> None:
        if not 0.0 <= self.false_report_probability <= 1.0:
            raise ParameterError("false_report_probability must lie in [0, 1]")
        if not 0 <= self.attribute_corruption_count <= len(ATTRIBUTE_KEYS):
            raise ParameterError(f"attribute_corruption_count must lie in [0, {len(ATTRIBUTE_KEYS)}]")

    @property
    def is_byzantine(self) -> bool:
        return self.kind in (BehaviorKind.FALSE_REPORTER, BehaviorKind.TAMPERING_LEADER)

    def crashed(self, now: int) -> bool:
        return self.kind is BehaviorKind.CRASH_STOP and now >= self.activation_time

    def active(self, now: int) -> bool:
        return now >= self.activation_time


HONEST = BehaviorSpec()


def corrupt_entries(entries: tuple, count: int, rng: random.Random) -> tuple:
    """Replace ``count`` randomly chosen attribute values with forged ones."""
    count = min(count, len(entries))
    if count == 0:
        return entries
    positions = set(rng.sample(range(len(entries)), count))
    return tuple(
        AttackAttribute(a.key, forge_value(a.key, a.value, rng)) if i in positions else a
        for i, a in enumerate(entries)
    )


def corrupt_report(spec: BehaviorSpec, entries: tuple, rng: random.Random, now: int = 0) -> tuple:
    """A FalseReporter's rewrite of one detection report; identity for every other behavior."""
    if spec.kind is not BehaviorKind.FALSE_REPORTER or not spec.active(now):
        return entries
    if rng.random() < spec.false_report_probability:
        return corrupt_entries(entries, spec.attribute_corruption_count, rng)
    return entries


def _tamper(msg: Any, spec: BehaviorSpec, rng: random.Random) -> Any:
    c = spec.attribute_corruption_count
    if isinstance(msg, ProposalBroadcast):
        p = msg.proposal
        return replace(msg, proposal=p.with_entries(corrupt_entries(p.entries, c, rng)))
    if isinstance(msg, AppendEntries) and msg.entries:
        last = msg.entries[-1]
        forged = last.with_entries(corrupt_entries(last.entries, c, rng))
        return replace(msg, entries=msg.entries[:-1] + (forged,))
    return msg


def apply_behavior(
    spec: Optional[BehaviorSpec],
    node: Any,
    outbound: list,
    rng: random.Random,
    now: int = 0,
) -> list:
    """Filter or rewrite a node's outbound ``(SEND, dst, msg, delay)`` actions.

    ``rng`` must be the node's own behavior stream so that changing one
    node's behavior never shifts the draws seen by any other node.
    """
    if spec is None or spec.kind is BehaviorKind.HONEST or not spec.active(now):
        return outbound
    if spec.kind is BehaviorKind.CRASH_STOP:
        return []
    result = []
    if spec.kind is BehaviorKind.FALSE_REPORTER:
        for action in outbound:
            msg = action[2]
            if isinstance(msg, (ReputationCompute, Verification)):
                forged = corrupt_report(spec, msg.entries, rng, now)
                if forged is not msg.entries:
                    action = (action[0], action[1], replace(msg, entries=forged), action[3])
            result.append(action)
        return result
    # tampering leader
    leading = getattr(node, "state", None) is NodeState.LEADER or getattr(node, "is_proposer", False)
    if not leading:
        return outbound
    for action in outbound:
        result.append((action[0], action[1], _tamper(action[2], spec, rng), action[3]))
    return result
