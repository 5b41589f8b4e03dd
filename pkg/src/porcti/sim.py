"""Deterministic discrete-event simulator.

A single global heap holds every pending event as a ``SimEvent`` tuple and
pops them in ``(deliver_at, seq)`` order. Sim-time is an integer. The same
nodes, config and seed always produce the same trace.

Optionally, message handling draws on a fixed pool of processing cores
shared by the whole cluster (``NetworkModel.cores`` / ``proc_time``), which
models many nodes co-hosted on one test machine: a message that has arrived
waits for a free core before its handler runs.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import random
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, NamedTuple, Optional

from porcti.cti import CtiRecord
from porcti.domain import Trace
from porcti.errors import ParameterError
from porcti.faults import BehaviorKind, BehaviorSpec, apply_behavior, corrupt_report
from porcti.protocol import SEND, TIMER, TRACE, node_rng

logger = logging.getLogger(__name__)

DELIVER, FIRE, ARRIVE, CLIENT = 0, 1, 2, 3


class SimEvent(NamedTuple):
    deliver_at: int
    seq: int
    kind: int
    target: int
    payload: Any
    src: Any


@dataclass(frozen=True)
class NetworkModel:
    latency: tuple[int, int] = (2, 6)
    drop_probability: float = 0.0
    partition: Optional[tuple[frozenset, frozenset]] = None
    proc_time: int = 1
    cores: int = 2

    def __post_init__(self) -> None:
        lo, hi = self.latency
        if not 0 <= lo <= hi:
            raise ParameterError(f"latency range must satisfy 0 <= lo <= hi, got {self.latency}")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ParameterError("drop_probability must lie in [0, 1]")
        if self.proc_time < 0 or self.cores < 0:
            raise ParameterError("proc_time and cores must be non-negative")

    def partitioned(self, a: int, b: int) -> bool:
        if self.partition is None:
            return False
        left, right = self.partition
        return (a in left and b in right) or (a in right and b in left)


def schedule(
    queue: list,
    msg: Any,
    src: int,
    dst: int,
    model: NetworkModel,
    rng: random.Random,
    now: int,
    seq: "itertools.count[int]",
    trace: Optional[Trace] = None,
    delay: int = 0,
) -> Optional[int]:
    """Enqueue one message; return its arrival time, or ``None`` if it was dropped."""
    if src == dst:
        raise ParameterError("cannot send a message to self")
    if model.partitioned(src, dst) or (model.drop_probability > 0.0 and rng.random() < model.drop_probability):
        if trace is not None:
            trace.dropped += 1
            if trace.record_messages:
                trace.add(now, src, "drop", 0, getattr(msg, "round_index", 0), f"to={dst};{type(msg).__name__}")
        return None
    lo, hi = model.latency
    at = now + delay + (rng.randint(lo, hi) if hi > lo else lo)
    kind = ARRIVE if model.proc_time > 0 and model.cores > 0 else DELIVER
    heapq.heappush(queue, SimEvent(at, next(seq), kind, dst, msg, src))
    return at


class Simulator:
    """Runs a cluster of node state machines over the simulated network."""

    def __init__(
        self,
        nodes: Mapping[int, Any],
        network: NetworkModel,
        seed: int = 0,
        behaviors: Optional[Mapping[int, BehaviorSpec]] = None,
        workload: Iterable[tuple[int, CtiRecord]] = (),
        record_messages: bool = False,
    ):
        self.nodes = dict(nodes)
        self.network = network
        self.seed = seed
        self.behaviors = dict(behaviors or {})
        self.rng = random.Random(f"net:{seed}")
        self.behavior_rngs = {n: node_rng(seed, n, "behavior") for n in self.nodes}
        self.queue: list[SimEvent] = []
        self.seq = itertools.count()
        self.cores = [0] * network.cores
        self.trace = Trace(record_messages=record_messages)
        self.now = 0
        self.backlog: deque[CtiRecord] = deque()
        self.leader: Optional[int] = None
        self.records: dict[str, CtiRecord] = {}
        self.resolved: set[str] = set()
        self.commits = 0
        self.committed: set[int] = set()
        for at, rec in workload:
            self.records[rec.ground_truth_id] = rec
            heapq.heappush(self.queue, SimEvent(at, next(self.seq), CLIENT, -1, rec, None))
        self._started = False
        for nid, spec in self.behaviors.items():
            node = self.nodes.get(nid)
            if spec.kind is BehaviorKind.FALSE_REPORTER and hasattr(node, "report_filter"):
                node.report_filter = self._own_report_filter(nid, spec)

    def _own_report_filter(self, nid: int, spec: BehaviorSpec):
        rng = self.behavior_rngs[nid]
        return lambda entries: corrupt_report(spec, entries, rng, self.now)

    def _crashed(self, node: int) -> bool:
        b = self.behaviors.get(node)
        return b is not None and b.crashed(self.now)

    def _process(self, node: Any, actions: list) -> None:
        sends = []
        for a in actions:
            tag = a[0]
            if tag == SEND:
                sends.append(a)
            elif tag == TIMER:
                heapq.heappush(self.queue, SimEvent(a[1], next(self.seq), FIRE, node.id, a[2], a[3]))
            elif tag == TRACE:
                self._on_trace(node.id, a[1], a[2], a[3], a[4])
        if not sends:
            return
        spec = self.behaviors.get(node.id)
        if spec is not None:
            sends = apply_behavior(spec, node, sends, self.behavior_rngs[node.id], self.now)
        trace = self.trace
        for _, dst, msg, delay in sends:
            trace.sent += 1
            idx = msg.round_index
            if idx:
                trace.round_messages[idx] = trace.round_messages.get(idx, 0) + 1
            if trace.record_messages:
                trace.add(self.now, node.id, "send", 0, idx, f"to={dst};{type(msg).__name__}")
            schedule(self.queue, msg, node.id, dst, self.network, self.rng, self.now, self.seq, trace, delay)

    def _on_trace(self, node: int, kind: str, term: int, index: int, detail: str) -> None:
        self.trace.add(self.now, node, kind, term, index, detail)
        if kind == "state":
            if detail == "leader":
                self.leader = node
        elif kind == "commit":
            # a new leader may re-announce indices its predecessor already committed
            if index not in self.committed:
                self.committed.add(index)
                self.commits += 1
            self.resolved.add(detail.split(";")[0][4:])
        elif kind == "abandon":
            self.resolved.add(detail.split(";")[0][4:])

    def _feed(self) -> None:
        if not self.backlog or self.leader is None:
            return
        node = self.nodes[self.leader]
        if node.is_idle_leader and not self._crashed(node.id):
            rec = self.backlog.popleft()
            self._process(node, node.propose(rec, self.now))

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for nid in sorted(self.nodes):
            if not self._crashed(nid):
                node = self.nodes[nid]
                self._process(node, node.start(self.now))

    def done(self) -> bool:
        return bool(self.records) and len(self.resolved) >= len(self.records) and not self.backlog

    def run(self, max_time: Optional[int] = None, commit_target: Optional[int] = None) -> Trace:
        """Pop events until ``max_time``, ``commit_target`` commits, all workload resolved, or quiescence."""
        self.start()
        q = self.queue
        nodes = self.nodes
        trace = self.trace
        while q:
            if max_time is not None and q[0].deliver_at > max_time:
                self.now = max_time
                break
            ev = heapq.heappop(q)
            self.now = ev.deliver_at
            kind = ev.kind
            if kind == CLIENT:
                self.backlog.append(ev.payload)
            elif kind == ARRIVE:
                if self._crashed(ev.target):
                    continue
                cores = self.cores
                finish = max(self.now, cores[0]) + self.network.proc_time
                heapq.heapreplace(cores, finish)
                heapq.heappush(q, SimEvent(finish, next(self.seq), DELIVER, ev.target, ev.payload, ev.src))
                continue
            else:
                if self._crashed(ev.target):
                    continue
                node = nodes[ev.target]
                if kind == DELIVER:
                    trace.delivered += 1
                    if trace.record_messages:
                        trace.add(self.now, ev.target, "deliver", 0, ev.payload.round_index,
                                  f"from={ev.src};{type(ev.payload).__name__}")
                    self._process(node, node.deliver(ev.src, ev.payload, self.now))
                else:
                    self._process(node, node.fire(ev.payload, ev.src, self.now))
            self._feed()
            if commit_target is not None and self.commits >= commit_target:
                break
            if self.done():
                break
        else:
            trace.quiescent = True
        trace.end_time = self.now
        return trace


def run(sim: Simulator, max_time: Optional[int] = None, commit_target: Optional[int] = None) -> Trace:
    return sim.run(max_time=max_time, commit_target=commit_target)
