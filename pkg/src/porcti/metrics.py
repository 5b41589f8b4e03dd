"""Metrics extracted from finished traces: QoD, latency, throughput, message complexity, safety."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from porcti.domain import LedgerEntry, Trace
from porcti.errors import UndefinedMetricError

CSV_COLUMNS = (
    "scenario_id",
    "seed",
    "protocol",
    "N",
    "byz_fraction",
    "r_init",
    "r_thld",
    "M",
    "p_t",
    "qod",
    "qod_incomplete",
    "latency_median",
    "latency_p95",
    "throughput",
    "msgs_per_round",
)


def parse_detail(detail: str) -> dict[str, str]:
    """``"a=1;b=x"`` -> ``{"a": "1", "b": "x"}``."""
    out = {}
    for part in detail.split(";"):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k] = v
    return out


def flag_times(trace: Trace) -> dict[int, int]:
    """First sim-time at which each node was marked unfaithful."""
    first: dict[int, int] = {}
    for r in trace.records:
        if r.event_kind == "flagged":
            node = int(parse_detail(r.detail)["node"])
            first.setdefault(node, r.sim_time)
    return first


def consensus_span(trace: Trace) -> tuple[int, int]:
    """(first proposal time, last commit time) at the proposing side."""
    proposes = [r.sim_time for r in trace.records if r.event_kind == "propose"]
    commits = [r.sim_time for r in trace.records if r.event_kind == "commit"]
    if not proposes:
        raise UndefinedMetricError("trace contains no proposals")
    start = min(proposes)
    end = max(commits) if commits else trace.end_time
    return start, end


def qod(trace: Trace, byzantine: Iterable[int]) -> tuple[float, bool]:
    """Time to flag every Byzantine node over the time spent reaching consensus.

    Both times are measured from the first proposal. Returns ``(value, incomplete)``;
    a Byzantine node that is never flagged caps the value at 1.0 and sets
    ``incomplete``.
    """
    start, end = consensus_span(trace)
    byz = set(byzantine)
    if not byz:
        return 0.0, False
    flags = flag_times(trace)
    if not byz <= flags.keys():
        return 1.0, True
    total = end - start
    last = max(flags[b] for b in byz) - start
    if total <= 0:
        return 1.0, False
    return min(1.0, max(0.0, last / total)), False


@dataclass(frozen=True)
class LatencyStats:
    median: float
    p95: float
    mean: float
    count: int


def latencies(trace: Trace) -> list[int]:
    return [int(parse_detail(r.detail)["latency"]) for r in trace.records if r.event_kind == "latency"]


def percentile(values: Sequence[float], q: float) -> float:
    """Linear-interpolated percentile, ``q`` in [0, 100]."""
    if not values:
        raise UndefinedMetricError("percentile of an empty sample")
    s = sorted(values)
    pos = (len(s) - 1) * q / 100.0
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def latency_stats(trace: Trace) -> LatencyStats:
    lat = latencies(trace)
    if not lat:
        raise UndefinedMetricError("no committed proposals")
    return LatencyStats(statistics.median(lat), percentile(lat, 95), statistics.fmean(lat), len(lat))


def throughput(trace: Trace) -> float:
    """Committed proposals per 1000 sim-time units of consensus activity."""
    commits = len({r.index for r in trace.records if r.event_kind == "commit"})
    if commits == 0:
        return 0.0
    start, end = consensus_span(trace)
    duration = end - start
    if duration <= 0:
        return 0.0
    return 1000.0 * commits / duration


def msgs_per_round(trace: Trace) -> float:
    """Mean number of messages tagged with a committed proposal's index."""
    committed = {r.index for r in trace.records if r.event_kind == "commit"}
    counts = [trace.round_messages.get(i, 0) for i in sorted(committed)]
    if not counts:
        raise UndefinedMetricError("no committed proposals")
    return statistics.fmean(counts)


@dataclass(frozen=True)
class Fit:
    slope: float
    intercept: float
    r2: float


def _fit(xs: Sequence[float], ys: Sequence[float]) -> Fit:
    slope, intercept = statistics.linear_regression(xs, ys)
    mean = statistics.fmean(ys)
    ss_tot = sum((y - mean) ** 2 for y in ys)
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return Fit(slope, intercept, r2)


@dataclass(frozen=True)
class ComplexityReport:
    linear: Fit  # count ~ a*N + c
    quadratic: Fit  # count ~ b*N^2 + c

    @property
    def best(self) -> str:
        return "linear" if self.linear.r2 >= self.quadratic.r2 else "quadratic"


def message_complexity(counts: Mapping[int, float]) -> ComplexityReport:
    """Least-squares fits of per-round message counts against N and N^2."""
    if len(counts) < 4:
        raise UndefinedMetricError(f"need at least 4 distinct N values, got {len(counts)}")
    ns = sorted(counts)
    ys = [float(counts[n]) for n in ns]
    if len(set(ys)) == 1:
        raise UndefinedMetricError("message counts do not vary with N")
    return ComplexityReport(_fit(ns, ys), _fit([n * n for n in ns], ys))


# -- safety ------------------------------------------------------------------


def election_safety(trace: Trace) -> list[str]:
    leaders: dict[int, int] = {}
    out = []
    for r in trace.records:
        if r.event_kind == "state" and r.detail == "leader":
            prev = leaders.setdefault(r.term, r.node_id)
            if prev != r.node_id:
                out.append(f"term {r.term}: leaders {prev} and {r.node_id}")
    return out


def log_matching(ledgers: Mapping[int, Sequence[LedgerEntry]]) -> list[str]:
    """Committed entries at the same index carry the same proposal on every node."""
    out = []
    seen: dict[int, tuple[int, object]] = {}
    for node in sorted(ledgers):
        for pos, e in enumerate(ledgers[node], start=1):
            if e.index != pos:
                out.append(f"node {node}: ledger position {pos} holds index {e.index}")
                continue
            ref = seen.setdefault(e.index, (node, e.proposal))
            if ref[1] != e.proposal:
                out.append(f"index {e.index}: node {ref[0]} and node {node} disagree")
    return out


def commit_irrevocability(trace: Trace) -> list[str]:
    out = []
    last: dict[int, int] = {}
    for r in trace.records:
        if r.event_kind == "safety_violation":
            out.append(f"node {r.node_id} t={r.sim_time}: {r.detail}")
        elif r.event_kind in ("commit", "follower_commit"):
            prev = last.get(r.node_id, 0)
            if r.index != prev + 1:
                out.append(f"node {r.node_id}: commit index {r.index} after {prev}")
            last[r.node_id] = r.index
    return out


def unfaithful_exclusion(trace: Trace, r_thld: float, grace: int = 0) -> list[str]:
    """No node takes a role while the latest published score says it is unfaithful.

    ``grace`` allows for the time a new score needs to reach the node itself.
    """
    below_since: dict[int, int] = {}
    out = []
    for r in trace.records:
        if r.event_kind == "scores":
            for part in r.detail.split(","):
                k, v = part.split("=")
                node = int(k)
                if float(v) < r_thld:
                    below_since.setdefault(node, r.sim_time)
                else:
                    below_since.pop(node, None)
        elif r.event_kind == "state" and r.detail in ("leader", "candidate", "supervisor"):
            since = below_since.get(r.node_id)
            if since is not None and r.sim_time > since + grace:
                out.append(f"node {r.node_id} became {r.detail} at t={r.sim_time} while unfaithful")
    return out


def safety_violations(
    trace: Trace,
    ledgers: Mapping[int, Sequence[LedgerEntry]],
    r_thld: Optional[float] = None,
    grace: int = 0,
) -> list[str]:
    out = election_safety(trace) + log_matching(ledgers) + commit_irrevocability(trace)
    if r_thld is not None:
        out += unfaithful_exclusion(trace, r_thld, grace)
    return out
