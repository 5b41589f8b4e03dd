"""Builds simulations from scenario configs, runs seed matrices, and writes result files."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import random
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from porcti.baselines import BftNode, CftNode
from porcti.config import Experiment, ScenarioConfig
from porcti.cti import CtiRecord, GroundTruth, default_profile, generate_cti, write_ledger
from porcti.domain import LedgerEntry, Trace
from porcti.errors import PorError, UndefinedMetricError
from porcti.faults import BehaviorKind, BehaviorSpec
from porcti.metrics import (
    CSV_COLUMNS,
    latency_stats,
    msgs_per_round,
    qod,
    safety_violations,
    throughput,
)
from porcti.protocol import PorNode
from porcti.sim import Simulator

logger = logging.getLogger(__name__)

OUTPUT_ENV = "PORCTI_OUTPUT_DIR"
RESULT_COLUMNS = CSV_COLUMNS + ("error",)
TIMELINE_COLUMNS = ("scenario_id", "seed", "sim_time", "index", "node", "score")
NODE_CLASSES = {"por": PorNode, "cft": CftNode, "bft": BftNode}


def scenario_key(point: ScenarioConfig) -> str:
    return f"{point.scenario_id}[{point.label}]" if point.label else point.scenario_id


def assign_behaviors(point: ScenarioConfig, seed: int) -> dict[int, BehaviorSpec]:
    """Per-node behaviors for one run; Byzantine and crashed nodes are drawn per seed."""
    n = point.cluster_size
    explicit = dict(point.behaviors)
    free = [i for i in range(n) if i not in explicit]
    rng = random.Random(f"placement:{seed}")
    out: dict[int, BehaviorSpec] = dict(explicit)

    def take(count: int, placement: str) -> list[int]:
        if placement == "highest":
            chosen = sorted(free)[len(free) - count:] if count else []
        else:
            chosen = sorted(rng.sample(free, count))
        for c in chosen:
            free.remove(c)
        return chosen

    byz = point.byzantine
    for nid in take(byz.count(n), byz.placement):
        out[nid] = BehaviorSpec(byz.kind, byz.activation_time, byz.probability, byz.corruption)
    crash = point.crash
    for nid in take(crash.total(n), crash.placement):
        out[nid] = BehaviorSpec(BehaviorKind.CRASH_STOP, crash.activation_time)
    return out


def make_workload(point: ScenarioConfig, seed: int) -> list[tuple[int, CtiRecord]]:
    rng = random.Random(f"workload:{seed}")
    profile = default_profile()
    w = point.workload
    return [(w.start + i * w.inter_arrival, generate_cti(rng, profile)) for i in range(w.proposals)]


def build_simulation(point: ScenarioConfig, seed: int, record_messages: bool = False) -> Simulator:
    params = dataclasses.replace(point.params, rng_seed=seed)
    workload = make_workload(point, seed)
    truth = GroundTruth()
    for _, rec in workload:
        truth.add(rec)
    cluster = tuple(range(point.cluster_size))
    cls = NODE_CLASSES[point.protocol]
    nodes = {i: cls(i, cluster, params, truth, seed) for i in cluster}
    return Simulator(
        nodes,
        point.network,
        seed,
        assign_behaviors(point, seed),
        workload,
        record_messages=record_messages,
    )


@dataclass
class RunResult:
    point: ScenarioConfig
    seed: int
    trace: Trace
    ledgers: dict[int, list[LedgerEntry]]
    behaviors: dict[int, BehaviorSpec]
    records: list[CtiRecord]
    row: dict = field(default_factory=dict)

    @property
    def byzantine(self) -> set[int]:
        return {n for n, b in self.behaviors.items() if b.is_byzantine}

    def safety(self, grace: Optional[int] = None) -> list[str]:
        p = self.point.params
        if grace is None:
            grace = p.heartbeat_interval + 2 * self.point.network.latency[1]
        thld = p.r_thld if self.point.protocol == "por" else None
        honest = {n: l for n, l in self.ledgers.items() if n not in self.byzantine}
        return safety_violations(self.trace, honest, thld, grace)

    def committed_accuracy(self) -> tuple[int, int]:
        """(entries equal to ground truth, entries) over every honest node's ledger."""
        truth = {r.ground_truth_id: r.attributes for r in self.records}
        good = total = 0
        for n, ledger in self.ledgers.items():
            if n in self.behaviors and self.behaviors[n].kind is not BehaviorKind.HONEST:
                continue
            for e in ledger:
                total += 1
                good += truth.get(e.proposal.cti_id) == e.proposal.entries
        return good, total


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.6f}"


def metrics_row(result: RunResult) -> dict:
    point, trace = result.point, result.trace
    p = point.params
    row = {
        "scenario_id": scenario_key(point),
        "seed": result.seed,
        "protocol": point.protocol,
        "N": point.cluster_size,
        "byz_fraction": _fmt(point.byzantine.fraction),
        "r_init": _fmt(p.r_init),
        "r_thld": _fmt(p.r_thld),
        "M": _fmt(p.reputation_weight_m),
        "p_t": _fmt(p.posterior_threshold),
        "qod": "",
        "qod_incomplete": "",
        "latency_median": "",
        "latency_p95": "",
        "throughput": "",
        "msgs_per_round": "",
        "error": "",
    }
    if point.protocol == "por":
        try:
            value, incomplete = qod(trace, result.byzantine)
            row["qod"] = _fmt(value)
            row["qod_incomplete"] = str(incomplete).lower()
        except UndefinedMetricError:
            pass
    try:
        stats = latency_stats(trace)
        row["latency_median"] = _fmt(stats.median)
        row["latency_p95"] = _fmt(stats.p95)
        row["msgs_per_round"] = _fmt(msgs_per_round(trace))
    except UndefinedMetricError:
        pass
    try:
        row["throughput"] = _fmt(throughput(trace))
    except UndefinedMetricError:
        row["throughput"] = _fmt(0.0)
    return row


def run_one(point: ScenarioConfig, seed: int, record_messages: bool = False) -> RunResult:
    sim = build_simulation(point, seed, record_messages)
    trace = sim.run(max_time=point.stop.max_time, commit_target=point.stop.commit_target)
    result = RunResult(
        point,
        seed,
        trace,
        {nid: list(node.ledger) for nid, node in sim.nodes.items()},
        sim.behaviors,
        list(sim.records.values()),
    )
    result.row = metrics_row(result)
    return result


def timeline_rows(result: RunResult) -> list[tuple]:
    key = scenario_key(result.point)
    rows = []
    for r in result.trace.records:
        if r.event_kind == "scores":
            for part in r.detail.split(","):
                node, score = part.split("=")
                rows.append((key, result.seed, r.sim_time, r.index, int(node), score))
    return rows


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", text).strip("_")


def run_file_stem(point: ScenarioConfig, seed: int) -> str:
    return _slug(f"{scenario_key(point)}__seed{seed}")


def write_trace(path: Path, trace: Trace) -> None:
    with path.open("w") as fh:
        for r in trace.records:
            fh.write(json.dumps(dataclasses.asdict(r), sort_keys=True))
            fh.write("\n")


@dataclass(frozen=True)
class _Job:
    point: ScenarioConfig
    seed: int
    out_dir: Optional[str]
    traces: bool
    ledgers: bool


def _error_row(point: ScenarioConfig, seed: int, exc: BaseException) -> dict:
    row = {c: "" for c in RESULT_COLUMNS}
    row.update(
        scenario_id=scenario_key(point),
        seed=seed,
        protocol=point.protocol,
        N=point.cluster_size,
        byz_fraction=_fmt(point.byzantine.fraction),
        r_init=_fmt(point.params.r_init),
        r_thld=_fmt(point.params.r_thld),
        M=_fmt(point.params.reputation_weight_m),
        p_t=_fmt(point.params.posterior_threshold),
        error=f"{type(exc).__name__}: {exc}".replace("\n", " "),
    )
    return row


def _execute(job: _Job) -> tuple[dict, list[tuple]]:
    try:
        result = run_one(job.point, job.seed)
    except (PorError, ValueError, ArithmeticError, KeyError, AssertionError) as exc:
        logger.error("run %s seed %d failed: %s", scenario_key(job.point), job.seed, exc)
        return _error_row(job.point, job.seed, exc), []
    if job.out_dir is not None:
        stem = run_file_stem(job.point, job.seed)
        if job.traces:
            write_trace(Path(job.out_dir) / "traces" / f"{stem}.jsonl", result.trace)
        if job.ledgers:
            for nid, ledger in sorted(result.ledgers.items()):
                write_ledger(Path(job.out_dir) / "ledgers" / f"{stem}__node{nid}.ledger", ledger)
    return result.row, timeline_rows(result)


@dataclass
class MatrixResult:
    rows: list[dict]
    timeline: list[tuple]

    @property
    def errors(self) -> int:
        return sum(1 for r in self.rows if r["error"])

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows)
        return buf.getvalue()

    def timeline_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMELINE_COLUMNS)
        w.writerows(self.timeline)
        return buf.getvalue()


def _row_key(row: dict) -> tuple:
    return (row["scenario_id"], int(row["seed"]))


def run_matrix(
    experiment: Experiment,
    parallelism: int = 1,
    out_dir: Optional[str | os.PathLike] = None,
    traces: bool = False,
    ledgers: bool = False,
    seeds: Optional[Sequence[int]] = None,
) -> MatrixResult:
    """One simulation per (grid point, seed); output does not depend on ``parallelism``."""
    out = None if out_dir is None else str(out_dir)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        if traces:
            (Path(out) / "traces").mkdir(exist_ok=True)
        if ledgers:
            (Path(out) / "ledgers").mkdir(exist_ok=True)
    jobs = [
        _Job(point, seed, out, traces, ledgers)
        for point in experiment.points
        for seed in (seeds if seeds is not None else point.seeds)
    ]
    if parallelism <= 1 or len(jobs) <= 1:
        results = [_execute(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_execute, jobs, chunksize=1))
    rows = sorted((r for r, _ in results), key=_row_key)
    timeline = sorted((t for _, tl in results for t in tl), key=lambda t: (t[0], t[1], t[2], t[3], t[4]))
    matrix = MatrixResult(rows, timeline)
    if out is not None:
        Path(out, "metrics.csv").write_text(matrix.csv_text())
        Path(out, "reputation_timeline.csv").write_text(matrix.timeline_text())
    return matrix
