import pytest
from hypothesis import given, strategies as st

from porcti.cti import generate_proposal
from porcti.domain import LedgerEntry, Trace
from porcti.errors import UndefinedMetricError
from porcti.metrics import (
    commit_irrevocability,
    election_safety,
    flag_times,
    latency_stats,
    log_matching,
    message_complexity,
    msgs_per_round,
    parse_detail,
    percentile,
    qod,
    throughput,
    unfaithful_exclusion,
)
from porcti.runner import metrics_row, run_one

from scenarios import point
from test_faults import proposal


def trace_of(*events):
    t = Trace()
    for e in events:
        t.add(*e)
    return t


def committed(pairs):
    """``[(propose_t, commit_t), ...]`` as a leader-side trace."""
    t = Trace()
    for i, (a, b) in enumerate(pairs, start=1):
        t.add(a, 0, "propose", 1, i)
        t.add(b, 0, "commit", 1, i)
        t.add(b, 0, "latency", 1, i, f"cti=x;latency={b - a}")
    return t


def test_qod_ratio():
    t = committed([(0, 1000)])
    t.add(200, 4, "flagged", 1, 1, "node=3;score=5.0")
    assert qod(t, {3}) == (0.2, False)


def test_qod_uses_last_byzantine_flag():
    t = committed([(100, 600), (600, 1100)])
    t.add(300, 4, "flagged", 1, 1, "node=3;score=5.0")
    t.add(350, 4, "flagged", 1, 1, "node=3;score=1.0")
    t.add(600, 4, "flagged", 1, 1, "node=2;score=5.0")
    assert flag_times(t) == {3: 300, 2: 600}
    assert qod(t, {2, 3}) == (0.5, False)


def test_qod_without_byzantine_nodes():
    assert qod(committed([(0, 10)]), set()) == (0.0, False)


def test_qod_never_flagged_caps():
    assert qod(committed([(0, 10)]), {1}) == (1.0, True)


def test_qod_needs_proposals():
    with pytest.raises(UndefinedMetricError):
        qod(Trace(), {1})


def test_single_latency():
    s = latency_stats(committed([(100, 160)]))
    assert s.median == 60 and s.count == 1


def test_latency_mean():
    assert latency_stats(committed([(0, 60), (60, 160)])).mean == 80


def test_latency_needs_commits():
    with pytest.raises(UndefinedMetricError):
        latency_stats(trace_of((0, 0, "propose", 1, 1)))


def test_percentile_interpolates():
    assert percentile([1, 2, 3, 4], 50) == 2.5
    assert percentile([7], 95) == 7
    with pytest.raises(UndefinedMetricError):
        percentile([], 50)


def test_throughput_per_thousand_units():
    t = Trace()
    t.add(0, 0, "propose", 1, 1)
    for i in range(1, 1001):
        t.add(i * 1000, 0, "commit", 1, i)
    assert throughput(t) == 1.0


def test_throughput_counts_each_index_once():
    t = committed([(0, 500), (500, 1000)])
    t.add(1000, 1, "commit", 2, 2)
    assert throughput(t) == 2.0


def test_throughput_without_commits():
    assert throughput(trace_of((0, 0, "propose", 1, 1))) == 0.0


def test_throughput_is_steady():
    short = run_one(point(proposals=100), 0).row
    long = run_one(point(proposals=200), 0).row
    a, b = float(short["throughput"]), float(long["throughput"])
    assert abs(a - b) / a < 0.05


def test_messages_per_committed_round():
    t = committed([(0, 10), (10, 20)])
    t.round_messages = {1: 10, 2: 14, 3: 99}
    assert msgs_per_round(t) == 12


def test_complexity_fits():
    linear = message_complexity({n: 4 * n + 1 for n in (4, 8, 12, 16)})
    assert linear.linear.r2 == pytest.approx(1.0) and linear.best == "linear"
    quad = message_complexity({n: n * n - n for n in (4, 8, 12, 16, 20)})
    assert quad.quadratic.r2 > 0.99 and quad.best == "quadratic"


def test_complexity_needs_four_sizes():
    with pytest.raises(UndefinedMetricError):
        message_complexity({4: 1.0, 8: 2.0, 12: 3.0})


def test_complexity_rejects_flat_counts():
    with pytest.raises(UndefinedMetricError):
        message_complexity({n: 5.0 for n in (4, 8, 12, 16)})


@given(st.text(alphabet="abc=;", max_size=20))
def test_parse_detail_never_raises(text):
    parse_detail(text)


def test_metrics_are_pure_functions_of_trace():
    result = run_one(point("byzantine: {fraction: 0.2}\nparams: {term_length: 2000}"), 1)
    assert metrics_row(result) == metrics_row(result) == result.row


# -- safety checks ---------------------------------------------------------------------


def test_two_leaders_in_one_term():
    t = trace_of((0, 1, "state", 3, 0, "leader"), (5, 2, "state", 3, 0, "leader"), (9, 2, "state", 4, 0, "leader"))
    assert election_safety(t) == ["term 3: leaders 1 and 2"]


def test_ledgers_must_agree():
    a, b = proposal(1), proposal(2)
    ok = {0: [LedgerEntry(a, 1)], 1: [LedgerEntry(a, 2)]}
    assert log_matching(ok) == []
    bad = {0: [LedgerEntry(a, 1)], 1: [LedgerEntry(b, 2)]}
    assert log_matching(bad) == ["index 1: node 0 and node 1 disagree"]
    gap = {0: [LedgerEntry(generate_proposal_at(a, 2), 1)]}
    assert log_matching(gap)


def generate_proposal_at(p, index):
    return p.__class__(p.term, index, index - 1, p.entries, p.origin, p.cti_id)


def test_commits_must_advance_by_one():
    t = trace_of((0, 1, "follower_commit", 1, 1), (1, 1, "follower_commit", 1, 3))
    assert commit_irrevocability(t) == ["node 1: commit index 3 after 1"]
    t.add(2, 1, "safety_violation", 1, 1, "overwrite")
    assert len(commit_irrevocability(t)) == 2


def test_unfaithful_nodes_take_no_roles():
    t = trace_of(
        (10, 4, "scores", 1, 1, "0=50,1=5"),
        (20, 1, "state", 2, 0, "candidate"),
        (100, 1, "state", 2, 0, "candidate"),
    )
    assert unfaithful_exclusion(t, 10, grace=0) == [
        "node 1 became candidate at t=20 while unfaithful",
        "node 1 became candidate at t=100 while unfaithful",
    ]
    assert len(unfaithful_exclusion(t, 10, grace=50)) == 1
    assert unfaithful_exclusion(t, 4, grace=0) == []


def test_honest_run_is_safe():
    result = run_one(point("byzantine: {fraction: 0.4}\nparams: {term_length: 1000}", n=5, proposals=60), 2)
    assert result.safety() == []
