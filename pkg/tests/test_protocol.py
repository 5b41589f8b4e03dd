import random

import pytest

from porcti.cti import GroundTruth, default_profile, generate_cti, generate_proposal
from porcti.domain import AttackAttribute, NodeState, ProtocolParams
from porcti.errors import IndexGapError, RoleError
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
)
from porcti.protocol import SEND, TIMER, TRACE, PorNode, commit_check
from porcti.reputation import Detection, NodeStats, ReputationTable

CLUSTER = (0, 1, 2, 3, 4)
PARAMS = ProtocolParams()


def node(nid=1, params=PARAMS, truth=None):
    return PorNode(nid, CLUSTER, params, truth, seed=0)


def sends(actions, kind=None):
    return [(a[1], a[2]) for a in actions if a[0] == SEND and (kind is None or isinstance(a[2], kind))]


def traces(actions, kind):
    return [a for a in actions if a[0] == TRACE and a[1] == kind]


def fire_election(n):
    timer = [a for a in n.start(0) if a[0] == TIMER and a[2] == "election"][0]
    return n.fire("election", timer[3], timer[1])


def make_leader(n, now=0):
    n.start(now)
    n.current_term = 1
    n.become_leader()
    n.drain()
    return n


def record(seed=0):
    return generate_cti(random.Random(seed), default_profile())


def forged(p):
    return p.with_entries(tuple(AttackAttribute(a.key, "forged-" + a.key) for a in p.entries))


# -- commit rule ---------------------------------------------------------------


def test_commit_with_supervisor_and_majority():
    assert commit_check(followers=4, confirmations=3, supervisor_ok=True)


def test_commit_needs_supervisor():
    assert not commit_check(followers=4, confirmations=4, supervisor_ok=False)


def test_commit_counts_leader_copy():
    # leader plus 2 of 4 followers is 3 of 5 nodes; 1 of 4 is not enough
    assert commit_check(followers=4, confirmations=2, supervisor_ok=True)
    assert not commit_check(followers=4, confirmations=1, supervisor_ok=True)


# -- election --------------------------------------------------------------------


def test_timeout_starts_candidacy():
    n = node()
    n.current_term = 3
    out = fire_election(n)
    assert n.state is NodeState.CANDIDATE
    assert n.current_term == 4
    votes = sends(out, RequestVote)
    assert sorted(dst for dst, _ in votes) == [0, 2, 3, 4]
    assert all(m.term == 4 for _, m in votes)


def test_unfaithful_node_never_campaigns():
    n = node()
    n.table = ReputationTable(PARAMS, {i: NodeStats(i, 5.0 if i == 1 else 50.0) for i in CLUSTER})
    out = fire_election(n)
    assert n.state is NodeState.FOLLOWER
    assert sends(out) == []
    assert traces(out, "campaign_suppressed")


def test_leader_ignores_election_timer():
    n = make_leader(node())
    n.on_election_timeout()
    assert n.state is NodeState.LEADER
    assert sends(n.drain(), RequestVote) == []


def test_stale_vote_request_is_refused():
    n = node()
    n.current_term = 5
    out = n.deliver(2, RequestVote(4, 2), 10)
    [(dst, reply)] = sends(out, RequestVoteReply)
    assert dst == 2 and not reply.vote_granted and reply.term == 5


def test_single_vote_per_term():
    n = node()
    n.deliver(2, RequestVote(1, 2), 10)
    out = n.deliver(3, RequestVote(1, 3), 11)
    [(_, reply)] = sends(out, RequestVoteReply)
    assert not reply.vote_granted
    assert n.voted_for == 2


def test_trusted_candidate_gets_vote():
    n = node()
    out = n.deliver(2, RequestVote(3, 2), 10)
    [(dst, reply)] = sends(out, RequestVoteReply)
    assert dst == 2 and reply.vote_granted and n.current_term == 3


def test_vote_waits_for_supervisor_certificate():
    n = node()
    n.known_supervisor = 4
    out = n.deliver(2, RequestVote(1, 2), 10)
    [(dst, ask)] = sends(out)
    assert dst == 4 and ask == ReputationValue(1, 2)
    out = n.deliver(4, ReputationValueReply(1, 2, False), 12)
    [(_, reply)] = sends(out, RequestVoteReply)
    assert not reply.vote_granted


def test_certified_candidate_gets_deferred_vote():
    n = node()
    n.known_supervisor = 4
    n.deliver(2, RequestVote(1, 2), 10)
    out = n.deliver(4, ReputationValueReply(1, 2, True), 12)
    [(_, reply)] = sends(out, RequestVoteReply)
    assert reply.vote_granted


def supervisor_with(scores):
    s = node(4)
    s.supervising = True
    s.table = ReputationTable(PARAMS, {i: NodeStats(i, scores.get(i, 50.0)) for i in CLUSTER})
    return s


@pytest.mark.parametrize("score, trusted", [(50.0, True), (5.0, False)])
def test_supervisor_certifies_by_score(score, trusted):
    s = supervisor_with({2: score})
    [(_, reply)] = sends(s.deliver(1, ReputationValue(0, 2), 5))
    assert reply.trust_granted is trusted


def test_certificate_for_stale_term_carries_newer_term():
    s = supervisor_with({})
    s.current_term = 7
    [(_, reply)] = sends(s.deliver(1, ReputationValue(3, 2), 5))
    assert reply.trust_granted and reply.term == 7


def test_non_supervisor_refuses_to_certify():
    n = node(3)
    [(_, reply)] = sends(n.deliver(1, ReputationValue(1, 2), 5))
    assert not reply.trust_granted


def test_majority_makes_leader():
    n = node(0)
    fire_election(n)
    term = n.current_term
    n.deliver(1, RequestVoteReply(term, True), 400)
    assert n.state is NodeState.CANDIDATE
    out = n.deliver(2, RequestVoteReply(term, True), 401)
    assert n.state is NodeState.LEADER
    hb = sends(out, AppendEntries)
    assert len(hb) == 4
    assert all(m.supervisor_id == n.supervisor for _, m in hb)
    assert n.supervisor in (1, 2, 3, 4)


# -- proposing ---------------------------------------------------------------------


def test_propose_broadcasts_to_all_peers():
    n = make_leader(node(0))
    for i in range(1, 8):
        n.log.append(generate_proposal(record(i), 1, i, 0))
    out = n.propose(record(99), 10)
    bcast = sends(out, ProposalBroadcast)
    assert len(bcast) == 4
    assert all(m.proposal.index == 8 for _, m in bcast)


def test_propose_index_gap():
    n = make_leader(node(0))
    with pytest.raises(IndexGapError):
        n.leader_propose(generate_proposal(record(), 1, 3, 0))


def test_only_leader_proposes():
    with pytest.raises(RoleError):
        node(1).propose(record(), 0)


# -- supervision --------------------------------------------------------------------


def supervision(leader_score=50.0, tamper=False, reporters=(1, 2, 3), experienced=False):
    rec = record(3)
    truth = GroundTruth()
    truth.add(rec)
    sup = PorNode(4, CLUSTER, PARAMS, truth, seed=0)
    hist = (10, 0, 10, 10) if experienced else ()
    stats = {i: NodeStats(i, 50.0, *hist) for i in CLUSTER}
    stats[0] = NodeStats(0, leader_score)
    sup.table = ReputationTable(PARAMS, stats)
    p = generate_proposal(rec, 1, 1, 0)
    if tamper:
        p = forged(p)
    out = sup.deliver(0, ProposalBroadcast(1, 0, p, 4, 1), 10)
    for reporter in reporters:
        out += sup.deliver(reporter, ReputationCompute(1, reporter, 0, rec.attributes, 1), 20 + reporter)
    deadline = [a for a in out if a[0] == TIMER and a[2] == "report_deadline"]
    if len(reporters) < 3:
        out += sup.fire("report_deadline", deadline[0][3], deadline[0][1])
    return sup, out


def test_honest_round_is_correct():
    sup, out = supervision()
    replies = sends(out, ReputationComputeReply)
    assert sorted(dst for dst, _ in replies) == [0, 1, 2, 3]
    assert all(r.outcome is Detection.CORRECT and r.revoke_leader is None for _, r in replies)
    [v] = traces(out, "verdict")
    assert "k=5" in v[4]


def test_full_participation_prior_outweighs_evidence():
    # k = N gives a prior of 1, so even a tampered proposal is classified correct
    sup, out = supervision(tamper=True, experienced=True)
    assert all(r.outcome is Detection.CORRECT for _, r in sends(out, ReputationComputeReply))


def test_tampering_leader_is_revoked_when_it_falls_below_threshold():
    sup, out = supervision(leader_score=12.0, tamper=True, reporters=(1, 2), experienced=True)
    replies = [r for _, r in sends(out, ReputationComputeReply)]
    assert replies and all(r.outcome is Detection.INCORRECT for r in replies)
    assert all(r.revoke_leader == 0 for r in replies)
    # fresh leader stats: one incorrect out of one detection costs the full M = 5
    assert sup.table.score(0) == pytest.approx(7.0)
    assert [t[4] for t in traces(out, "flagged")] == ["node=0;score=7.0000"]


def test_report_deadline_finalizes_with_partial_reports():
    rec = record(3)
    truth = GroundTruth()
    truth.add(rec)
    sup = PorNode(4, CLUSTER, PARAMS, truth, seed=0)
    p = generate_proposal(rec, 1, 1, 0)
    out = sup.deliver(0, ProposalBroadcast(1, 0, p, 4, 1), 10)
    [deadline] = [a for a in out if a[0] == TIMER and a[2] == "report_deadline"]
    out = sup.fire("report_deadline", deadline[3], deadline[1])
    [v] = traces(out, "verdict")
    assert "k=2" in v[4] and "silent=1|2|3" in v[4]


# -- append entries -------------------------------------------------------------------


def test_heartbeat_resets_deadline_without_touching_log():
    n = node(1)
    n.start(0)
    before = n.election_deadline
    out = n.deliver(0, AppendEntries(1, 0, 0, (), 0), 100)
    [(_, reply)] = sends(out, AppendEntriesReply)
    assert reply.success
    assert n.election_deadline > before
    assert n.log == []


def test_stale_append_is_refused():
    n = node(1)
    n.current_term = 4
    [(_, reply)] = sends(n.deliver(0, AppendEntries(3, 0, 0, (), 0), 100), AppendEntriesReply)
    assert not reply.success and reply.term == 4


def verdict_copy(p, term=1):
    table = ReputationTable.fresh(CLUSTER, PARAMS)
    return ReputationComputeReply(term, True, p.index, Detection.CORRECT, p.entries, table, (term, p.index, 1))


def test_entries_must_match_verdict_copy():
    n = node(1)
    p = generate_proposal(record(), 1, 1, 0)
    n.deliver(4, verdict_copy(p), 50)
    out = n.deliver(0, AppendEntries(1, 0, 0, (forged(p),), 0), 60)
    [(_, reply)] = sends(out, AppendEntriesReply)
    assert not reply.success
    assert n.log == []


def test_matching_entries_are_accepted_after_persist_delay():
    n = node(1)
    p = generate_proposal(record(), 1, 1, 0)
    n.deliver(4, verdict_copy(p), 50)
    out = n.deliver(0, AppendEntries(1, 0, 0, (p,), 0), 60)
    [reply_action] = [a for a in out if a[0] == SEND]
    assert reply_action[2].success and reply_action[3] == PARAMS.persist_time
    assert n.log == [p]


def test_entries_before_verdict_copy_are_deferred():
    n = node(1)
    p = generate_proposal(record(), 1, 1, 0)
    assert sends(n.deliver(0, AppendEntries(1, 0, 0, (p,), 0), 60), AppendEntriesReply) == []
    [(_, reply)] = sends(n.deliver(4, verdict_copy(p), 70), AppendEntriesReply)
    assert reply.success


# -- determinism -------------------------------------------------------------------------


def replay(events):
    n = node(2)
    out = [n.start(0)]
    for t, ev in events:
        out.append(n.step(ev, t))
    return out, (n.state, n.current_term, n.voted_for, tuple(n.log), n.election_deadline)


def test_step_replay_is_identical():
    events = [
        (10, ("msg", 0, RequestVote(1, 0))),
        (20, ("msg", 0, AppendEntries(1, 0, 0, (), 0, supervisor_id=2))),
        (30, ("timer", "election", 9999)),
        (40, ("bogus",)),
    ]
    assert replay(events) == replay(events)


def test_unknown_message_is_a_protocol_violation():
    n = node(2)
    out = n.deliver(0, object(), 1)
    assert traces(out, "protocol_violation")
