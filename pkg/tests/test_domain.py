import dataclasses

import pytest
from hypothesis import given, strategies as st

from porcti.domain import (
    AttackAttribute,
    NodeKind,
    Proposal,
    ProtocolParams,
    clamp_score,
    node_kind,
    validate_params,
)


def test_default_params_are_valid():
    p = ProtocolParams(r_init=50, r_thld=10, reputation_weight_m=5, posterior_threshold=0.5)
    assert validate_params(p) == []


def test_init_below_threshold_is_reported():
    assert "r_init >= r_thld" in validate_params(ProtocolParams(r_init=10, r_thld=50))


def test_heartbeat_must_undercut_election_timeout():
    p = ProtocolParams(heartbeat_interval=200, election_timeout_range=(150, 300))
    assert "heartbeat < election min" in validate_params(p)


@pytest.mark.parametrize(
    "change, violation",
    [
        ({"r_init": 0.5}, "r_init in [1, 100]"),
        ({"r_thld": 101}, "r_thld in [1, 100]"),
        ({"reputation_weight_m": 0}, "reputation_weight_m > 0"),
        ({"posterior_threshold": 1.0}, "posterior_threshold in (0, 1)"),
        ({"election_timeout_range": (300, 150)}, "election timeout min <= max"),
        ({"election_timeout_range": (10, 300)}, "election timeout min > 2 x typical latency"),
        ({"bft_phases": 3}, "bft_phases in {1, 2}"),
        ({"term_length": 0}, "term_length > 0"),
    ],
)
def test_each_invariant_is_named(change, violation):
    assert violation in validate_params(dataclasses.replace(ProtocolParams(), **change))


def test_threshold_boundary_is_faithful():
    assert node_kind(10.0, 10.0) is NodeKind.FAITHFUL
    assert node_kind(9.99, 10.0) is NodeKind.UNFAITHFUL


@given(st.floats(-1e6, 1e6))
def test_clamp_keeps_scores_in_range(x):
    assert 1.0 <= clamp_score(x) <= 100.0


@given(st.floats(1, 100), st.floats(1, 100))
def test_kind_is_pure_function_of_score_and_threshold(score, thld):
    assert (node_kind(score, thld) is NodeKind.FAITHFUL) == (score >= thld)


def test_attribute_keys_are_closed():
    with pytest.raises(ValueError):
        AttackAttribute("victim_org", "AcmeCorp")
    with pytest.raises(ValueError):
        AttackAttribute("hash", "")


def test_proposal_indices_must_be_consecutive():
    entries = (AttackAttribute("ttps", "T1566"),)
    Proposal(1, 8, 7, entries, 0)
    with pytest.raises(ValueError):
        Proposal(1, 10, 7, entries, 0)
    with pytest.raises(ValueError):
        Proposal(1, 1, 0, (), 0)
