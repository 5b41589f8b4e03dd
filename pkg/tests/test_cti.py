import dataclasses
import logging
import random

import pytest
from hypothesis import given, settings, strategies as st

from porcti.cti import (
    CtiProfile,
    GroundTruth,
    LedgerFile,
    append_ledger,
    default_profile,
    encode_entry,
    generate_cti,
    generate_proposal,
    scan_for_private,
    write_ledger,
)
from porcti.domain import ATTRIBUTE_KEYS, LedgerEntry
from porcti.errors import IndexGapError, LedgerError, ParameterError


def entries_for(n, seed=0):
    rng = random.Random(seed)
    profile = default_profile()
    out = []
    for i in range(1, n + 1):
        rec = generate_cti(rng, profile)
        out.append(LedgerEntry(generate_proposal(rec, 1, i, 0), 100 * i))
    return out


def test_generation_is_seeded():
    a = generate_cti(random.Random(5), default_profile())
    b = generate_cti(random.Random(5), default_profile())
    c = generate_cti(random.Random(6), default_profile())
    assert a == b
    assert a.ground_truth_id != c.ground_truth_id


def test_empty_pool_is_rejected():
    profile = default_profile()
    pools = dict(profile.attribute_pools, ttps=())
    with pytest.raises(ParameterError):
        generate_cti(random.Random(0), dataclasses.replace(profile, attribute_pools=pools))
    with pytest.raises(ParameterError):
        generate_cti(random.Random(0), dataclasses.replace(profile, victim_orgs=()))


def test_proposal_drops_private_fields():
    profile = dataclasses.replace(default_profile(), victim_orgs=("AcmeCorp",))
    rec = generate_cti(random.Random(1), profile)
    assert rec.victim_org == "AcmeCorp"
    p = generate_proposal(rec, 3, 1)
    assert len(p.entries) == 6
    assert p.keys() == ATTRIBUTE_KEYS
    data = encode_entry(LedgerEntry(p, 0))
    assert b"AcmeCorp" not in data
    assert scan_for_private(data, [rec]) == []


@settings(max_examples=1000)
@given(st.integers(0, 2**32))
def test_proposal_is_projection_of_record(seed):
    rec = generate_cti(random.Random(seed), default_profile())
    p = generate_proposal(rec, 1, 1)
    record_attrs = {a.key: a.value for a in rec.attributes}
    assert all(record_attrs[a.key] == a.value for a in p.entries)
    assert scan_for_private(encode_entry(LedgerEntry(p, 0)), [rec]) == []


def test_scan_finds_leaks():
    rec = generate_cti(random.Random(0), default_profile())
    assert scan_for_private(b"xx" + rec.victim_org.encode() + b"yy", [rec]) == [rec.victim_org]


def test_ground_truth_lookup():
    truth = GroundTruth()
    rec = generate_cti(random.Random(0), default_profile())
    truth.add(rec)
    assert truth.detect(rec.ground_truth_id) == rec.attributes
    assert truth.detect("nope") is None
    assert len(truth) == 1


# -- ledger file -----------------------------------------------------------------


def test_append_and_reload(tmp_path):
    path = tmp_path / "n0.ledger"
    es = entries_for(3)
    ledger = LedgerFile.open(path)
    for e in es:
        append_ledger(ledger, e)
    assert LedgerFile.open(path).entries == es


def test_append_gap_is_rejected(tmp_path):
    ledger = LedgerFile.open(tmp_path / "n0.ledger")
    es = entries_for(3)
    with pytest.raises(IndexGapError):
        ledger.append(es[2])
    ledger.append(es[0])
    assert ledger.last_index == 1


def test_torn_write_is_truncated(tmp_path, caplog):
    path = tmp_path / "n0.ledger"
    es = entries_for(3)
    write_ledger(path, es[:2])
    before = path.read_bytes()
    partial = encode_entry(es[2])
    for cut in (2, 7, len(partial) - 1):
        path.write_bytes(before + partial[:cut])
        with caplog.at_level(logging.WARNING):
            reloaded = LedgerFile.open(path)
        assert reloaded.entries == es[:2]
        assert path.read_bytes() == before
    assert "torn record" in caplog.text


def test_corruption_before_tail_raises(tmp_path):
    path = tmp_path / "n0.ledger"
    write_ledger(path, entries_for(3))
    data = bytearray(path.read_bytes())
    data[10] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(LedgerError):
        LedgerFile.open(path)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 12), st.integers(0, 1000))
def test_reload_after_append_roundtrips(tmp_path_factory, n, seed):
    path = tmp_path_factory.mktemp("ledger") / "n.ledger"
    es = entries_for(n, seed)
    write_ledger(path, es)
    assert LedgerFile.open(path).entries == es


def test_profile_is_plain_data():
    assert isinstance(default_profile(), CtiProfile)
