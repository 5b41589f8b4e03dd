"""Synthetic CTI records, privacy-reducing proposal derivation, and the per-node ledger file.

Ledger file layout (all integers big-endian)::

    record  := length:u32  payload:bytes[length]  crc32(payload):u32
    payload := UTF-8 JSON object with flat keys, in this order:
               term, index, prev_index, origin, cti_id, committed_at,
               then one "entry.<attribute key>" per proposal entry in entry order

A record whose header, payload or checksum is cut short at the end of the
file is a torn write: it is truncated away on load with a warning. A bad
checksum anywhere before the last record is corruption and raises.
"""

from __future__ import annotations

import json
import logging
import os
import random
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from porcti.domain import ATTRIBUTE_KEYS, AttackAttribute, LedgerEntry, NodeId, Proposal
from porcti.errors import IndexGapError, LedgerError, ParameterError

logger = logging.getLogger(__name__)

_HEADER = struct.Struct(">I")
_CRC = struct.Struct(">I")
PRIVATE_FIELDS = ("victim_org", "internal_asset", "analyst_notes")


@dataclass(frozen=True)
class CtiProfile:
    """Value pools that synthetic records draw from."""

    attribute_pools: Mapping[str, tuple[str, ...]]
    victim_orgs: tuple[str, ...]
    internal_assets: tuple[str, ...]
    analyst_notes: tuple[str, ...]


def default_profile() -> CtiProfile:
    return CtiProfile(
        attribute_pools={
            "attacker_ip": tuple(f"203.0.113.{i}" for i in range(1, 255)),
            "attack_method": ("phishing", "sql-injection", "credential-stuffing", "rce", "smb-exploit", "dns-tunnel"),
            "attack_tool": ("cobalt-strike", "mimikatz", "metasploit", "sqlmap", "eternalblue", "custom-loader"),
            "characteristics": ("beaconing", "lateral-movement", "data-exfil", "ransom-note", "persistence", "scanning"),
            "ttps": ("T1566", "T1190", "T1110", "T1059", "T1210", "T1071", "T1486", "T1021"),
            "hash": tuple(f"{i:032x}" for i in range(0x5EED0000, 0x5EED0000 + 64)),
        },
        victim_orgs=("AcmeCorp", "Globex Medical", "Initech Finance", "Umbrella Logistics"),
        internal_assets=("hr-db-02", "payroll-srv", "vpn-gw-east", "dc01.corp.local"),
        analyst_notes=("escalated to CISO", "customer data possibly exposed", "internal pentest ruled out"),
    )


@dataclass(frozen=True)
class CtiRecord:
    attributes: tuple[AttackAttribute, ...]
    victim_org: str
    internal_asset: str
    analyst_notes: str
    ground_truth_id: str

    def private_values(self) -> tuple[str, ...]:
        return (self.victim_org, self.internal_asset, self.analyst_notes)


def generate_cti(rng: random.Random, profile: CtiProfile) -> CtiRecord:
    pools = [profile.attribute_pools.get(k, ()) for k in ATTRIBUTE_KEYS]
    for key, pool in zip(ATTRIBUTE_KEYS, pools):
        if not pool:
            raise ParameterError(f"empty value pool for attribute {key!r}")
    for name in ("victim_orgs", "internal_assets", "analyst_notes"):
        if not getattr(profile, name):
            raise ParameterError(f"empty pool {name!r}")
    attrs = tuple(AttackAttribute(k, rng.choice(pool)) for k, pool in zip(ATTRIBUTE_KEYS, pools))
    return CtiRecord(
        attributes=attrs,
        victim_org=rng.choice(profile.victim_orgs),
        internal_asset=rng.choice(profile.internal_assets),
        analyst_notes=rng.choice(profile.analyst_notes),
        ground_truth_id=f"cti-{rng.getrandbits(64):016x}",
    )


def generate_proposal(record: CtiRecord, term: int, index: int, origin: NodeId = 0) -> Proposal:
    """Project a record onto its shareable attack attributes."""
    return Proposal(
        term=term,
        index=index,
        prev_index=index - 1,
        entries=tuple(record.attributes),
        origin=origin,
        cti_id=record.ground_truth_id,
    )


def forge_value(key: str, value: str, rng: random.Random) -> str:
    """A value for ``key`` guaranteed to differ from ``value``."""
    forged = f"forged-{key}-{rng.getrandbits(32):08x}"
    return forged if forged != value else forged + "x"


def encode_entry(entry: LedgerEntry) -> bytes:
    p = entry.proposal
    flat: dict[str, object] = {
        "term": p.term,
        "index": p.index,
        "prev_index": p.prev_index,
        "origin": p.origin,
        "cti_id": p.cti_id,
        "committed_at": entry.committed_at,
    }
    for a in p.entries:
        flat[f"entry.{a.key}"] = a.value
    payload = json.dumps(flat, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(len(payload)) + payload + _CRC.pack(zlib.crc32(payload))


def decode_payload(payload: bytes) -> LedgerEntry:
    flat = json.loads(payload.decode("utf-8"))
    entries = tuple(
        AttackAttribute(k[len("entry."):], v) for k, v in flat.items() if k.startswith("entry.")
    )
    proposal = Proposal(
        term=flat["term"],
        index=flat["index"],
        prev_index=flat["prev_index"],
        entries=entries,
        origin=flat["origin"],
        cti_id=flat["cti_id"],
    )
    return LedgerEntry(proposal, flat["committed_at"])


def read_records(data: bytes) -> tuple[list[LedgerEntry], int]:
    """Decode all complete records; return them and the byte length they span."""
    entries: list[LedgerEntry] = []
    pos = 0
    n = len(data)
    while pos < n:
        if pos + _HEADER.size > n:
            break
        (length,) = _HEADER.unpack_from(data, pos)
        end = pos + _HEADER.size + length + _CRC.size
        if end > n:
            break
        payload = data[pos + _HEADER.size : pos + _HEADER.size + length]
        (crc,) = _CRC.unpack_from(data, end - _CRC.size)
        if zlib.crc32(payload) != crc:
            if end == n:
                break
            raise LedgerError(f"checksum mismatch in record at byte {pos}")
        entries.append(decode_payload(payload))
        pos = end
    return entries, pos


@dataclass
class LedgerFile:
    """Append-only ledger of committed entries for one node."""

    path: Path
    fsync: bool = False
    entries: list[LedgerEntry] = field(default_factory=list)

    @classmethod
    def open(cls, path: os.PathLike | str, fsync: bool = False) -> "LedgerFile":
        ledger = cls(Path(path), fsync=fsync)
        ledger.reload()
        return ledger

    @property
    def last_index(self) -> int:
        return self.entries[-1].index if self.entries else 0

    def reload(self) -> list[LedgerEntry]:
        if not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()
            self.entries = []
            return self.entries
        data = self.path.read_bytes()
        entries, good = read_records(data)
        if good < len(data):
            logger.warning("truncating %d trailing bytes of torn record in %s", len(data) - good, self.path)
            with open(self.path, "r+b") as fh:
                fh.truncate(good)
        prev = 0
        for e in entries:
            if e.index != prev + 1:
                raise LedgerError(f"index gap in {self.path}: {prev} -> {e.index}")
            prev = e.index
        self.entries = entries
        return self.entries

    def append(self, entry: LedgerEntry) -> "LedgerFile":
        if entry.index != self.last_index + 1:
            raise IndexGapError(f"cannot append index {entry.index} after {self.last_index}")
        if self.entries and entry.term < self.entries[-1].term:
            raise LedgerError(f"term went backwards at index {entry.index}")
        with open(self.path, "ab") as fh:
            fh.write(encode_entry(entry))
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())
        self.entries.append(entry)
        return self


def append_ledger(file: LedgerFile, entry: LedgerEntry) -> LedgerFile:
    return file.append(entry)


def write_ledger(path: os.PathLike | str, entries: Iterable[LedgerEntry]) -> LedgerFile:
    """Persist a committed prefix to a fresh ledger file."""
    p = Path(path)
    if p.exists():
        p.unlink()
    ledger = LedgerFile.open(p)
    for e in entries:
        ledger.append(e)
    return ledger


def scan_for_private(data: bytes, records: Iterable[CtiRecord]) -> list[str]:
    """Private field values of ``records`` that occur anywhere in ``data``."""
    hits = []
    for r in records:
        for v in r.private_values():
            if v.encode("utf-8") in data:
                hits.append(v)
    return hits


class GroundTruth:
    """Registry of true attack attributes, keyed by ``cti_id``.

    Honest followers consult it to 'detect' the attack independently.
    """

    def __init__(self) -> None:
        self._records: dict[str, CtiRecord] = {}

    def add(self, record: CtiRecord) -> None:
        self._records[record.ground_truth_id] = record

    def detect(self, cti_id: str) -> Optional[tuple[AttackAttribute, ...]]:
        r = self._records.get(cti_id)
        return r.attributes if r is not None else None

    def records(self) -> list[CtiRecord]:
        return list(self._records.values())

    def __len__(self) -> int:
        return len(self._records)
