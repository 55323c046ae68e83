"""E2 control-plane message model and byte-exact framing codec.

Frame layout (11-byte header, big-endian throughout)::

    magic   1 B   0xE2
    version 1 B   0x01
    kind    1 B   0-3 in E2MessageKind order
    node_id 4 B   unsigned source node id
    length  4 B   payload byte count
    payload N B

Full-mode KPM payloads carry telemetry records bit-exactly::

    count   2 B   record count
    per record: ue_id 4 B, timestamp_ms 8 B, six features as IEEE-754
    big-endian doubles in the fixed measurement-feature order

Size-calibrated payloads are seeded pseudorandom bytes whose length tracks
observed indication sizes (~100 B at one UE per cell, ~5.3 B per extra UE);
they carry no records and exist for inspection-latency benchmarking, where
only the byte count matters.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable

import numpy as np

from .kpm import FEATURE_COUNT, KpmRecord

FRAME_MAGIC = 0xE2
FRAME_VERSION = 0x01
FRAME_HEADER_SIZE = 11
MAX_PAYLOAD_BYTES = 1 << 20  # 1 MiB hard cap; ~25 KB setup requests are the largest legitimate frames
MAX_KPM_RECORDS = 0xFFFF

_HEADER = struct.Struct(">BBBII")
_KPM_RECORD = struct.Struct(">IQ6d")
_KPM_COUNT = struct.Struct(">H")


class E2CodecError(Exception):
    """Base class for framing and payload codec failures."""


class EncodeError(E2CodecError):
    pass


class ProtocolError(E2CodecError):
    """Bad magic or version byte."""


class TruncationError(E2CodecError):
    """Frame shorter than its declared length."""


class UnknownKindError(E2CodecError):
    """Kind byte outside the four observed message kinds."""


class E2MessageKind(IntEnum):
    SETUP_REQUEST = 0
    SUBSCRIPTION_RESPONSE = 1
    INDICATION = 2
    SUBSCRIPTION_DELETE_RESPONSE = 3


@dataclass(frozen=True)
class E2Message:
    """A framed control-plane message.

    ``ingress_timestamp`` (monotonic ns) is assigned exactly once, when the
    frame is received and decoded; sender-side instances carry 0 until they
    cross the wire.
    """

    kind: E2MessageKind
    source_node_id: int
    payload: bytes
    ingress_timestamp: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.source_node_id <= 0xFFFFFFFF:
            raise ValueError(f"node id {self.source_node_id} outside unsigned 32-bit range")
        if len(self.payload) > MAX_PAYLOAD_BYTES:
            raise EncodeError(
                f"payload of {len(self.payload)} bytes exceeds the {MAX_PAYLOAD_BYTES}-byte cap"
            )


def encode_frame(msg: E2Message) -> bytes:
    """Serialize a message; total frame length is 11 + len(payload)."""
    if len(msg.payload) > MAX_PAYLOAD_BYTES:
        raise EncodeError("payload over cap")
    header = _HEADER.pack(
        FRAME_MAGIC, FRAME_VERSION, int(msg.kind), msg.source_node_id, len(msg.payload)
    )
    return header + msg.payload


def decode_frame(data: bytes, clock: Callable[[], int] = time.monotonic_ns) -> E2Message:
    """Inverse of :func:`encode_frame`; stamps ingress from ``clock``."""
    if len(data) < FRAME_HEADER_SIZE:
        raise TruncationError(f"frame of {len(data)} bytes is shorter than the 11-byte header")
    magic, version, kind_byte, node_id, length = _HEADER.unpack_from(data)
    if magic != FRAME_MAGIC or version != FRAME_VERSION:
        raise ProtocolError(f"bad magic/version bytes 0x{magic:02X}/0x{version:02X}")
    if kind_byte > max(E2MessageKind):
        raise UnknownKindError(f"unknown message kind byte {kind_byte}")
    payload = data[FRAME_HEADER_SIZE : FRAME_HEADER_SIZE + length]
    if len(payload) != length:
        raise TruncationError(f"frame declares {length} payload bytes but carries {len(payload)}")
    return E2Message(
        kind=E2MessageKind(kind_byte),
        source_node_id=node_id,
        payload=payload,
        ingress_timestamp=clock(),
    )


def calibrated_indication_size(ue_count: int) -> int:
    """Indication payload size fitted to observed per-UE growth.

    round(100 + 5.3 * (ue_count - 1)); anchors: 1 UE -> 100 B,
    10 UEs -> 148 B, 20 UEs -> 201 B.
    """
    if ue_count < 1:
        raise ValueError("ue_count must be >= 1")
    return round(100 + 5.3 * (ue_count - 1))


@dataclass(frozen=True)
class KpmReportPayload:
    """One cell's telemetry report for one tick.

    node/cell ids route the report in-process; the wire encoding carries the
    records only (the frame header already names the source node).
    """

    node_id: int
    cell_id: int
    records: tuple[KpmRecord, ...]

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("KPM reports carry at least one record")
        stamps = {r.timestamp for r in self.records}
        if len(stamps) != 1:
            raise ValueError("all records of one report share one reporting timestamp")


def encode_kpm_payload(report: KpmReportPayload) -> bytes:
    """Full-fidelity payload: 2-byte count then 60 bytes per record."""
    if len(report.records) > MAX_KPM_RECORDS:
        raise EncodeError(f"record count {len(report.records)} exceeds the 16-bit capacity")
    parts = [_KPM_COUNT.pack(len(report.records))]
    for rec in report.records:
        parts.append(_KPM_RECORD.pack(rec.ue_id, rec.timestamp, *rec.feature_values()))
    return b"".join(parts)


def decode_kpm_payload(payload: bytes) -> tuple[KpmRecord, ...]:
    """Inverse of :func:`encode_kpm_payload`; reproduces records bit-exactly."""
    if len(payload) < _KPM_COUNT.size:
        raise TruncationError("KPM payload shorter than its count field")
    (count,) = _KPM_COUNT.unpack_from(payload)
    expected = _KPM_COUNT.size + count * _KPM_RECORD.size
    if len(payload) != expected:
        raise TruncationError(f"KPM payload of {len(payload)} bytes, expected {expected}")
    records = []
    for i in range(count):
        fields = _KPM_RECORD.unpack_from(payload, _KPM_COUNT.size + i * _KPM_RECORD.size)
        ue_id, timestamp = fields[0], fields[1]
        records.append(KpmRecord.from_features(timestamp, ue_id, fields[2 : 2 + FEATURE_COUNT]))
    return tuple(records)


def calibrated_indication_payload(ue_count: int, rng: np.random.Generator) -> bytes:
    """Benchmark-mode payload: seeded bytes of exactly the calibrated size."""
    return rng.bytes(calibrated_indication_size(ue_count))
