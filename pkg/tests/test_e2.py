import pytest
from hypothesis import given, strategies as st

from ricguard.e2 import (
    E2Message,
    E2MessageKind,
    EncodeError,
    KpmReportPayload,
    MAX_PAYLOAD_BYTES,
    ProtocolError,
    TruncationError,
    UnknownKindError,
    calibrated_indication_size,
    decode_frame,
    decode_kpm_payload,
    encode_frame,
    encode_kpm_payload,
)
from ricguard.kpm import KpmRecord


def fixed_clock():
    return 123_456


class TestFraming:
    def test_empty_payload_indication_is_eleven_bytes(self):
        msg = E2Message(E2MessageKind.INDICATION, 7, b"")
        frame = encode_frame(msg)
        assert len(frame) == 11
        assert frame[-4:] == b"\x00\x00\x00\x00"

    def test_header_layout(self):
        frame = encode_frame(E2Message(E2MessageKind.INDICATION, 7, b"ab"))
        assert frame[0] == 0xE2
        assert frame[1] == 0x01
        assert frame[2] == 2  # kind byte in enumeration order
        assert frame[3:7] == (7).to_bytes(4, "big")
        assert frame[7:11] == (2).to_bytes(4, "big")

    def test_delete_response_with_11_byte_payload_is_22_bytes(self):
        # matches the observed 22 B subscription delete response
        frame = encode_frame(
            E2Message(E2MessageKind.SUBSCRIPTION_DELETE_RESPONSE, 1, b"x" * 11)
        )
        assert len(frame) == 22

    def test_setup_request_25kb_round_trip(self):
        payload = bytes(range(256)) * 98  # 25,088 B, ~25 KB
        frame = encode_frame(E2Message(E2MessageKind.SETUP_REQUEST, 3, payload[:25_000]))
        decoded = decode_frame(frame, clock=fixed_clock)
        assert decoded.kind is E2MessageKind.SETUP_REQUEST
        assert len(decoded.payload) == 25_000

    def test_decode_sets_ingress_from_clock(self):
        frame = encode_frame(E2Message(E2MessageKind.INDICATION, 1, b"abcd"))
        assert decode_frame(frame, clock=fixed_clock).ingress_timestamp == 123_456

    def test_bad_magic_rejected(self):
        frame = bytearray(encode_frame(E2Message(E2MessageKind.INDICATION, 1, b"abcd")))
        frame[0] = 0x00
        with pytest.raises(ProtocolError):
            decode_frame(bytes(frame), clock=fixed_clock)

    def test_bad_version_rejected(self):
        frame = bytearray(encode_frame(E2Message(E2MessageKind.INDICATION, 1, b"abcd")))
        frame[1] = 0x02
        with pytest.raises(ProtocolError):
            decode_frame(bytes(frame), clock=fixed_clock)

    def test_unknown_kind_rejected(self):
        frame = bytearray(encode_frame(E2Message(E2MessageKind.INDICATION, 1, b"abcd")))
        frame[2] = 4
        with pytest.raises(UnknownKindError):
            decode_frame(bytes(frame), clock=fixed_clock)

    def test_truncated_payload_rejected(self):
        # declares 100 payload bytes but carries 50
        frame = encode_frame(E2Message(E2MessageKind.INDICATION, 1, b"z" * 100))
        with pytest.raises(TruncationError):
            decode_frame(frame[: 11 + 50], clock=fixed_clock)

    def test_short_header_rejected(self):
        with pytest.raises(TruncationError):
            decode_frame(b"\xe2\x01\x02", clock=fixed_clock)

    def test_payload_cap_enforced(self):
        with pytest.raises(EncodeError):
            E2Message(E2MessageKind.SETUP_REQUEST, 1, b"\x00" * (MAX_PAYLOAD_BYTES + 1))

    @given(
        kind=st.sampled_from(list(E2MessageKind)),
        node=st.integers(min_value=0, max_value=0xFFFFFFFF),
        payload=st.binary(max_size=2048),
    )
    def test_round_trip_identity(self, kind, node, payload):
        msg = E2Message(kind, node, payload)
        frame = encode_frame(msg)
        assert len(frame) == 11 + len(payload)
        decoded = decode_frame(frame, clock=fixed_clock)
        assert decoded.kind is msg.kind
        assert decoded.source_node_id == msg.source_node_id
        assert decoded.payload == msg.payload


class TestCalibratedSize:
    def test_table_anchors(self):
        assert calibrated_indication_size(1) == 100
        assert calibrated_indication_size(10) == 148  # observed ~150, within 5 B
        assert calibrated_indication_size(20) == 201  # observed ~200, within 5 B

    def test_strictly_increasing(self):
        sizes = [calibrated_indication_size(n) for n in range(1, 200)]
        assert all(b > a for a, b in zip(sizes, sizes[1:]))

    def test_zero_ues_rejected(self):
        with pytest.raises(ValueError):
            calibrated_indication_size(0)

    def test_legitimate_size_ordering(self):
        # setup >> indication > subscription response > delete response
        setup = 11 + 25_000
        indication = 11 + calibrated_indication_size(1)
        sub_response = 38
        delete_response = 22
        assert setup > 10 * indication
        assert indication > sub_response > delete_response


def _record(ts=1000, ue=4, values=(1.5, 2.0, 3.25, 4.0, 5.5, 6.0)):
    return KpmRecord.from_features(ts, ue, values)


class TestKpmPayload:
    def test_single_record_is_62_bytes(self):
        # 2-byte count + ue_id(4) + timestamp(8) + six 8-byte doubles
        payload = encode_kpm_payload(KpmReportPayload(1, 2, (_record(),)))
        assert len(payload) == 2 + 60

    def test_round_trip_bit_exact(self):
        records = tuple(
            _record(ts=5000, ue=u, values=(0.1 * u, u, 3.14159 * u, 0.0, 7.0, u * u))
            for u in range(1, 6)
        )
        payload = encode_kpm_payload(KpmReportPayload(9, 3, records))
        assert decode_kpm_payload(payload) == records

    def test_empty_report_rejected(self):
        with pytest.raises(ValueError):
            KpmReportPayload(1, 2, ())

    def test_mixed_timestamps_rejected(self):
        with pytest.raises(ValueError):
            KpmReportPayload(1, 2, (_record(ts=1000), _record(ts=2000, ue=5)))

    def test_truncated_payload_rejected(self):
        payload = encode_kpm_payload(KpmReportPayload(1, 2, (_record(),)))
        with pytest.raises(TruncationError):
            decode_kpm_payload(payload[:-1])
