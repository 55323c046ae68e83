"""Ingress-side E2 message inspection.

The inspector sits at the E2 terminal ahead of payload decoding: it scans
each inbound frame's raw payload against the rulebook, forwards benign
messages to the dispatch path, and diverts malicious ones to mitigation.
Sources already on the blocklist are short-circuited before any scan.

Latency is measured around the scan call only; mitigation and reporting
happen after the measurement window.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .e2 import E2Message, E2MessageKind
from .mitigation import Blocklist
from .signatures import MatchResult
from .timing import CostModel


class Verdict(Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class InspectionOutcome:
    """Result of inspecting one inbound message.

    ``match`` is present whenever a scan ran (benign outcomes keep their
    zero-hit result for latency accounting); a blocked outcome means no scan
    was performed at all.
    """

    message: E2Message
    verdict: Verdict
    inspect_latency_ns: int
    match: MatchResult | None = None

    def __post_init__(self) -> None:
        if self.verdict is Verdict.BLOCKED:
            if self.match is not None:
                raise ValueError("blocked messages are never scanned")
        else:
            if self.match is None:
                raise ValueError("scanned outcomes carry their match result")
            if (self.verdict is Verdict.MALICIOUS) != self.match.matched:
                raise ValueError("verdict must agree with the match result")

    @property
    def blocked_at_ingress(self) -> bool:
        return self.verdict is Verdict.BLOCKED


class IngressInspector:
    """Per-connection inspection stage bound to a shared matcher.

    ``sink``, when provided, receives one metrics row (dict) per message:
    loop, msg_kind, node_id, verdict, inspect_ns, hits.
    """

    def __init__(
        self,
        matcher,
        blocklist: Blocklist,
        cost_model: CostModel | None = None,
        sink: list | None = None,
    ) -> None:
        self.matcher = matcher
        self.blocklist = blocklist
        self.cost_model = cost_model
        self.sink = sink

    def inspect(self, msg: E2Message, loop: int = 0) -> InspectionOutcome:
        if self.blocklist.is_node_blocked(msg.source_node_id):
            outcome = InspectionOutcome(
                message=msg, verdict=Verdict.BLOCKED, inspect_latency_ns=0
            )
        else:
            match = self.matcher.scan(msg.payload, self.cost_model)
            verdict = Verdict.MALICIOUS if match.matched else Verdict.BENIGN
            outcome = InspectionOutcome(
                message=msg,
                verdict=verdict,
                inspect_latency_ns=match.scan_latency_ns,
                match=match,
            )
        if self.sink is not None:
            hits = ""
            if outcome.match is not None and outcome.match.hits:
                hits = ";".join(str(sig_id) for sig_id, _ in outcome.match.hits)
            self.sink.append(
                {
                    "loop": loop,
                    "msg_kind": msg.kind.name,
                    "node_id": msg.source_node_id,
                    "verdict": outcome.verdict.value,
                    "inspect_ns": outcome.inspect_latency_ns,
                    "hits": hits,
                }
            )
        return outcome


@dataclass(frozen=True)
class LatencySummary:
    """Average/maximum scan latency for one message kind, in milliseconds."""

    kind: E2MessageKind
    average_ms: float
    maximum_ms: float
    count: int


def latency_summary(
    outcomes: Iterable[InspectionOutcome], kind: E2MessageKind
) -> LatencySummary | None:
    """Summarise scan latencies for one kind; blocked (unscanned) outcomes
    are excluded. Returns None when there is nothing to summarise."""
    latencies = [
        o.inspect_latency_ns
        for o in outcomes
        if o.message.kind is kind and not o.blocked_at_ingress
    ]
    if not latencies:
        return None
    return LatencySummary(
        kind=kind,
        average_ms=sum(latencies) / len(latencies) / 1e6,
        maximum_ms=max(latencies) / 1e6,
        count=len(latencies),
    )
