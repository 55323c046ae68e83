"""Policy-driven mitigation shared by all three detection layers.

Detection events are resolved against an operator-editable
:class:`MitigationPolicy` into sets of :class:`MitigationAction`, then
applied to runtime state (blocklists, revocation marks, the incident log).
Resolution is pure; application is idempotent per detection event.

Policy file format (stdlib configparser syntax)::

    [inspector]
    17 = DBR          # per-signature overrides; unmapped ids fall back to DR

    [kpm]
    small = X
    moderate = XR
    significant = XBR

    [attestation]
    high_impact = KVR
    standard = VR
    read_only = R

Action codes: D drop message, X drop data, B block node, R report,
V revoke privileges, K block xApp.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

logger = logging.getLogger(__name__)


class MitigationAction(Enum):
    """The six runtime responses supported by this framework."""

    DROP_MESSAGE = "D"
    DROP_DATA = "X"
    BLOCK_NODE = "B"
    REPORT = "R"
    REVOKE_PRIVILEGES = "V"
    BLOCK_XAPP = "K"


# Canonical code order used when formatting action sets.
_ACTION_ORDER = "DXBRVK"
_CODE_TO_ACTION = {a.value: a for a in MitigationAction}

#: Applied to inspector hits whose signature id is missing from the policy.
FALLBACK_SIGNATURE_ACTIONS = frozenset(
    {MitigationAction.DROP_MESSAGE, MitigationAction.REPORT}
)


class Magnitude(Enum):
    """Deviation magnitude classes for data-level anomalies."""

    SMALL = "small"
    MODERATE = "moderate"
    SIGNIFICANT = "significant"


class XappTier(Enum):
    """Operator-assigned xApp privilege tiers for attestation responses."""

    HIGH_IMPACT = "high_impact"
    STANDARD = "standard"
    READ_ONLY = "read_only"


def parse_action_codes(codes: str) -> frozenset[MitigationAction]:
    """Parse a compact action-code string such as ``"XBR"`` or ``"X,B,R"``."""
    actions = set()
    for ch in codes:
        if ch in ", \t":
            continue
        action = _CODE_TO_ACTION.get(ch.upper())
        if action is None:
            raise ValueError(f"unknown mitigation action code {ch!r}")
        actions.add(action)
    return frozenset(actions)


def format_action_codes(actions: Iterable[MitigationAction]) -> str:
    """Format an action set as codes in canonical D,X,B,R,V,K order."""
    present = {a.value for a in actions}
    return "".join(c for c in _ACTION_ORDER if c in present)


@dataclass
class MitigationPolicy:
    """Operator-defined mapping from detection events to action sets."""

    signature_actions: dict[int, frozenset[MitigationAction]] = field(default_factory=dict)
    magnitude_actions: dict[Magnitude, frozenset[MitigationAction]] = field(default_factory=dict)
    xapp_tier_actions: dict[XappTier, frozenset[MitigationAction]] = field(default_factory=dict)

    @classmethod
    def default(cls) -> "MitigationPolicy":
        """Data-level defaults (drop everywhere, escalate reporting/blocking
        with magnitude) and tiered attestation responses; the inspector map
        is filled from the rulebook via :meth:`bind_rulebook`."""
        return cls(
            signature_actions={},
            magnitude_actions={
                Magnitude.SMALL: parse_action_codes("X"),
                Magnitude.MODERATE: parse_action_codes("XR"),
                Magnitude.SIGNIFICANT: parse_action_codes("XBR"),
            },
            xapp_tier_actions={
                XappTier.HIGH_IMPACT: parse_action_codes("KVR"),
                XappTier.STANDARD: parse_action_codes("VR"),
                XappTier.READ_ONLY: parse_action_codes("R"),
            },
        )

    def bind_rulebook(self, signatures) -> None:
        """Populate per-signature actions from a SignatureSet's bindings."""
        for sig in signatures.signatures:
            self.signature_actions[sig.sig_id] = frozenset(sig.actions)


def load_policy(path) -> MitigationPolicy:
    """Load a policy file; sections/keys absent from the file keep defaults."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case (tier names, numeric ids)
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    policy = MitigationPolicy.default()
    if parser.has_section("inspector"):
        for key, value in parser.items("inspector"):
            try:
                sig_id = int(key)
            except ValueError as exc:
                raise ValueError(f"[inspector] keys must be signature ids, got {key!r}") from exc
            policy.signature_actions[sig_id] = parse_action_codes(value)
    if parser.has_section("kpm"):
        for key, value in parser.items("kpm"):
            policy.magnitude_actions[Magnitude(key.lower())] = parse_action_codes(value)
    if parser.has_section("attestation"):
        for key, value in parser.items("attestation"):
            policy.xapp_tier_actions[XappTier(key.lower())] = parse_action_codes(value)
    return policy


def save_policy(policy: MitigationPolicy, path) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["inspector"] = {
        str(sig_id): format_action_codes(actions)
        for sig_id, actions in sorted(policy.signature_actions.items())
    }
    parser["kpm"] = {
        mag.value: format_action_codes(policy.magnitude_actions[mag])
        for mag in Magnitude
        if mag in policy.magnitude_actions
    }
    parser["attestation"] = {
        tier.value: format_action_codes(policy.xapp_tier_actions[tier])
        for tier in XappTier
        if tier in policy.xapp_tier_actions
    }
    with open(path, "w") as fh:
        parser.write(fh)


def resolve_inspector_event(match, policy: MitigationPolicy) -> frozenset[MitigationAction]:
    """Union of the action sets bound to every signature hit in ``match``.

    Signature ids missing from the policy contribute the fail-safe
    {DropMessage, Report} set and log a policy-gap warning.
    """
    if not match.hits:
        raise ValueError("inspector events require at least one signature hit")
    actions: set[MitigationAction] = set()
    for sig_id, _offset in match.hits:
        bound = policy.signature_actions.get(sig_id)
        if bound is None:
            logger.warning("no mitigation policy for signature %d; using fallback", sig_id)
            bound = FALLBACK_SIGNATURE_ACTIONS
        actions |= bound
    return frozenset(actions)


def resolve_kpm_event(verdict, source_node_id: int, policy: MitigationPolicy) -> frozenset[MitigationAction]:
    """Action set for an anomalous telemetry verdict, by deviation magnitude."""
    if not verdict.is_anomalous:
        raise ValueError("only anomalous verdicts reach mitigation")
    return policy.magnitude_actions[verdict.magnitude]


def resolve_attestation_event(xapp_id: str, tier, policy: MitigationPolicy) -> frozenset[MitigationAction]:
    """Tiered response to an integrity violation; Report is always included."""
    bound = policy.xapp_tier_actions.get(tier)
    if bound is None:
        logger.warning("no mitigation policy for xApp tier %r; reporting only", tier)
        bound = frozenset()
    return frozenset(bound | {MitigationAction.REPORT})


@dataclass(frozen=True)
class IncidentReport:
    """One audit row; event ids increase monotonically within a log."""

    event_id: int
    detector: str
    subject: str
    evidence: str
    actions: frozenset[MitigationAction]
    timestamp_ms: int


INCIDENT_CSV_HEADER = "event_id,detector,subject,magnitude_or_sigids,actions,timestamp_ms"


class IncidentLog:
    """Append-only incident record; the administration-body interface."""

    def __init__(self) -> None:
        self._reports: list[IncidentReport] = []

    def append(self, detector: str, subject: str, evidence: str,
               actions: frozenset[MitigationAction], timestamp_ms: int) -> IncidentReport:
        report = IncidentReport(
            event_id=len(self._reports),
            detector=detector,
            subject=subject,
            evidence=evidence,
            actions=actions,
            timestamp_ms=timestamp_ms,
        )
        self._reports.append(report)
        return report

    @property
    def reports(self) -> tuple[IncidentReport, ...]:
        return tuple(self._reports)

    def __len__(self) -> int:
        return len(self._reports)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(INCIDENT_CSV_HEADER + "\n")
            for r in self._reports:
                fh.write(
                    f"{r.event_id},{r.detector},{r.subject},{r.evidence},"
                    f"{format_action_codes(r.actions)},{r.timestamp_ms}\n"
                )


class Blocklist:
    """Blocked nodes/xApps and revoked privileges; idempotent insertion."""

    def __init__(self) -> None:
        self.blocked_nodes: set[int] = set()
        self.blocked_xapps: set[str] = set()
        self.revoked_xapps: set[str] = set()

    def block_node(self, node_id: int) -> None:
        self.blocked_nodes.add(node_id)

    def block_xapp(self, xapp_id: str) -> None:
        self.blocked_xapps.add(xapp_id)

    def revoke_privileges(self, xapp_id: str) -> None:
        self.revoked_xapps.add(xapp_id)

    def is_node_blocked(self, node_id: int) -> bool:
        return node_id in self.blocked_nodes

    def is_xapp_blocked(self, xapp_id: str) -> bool:
        return xapp_id in self.blocked_xapps

    def is_xapp_revoked(self, xapp_id: str) -> bool:
        return xapp_id in self.revoked_xapps


@dataclass(frozen=True)
class DetectionEvent:
    """Context handed to mitigation alongside the resolved action set."""

    detector: str  # "inspector" | "kpm" | "attestation"
    evidence: str  # e.g. "sig:3;7", "magnitude:significant", "digest-mismatch"
    timestamp_ms: int
    node_id: int | None = None
    ue_id: int | None = None
    xapp_id: str | None = None

    @property
    def subject(self) -> str:
        if self.xapp_id is not None:
            return f"xapp:{self.xapp_id}"
        if self.ue_id is not None:
            return f"ue:{self.ue_id}"
        if self.node_id is not None:
            return f"node:{self.node_id}"
        return "unknown"


class MitigationState:
    """Blocklist + incident log + per-event dedup for idempotent application."""

    def __init__(self) -> None:
        self.blocklist = Blocklist()
        self.log = IncidentLog()
        self._applied: set[tuple] = set()


def apply_actions(state: MitigationState, event: DetectionEvent,
                  actions: frozenset[MitigationAction]) -> list[str]:
    """Apply a resolved action set; returns human-readable effects.

    Re-applying the same event with the same actions is a no-op (identical
    end state, no duplicate incident row). Report precedes block/revoke so
    every block is covered by a logged incident. Message/data exclusion is
    enforced by the calling pipeline; here it is recorded as an effect.
    """
    if not actions:
        raise ValueError("mitigation requires a non-empty action set")
    key = (event.detector, event.subject, event.evidence, event.timestamp_ms,
           frozenset(actions))
    if key in state._applied:
        return []
    state._applied.add(key)

    effects: list[str] = []
    if MitigationAction.REPORT in actions:
        report = state.log.append(event.detector, event.subject, event.evidence,
                                  actions, event.timestamp_ms)
        effects.append(f"incident {report.event_id} reported")
    if MitigationAction.DROP_MESSAGE in actions:
        effects.append(f"message from {event.subject} dropped")
    if MitigationAction.DROP_DATA in actions:
        effects.append(f"data from {event.subject} dropped")
    if MitigationAction.BLOCK_NODE in actions:
        if event.node_id is None:
            raise ValueError("BlockNode requires a node_id on the event")
        state.blocklist.block_node(event.node_id)
        effects.append(f"node {event.node_id} blocked")
    if MitigationAction.BLOCK_XAPP in actions:
        if event.xapp_id is None:
            raise ValueError("BlockXapp requires an xapp_id on the event")
        state.blocklist.block_xapp(event.xapp_id)
        effects.append(f"xapp {event.xapp_id} blocked")
    if MitigationAction.REVOKE_PRIVILEGES in actions:
        if event.xapp_id is None:
            raise ValueError("RevokePrivileges requires an xapp_id on the event")
        state.blocklist.revoke_privileges(event.xapp_id)
        effects.append(f"xapp {event.xapp_id} privileges revoked")
    return effects
