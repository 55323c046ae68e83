"""Deterministic desk-scale RAN/E2 emulation.

Simulates E2 nodes, cells, and UEs on a one-second tick. Benign telemetry
is drawn per UE from a multivariate Gaussian around a per-UE baseline with
AR(1) temporal correlation (coefficient 0.8), so the sequence model has
learnable structure; the marginal distribution of each record is
N(mu, cov). Attacks are reproduced with ground-truth labels:

* KPM poisoning: targeted UEs' reports are resampled i.i.d. from
  N(af*mu, af*cov) during seeded attack windows (the underlying benign
  process keeps evolving — a man-in-the-middle rewrites reports in
  transit). An af^2 covariance reading is available as a config switch.
* Signature injection: messages from malicious nodes carry one uniformly
  chosen rulebook pattern spliced at a uniform payload offset.

Everything derives from one seeded generator: identical configs produce
byte-identical frame streams and labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .e2 import (
    E2Message,
    E2MessageKind,
    KpmReportPayload,
    calibrated_indication_payload,
    encode_frame,
    encode_kpm_payload,
)
from .kpm import FEATURE_COUNT, KpmRecord
from .recurrent import SEQUENCE_LENGTH
from .signatures import SignatureSet

SETUP_REQUEST_BYTES = 25_000
SUBSCRIPTION_RESPONSE_BYTES = 27  # 38-byte frame
SUBSCRIPTION_DELETE_RESPONSE_BYTES = 11  # 22-byte frame

AR_COEFFICIENT = 0.8
COEFF_OF_VARIATION = 0.05
BASELINE_JITTER = 0.1  # per-UE uniform jitter around the slice baseline
TICK_MS = 1000

#: First tick eligible for poisoning: every poisoned record must arrive
#: after the detector's per-UE warm-up so it receives a verdict.
MIN_POISON_START = SEQUENCE_LENGTH + 2


class SliceKind(Enum):
    EMBB = "eMBB"
    URLLC = "URLLC"


# Measurement-feature order: UEThpUl, PrbUsedUl, UEThpDl, PrbUsedDl,
# TotNbrUl_per_sec, TotNbrDl_per_sec. eMBB is throughput-heavy; URLLC
# carries many small packets at a fifth of the throughput.
EMBB_BASELINE = np.array([20_000.0, 30.0, 50_000.0, 60.0, 1_000.0, 2_000.0])
URLLC_BASELINE = np.array([4_000.0, 15.0, 10_000.0, 30.0, 2_000.0, 4_000.0])


def baseline_for(slice_kind: SliceKind) -> np.ndarray:
    return EMBB_BASELINE if slice_kind is SliceKind.EMBB else URLLC_BASELINE


def default_covariance(mu: np.ndarray) -> np.ndarray:
    """Diagonal-dominant PSD covariance with correlated UL and DL pairs."""
    sd = COEFF_OF_VARIATION * mu
    corr = np.eye(FEATURE_COUNT)
    for a, b in ((0, 1), (2, 3), (4, 5)):
        corr[a, b] = corr[b, a] = 0.3
    return np.outer(sd, sd) * corr


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """A factor L with L @ L.T = cov for any PSD matrix (handles cov = 0)."""
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs of one emulated scenario; mirrored by the flat config file."""

    node_count: int = 4
    cells_per_node: int = 3
    ues_per_cell: int = 10
    total_ues: int | None = None  # when set, UEs land in random cells
    malicious_node_fraction: float = 0.0
    malicious_message_fraction: float = 0.0
    amplification_factor: float = 1.0
    poison_target_fraction: float = 0.0
    poison_time_fraction: float = 0.25
    poison_cov_af_squared: bool = False
    loops: int = 100
    rng_seed: int = 1
    size_calibrated: bool = False

    def __post_init__(self) -> None:
        if self.node_count < 1 or self.cells_per_node < 1 or self.loops < 1:
            raise ValueError("node_count, cells_per_node, and loops must be positive")
        for name in ("malicious_node_fraction", "malicious_message_fraction",
                     "poison_target_fraction", "poison_time_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.amplification_factor < 1.0:
            raise ValueError("amplification_factor must be >= 1")
        if self.malicious_node_fraction > 0 and self.malicious_message_fraction >= 1.0:
            # full injection would poison every setup request and no malicious
            # node could ever establish its connection
            raise ValueError(
                "malicious_message_fraction must stay below 1 when any node is malicious"
            )
        if self.total_ues is None and self.ues_per_cell < 1:
            raise ValueError("ues_per_cell must be positive")
        if self.total_ues is not None and self.total_ues < 1:
            raise ValueError("total_ues must be positive when set")


@dataclass(frozen=True)
class UeProfile:
    """Per-UE baseline: slice, placement, mean vector, covariance."""

    ue_id: int
    slice_kind: SliceKind
    node_id: int
    cell_id: int
    mu: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class GroundTruthLabel:
    ue_id: int
    timestamp: int
    poisoned: bool
    af_used: float


@dataclass(frozen=True)
class InjectedSignature:
    sig_id: int
    offset: int


@dataclass(frozen=True)
class EmittedMessage:
    """One framed message plus the emulator's ground truth about it."""

    frame: bytes
    kind: E2MessageKind
    node_id: int
    cell_id: int | None = None
    records: tuple[KpmRecord, ...] = ()
    labels: tuple[GroundTruthLabel, ...] = ()
    injected: InjectedSignature | None = None


GROUND_TRUTH_CSV_HEADER = "ue_id,timestamp_ms,poisoned,af"


def write_ground_truth_csv(labels: Sequence[GroundTruthLabel], path) -> None:
    with open(path, "w") as fh:
        fh.write(GROUND_TRUTH_CSV_HEADER + "\n")
        for lab in labels:
            fh.write(f"{lab.ue_id},{lab.timestamp},{int(lab.poisoned)},{lab.af_used}\n")


def poison_records(
    records: Sequence[KpmRecord],
    targets: set[int],
    af: float,
    profiles: Mapping[int, UeProfile],
    rng: np.random.Generator,
    cov_af_squared: bool = False,
) -> tuple[list[KpmRecord], list[GroundTruthLabel]]:
    """Resample targeted records from the amplified distribution.

    Targeted records are redrawn i.i.d. from N(af*mu, af*cov) (or af^2*cov
    under the config switch) and clipped at zero; labels mark every record,
    poisoned or not. af = 1 leaves the distribution unchanged but the
    window is still labelled as attacked.
    """
    out: list[KpmRecord] = []
    labels: list[GroundTruthLabel] = []
    scale = af if cov_af_squared else np.sqrt(af)
    for rec in records:
        if rec.ue_id in targets:
            profile = profiles[rec.ue_id]
            factor = psd_factor(profile.cov)
            draw = af * profile.mu + scale * (factor @ rng.standard_normal(FEATURE_COUNT))
            values = np.clip(draw, 0.0, None)
            out.append(KpmRecord.from_features(rec.timestamp, rec.ue_id, values))
            labels.append(GroundTruthLabel(rec.ue_id, rec.timestamp, True, af))
        else:
            out.append(rec)
            labels.append(GroundTruthLabel(rec.ue_id, rec.timestamp, False, 1.0))
    return out, labels


def inject_signature(
    msg: E2Message, rulebook: SignatureSet, rng: np.random.Generator
) -> tuple[E2Message, InjectedSignature]:
    """Splice one uniformly chosen pattern at a uniform payload offset."""
    sig = rulebook.signatures[int(rng.integers(len(rulebook)))]
    offset = int(rng.integers(0, len(msg.payload) + 1))
    payload = msg.payload[:offset] + sig.pattern + msg.payload[offset:]
    return (
        replace(msg, payload=payload),
        InjectedSignature(sig_id=sig.sig_id, offset=offset),
    )


@dataclass
class _PoisonPlan:
    targets: tuple[int, ...] = ()
    ticks_by_ue: dict[int, frozenset[int]] = field(default_factory=dict)

    def targets_at(self, t: int) -> set[int]:
        return {ue for ue in self.targets if t in self.ticks_by_ue[ue]}


class RanEmulator:
    """Sequential scenario simulator.

    ``config.rng_seed`` pins the scenario identity — UE placement, slice
    assignment, per-UE baselines, and the choice of malicious nodes.
    ``run_seed`` (defaulting to the same value) drives the dynamics: noise,
    attack realisations, payload bytes. Repeating an experiment varies only
    the run seed, so all repetitions observe the same deployed network.
    """

    def __init__(self, config: ScenarioConfig, rulebook: SignatureSet | None = None,
                 run_seed: int | None = None) -> None:
        if config.malicious_node_fraction > 0 and rulebook is None:
            raise ValueError("malicious nodes need a rulebook to inject from")
        self.config = config
        self.rulebook = rulebook
        static_rng = np.random.default_rng(config.rng_seed)
        self._rng = np.random.default_rng(
            config.rng_seed if run_seed is None else run_seed
        )
        self._next_tick = 0

        cells = [
            (node, node * config.cells_per_node + c)
            for node in range(config.node_count)
            for c in range(config.cells_per_node)
        ]
        self.cells = cells

        if config.total_ues is not None:
            placement = static_rng.integers(0, len(cells), size=config.total_ues)
            ue_cells = [cells[int(i)] for i in placement]
        else:
            ue_cells = [cell for cell in cells for _ in range(config.ues_per_cell)]
        ue_count = len(ue_cells)

        slice_order = static_rng.permutation(ue_count)
        slices = [SliceKind.URLLC] * ue_count
        for rank, ue in enumerate(slice_order):
            if rank < (ue_count + 1) // 2:
                slices[int(ue)] = SliceKind.EMBB

        profiles = []
        for ue_id in range(ue_count):
            node_id, cell_id = ue_cells[ue_id]
            jitter = static_rng.uniform(1.0 - BASELINE_JITTER, 1.0 + BASELINE_JITTER,
                                        size=FEATURE_COUNT)
            mu = baseline_for(slices[ue_id]) * jitter
            profiles.append(
                UeProfile(
                    ue_id=ue_id,
                    slice_kind=slices[ue_id],
                    node_id=node_id,
                    cell_id=cell_id,
                    mu=mu,
                    cov=default_covariance(mu),
                )
            )
        self.profiles: tuple[UeProfile, ...] = tuple(profiles)
        self.profile_by_ue = {p.ue_id: p for p in profiles}

        self._mu = np.stack([p.mu for p in profiles])
        self._factor = np.stack([psd_factor(p.cov) for p in profiles])
        # stationary start: deviations begin at the marginal distribution
        self._dev = np.einsum(
            "uij,uj->ui", self._factor, self._rng.standard_normal((ue_count, FEATURE_COUNT))
        )

        malicious_count = int(round(config.malicious_node_fraction * config.node_count))
        chosen = static_rng.choice(config.node_count, size=malicious_count, replace=False)
        self.malicious_nodes = frozenset(int(n) for n in chosen)

        self._poison = self._build_poison_plan(ue_count)

    def _build_poison_plan(self, ue_count: int) -> _PoisonPlan:
        cfg = self.config
        target_count = int(round(cfg.poison_target_fraction * ue_count))
        if target_count == 0:
            return _PoisonPlan()
        targets = tuple(
            int(u) for u in self._rng.choice(ue_count, size=target_count, replace=False)
        )
        span = cfg.loops - MIN_POISON_START
        budget = int(cfg.poison_time_fraction * max(span, 0))
        ticks_by_ue: dict[int, frozenset[int]] = {}
        for ue in targets:
            covered: set[int] = set()
            draws = 0
            while len(covered) < budget and draws < 100:
                start = int(self._rng.integers(MIN_POISON_START, cfg.loops))
                length = int(self._rng.integers(8, 25))
                covered.update(range(start, min(start + length, cfg.loops)))
                draws += 1
            ticks_by_ue[ue] = frozenset(covered)
        return _PoisonPlan(targets=targets, ticks_by_ue=ticks_by_ue)

    @property
    def ue_count(self) -> int:
        return len(self.profiles)

    def generate_tick(self, t: int) -> tuple[list[KpmRecord], list[GroundTruthLabel]]:
        """All UEs' records for tick ``t``; must be called in tick order."""
        if t >= self.config.loops:
            raise ValueError(f"tick {t} outside the configured {self.config.loops} loops")
        if t != self._next_tick:
            raise ValueError(f"ticks must be generated in order (expected {self._next_tick})")
        self._next_tick += 1

        noise = self._rng.standard_normal(self._dev.shape)
        innovation = np.sqrt(1.0 - AR_COEFFICIENT**2) * np.einsum(
            "uij,uj->ui", self._factor, noise
        )
        self._dev = AR_COEFFICIENT * self._dev + innovation
        values = np.clip(self._mu + self._dev, 0.0, None)

        timestamp = t * TICK_MS
        records = [
            KpmRecord.from_features(timestamp, ue_id, values[ue_id])
            for ue_id in range(self.ue_count)
        ]
        targets_now = self._poison.targets_at(t)
        records, labels = poison_records(
            records,
            targets_now,
            self.config.amplification_factor,
            self.profile_by_ue,
            self._rng,
            cov_af_squared=self.config.poison_cov_af_squared,
        )
        return records, labels

    def _emit(self, kind: E2MessageKind, node_id: int, payload: bytes,
              cell_id: int | None = None, records: tuple[KpmRecord, ...] = (),
              labels: tuple[GroundTruthLabel, ...] = ()) -> EmittedMessage:
        msg = E2Message(kind=kind, source_node_id=node_id, payload=payload)
        injected = None
        if (
            self.rulebook is not None
            and node_id in self.malicious_nodes
            and self._rng.random() < self.config.malicious_message_fraction
        ):
            msg, injected = inject_signature(msg, self.rulebook, self._rng)
        return EmittedMessage(
            frame=encode_frame(msg),
            kind=kind,
            node_id=node_id,
            cell_id=cell_id,
            records=records,
            labels=labels,
            injected=injected,
        )

    def step(self, t: int) -> list[EmittedMessage]:
        """Emit one tick's messages: setup exchange at t=0, one indication
        per non-empty cell each tick, teardown responses on the last tick."""
        cfg = self.config
        out: list[EmittedMessage] = []
        if t == 0:
            for node in range(cfg.node_count):
                out.append(self._emit(E2MessageKind.SETUP_REQUEST, node,
                                      self._rng.bytes(SETUP_REQUEST_BYTES)))
                out.append(self._emit(E2MessageKind.SUBSCRIPTION_RESPONSE, node,
                                      self._rng.bytes(SUBSCRIPTION_RESPONSE_BYTES)))

        records, labels = self.generate_tick(t)
        by_cell: dict[int, list[int]] = {}
        for idx, rec in enumerate(records):
            by_cell.setdefault(self.profile_by_ue[rec.ue_id].cell_id, []).append(idx)

        for node_id, cell_id in self.cells:
            indices = by_cell.get(cell_id)
            if not indices:
                continue  # empty cells have nothing to report
            cell_records = tuple(records[i] for i in indices)
            cell_labels = tuple(labels[i] for i in indices)
            if cfg.size_calibrated:
                payload = calibrated_indication_payload(len(indices), self._rng)
            else:
                payload = encode_kpm_payload(
                    KpmReportPayload(node_id=node_id, cell_id=cell_id, records=cell_records)
                )
            out.append(self._emit(E2MessageKind.INDICATION, node_id, payload,
                                  cell_id=cell_id, records=cell_records, labels=cell_labels))

        if t == cfg.loops - 1:
            for node in range(cfg.node_count):
                out.append(self._emit(E2MessageKind.SUBSCRIPTION_DELETE_RESPONSE, node,
                                      self._rng.bytes(SUBSCRIPTION_DELETE_RESPONSE_BYTES)))
        return out
