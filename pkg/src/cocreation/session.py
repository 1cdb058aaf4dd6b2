"""Dialogue session state: canonical intent contract and the Q1-Q5 stages.

The session object is pure state plus guarded transitions; all reasoning and
tool mediation happens in the engine.  One session has one writer at a time:
public engine operations take the session's lock.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from typing import Optional

from .errors import StageError, TerminalStage
from .gateway import OrderPayload, ToolLedger

STAGES = (
    "Q1_Ingestion",
    "Q2_Alternatives",
    "Q3_Combination",
    "Q4_Temporal",
    "Q5_Confirmation",
    "Confirmed",
)
TERMINAL_STAGES = ("Confirmed", "Aborted")

TRAJECTORIES = ("OrderManagement", "ServiceResourceSupport", "Troubleshooting")

CONTRACT_STATUSES = ("Draft", "Grounded", "Proposed", "Confirmed", "Aborted")

EVENT_TYPES = (
    "StageChanged",
    "ProposalAdded",
    "HallucinationFinding",
    "QuoteUpdated",
    "DraftReady",
    "OrderPlaced",
    "Aborted",
)


@dataclass(frozen=True)
class QosConstraint:
    metric: str
    comparator: str
    value: float
    unit: str = ""

    def as_dict(self) -> dict:
        return {"metric": self.metric, "comparator": self.comparator,
                "value": self.value, "unit": self.unit}

    @staticmethod
    def from_dict(doc: dict) -> "QosConstraint":
        return QosConstraint(
            metric=str(doc.get("metric", "")),
            comparator=str(doc.get("comparator", "")),
            value=float(doc.get("value", 0)),
            unit=str(doc.get("unit", "")),
        )


@dataclass
class IntentContract:
    goal_text: str
    qos_constraints: tuple = ()
    location: Optional[str] = None
    budget_cents: Optional[int] = None
    budget_period: str = ""
    duration_hint_days: Optional[int] = None
    policy_constraints: tuple = ()
    slice_profile: Optional[str] = None
    status: str = "Draft"

    def advance_status(self, status: str) -> None:
        order = {s: i for i, s in enumerate(CONTRACT_STATUSES[:-1])}
        if status == "Aborted":
            self.status = status
            return
        if status not in order or order[status] < order.get(self.status, 0):
            raise StageError(
                f"contract status cannot move {self.status} -> {status}")
        self.status = status

    def as_dict(self) -> dict:
        return {
            "goalText": self.goal_text,
            "qosConstraints": [q.as_dict() for q in self.qos_constraints],
            "location": self.location,
            "budgetCents": self.budget_cents,
            "budgetPeriod": self.budget_period,
            "durationHintDays": self.duration_hint_days,
            "policyConstraints": list(self.policy_constraints),
            "sliceProfile": self.slice_profile,
            "status": self.status,
        }


@dataclass(frozen=True)
class TemporalSpec:
    start_date: str
    duration_days: int

    def as_dict(self) -> dict:
        return {"startDate": self.start_date, "durationDays": self.duration_days}


@dataclass(frozen=True)
class Proposal:
    proposal_id: str
    bundle: tuple  # offering ids, all catalog-resolved
    bundle_names: tuple  # (name, tier) pairs for display and scoring
    quote: dict  # engine-computed CostQuote dict; authoritative
    rationale: str
    grounding_evidence: tuple = ()  # tool call ids

    def as_dict(self) -> dict:
        return {
            "proposalId": self.proposal_id,
            "bundle": list(self.bundle),
            "bundleNames": [list(p) for p in self.bundle_names],
            "quote": self.quote,
            "rationale": self.rationale,
            "groundingEvidence": list(self.grounding_evidence),
        }


@dataclass(frozen=True)
class SelectedItem:
    offering_id: str
    parameters: dict


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    event_type: str
    session_id: str
    timestamp: str
    data: dict

    def as_dict(self) -> dict:
        return {
            "seq": self.seq,
            "type": self.event_type,
            "sessionId": self.session_id,
            "timestamp": self.timestamp,
            "data": self.data,
        }


class DialogueSession:
    """Single co-creation dialogue; see the engine for its operations."""

    def __init__(self, session_id: str, goal_text: str, created_at: str,
                 trajectory: str = "OrderManagement",
                 default_parameters: Optional[dict] = None):
        self.session_id = session_id
        self.created_at = created_at
        self.trajectory = trajectory
        self.stage = "Q1_Ingestion"
        self.contract = IntentContract(goal_text=goal_text)
        self.transcript: list = []
        self.proposals: list = []
        self.selected: tuple = ()
        self.temporal: Optional[TemporalSpec] = None
        self.order_draft: Optional[OrderPayload] = None
        self.order_record_id: Optional[int] = None
        self.timings: dict = {}
        self.events: list = []
        self.tool_ledger = ToolLedger()
        self.hallucinations: list = []
        self.lower_layer_mentions: list = []
        self.budget_warning = False
        self.abort_reason: Optional[str] = None
        self.failure_cause: Optional[str] = None
        self.default_parameters = dict(default_parameters or {})
        self.lock = threading.RLock()
        self._stage_history: list = []

    # -- stage machine ---------------------------------------------------------

    @property
    def stage_history(self) -> tuple:
        return tuple(self._stage_history)

    def is_terminal(self) -> bool:
        return self.stage in TERMINAL_STAGES

    def require_stage(self, stage: str) -> None:
        if self.is_terminal():
            raise TerminalStage(f"session is {self.stage}")
        if self.stage != stage:
            raise StageError(f"operation requires stage {stage}, "
                             f"session is at {self.stage}")

    def advance_stage(self, stage: str, clock_iso: str) -> SessionEvent:
        """Move forward only; Aborted is reachable from any live stage."""
        if self.stage == stage:
            raise StageError(f"already at {stage}")
        if stage == "Aborted":
            if self.is_terminal():
                raise TerminalStage(f"session is {self.stage}")
        else:
            if self.is_terminal():
                raise TerminalStage(f"session is {self.stage}")
            if STAGES.index(stage) < STAGES.index(self.stage):
                raise StageError(f"stage cannot move back to {stage}")
        self.stage = stage
        return self.emit("StageChanged", {"stage": stage}, clock_iso)

    def emit(self, event_type: str, data: dict, timestamp: str) -> SessionEvent:
        if event_type not in EVENT_TYPES:
            raise ValueError(f"unknown event type: {event_type}")
        event = SessionEvent(
            seq=len(self.events) + 1,
            event_type=event_type,
            session_id=self.session_id,
            timestamp=timestamp,
            data=data,
        )
        self.events.append(event)
        if event_type == "StageChanged":
            self._stage_history.append(data["stage"])
        return event

    # -- derived views -----------------------------------------------------------

    def parameter_value(self, name: str) -> Optional[str]:
        """Order parameter binding: contract first, scenario defaults second."""
        if name == "cityName":
            loc = self.contract.location
            return None if loc in (None, "", "unspecified") else loc
        if name == "sliceProfile" and self.contract.slice_profile:
            return self.contract.slice_profile
        value = self.default_parameters.get(name)
        return None if value in (None, "") else value

    @property
    def selected_items(self) -> tuple:
        items = []
        for offering_id in self.selected:
            params = {}
            for key in ("cityName", "sliceProfile"):
                value = self.parameter_value(key)
                if value is not None:
                    params[key] = value
            items.append(SelectedItem(offering_id, params))
        return tuple(items)

    def record_finding(self, kind: str, name: str) -> bool:
        """Dedup by normalized name; True when newly recorded."""
        store = (self.hallucinations if kind == "hallucination"
                 else self.lower_layer_mentions)
        key = name.casefold()
        if any(existing.casefold() == key for existing in store):
            return False
        store.append(name)
        return True

    def add_timing(self, stage: str, seconds: float) -> None:
        self.timings[stage] = self.timings.get(stage, 0.0) + seconds

    def as_dict(self) -> dict:
        return {
            "sessionId": self.session_id,
            "createdAt": self.created_at,
            "trajectory": self.trajectory,
            "stage": self.stage,
            "contract": self.contract.as_dict(),
            "proposals": [p.as_dict() for p in self.proposals],
            "selected": list(self.selected),
            "temporal": self.temporal.as_dict() if self.temporal else None,
            "orderDraft": (self.order_draft.canonical_dict()
                           if self.order_draft else None),
            "orderRecordId": self.order_record_id,
            "findings": {
                "hallucinated": list(self.hallucinations),
                "lowerLayer": list(self.lower_layer_mentions),
                "directOrderAttempts": len(self.tool_ledger.direct_order_attempts),
            },
            "budgetWarning": self.budget_warning,
            "abortReason": self.abort_reason,
            "failureCause": self.failure_cause,
            "timings": dict(self.timings),
            "stageHistory": list(self._stage_history),
        }


def new_session_id() -> str:
    return f"ses-{uuid.uuid4().hex[:16]}"
