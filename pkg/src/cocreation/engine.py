"""Co-creation engine: the deterministic shell around agent backends.

The engine owns the stage machine and every grounding decision.  Backends
only ever produce turns; their product references are re-resolved against
the catalog, their arithmetic is replaced by engine quotes, and their only
path to actuation is the policy-gated tool surface.
"""

from __future__ import annotations

import json
import re
import time
import uuid
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Union

from .backends.base import AgentBackend, ChatTurn, last_block_with
from .catalog import Catalog, quote, resolve_offering
from .errors import (
    Ambiguous,
    BackendError,
    BackendTimeout,
    EmptyIntent,
    IntegrityError,
    InvalidDate,
    InvalidSelection,
    NoGroundedLookup,
    NotConfirmed,
    NotFound,
    PolicyDenied,
    StageError,
    TerminalStage,
    ToolCallingUnsupported,
)
from .gateway import ToolCall, ToolGateway
from .memory import ACTOR_ENGINE, ACTOR_USER, ConstraintSnapshot, MemoryStore
from .money import extract_budget_cents, extract_duration_days
from .session import (
    DialogueSession,
    IntentContract,
    Proposal,
    QosConstraint,
    TemporalSpec,
    TRAJECTORIES,
    new_session_id,
)

DEFAULT_IDLE_TIMEOUT_SECONDS = 1200.0  # matches the observed 20-minute cutoff
DEFAULT_MAX_TURNS = 16

_SLICE_PROFILES = ("eMBB", "URLLC", "mMTC")

_AFFIRMATIVES = frozenset({
    "yes", "y", "confirm", "confirmed", "i confirm", "confirm the order",
    "place the order", "place order", "ok", "okay", "proceed", "go ahead",
})

_TOOL_ATTEMPT = re.compile(
    r"(?:<tool_call|```tool|\"function_call\"|\"tool_calls\"|"
    r"\b(?:catalog\.(?:search|get|decompose)|cost\.quote|order\.place)\s*\(|"
    r"\b(?:catalog_search|catalog_get|catalog_decompose|cost_quote|order_place)"
    r"\s*\()")


def load_system_prompt() -> str:
    path = Path(__file__).parent / "data" / "system_prompt.md"
    return path.read_text(encoding="utf-8")


def find_slice_profile(text: str) -> Optional[str]:
    for profile in _SLICE_PROFILES:
        if re.search(rf"\b{re.escape(profile)}\b", text, re.IGNORECASE):
            return profile
    return None


class CoCreationEngine:
    """Session operations Q1-Q5 plus the tool-mediated reasoning loop."""

    def __init__(self, catalog: Catalog, gateway: ToolGateway, store: MemoryStore,
                 clock: Optional[Callable[[], float]] = None,
                 wall_clock: Optional[Callable[[], str]] = None,
                 idle_timeout_seconds: float = DEFAULT_IDLE_TIMEOUT_SECONDS,
                 max_turns: int = DEFAULT_MAX_TURNS):
        self.catalog = catalog
        self.gateway = gateway
        self.store = store
        self._clock = clock or time.monotonic
        self._wall = wall_clock or (lambda: datetime.now(timezone.utc).isoformat())
        self.idle_timeout_seconds = idle_timeout_seconds
        self.max_turns = max_turns
        self.sessions: dict = {}

    # -- Q1: ingestion ---------------------------------------------------------

    def open_session(self, intent_text: str, trajectory: Optional[str] = None,
                     session_id: Optional[str] = None,
                     default_parameters: Optional[dict] = None,
                     created_at: Optional[str] = None) -> DialogueSession:
        if not intent_text or not intent_text.strip():
            raise EmptyIntent("intent text is empty")
        trajectory = trajectory or "OrderManagement"
        if trajectory not in TRAJECTORIES:
            raise ValueError(f"unknown trajectory: {trajectory}")
        session = DialogueSession(
            session_id=session_id or new_session_id(),
            goal_text=intent_text.strip(),
            created_at=created_at or self._wall(),
            trajectory=trajectory,
            default_parameters=default_parameters,
        )
        session.emit("StageChanged", {"stage": "Q1_Ingestion"}, session.created_at)
        session.transcript.append(ChatTurn("System", load_system_prompt()))
        session.transcript.append(ChatTurn(
            "User", session.contract.goal_text, meta={"phase": "ground"}))
        self.store.init_working_state(session.session_id)
        self.store.record_decision(
            session.session_id, stage="Q1_Ingestion", actor=ACTOR_USER,
            summary=f"intent submitted; trajectory {trajectory}")
        self.sessions[session.session_id] = session
        return session

    def get_session(self, session_id: str) -> DialogueSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise NotFound(session_id)
        return session

    # -- Q1 -> Q2: grounding ---------------------------------------------------

    def ground_intent(self, session: DialogueSession,
                      backend: AgentBackend) -> IntentContract:
        with session.lock:
            session.require_stage("Q1_Ingestion")
            started = self._clock()
            try:
                final = self._drive(session, backend)
            except BackendError as err:
                session.add_timing("Q1_Ingestion", self._clock() - started)
                self._abort_for_backend_error(session, err)
                raise
            session.add_timing("Q1_Ingestion", self._clock() - started)
            self._apply_grounding(session, final)
            session.contract.advance_status("Grounded")
            session.advance_stage("Q2_Alternatives", self._wall())
            self.store.record_decision(
                session.session_id, stage="Q1_Ingestion", actor=ACTOR_ENGINE,
                summary=self._grounding_summary(session.contract))
            return session.contract

    def _apply_grounding(self, session: DialogueSession, final: ChatTurn) -> None:
        """Backend extraction, then deterministic overrides for explicit numbers."""
        contract = session.contract
        intent = last_block_with(final.content, "intent") or {}
        location = str(intent.get("location") or "").strip()
        contract.location = location or "unspecified"
        qos = []
        for item in intent.get("qosConstraints") or ():
            try:
                qos.append(QosConstraint.from_dict(item))
            except (TypeError, ValueError):
                continue
        contract.qos_constraints = tuple(qos)
        contract.policy_constraints = tuple(
            str(p) for p in intent.get("policyConstraints") or ())
        contract.budget_period = str(intent.get("budgetPeriod") or "")

        backend_budget = intent.get("budgetCents")
        contract.budget_cents = (int(backend_budget)
                                 if isinstance(backend_budget, int) else None)
        extracted = extract_budget_cents(contract.goal_text)
        if extracted is not None:
            contract.budget_cents = extracted

        backend_duration = intent.get("durationDaysHint")
        contract.duration_hint_days = (int(backend_duration)
                                       if isinstance(backend_duration, int) else None)
        duration = extract_duration_days(contract.goal_text)
        if duration is not None:
            contract.duration_hint_days = duration

        stated = find_slice_profile(contract.goal_text)
        contract.slice_profile = stated or (
            str(intent["sliceProfile"]) if intent.get("sliceProfile") else None)

    @staticmethod
    def _grounding_summary(contract: IntentContract) -> str:
        budget = (f"{contract.budget_cents} cents"
                  if contract.budget_cents is not None else "unstated")
        duration = (f"{contract.duration_hint_days} days"
                    if contract.duration_hint_days else "unstated")
        return (f"intent grounded: location {contract.location}, budget {budget}, "
                f"duration hint {duration} (numerals taken from the intent text)")

    # -- Q2: alternatives --------------------------------------------------------

    def propose_alternatives(self, session: DialogueSession, backend: AgentBackend,
                             user_text: Optional[str] = None) -> list:
        with session.lock:
            session.require_stage("Q2_Alternatives")
            ledger_start = len(session.tool_ledger.entries)
            session.transcript.append(ChatTurn(
                "User",
                user_text or "Which product combinations from the catalog "
                             "would cover this? Please propose alternatives.",
                meta={"phase": "propose", "contract": session.contract.as_dict()},
            ))
            started = self._clock()
            try:
                final = self._drive(session, backend)
            except BackendError as err:
                session.add_timing("Q2_Alternatives", self._clock() - started)
                self._abort_for_backend_error(session, err)
                raise
            session.add_timing("Q2_Alternatives", self._clock() - started)

            proposals_data = last_block_with(final.content, "proposals") or []
            grounding = self._grounding_evidence(session, ledger_start)
            if proposals_data and not grounding:
                self.store.record_decision(
                    session.session_id, stage="Q2_Alternatives", actor=ACTOR_ENGINE,
                    summary="proposals rejected: no catalog lookup before mapping")
                raise NoGroundedLookup(
                    "backend proposed products without any catalog lookup")
            stored = []
            for entry in proposals_data:
                proposal = self._build_proposal(session, entry, grounding)
                if proposal is None:
                    continue
                session.proposals.append(proposal)
                stored.append(proposal)
                now = self._wall()
                session.emit("ProposalAdded", {
                    "proposalId": proposal.proposal_id,
                    "bundleNames": [list(p) for p in proposal.bundle_names],
                    "totalCostCents": proposal.quote["totalCostCents"],
                }, now)
                session.emit("QuoteUpdated", {
                    "proposalId": proposal.proposal_id,
                    "totalCostCents": proposal.quote["totalCostCents"],
                    "withinBudget": proposal.quote["withinBudget"],
                }, now)
            if stored:
                session.contract.advance_status("Proposed")
            self.store.record_decision(
                session.session_id, stage="Q2_Alternatives", actor=ACTOR_ENGINE,
                summary=f"{len(stored)} proposals stored",
                references=[p.proposal_id for p in stored])
            return stored

    def _grounding_evidence(self, session: DialogueSession,
                            ledger_start: int) -> tuple:
        evidence = []
        for call, result in session.tool_ledger.entries[ledger_start:]:
            if result.status != "Ok" or result.payload.get("error"):
                continue
            if call.tool_name in ("catalog.search", "catalog.get"):
                evidence.append(call.call_id)
        return tuple(evidence)

    def _build_proposal(self, session: DialogueSession, entry,
                        grounding: tuple) -> Optional[Proposal]:
        if not isinstance(entry, dict):
            return None
        bundle_ids: list = []
        names: list = []
        for ref in entry.get("items") or ():
            reference = self._normalize_reference(ref)
            if reference is None:
                continue
            try:
                offering = resolve_offering(self.catalog, reference)
            except (NotFound, Ambiguous):
                shown = self._reference_label(ref)
                if shown and session.record_finding("hallucination", shown):
                    session.emit("HallucinationFinding",
                                 {"name": shown, "channel": "proposal"},
                                 self._wall())
                continue
            if offering.id not in bundle_ids:
                bundle_ids.append(offering.id)
                names.append((offering.name, offering.tier))
        if not bundle_ids:
            return None
        duration = session.contract.duration_hint_days or 1
        engine_quote = quote(self.catalog, bundle_ids, duration,
                             budget_cents=session.contract.budget_cents)
        return Proposal(
            proposal_id=f"prop-{len(session.proposals) + 1}",
            bundle=tuple(bundle_ids),
            bundle_names=tuple(names),
            quote=engine_quote.as_dict(),
            rationale=str(entry.get("rationale") or ""),
            grounding_evidence=grounding,
        )

    @staticmethod
    def _normalize_reference(ref) -> Optional[Union[str, dict]]:
        if isinstance(ref, str) and ref.strip():
            return {"name": ref.strip(), "tier": None}
        if isinstance(ref, dict):
            if ref.get("id"):
                return str(ref["id"])
            if ref.get("name"):
                return {"name": str(ref["name"]), "tier": ref.get("tier")}
        return None

    @staticmethod
    def _reference_label(ref) -> str:
        if isinstance(ref, str):
            return ref.strip()
        if isinstance(ref, dict):
            name = str(ref.get("name") or ref.get("id") or "").strip()
            return name
        return ""

    # -- Q3: combination decision --------------------------------------------------

    def select_combination(self, session: DialogueSession,
                           selection) -> DialogueSession:
        with session.lock:
            session.require_stage("Q2_Alternatives")
            if isinstance(selection, int):
                if not 0 <= selection < len(session.proposals):
                    raise InvalidSelection(
                        f"proposal index {selection} out of range "
                        f"({len(session.proposals)} stored)")
                bundle = session.proposals[selection].bundle
                label = f"proposal {selection}"
            else:
                bundle = []
                for ref in selection:
                    reference = self._normalize_reference(ref)
                    try:
                        offering = resolve_offering(self.catalog, reference)
                    except (NotFound, Ambiguous) as err:
                        raise InvalidSelection(
                            f"bundle item does not resolve: {err}") from err
                    if offering.id not in bundle:
                        bundle.append(offering.id)
                if not bundle:
                    raise InvalidSelection("explicit bundle is empty")
                label = "explicit bundle"
            session.selected = tuple(bundle)
            now = self._wall()
            session.advance_stage("Q3_Combination", now)
            session.advance_stage("Q4_Temporal", self._wall())
            self.store.record_decision(
                session.session_id, stage="Q3_Combination", actor=ACTOR_USER,
                summary=f"combination fixed from {label}",
                references=list(session.selected))
            return session

    # -- Q4: temporal specification ---------------------------------------------------

    def set_temporal(self, session: DialogueSession, spec) -> DialogueSession:
        with session.lock:
            session.require_stage("Q4_Temporal")
            parsed = self._parse_temporal(session, spec)
            session.temporal = parsed
            engine_quote = quote(self.catalog, list(session.selected),
                                 parsed.duration_days,
                                 budget_cents=session.contract.budget_cents)
            over_budget = engine_quote.within_budget is False
            session.budget_warning = over_budget
            session.emit("QuoteUpdated", {
                "totalCostCents": engine_quote.total_cents,
                "durationDays": parsed.duration_days,
                "withinBudget": engine_quote.within_budget,
                "budgetWarning": over_budget,
            }, self._wall())
            session.advance_stage("Q5_Confirmation", self._wall())
            self.store.record_decision(
                session.session_id, stage="Q4_Temporal", actor=ACTOR_USER,
                summary=(f"lifecycle set: start {parsed.start_date}, "
                         f"{parsed.duration_days} days"
                         + ("; budget exceeded, user warned" if over_budget else "")))
            return session

    def _parse_temporal(self, session: DialogueSession, spec) -> TemporalSpec:
        if isinstance(spec, TemporalSpec):
            start_raw, duration_raw = spec.start_date, spec.duration_days
        elif isinstance(spec, dict):
            start_raw = spec.get("startDate")
            duration_raw = spec.get("durationDays")
        else:
            raise InvalidDate(f"unsupported temporal value: {spec!r}")
        try:
            start = date.fromisoformat(str(start_raw))
        except (TypeError, ValueError):
            raise InvalidDate(f"not a calendar date: {start_raw!r}") from None
        try:
            duration = int(duration_raw)
        except (TypeError, ValueError):
            raise InvalidDate(f"not a day count: {duration_raw!r}") from None
        if duration < 1:
            raise InvalidDate("duration must be at least one day")
        created = date.fromisoformat(session.created_at[:10])
        if start < created:
            raise InvalidDate(
                f"start {start.isoformat()} is before the session date "
                f"{created.isoformat()}")
        return TemporalSpec(start.isoformat(), duration)

    def relay_temporal(self, session: DialogueSession, backend: AgentBackend,
                       user_text: str) -> DialogueSession:
        """Q4 through the backend: the model echoes the lifecycle it heard.

        Date mistakes made here are the model's own and score accordingly;
        the structured set_temporal path stays available to interfaces.
        """
        with session.lock:
            session.require_stage("Q4_Temporal")
            session.transcript.append(ChatTurn(
                "User", user_text, meta={"phase": "temporal"}))
            started = self._clock()
            try:
                final = self._drive(session, backend)
            except BackendError as err:
                session.add_timing("Q4_Temporal", self._clock() - started)
                self._abort_for_backend_error(session, err)
                raise
            session.add_timing("Q4_Temporal", self._clock() - started)
            block = last_block_with(final.content, "temporal")
            if not isinstance(block, dict):
                err = BackendError("backend reply carries no temporal "
                                   "specification", cause="protocol")
                self._abort_for_backend_error(session, err)
                raise err
            return self.set_temporal(session, block)

    # -- Q5: serialization and confirmation ----------------------------------------------

    def build_order_draft(self, session: DialogueSession):
        with session.lock:
            session.require_stage("Q5_Confirmation")
            if not session.selected or session.temporal is None:
                raise StageError("order draft needs a selected bundle and dates")
            draft = self.gateway.serialize_order(session)
            session.order_draft = draft
            session.emit("DraftReady", {
                "orderId": draft.order_id,
                "totalCostCents": draft.total_cost_cents,
                "durationDays": draft.duration_days,
            }, self._wall())
            self.store.record_decision(
                session.session_id, stage="Q5_Confirmation", actor=ACTOR_ENGINE,
                summary=f"order draft serialized, total {draft.total_cost_cents} "
                        f"cents", references=[draft.order_id])
            return draft

    def review_draft(self, session: DialogueSession, backend: AgentBackend,
                     user_text: Optional[str] = None) -> ChatTurn:
        """Ask the backend to present the draft; the reply is the final
        pre-confirmation turn used by cost scoring."""
        with session.lock:
            session.require_stage("Q5_Confirmation")
            if session.order_draft is None:
                raise StageError("no order draft to review")
            draft_doc = session.order_draft.canonical_dict()
            content = user_text or (
                "Here is the serialized order draft:\n```json\n"
                + json.dumps(draft_doc, indent=2, ensure_ascii=False)
                + "\n```\nPlease present the final summary with the total "
                  "cost and wait for my explicit confirmation.")
            session.transcript.append(ChatTurn(
                "User", content, meta={"phase": "review", "draft": draft_doc}))
            started = self._clock()
            try:
                final = self._drive(session, backend)
            except BackendError as err:
                session.add_timing("Q5_Confirmation", self._clock() - started)
                self._abort_for_backend_error(session, err)
                raise
            session.add_timing("Q5_Confirmation", self._clock() - started)
            return final

    def confirm(self, session: DialogueSession, user_confirmation):
        with session.lock:
            if session.stage != "Q5_Confirmation" or session.order_draft is None:
                raise NotConfirmed(
                    f"confirmation is only accepted at the review stage "
                    f"with a draft present (session at {session.stage})")
            if not self._is_affirmative(user_confirmation):
                raise NotConfirmed("confirmation must be an explicit affirmative")
            token = self.gateway.mint_token(session.session_id)
            call = ToolCall.fresh("order.place",
                                  {"confirmationToken": token.token_id},
                                  session.session_id, session.stage)
            result = self.gateway.invoke(call, session)
            if result.status == "Denied":
                raise PolicyDenied(result.rule_id or "R4",
                                   result.payload.get("reason", "denied"))
            if result.status != "Ok":
                raise IntegrityError(
                    f"order placement failed: {result.payload}")
            record = self._record_by_id(result.payload["recordId"])
            session.order_record_id = record.record_id
            session.contract.advance_status("Confirmed")
            session.advance_stage("Confirmed", self._wall())
            session.emit("OrderPlaced", {
                "orderId": record.payload.order_id,
                "recordId": record.record_id,
                "totalCostCents": record.payload.total_cost_cents,
            }, self._wall())
            self.store.record_decision(
                session.session_id, stage="Q5_Confirmation", actor=ACTOR_USER,
                summary="order confirmed and placed",
                references=[record.payload.order_id, call.call_id])
            self._checkpoint(session)
            return record

    def _record_by_id(self, record_id: int):
        for record in self.gateway.inventory.records():
            if record.record_id == record_id:
                return record
        raise IntegrityError(f"order record {record_id} missing from inventory")

    @staticmethod
    def _is_affirmative(value) -> bool:
        if value is True:
            return True
        if isinstance(value, str):
            return value.strip().casefold() in _AFFIRMATIVES
        return False

    def _checkpoint(self, session: DialogueSession) -> None:
        contract = session.contract
        constraints = []
        if contract.location and contract.location != "unspecified":
            constraints.append(ConstraintSnapshot("cityName", contract.location,
                                                  ACTOR_USER))
        if contract.budget_cents is not None:
            constraints.append(ConstraintSnapshot("budgetCents",
                                                  contract.budget_cents, ACTOR_USER))
        if contract.slice_profile:
            constraints.append(ConstraintSnapshot("sliceProfile",
                                                  contract.slice_profile, ACTOR_USER))
        composition = None
        if session.order_draft is not None:
            composition = {
                "orderId": session.order_draft.order_id,
                "orderDraft": session.order_draft.canonical_dict(),
                "bundle": list(session.selected),
                "decompositions": {
                    offering_id: self._decomposition_reference(offering_id)
                    for offering_id in session.selected
                },
            }
        self.store.checkpoint(
            session.session_id,
            canonical_intent=contract.as_dict(),
            constraints=constraints,
            derived_composition=composition,
        )

    def _decomposition_reference(self, offering_id: str) -> list:
        from .catalog import decompose_offering

        tree = decompose_offering(self.catalog, offering_id)
        return [s.spec_id for s in tree.services]

    # -- abort ------------------------------------------------------------------

    def abort(self, session: DialogueSession, reason: str,
              cause: str = "aborted") -> DialogueSession:
        with session.lock:
            if session.is_terminal():
                raise TerminalStage(f"session is {session.stage}")
            session.abort_reason = reason
            session.failure_cause = {
                "timeout": "Timeout",
                "tool-calling-unsupported": "ToolCallingUnsupported",
            }.get(cause, "Aborted")
            session.contract.advance_status("Aborted")
            now = self._wall()
            session.stage = "Aborted"
            session.emit("StageChanged", {"stage": "Aborted"}, now)
            session.emit("Aborted", {"reason": reason, "cause": cause}, now)
            self.store.record_decision(
                session.session_id, stage="Aborted", actor=ACTOR_ENGINE,
                summary=f"session aborted: {reason}")
            return session

    def _abort_for_backend_error(self, session: DialogueSession,
                                 err: BackendError) -> None:
        if not session.is_terminal():
            self.abort(session, str(err), cause=err.cause)

    # -- the mediated loop ---------------------------------------------------------

    def _drive(self, session: DialogueSession, backend: AgentBackend) -> ChatTurn:
        """Run backend turns, executing tool calls, until a final text turn.

        Malformed tool-call text gets one corrective retry before the backend
        is classified as unable to call tools.
        """
        tools = self.gateway.list_tools()
        retried = False
        for _ in range(self.max_turns):
            started = self._clock()
            turn = backend.complete(tuple(session.transcript), tools)
            if self._clock() - started > self.idle_timeout_seconds:
                raise BackendTimeout(
                    f"backend exceeded the idle timeout of "
                    f"{self.idle_timeout_seconds:.0f}s")
            if turn.role != "Assistant":
                raise BackendError(
                    f"backend produced a {turn.role} turn", cause="protocol")
            session.transcript.append(turn)
            if turn.content:
                self._audit_text(session, turn.content)
            if turn.tool_calls:
                for request in turn.tool_calls:
                    self._execute_tool_call(session, request)
                continue
            if _TOOL_ATTEMPT.search(turn.content or ""):
                if retried:
                    raise ToolCallingUnsupported()
                retried = True
                session.transcript.append(ChatTurn(
                    "System",
                    "That looked like a tool call written as text. Emit "
                    "structured tool calls instead, or answer in plain text."))
                continue
            return turn
        raise BackendError("backend exceeded the turn budget for one reply",
                           cause="turn-limit")

    def _execute_tool_call(self, session: DialogueSession, request) -> None:
        tool_name = request.name
        if "." not in tool_name:
            tool_name = tool_name.replace("_", ".")
        call = ToolCall(
            call_id=request.call_id or f"call-{uuid.uuid4().hex[:12]}",
            tool_name=tool_name,
            arguments=dict(request.arguments or {}),
            session_id=session.session_id,
            stage_at_call=session.stage,
        )
        result = self.gateway.invoke(call, session)
        session.transcript.append(ChatTurn(
            "Tool",
            json.dumps({"status": result.status, "ruleId": result.rule_id,
                        "payload": result.payload}, ensure_ascii=False),
            tool_result_for=call.call_id,
        ))

    def _audit_text(self, session: DialogueSession, text: str) -> None:
        findings = self.gateway.audit_response(text)
        for name in findings.hallucinated:
            if session.record_finding("hallucination", name):
                session.emit("HallucinationFinding",
                             {"name": name, "channel": "text"}, self._wall())
        for name in findings.lower_layer:
            session.record_finding("lower_layer", name)
