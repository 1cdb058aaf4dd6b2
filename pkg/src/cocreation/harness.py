"""Scenario harness: run one dialogue end to end and score the outcome.

A run owns its whole world (memory root, order inventory, engine), so runs
never share state.  Backend failures are captured as outcome fields, not
exceptions: a model that cannot finish the flow still produces a scored
outcome row.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Optional, Sequence

from .backends import AgentBackend, ReplayBackend
from .catalog import Catalog, load_catalog, resolve_offering
from .engine import CoCreationEngine
from .errors import (
    BackendError,
    IntegrityError,
    InvalidDate,
    InvalidSelection,
    NoGroundedLookup,
    NotConfirmed,
    PolicyDenied,
    StageError,
)
from .gateway import OrderInventory, ToolGateway
from .memory import MemoryStore
from .money import last_stated_total_cents
from .session import DialogueSession

SCENARIO_SCHEMA_VERSION = "1"
OUTCOME_SCHEMA_VERSION = "1"


# -- scenario ------------------------------------------------------------------


@dataclass(frozen=True)
class UserScript:
    propose_text: str
    select: str
    temporal_template: str
    confirm_text: str


@dataclass(frozen=True)
class GroundTruth:
    expected_bundle: tuple  # (name, tier) pairs
    budget_cents: int
    duration_days: int
    start_date_offset_days: int
    city: str
    expected_parameters: dict

    @property
    def expected_names(self) -> frozenset:
        return frozenset(name.casefold() for name, _ in self.expected_bundle)

    def resolve_start_date(self, created_at: str) -> str:
        created = date.fromisoformat(created_at[:10])
        return (created + timedelta(days=self.start_date_offset_days)).isoformat()


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    title: str
    trajectory: str
    intent_text: str
    default_parameters: dict
    user_script: UserScript
    ground_truth: GroundTruth


def load_scenario(path) -> Scenario:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schemaVersion") != SCENARIO_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported scenario schemaVersion: {doc.get('schemaVersion')!r}")
    for key in ("scenarioId", "intentText", "userScript", "groundTruth"):
        if key not in doc:
            raise ValueError(f"scenario is missing {key!r}")
    script = doc["userScript"]
    truth = doc["groundTruth"]
    bundle = tuple(
        (item["name"], item.get("tier")) for item in truth["expectedBundle"])
    if not bundle:
        raise ValueError("groundTruth.expectedBundle is empty")
    return Scenario(
        scenario_id=doc["scenarioId"],
        title=doc.get("title", doc["scenarioId"]),
        trajectory=doc.get("trajectory", "OrderManagement"),
        intent_text=doc["intentText"],
        default_parameters=dict(doc.get("defaultParameters") or {}),
        user_script=UserScript(
            propose_text=script["proposeText"],
            select=script.get("select", "groundTruthElseCheapest"),
            temporal_template=script["temporalTemplate"],
            confirm_text=script.get("confirmText", "yes"),
        ),
        ground_truth=GroundTruth(
            expected_bundle=bundle,
            budget_cents=int(truth["budgetCents"]),
            duration_days=int(truth["durationDays"]),
            start_date_offset_days=int(truth["startDateOffsetDays"]),
            city=truth.get("city", ""),
            expected_parameters=dict(truth.get("expectedParameters") or {}),
        ),
    )


def bundled_scenario_path() -> Path:
    return Path(__file__).parent / "data" / "scenario-xr-live-event.json"


def bundled_catalog_path() -> Path:
    return Path(__file__).parent / "data" / "catalog.json"


# -- scoring --------------------------------------------------------------------


@dataclass(frozen=True)
class Scorecard:
    composition_matched: int
    composition_expected: int
    hallucinated_count: int
    hallucinated_names: tuple
    cost_accuracy: str  # Pass | Fail
    cost_detail: str
    duration_accuracy: str  # Pass | Fail
    duration_detail: str
    baseline: str  # Pass | Partial | Fail

    @property
    def composition_label(self) -> str:
        if self.composition_expected == 0:
            return "0"
        pct = round(100 * self.composition_matched / self.composition_expected)
        return f"{self.composition_matched} ({pct}%)"

    def as_dict(self) -> dict:
        return {
            "compositionCorrect": {
                "matched": self.composition_matched,
                "expected": self.composition_expected,
                "label": self.composition_label,
            },
            "hallucinatedProducts": {
                "count": self.hallucinated_count,
                "names": list(self.hallucinated_names),
            },
            "costAccuracy": {"verdict": self.cost_accuracy,
                             "detail": self.cost_detail},
            "durationAccuracy": {"verdict": self.duration_accuracy,
                                 "detail": self.duration_detail},
            "baselineAchievement": self.baseline,
        }


def _selected_names(catalog: Catalog, session: DialogueSession) -> frozenset:
    bundle = session.selected
    if not bundle and session.proposals:
        bundle = session.proposals[0].bundle
    names = set()
    for offering_id in bundle:
        names.add(resolve_offering(catalog, offering_id).name.casefold())
    return frozenset(names)


def _final_assistant_text(session: DialogueSession) -> str:
    for turn in reversed(session.transcript):
        if turn.role == "Assistant" and turn.content.strip():
            return turn.content
    return ""


def score_session(catalog: Catalog, session: DialogueSession,
                  truth: GroundTruth, resolved_start: str) -> Scorecard:
    expected = truth.expected_names
    matched = len(_selected_names(catalog, session) & expected)

    reached_review = ("Q5_Confirmation" in session.stage_history
                      and session.order_draft is not None)
    if not reached_review:
        cost = ("Fail", "session never reached the confirmation stage")
    else:
        stated = last_stated_total_cents(_final_assistant_text(session))
        draft_total = session.order_draft.total_cost_cents
        if stated is None:
            cost = ("Fail", "no total stated in the final reply")
        elif stated != draft_total:
            cost = ("Fail", f"stated {stated} cents, order draft says "
                            f"{draft_total} cents")
        elif draft_total > truth.budget_cents:
            cost = ("Fail", f"order total {draft_total} cents exceeds the "
                            f"budget of {truth.budget_cents} cents")
        else:
            cost = ("Pass", f"stated total matches the order draft "
                            f"({draft_total} cents, within budget)")

    if session.order_draft is None:
        duration = ("Fail", "no order draft was serialized")
    else:
        draft = session.order_draft
        if (draft.start_date == resolved_start
                and draft.duration_days == truth.duration_days):
            duration = ("Pass", f"{draft.start_date} for "
                                f"{draft.duration_days} days as requested")
        else:
            duration = ("Fail", f"draft has {draft.start_date} for "
                                f"{draft.duration_days} days, expected "
                                f"{resolved_start} for {truth.duration_days}")

    halluc = tuple(session.hallucinations)
    if (matched == len(expected) and not halluc
            and cost[0] == "Pass" and duration[0] == "Pass"):
        baseline = "Pass"
    elif cost[0] == "Pass" and matched >= 3:
        baseline = "Partial"
    else:
        baseline = "Fail"

    return Scorecard(
        composition_matched=matched,
        composition_expected=len(expected),
        hallucinated_count=len(halluc),
        hallucinated_names=halluc,
        cost_accuracy=cost[0], cost_detail=cost[1],
        duration_accuracy=duration[0], duration_detail=duration[1],
        baseline=baseline,
    )


# -- outcome ---------------------------------------------------------------------


@dataclass
class Outcome:
    scenario_id: str
    backend_name: str
    display_name: str
    reasoning: Optional[bool]
    session_id: str
    created_at: str
    stage_reached: str
    failure_cause: Optional[str]
    abort_reason: Optional[str]
    error: Optional[dict]
    duration_seconds: float
    latency_hint_minutes: Optional[int]
    scores: Scorecard
    resolved_start_date: str
    transcript: list = field(default_factory=list)
    tool_ledger: list = field(default_factory=list)
    events: list = field(default_factory=list)
    order_draft_canonical: Optional[str] = None
    order_records: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "schemaVersion": OUTCOME_SCHEMA_VERSION,
            "scenarioId": self.scenario_id,
            "backend": {
                "name": self.backend_name,
                "displayName": self.display_name,
                "reasoning": self.reasoning,
            },
            "sessionId": self.session_id,
            "createdAt": self.created_at,
            "stageReached": self.stage_reached,
            "failureCause": self.failure_cause,
            "abortReason": self.abort_reason,
            "error": self.error,
            "durationSeconds": self.duration_seconds,
            "latencyHintMinutes": self.latency_hint_minutes,
            "scores": self.scores.as_dict(),
            "groundTruthResolved": {"startDate": self.resolved_start_date},
            "transcript": self.transcript,
            "toolLedger": self.tool_ledger,
            "events": self.events,
            "orderDraftCanonical": self.order_draft_canonical,
            "orderRecords": self.order_records,
        }


_RUN_ERRORS = (PolicyDenied, InvalidSelection, NoGroundedLookup, InvalidDate,
               NotConfirmed, StageError, IntegrityError, BackendError)


class ScenarioRunner:
    """Owns the per-run world and walks the fixed co-creation op sequence."""

    def __init__(self, catalog: Catalog, run_dir,
                 created_at: Optional[str] = None):
        self.catalog = catalog
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.inventory = OrderInventory(self.run_dir / "orders.ndjson")
        self.gateway = ToolGateway(catalog, inventory=self.inventory)
        self.store = MemoryStore(self.run_dir / "memory")
        wall = (lambda: created_at) if created_at else None
        self.engine = CoCreationEngine(catalog, self.gateway, self.store,
                                       wall_clock=wall)
        self._created_at = created_at

    def run(self, scenario: Scenario, backend: AgentBackend,
            session_id: Optional[str] = None) -> Outcome:
        started = time.monotonic()
        created_at = self._created_at or datetime.now(timezone.utc).isoformat()
        resolved_start = scenario.ground_truth.resolve_start_date(created_at)
        session = self.engine.open_session(
            scenario.intent_text,
            trajectory=scenario.trajectory,
            session_id=session_id,
            default_parameters=scenario.default_parameters,
            created_at=created_at,
        )
        error = None
        try:
            self.engine.ground_intent(session, backend)
            self.engine.propose_alternatives(
                session, backend, user_text=scenario.user_script.propose_text)
            choice = self._choose(session, scenario.ground_truth)
            self.engine.select_combination(session, choice)
            temporal_text = scenario.user_script.temporal_template.format(
                startDate=resolved_start)
            self.engine.relay_temporal(session, backend, temporal_text)
            self.engine.build_order_draft(session)
            self.engine.review_draft(session, backend)
            self.engine.confirm(session, scenario.user_script.confirm_text)
        except _RUN_ERRORS as err:
            error = {"type": type(err).__name__, "message": str(err)}
            if not session.is_terminal():
                self.engine.abort(session, str(err))
        elapsed = time.monotonic() - started
        return self._outcome(scenario, backend, session, error,
                             elapsed, resolved_start)

    def _choose(self, session: DialogueSession, truth: GroundTruth) -> int:
        """groundTruthElseCheapest: the expected bundle when offered,
        otherwise the cheapest engine-quoted proposal."""
        if not session.proposals:
            raise InvalidSelection("backend produced no usable proposals")
        for i, proposal in enumerate(session.proposals):
            names = frozenset(name.casefold() for name, _ in proposal.bundle_names)
            if names == truth.expected_names:
                return i
        totals = [p.quote["totalCostCents"] for p in session.proposals]
        return totals.index(min(totals))

    def _outcome(self, scenario: Scenario, backend: AgentBackend,
                 session: DialogueSession, error: Optional[dict],
                 elapsed: float, resolved_start: str) -> Outcome:
        scores = score_session(self.catalog, session, scenario.ground_truth,
                               resolved_start)
        profile = getattr(backend, "profile", None)
        return Outcome(
            scenario_id=scenario.scenario_id,
            backend_name=backend.name,
            display_name=getattr(profile, "display_name", backend.name),
            reasoning=getattr(profile, "reasoning", None),
            session_id=session.session_id,
            created_at=session.created_at,
            stage_reached=session.stage,
            failure_cause=session.failure_cause,
            abort_reason=session.abort_reason,
            error=error,
            duration_seconds=round(elapsed, 3),
            latency_hint_minutes=getattr(profile, "latency_hint_minutes", None),
            scores=scores,
            resolved_start_date=resolved_start,
            transcript=[t.as_dict() for t in session.transcript],
            tool_ledger=[
                {"call": {"callId": call.call_id, "tool": call.tool_name,
                          "arguments": call.arguments,
                          "stageAtCall": call.stage_at_call},
                 "result": {"status": result.status, "ruleId": result.rule_id,
                            "payload": result.payload}}
                for call, result in session.tool_ledger.entries
            ],
            events=[e.as_dict() for e in session.events],
            order_draft_canonical=(
                session.order_draft.canonical_bytes().decode("utf-8")
                if session.order_draft else None),
            order_records=[r.as_dict() for r in self.inventory.records()],
        )


def run_scenario(scenario: Scenario, backend: AgentBackend, run_dir,
                 catalog: Optional[Catalog] = None,
                 created_at: Optional[str] = None) -> Outcome:
    catalog = catalog or load_catalog(bundled_catalog_path())
    runner = ScenarioRunner(catalog, run_dir, created_at=created_at)
    return runner.run(scenario, backend)


def write_outcome(outcome: Outcome, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(outcome.as_dict(), indent=2, ensure_ascii=False)
                    + "\n", encoding="utf-8")
    return path


# -- reporting --------------------------------------------------------------------


_COLUMNS = ("Agent", "Composition", "Hallucinated", "Cost", "Duration",
            "Baseline", "Time (min)")


def _report_rows(outcome_docs: Sequence[dict]) -> list:
    rows = []
    for doc in outcome_docs:
        scores = doc["scores"]
        hint = doc.get("latencyHintMinutes")
        rows.append((
            doc["backend"]["displayName"],
            scores["compositionCorrect"]["label"],
            str(scores["hallucinatedProducts"]["count"]),
            scores["costAccuracy"]["verdict"],
            scores["durationAccuracy"]["verdict"],
            scores["baselineAchievement"],
            "-" if hint is None else str(hint),
        ))
    return rows


def render_report(outcome_docs: Sequence[dict], fmt: str = "text") -> str:
    rows = _report_rows(outcome_docs)
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(_COLUMNS)
        writer.writerows(rows)
        return buffer.getvalue()
    if fmt == "md":
        lines = ["| " + " | ".join(_COLUMNS) + " |",
                 "|" + "|".join(" --- " for _ in _COLUMNS) + "|"]
        lines += ["| " + " | ".join(row) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    if fmt == "text":
        widths = [max(len(col), *(len(row[i]) for row in rows)) if rows
                  else len(col) for i, col in enumerate(_COLUMNS)]
        header = "  ".join(col.ljust(widths[i])
                           for i, col in enumerate(_COLUMNS))
        ruler = "  ".join("-" * widths[i] for i in range(len(_COLUMNS)))
        body = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
            for row in rows
        ]
        return "\n".join([header, ruler, *body]) + "\n"
    raise ValueError(f"unknown report format: {fmt}")


# -- replay -----------------------------------------------------------------------


@dataclass(frozen=True)
class ReplayReport:
    session_id: str
    stage_reached: str
    draft_matches: Optional[bool]
    scores_match: bool
    recorded_draft: Optional[str]
    replayed_draft: Optional[str]
    score_diff: Optional[dict] = None

    @property
    def diverged(self) -> bool:
        return self.draft_matches is False or not self.scores_match

    def as_dict(self) -> dict:
        return {
            "sessionId": self.session_id,
            "stageReached": self.stage_reached,
            "draftMatches": self.draft_matches,
            "scoresMatch": self.scores_match,
            "scoreDiff": self.score_diff,
            "recordedDraft": self.recorded_draft,
            "replayedDraft": self.replayed_draft,
        }


def replay_outcome(outcome_path, run_dir,
                   catalog: Optional[Catalog] = None) -> ReplayReport:
    """Re-run a recorded session; tool calls and quotes are recomputed.

    The replayed order draft must match the recorded canonical bytes, which
    is what makes recorded outcomes auditable after catalog edits.
    """
    catalog = catalog or load_catalog(bundled_catalog_path())
    doc = json.loads(Path(outcome_path).read_text(encoding="utf-8"))
    scenario = load_scenario(bundled_scenario_path()) \
        if doc["scenarioId"] == "xr-live-event" else None
    if scenario is None or scenario.scenario_id != doc["scenarioId"]:
        raise ValueError(f"no bundled scenario for {doc['scenarioId']!r}")
    backend = ReplayBackend(doc["transcript"])
    runner = ScenarioRunner(catalog, run_dir, created_at=doc["createdAt"])
    outcome = runner.run(scenario, backend, session_id=doc["sessionId"])
    recorded = doc.get("orderDraftCanonical")
    replayed = outcome.order_draft_canonical
    matches = (recorded == replayed) if (recorded or replayed) else None
    recorded_scores = doc.get("scores") or {}
    replayed_scores = outcome.scores.as_dict()
    score_diff = None
    for key in sorted(set(recorded_scores) | set(replayed_scores)):
        if recorded_scores.get(key) != replayed_scores.get(key):
            score_diff = {"field": key, "recorded": recorded_scores.get(key),
                          "replayed": replayed_scores.get(key)}
            break
    return ReplayReport(
        session_id=outcome.session_id,
        stage_reached=outcome.stage_reached,
        draft_matches=matches,
        scores_match=score_diff is None,
        recorded_draft=recorded,
        replayed_draft=replayed,
        score_diff=score_diff,
    )
