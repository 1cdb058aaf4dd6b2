"""Dual-layer memory: in-session working state plus persistent case files.

Short-term state lives with the session and mirrors the dialogue stage as a
to-do list with constraint snapshots.  Long-term state is one directory per
case holding ``case.json`` (latest snapshot) and ``decisions.log`` (append-only
newline-delimited entries chained by hash).
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from .errors import AlreadyInitialized, IntegrityError, StorageError, UnknownCase

ACTOR_USER = "User"
ACTOR_AGENT = "CoCreationAgent"
ACTOR_ENGINE = "Engine"

TASK_STATUSES = ("Pending", "InProgress", "Done", "Blocked")
_STATUS_EDGES = {
    "Pending": {"InProgress"},
    "InProgress": {"Done", "Blocked"},
    "Done": set(),
    "Blocked": set(),
}

_GENESIS = "0" * 64

Scalar = Union[str, int, float, bool]
ConstraintValue = Union[Scalar, frozenset]


def domain_expert(domain: str) -> str:
    """Actor label for a domain expert agent."""
    return f"DomainExpert({domain})"


def _normalize_value(value: object) -> ConstraintValue:
    if isinstance(value, (list, tuple, set, frozenset)):
        return frozenset(value)
    if isinstance(value, (str, int, float, bool)):
        return value
    raise TypeError(f"unsupported constraint value: {value!r}")


def _value_to_json(value: ConstraintValue) -> object:
    if isinstance(value, frozenset):
        return sorted(value, key=repr)
    return value


@dataclass(frozen=True)
class ConstraintSnapshot:
    """One named constraint asserted by a participant.

    A scalar value pins the constraint; a set value lists what remains
    allowed.  Cross-cutting implications (a cost cap restricting tiers)
    are expressed by the asserting side as a set over the shared name.
    """

    name: str
    value: ConstraintValue
    source: str

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": _value_to_json(self.value),
            "isSet": isinstance(self.value, frozenset),
            "source": self.source,
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "ConstraintSnapshot":
        raw = doc["value"]
        value = frozenset(raw) if doc.get("isSet") else raw
        return ConstraintSnapshot(doc["name"], _normalize_value(value), doc["source"])


@dataclass(frozen=True)
class Conflict:
    """Two incompatible assertions over one constraint name."""

    name: str
    values: tuple
    sources: tuple

    def describe(self) -> str:
        lhs, rhs = (repr(_value_to_json(v)) for v in self.values)
        return f"{self.name}: {lhs} ({self.sources[0]}) vs {rhs} ({self.sources[1]})"


@dataclass(frozen=True)
class ConflictReport:
    conflicts: tuple = ()

    def __bool__(self) -> bool:
        return bool(self.conflicts)


@dataclass(frozen=True)
class TodoTask:
    task_id: str
    action: str
    expected_output: str
    assignee: str
    stage: str = ""
    status: str = "Pending"

    def with_status(self, status: str) -> "TodoTask":
        if status not in _STATUS_EDGES.get(self.status, ()):
            raise ValueError(f"illegal status transition {self.status} -> {status}")
        return replace(self, status=status)

    def as_dict(self) -> dict:
        return {
            "taskId": self.task_id,
            "action": self.action,
            "expectedOutput": self.expected_output,
            "assignee": self.assignee,
            "stage": self.stage,
            "status": self.status,
        }


@dataclass(frozen=True)
class DomainResult:
    """Outcome a domain expert posts back for one to-do task."""

    task_id: str
    domain: str
    summary: str = ""
    constraints: tuple = ()

    @property
    def source(self) -> str:
        return domain_expert(self.domain)


@dataclass(frozen=True)
class WorkingState:
    session_id: str
    stage_mirror: str
    todo: tuple = ()
    constraints: tuple = ()
    interim_decisions: tuple = ()

    def task(self, task_id: str) -> Optional[TodoTask]:
        for t in self.todo:
            if t.task_id == task_id:
                return t
        return None

    def constraint(self, name: str) -> Optional[ConstraintSnapshot]:
        for snap in self.constraints:
            if snap.name == name:
                return snap
        return None

    def with_stage(self, stage: str) -> "WorkingState":
        return replace(self, stage_mirror=stage)

    def with_note(self, note: str) -> "WorkingState":
        return replace(self, interim_decisions=self.interim_decisions + (note,))

    def advance_task(self, task_id: str, status: str) -> "WorkingState":
        """Move one task to ``status``, stepping through InProgress if needed."""
        todo = []
        for t in self.todo:
            if t.task_id == task_id:
                if t.status == "Pending" and status in ("Done", "Blocked"):
                    t = t.with_status("InProgress")
                t = t.with_status(status)
            todo.append(t)
        return replace(self, todo=tuple(todo))

    def as_dict(self) -> dict:
        return {
            "sessionId": self.session_id,
            "stageMirror": self.stage_mirror,
            "todo": [t.as_dict() for t in self.todo],
            "constraints": [c.as_dict() for c in self.constraints],
            "interimDecisions": list(self.interim_decisions),
        }


@dataclass(frozen=True)
class DecisionEntry:
    seq: int
    timestamp: str
    stage: str
    actor: str
    summary: str
    references: tuple = ()

    def as_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "stage": self.stage,
            "actor": self.actor,
            "summary": self.summary,
            "references": list(self.references),
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "DecisionEntry":
        return DecisionEntry(
            seq=int(doc["seq"]),
            timestamp=doc["timestamp"],
            stage=doc["stage"],
            actor=doc["actor"],
            summary=doc["summary"],
            references=tuple(doc.get("references", ())),
        )


@dataclass(frozen=True)
class CaseFile:
    case_id: str
    canonical_intent: Optional[dict] = None
    constraints: tuple = ()
    assumptions: tuple = ()
    decision_log: tuple = ()
    derived_composition: Optional[dict] = None

    def snapshot_dict(self) -> dict:
        """The persisted snapshot; the decision log lives in its own file."""
        return {
            "caseId": self.case_id,
            "canonicalIntent": self.canonical_intent,
            "constraints": [c.as_dict() for c in self.constraints],
            "assumptions": list(self.assumptions),
            "derivedComposition": self.derived_composition,
        }


# Default to-do template mirroring the four stages after intent capture.
_DEFAULT_TODO = (
    ("t-alternatives", "Q2_Alternatives", "Collect catalog alternatives for each stated need",
     "Ranked offering list per need", ACTOR_AGENT),
    ("t-combination", "Q3_Combination", "Assemble and validate a product combination",
     "Validated bundle with a cost quote", ACTOR_AGENT),
    ("t-temporal", "Q4_Temporal", "Capture activation date and duration",
     "Temporal specification", ACTOR_USER),
    ("t-confirmation", "Q5_Confirmation", "Review the final draft and confirm the order",
     "Confirmation decision", ACTOR_USER),
)


def default_todo() -> tuple:
    return tuple(
        TodoTask(task_id=tid, stage=stage, action=action,
                 expected_output=out, assignee=who)
        for tid, stage, action, out, who in _DEFAULT_TODO
    )


def _valid_draft(drafted: object) -> Optional[tuple]:
    """Accept a backend-drafted to-do list only if its shape is sound."""
    if not isinstance(drafted, (list, tuple)) or len(drafted) < 4:
        return None
    tasks, seen, stages = [], set(), set()
    for i, item in enumerate(drafted):
        if not isinstance(item, Mapping):
            return None
        action = item.get("action")
        expected = item.get("expectedOutput")
        if not (isinstance(action, str) and action.strip()):
            return None
        if not (isinstance(expected, str) and expected.strip()):
            return None
        tid = str(item.get("taskId") or f"t-{i + 1}")
        if tid in seen:
            return None
        seen.add(tid)
        stage = str(item.get("stage", ""))
        stages.add(stage)
        tasks.append(TodoTask(
            task_id=tid, stage=stage, action=action.strip(),
            expected_output=expected.strip(),
            assignee=str(item.get("assignee", ACTOR_AGENT)),
        ))
    required = {"Q2_Alternatives", "Q3_Combination", "Q4_Temporal", "Q5_Confirmation"}
    if not required <= stages:
        return None
    return tuple(tasks)


def reconcile(state: WorkingState, incoming: Sequence[DomainResult]):
    """Merge domain results into the working state.

    Each result marks its task Done and folds its constraint snapshots in.
    Incompatible same-name assertions are never resolved here: the task is
    Blocked instead and the pair is reported for the human loop.
    """
    merged = {c.name: c for c in state.constraints}
    conflicts = []
    new_state = state
    for result in incoming:
        result_conflicts = []
        for snap in result.constraints:
            snap = ConstraintSnapshot(snap.name, _normalize_value(snap.value), snap.source)
            held = merged.get(snap.name)
            if held is None:
                merged[snap.name] = snap
                continue
            joined = _join(held.value, snap.value)
            if joined is None:
                conflict = Conflict(
                    name=snap.name,
                    values=(held.value, snap.value),
                    sources=(held.source, snap.source),
                )
                result_conflicts.append(conflict)
                continue
            if joined != held.value:
                merged[snap.name] = ConstraintSnapshot(snap.name, joined, snap.source)
        if new_state.task(result.task_id) is not None:
            status = "Blocked" if result_conflicts else "Done"
            new_state = new_state.advance_task(result.task_id, status)
        if result.summary:
            new_state = new_state.with_note(f"{result.source}: {result.summary}")
        conflicts.extend(result_conflicts)
    ordered = tuple(sorted(merged.values(), key=lambda c: c.name))
    new_state = replace(new_state, constraints=ordered)
    return new_state, ConflictReport(tuple(conflicts))


def _join(held: ConstraintValue, incoming: ConstraintValue):
    """Combine two compatible assertions; None when they are incompatible."""
    held_set = isinstance(held, frozenset)
    incoming_set = isinstance(incoming, frozenset)
    if not held_set and not incoming_set:
        return held if held == incoming else None
    if held_set and incoming_set:
        meet = held & incoming
        return meet if meet else None
    scalar, allowed = (held, incoming) if not held_set else (incoming, held)
    return scalar if scalar in allowed else None


class MemoryStore:
    """File-backed case store with serialized per-case appends."""

    def __init__(self, root: Union[str, Path], clock: Optional[Callable[[], str]] = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._clock = clock or (lambda: datetime.now(timezone.utc).isoformat())
        self._locks: dict = {}
        self._locks_guard = threading.Lock()

    def _lock(self, case_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(case_id, threading.Lock())

    def _case_dir(self, case_id: str) -> Path:
        return self.root / case_id

    def _require_case(self, case_id: str) -> Path:
        path = self._case_dir(case_id)
        if not (path / "case.json").exists():
            raise UnknownCase(case_id)
        return path

    def list_cases(self) -> list:
        return sorted(
            p.name for p in self.root.iterdir()
            if p.is_dir() and (p / "case.json").exists()
        )

    def init_working_state(self, session_id: str, drafted_todo: object = None,
                           stage: str = "Q1_Ingestion") -> WorkingState:
        """Create the case and seed the to-do list.

        A malformed backend draft falls back to the engine template; the
        fallback is recorded as an explicit assumption on the case.
        """
        path = self._case_dir(session_id)
        with self._lock(session_id):
            if (path / "case.json").exists():
                raise AlreadyInitialized(session_id)
            todo = None if drafted_todo is None else _valid_draft(drafted_todo)
            assumptions = []
            if todo is None:
                todo = default_todo()
                if drafted_todo is not None:
                    assumptions.append(
                        "Backend returned a malformed to-do draft; "
                        "engine default task list used instead."
                    )
            state = WorkingState(session_id=session_id, stage_mirror=stage, todo=todo)
            case = CaseFile(case_id=session_id, assumptions=tuple(assumptions))
            path.mkdir(parents=True, exist_ok=True)
            (path / "decisions.log").touch()
            self._write_snapshot(path, case)
        return state

    def record_decision(self, case_id: str, *, stage: str, actor: str,
                        summary: str, references: Iterable[str] = ()) -> int:
        path = self._require_case(case_id)
        log_path = path / "decisions.log"
        with self._lock(case_id):
            last_seq, last_hash = self._log_tip(log_path)
            entry = DecisionEntry(
                seq=last_seq + 1,
                timestamp=self._clock(),
                stage=stage,
                actor=actor,
                summary=summary,
                references=tuple(references),
            )
            doc = entry.as_dict()
            doc["prev"] = last_hash
            line = json.dumps(doc, sort_keys=True, ensure_ascii=False)
            with log_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
        return entry.seq

    @staticmethod
    def _log_tip(log_path: Path):
        last_seq, last_hash = 0, _GENESIS
        with log_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                last_seq = json.loads(line)["seq"]
                last_hash = hashlib.sha256(line.encode("utf-8")).hexdigest()
        return last_seq, last_hash

    def decision_log(self, case_id: str) -> tuple:
        path = self._require_case(case_id)
        return self._read_log(path / "decisions.log")

    @staticmethod
    def _read_log(log_path: Path) -> tuple:
        entries = []
        with log_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    entries.append(DecisionEntry.from_dict(json.loads(line)))
        return tuple(entries)

    def verify_log(self, case_id: str) -> int:
        """Recompute the hash chain; raises on any gap or rewritten prefix."""
        path = self._require_case(case_id)
        expected_prev, expected_seq, count = _GENESIS, 1, 0
        with (path / "decisions.log").open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                doc = json.loads(line)
                if doc["prev"] != expected_prev:
                    raise IntegrityError(
                        f"decision log chain broken at seq {doc['seq']}",
                        offending_id=case_id,
                    )
                if doc["seq"] != expected_seq:
                    raise IntegrityError(
                        f"decision log gap: expected seq {expected_seq}, found {doc['seq']}",
                        offending_id=case_id,
                    )
                expected_prev = hashlib.sha256(line.encode("utf-8")).hexdigest()
                expected_seq += 1
                count += 1
        return count

    def checkpoint(self, case_id: str, *, canonical_intent: Optional[dict] = None,
                   constraints: Sequence[ConstraintSnapshot] = (),
                   assumptions: Sequence[str] = (),
                   derived_composition: Optional[dict] = None) -> CaseFile:
        path = self._require_case(case_id)
        with self._lock(case_id):
            case = CaseFile(
                case_id=case_id,
                canonical_intent=canonical_intent,
                constraints=tuple(constraints),
                assumptions=tuple(assumptions),
                decision_log=self._read_log(path / "decisions.log"),
                derived_composition=derived_composition,
            )
            self._write_snapshot(path, case)
        return case

    def load_case(self, case_id: str) -> CaseFile:
        path = self._require_case(case_id)
        try:
            doc = json.loads((path / "case.json").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise StorageError(f"unreadable case snapshot for {case_id}: {err}") from err
        return CaseFile(
            case_id=doc["caseId"],
            canonical_intent=doc.get("canonicalIntent"),
            constraints=tuple(
                ConstraintSnapshot.from_dict(c) for c in doc.get("constraints", ())
            ),
            assumptions=tuple(doc.get("assumptions", ())),
            decision_log=self._read_log(path / "decisions.log"),
            derived_composition=doc.get("derivedComposition"),
        )

    @staticmethod
    def _write_snapshot(path: Path, case: CaseFile) -> None:
        tmp = path / "case.json.tmp"
        try:
            tmp.write_text(
                json.dumps(case.snapshot_dict(), indent=2, sort_keys=True,
                           ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
            tmp.replace(path / "case.json")
        except OSError as err:
            raise StorageError(f"cannot persist case {case.case_id}: {err}") from err
