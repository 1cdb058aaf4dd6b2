import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocreation.errors import AlreadyInitialized, IntegrityError, StorageError, UnknownCase
from cocreation.memory import (
    ConstraintSnapshot,
    DomainResult,
    MemoryStore,
    WorkingState,
    default_todo,
    domain_expert,
    reconcile,
)


@pytest.fixture()
def store(tmp_path):
    return MemoryStore(tmp_path / "cases", clock=lambda: "2026-01-01T00:00:00+00:00")


# -- working state -----------------------------------------------------------

def test_init_creates_default_todo(store):
    state = store.init_working_state("s-1")
    assert [t.status for t in state.todo] == ["Pending"] * 4
    assert [t.stage for t in state.todo] == [
        "Q2_Alternatives",
        "Q3_Combination",
        "Q4_Temporal",
        "Q5_Confirmation",
    ]


def test_init_twice_rejected(store):
    store.init_working_state("s-1")
    with pytest.raises(AlreadyInitialized):
        store.init_working_state("s-1")


def test_malformed_draft_falls_back_with_assumption(store):
    state = store.init_working_state("s-1", drafted_todo=[{"action": "only one"}])
    assert tuple(t.task_id for t in state.todo) == tuple(t.task_id for t in default_todo())
    case = store.load_case("s-1")
    assert any("default task list" in a for a in case.assumptions)


def test_well_formed_draft_accepted(store):
    draft = [
        {"taskId": f"d-{i}", "stage": stage, "action": f"do {stage}",
         "expectedOutput": "something"}
        for i, stage in enumerate(
            ["Q2_Alternatives", "Q3_Combination", "Q4_Temporal", "Q5_Confirmation"]
        )
    ]
    state = store.init_working_state("s-1", drafted_todo=draft)
    assert [t.task_id for t in state.todo] == ["d-0", "d-1", "d-2", "d-3"]
    assert store.load_case("s-1").assumptions == ()


def test_task_status_transitions_guarded(store):
    state = store.init_working_state("s-1")
    task = state.todo[0]
    with pytest.raises(ValueError):
        task.with_status("Done")  # must pass through InProgress
    done = task.with_status("InProgress").with_status("Done")
    with pytest.raises(ValueError):
        done.with_status("Pending")


# -- decision log ------------------------------------------------------------

def test_record_decision_increments_seq(store):
    store.init_working_state("s-1")
    first = store.record_decision("s-1", stage="Q1_Ingestion", actor="Engine",
                                  summary="intent captured")
    second = store.record_decision("s-1", stage="Q2_Alternatives", actor="User",
                                   summary="picked alternative", references=["call-1"])
    assert (first, second) == (1, 2)
    entries = store.decision_log("s-1")
    assert entries[1].references == ("call-1",)


def test_record_decision_unknown_case(store):
    with pytest.raises(UnknownCase):
        store.record_decision("ghost", stage="Q1_Ingestion", actor="Engine", summary="x")


def test_concurrent_appends_are_gapless(store):
    store.init_working_state("s-1")
    results = []

    def append(i):
        results.append(store.record_decision(
            "s-1", stage="Q3_Combination", actor="Engine", summary=f"note {i}"))

    threads = [threading.Thread(target=append, args=(i,)) for i in range(12)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(results) == list(range(1, 13))
    assert store.verify_log("s-1") == 12


def test_tampered_log_detected(store, tmp_path):
    store.init_working_state("s-1")
    store.record_decision("s-1", stage="Q1_Ingestion", actor="Engine", summary="a")
    store.record_decision("s-1", stage="Q1_Ingestion", actor="Engine", summary="b")
    log_path = tmp_path / "cases" / "s-1" / "decisions.log"
    lines = log_path.read_text().splitlines()
    doc = json.loads(lines[0])
    doc["summary"] = "rewritten"
    lines[0] = json.dumps(doc, sort_keys=True)
    log_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(IntegrityError):
        store.verify_log("s-1")


# -- reconcile ---------------------------------------------------------------

def _state_with_tasks():
    return WorkingState(session_id="s-1", stage_mirror="Q2_Alternatives",
                        todo=default_todo())


def test_agreeing_results_merge_without_conflict():
    state = _state_with_tasks()
    incoming = [
        DomainResult(task_id="t-alternatives", domain="radio", constraints=(
            ConstraintSnapshot("cityName", "Patras", domain_expert("radio")),)),
        DomainResult(task_id="t-combination", domain="transport", constraints=(
            ConstraintSnapshot("cityName", "Patras", domain_expert("transport")),)),
    ]
    merged, report = reconcile(state, incoming)
    assert not report
    assert merged.constraint("cityName").value == "Patras"
    assert merged.task("t-alternatives").status == "Done"
    assert merged.task("t-combination").status == "Done"


def test_tier_floor_vs_cost_cap_conflict_blocks_task():
    # Radio needs at least Gold; a 500 euro/day cap only leaves Silver.
    state = _state_with_tasks()
    incoming = [
        DomainResult(task_id="t-alternatives", domain="radio", constraints=(
            ConstraintSnapshot("sliceTier", frozenset({"Gold", "Platinum"}),
                               domain_expert("radio")),)),
        DomainResult(task_id="t-combination", domain="finance", constraints=(
            ConstraintSnapshot("sliceTier", frozenset({"Silver"}),
                               domain_expert("finance")),)),
    ]
    merged, report = reconcile(state, incoming)
    assert len(report.conflicts) == 1
    assert report.conflicts[0].name == "sliceTier"
    assert merged.task("t-combination").status == "Blocked"
    # the held constraint is untouched: conflicts never auto-resolve
    assert merged.constraint("sliceTier").value == frozenset({"Gold", "Platinum"})


def test_empty_incoming_is_identity():
    state = _state_with_tasks()
    merged, report = reconcile(state, [])
    assert merged == state
    assert not report


def test_scalar_within_allowed_set_narrows():
    state = _state_with_tasks()
    merged, _ = reconcile(state, [
        DomainResult(task_id="t-alternatives", domain="radio", constraints=(
            ConstraintSnapshot("sliceTier", frozenset({"Gold", "Silver"}),
                               domain_expert("radio")),)),
        DomainResult(task_id="t-combination", domain="core", constraints=(
            ConstraintSnapshot("sliceTier", "Gold", domain_expert("core")),)),
    ])
    assert merged.constraint("sliceTier").value == "Gold"


_names = st.lists(st.sampled_from(["a", "b", "c", "d", "e", "f"]),
                  min_size=0, max_size=3, unique=True)


@given(left=_names, right=_names, seed=st.integers(0, 999))
@settings(max_examples=80, deadline=None)
def test_reconcile_commutes_on_disjoint_names(left, right, seed):
    right = [n for n in right if n not in left]
    state = WorkingState(session_id="s-1", stage_mirror="Q2_Alternatives",
                         todo=default_todo())
    a = DomainResult(task_id="t-alternatives", domain="radio", constraints=tuple(
        ConstraintSnapshot(n, f"v-{n}-{seed}", domain_expert("radio")) for n in left))
    b = DomainResult(task_id="t-combination", domain="core", constraints=tuple(
        ConstraintSnapshot(n, f"v-{n}-{seed}", domain_expert("core")) for n in right))
    ab, _ = reconcile(reconcile(state, [a])[0], [b])
    ba, _ = reconcile(reconcile(state, [b])[0], [a])
    assert ab.constraints == ba.constraints


# -- checkpoint / load -------------------------------------------------------

def test_checkpoint_round_trip(store):
    store.init_working_state("s-1")
    store.record_decision("s-1", stage="Q5_Confirmation", actor="User",
                          summary="confirmed", references=["tok-1"])
    saved = store.checkpoint(
        "s-1",
        canonical_intent={"goalText": "stream a live event"},
        constraints=[ConstraintSnapshot("cityName", "Patras", "User")],
        assumptions=["weekday event assumed"],
        derived_composition={"items": ["po-slice-gold"]},
    )
    loaded = store.load_case("s-1")
    assert loaded == saved


def test_checkpoint_idempotent_without_changes(store):
    store.init_working_state("s-1")
    first = store.checkpoint("s-1", canonical_intent={"goalText": "x"})
    second = store.checkpoint("s-1", canonical_intent={"goalText": "x"})
    assert first == second


def test_load_unknown_case(store):
    with pytest.raises(UnknownCase):
        store.load_case("nope")


def test_corrupt_snapshot_raises_storage_error(store, tmp_path):
    store.init_working_state("s-1")
    (tmp_path / "cases" / "s-1" / "case.json").write_text("{broken")
    with pytest.raises(StorageError):
        store.load_case("s-1")


def test_distinct_cases_do_not_interfere(store):
    store.init_working_state("a")
    store.init_working_state("b")
    assert store.record_decision("a", stage="Q1_Ingestion", actor="Engine", summary="x") == 1
    assert store.record_decision("b", stage="Q1_Ingestion", actor="Engine", summary="y") == 1
    assert store.list_cases() == ["a", "b"]
