import json
import random
from dataclasses import dataclass, field

import pytest

from cocreation.errors import IntegrityError, MissingParameter, PolicyDenied
from cocreation.gateway import (
    OrderInventory,
    OrderPayload,
    SkillPolicy,
    ToolCall,
    ToolGateway,
    ToolLedger,
    build_order_payload,
)

from conftest import EXPERT_BUNDLE_IDS, EXPERT_WEEK_TOTAL_CENTS


@dataclass
class FakeTemporal:
    start_date: str = "2026-03-02"
    duration_days: int = 7


@dataclass
class FakeSelection:
    offering_id: str
    parameters: dict = field(default_factory=dict)


@dataclass
class FakeSession:
    session_id: str = "s-test"
    stage: str = "Q5_Confirmation"
    tool_ledger: ToolLedger = field(default_factory=ToolLedger)
    selected_items: tuple = ()
    temporal: FakeTemporal = field(default_factory=FakeTemporal)


def _expert_selection():
    params = {"cityName": "Patras", "sliceProfile": "eMBB"}
    return tuple(
        FakeSelection(oid, dict(params) if oid.startswith(("po-slice", "po-cache"))
                      else {})
        for oid in EXPERT_BUNDLE_IDS
    )


@pytest.fixture()
def clockbox():
    return {"now": 1000.0}


@pytest.fixture()
def gateway(catalog, clockbox):
    return ToolGateway(
        catalog,
        OrderInventory(),
        clock=lambda: clockbox["now"],
        wall_clock=lambda: "2026-03-01T12:00:00+00:00",
    )


def _grounded(gateway, session):
    call = ToolCall.fresh("catalog.search", {"keywords": ["slice"]},
                          session.session_id, session.stage)
    assert gateway.invoke(call, session).status == "Ok"


# -- surface -------------------------------------------------------------------

def test_list_tools_fixed_set(gateway):
    tools = gateway.list_tools()
    assert [t.name for t in tools] == [
        "catalog.search", "catalog.get", "catalog.decompose",
        "cost.quote", "order.place",
    ]
    first = json.dumps([t.as_dict() for t in tools], sort_keys=True)
    second = json.dumps([t.as_dict() for t in gateway.list_tools()], sort_keys=True)
    assert first == second


def test_order_place_schema_requires_token(gateway):
    place = [t for t in gateway.list_tools() if t.name == "order.place"][0]
    token_params = [p for p in place.parameter_schema if p[0] == "confirmationToken"]
    assert token_params and token_params[0][2] is True


def test_ablated_policy_keeps_surface(catalog):
    gw = ToolGateway(catalog, policy=SkillPolicy().without("R4"))
    assert len(gw.list_tools()) == 5


# -- invocation ----------------------------------------------------------------

def test_get_api_exposure(gateway):
    session = FakeSession()
    call = ToolCall.fresh("catalog.get", {"name": "Service APIs Exposure"},
                          session.session_id, "Q2_Alternatives")
    result = gateway.invoke(call, session)
    assert result.status == "Ok"
    assert result.payload["offering"]["unitCostCents"] == 10_000
    assert result.payload["offering"]["tier"] == "Standard"


def test_get_unknown_is_ok_with_notfound(gateway):
    session = FakeSession()
    call = ToolCall.fresh("catalog.get", {"name": "Quantum Teleport Link"},
                          session.session_id, "Q2_Alternatives")
    result = gateway.invoke(call, session)
    assert result.status == "Ok"
    assert result.payload == {"found": False, "error": "NotFound",
                              "reference": result.payload["reference"]}


def test_quote_expert_bundle(gateway):
    session = FakeSession()
    call = ToolCall.fresh(
        "cost.quote",
        {"items": list(EXPERT_BUNDLE_IDS), "durationDays": 7,
         "budgetCents": 900_000},
        session.session_id, "Q3_Combination")
    result = gateway.invoke(call, session)
    assert result.status == "Ok"
    assert result.payload["quote"]["totalCostCents"] == EXPERT_WEEK_TOTAL_CENTS
    assert result.payload["quote"]["withinBudget"] is True


def test_ledger_records_every_invocation(gateway):
    session = FakeSession()
    for args in ({"keywords": ["slice"]}, {"keywords": ["cache"]}):
        gateway.invoke(ToolCall.fresh("catalog.search", args,
                                      session.session_id, "Q2_Alternatives"),
                       session)
    gateway.invoke(ToolCall.fresh("order.place", {},
                                  session.session_id, "Q5_Confirmation"), session)
    entries = session.tool_ledger.entries
    assert len(entries) == 3
    assert all(call.call_id == result.call_id for call, result in entries)
    assert len({call.call_id for call, _ in entries}) == 3


# -- policy gate -----------------------------------------------------------------

def test_place_without_token_denied_r4(gateway):
    session = FakeSession(selected_items=_expert_selection())
    _grounded(gateway, session)
    call = ToolCall.fresh("order.place", {}, session.session_id, "Q5_Confirmation")
    result = gateway.invoke(call, session)
    assert (result.status, result.rule_id) == ("Denied", "R4")
    assert len(gateway.inventory) == 0


def test_place_with_token_but_no_lookup_denied_r2(gateway):
    session = FakeSession(selected_items=_expert_selection())
    token = gateway.mint_token(session.session_id)
    call = ToolCall.fresh("order.place", {"confirmationToken": token.token_id},
                          session.session_id, "Q5_Confirmation")
    result = gateway.invoke(call, session)
    assert (result.status, result.rule_id) == ("Denied", "R2")


def test_place_happy_path(gateway):
    session = FakeSession(selected_items=_expert_selection())
    _grounded(gateway, session)
    token = gateway.mint_token(session.session_id)
    call = ToolCall.fresh("order.place", {"confirmationToken": token.token_id},
                          session.session_id, "Q5_Confirmation")
    result = gateway.invoke(call, session)
    assert result.status == "Ok"
    assert len(gateway.inventory) == 1
    record = gateway.inventory.records()[0]
    assert record.payload.total_cost_cents == EXPERT_WEEK_TOTAL_CENTS


def test_token_single_use(gateway):
    session = FakeSession(selected_items=_expert_selection())
    _grounded(gateway, session)
    token = gateway.mint_token(session.session_id)
    args = {"confirmationToken": token.token_id}
    first = gateway.invoke(ToolCall.fresh("order.place", args, session.session_id,
                                          "Q5_Confirmation"), session)
    replay = gateway.invoke(ToolCall.fresh("order.place", args, session.session_id,
                                           "Q5_Confirmation"), session)
    assert first.status == "Ok"
    assert (replay.status, replay.rule_id) == ("Denied", "R4")
    assert len(gateway.inventory) == 1


def test_foreign_session_token_denied(gateway):
    session = FakeSession(selected_items=_expert_selection())
    _grounded(gateway, session)
    foreign = gateway.mint_token("someone-else")
    call = ToolCall.fresh("order.place", {"confirmationToken": foreign.token_id},
                          session.session_id, "Q5_Confirmation")
    assert gateway.invoke(call, session).rule_id == "R4"


def test_expired_token_denied(gateway, clockbox):
    session = FakeSession(selected_items=_expert_selection())
    _grounded(gateway, session)
    token = gateway.mint_token(session.session_id)
    clockbox["now"] += 601
    call = ToolCall.fresh("order.place", {"confirmationToken": token.token_id},
                          session.session_id, "Q5_Confirmation")
    assert gateway.invoke(call, session).rule_id == "R4"


def test_early_place_recorded_as_direct_order_attempt(gateway):
    session = FakeSession(stage="Q2_Alternatives",
                          selected_items=_expert_selection())
    call = ToolCall.fresh("order.place", {}, session.session_id, "Q2_Alternatives")
    result = gateway.invoke(call, session)
    assert result.status == "Denied"
    assert session.tool_ledger.direct_order_attempts == [call.call_id]


# -- order serialization -----------------------------------------------------------

def test_serialize_expert_order(gateway):
    session = FakeSession(selected_items=_expert_selection())
    payload = gateway.serialize_order(session)
    assert len(payload.items) == 4
    assert payload.total_cost_cents == 780_000
    assert payload.start_date == "2026-03-02"
    assert payload.canonical_bytes() == gateway.serialize_order(session).canonical_bytes()
    assert payload.order_id.startswith("ord-")


def test_serialize_missing_slice_profile(gateway):
    items = _expert_selection()
    broken = tuple(
        FakeSelection(s.offering_id,
                      {k: v for k, v in s.parameters.items() if k != "sliceProfile"})
        for s in items
    )
    session = FakeSession(selected_items=broken)
    with pytest.raises(MissingParameter) as err:
        gateway.serialize_order(session)
    assert "sliceProfile" in err.value.names


def test_payload_field_order_documented(gateway):
    session = FakeSession(selected_items=_expert_selection())
    doc = gateway.serialize_order(session).canonical_dict()
    assert list(doc.keys()) == [
        "schemaVersion", "orderId", "sessionId", "startDate", "durationDays",
        "currency", "totalCostCents", "orderItems",
    ]


def test_equal_drafts_share_order_id(catalog):
    items = [(o, {"cityName": "Patras", "sliceProfile": "eMBB"}
              if o.parameter_names else {})
             for o in (catalog.offering_by_id(i) for i in EXPERT_BUNDLE_IDS)]
    a = build_order_payload(catalog, "s-x", items, "2026-03-02", 7)
    b = build_order_payload(catalog, "s-x", items, "2026-03-02", 7)
    assert a.order_id == b.order_id
    assert a.canonical_bytes() == b.canonical_bytes()


# -- payload verification -----------------------------------------------------------

def _signed_payload(gateway, session):
    _grounded(gateway, session)
    return gateway.serialize_order(session)


def test_fabricated_item_rejected_and_not_persisted(gateway):
    session = FakeSession(selected_items=_expert_selection())
    payload = _signed_payload(gateway, session)
    doc = payload.canonical_dict()
    doc["orderItems"].append({
        "offeringId": "po-fiber-pro",
        "offeringName": "Fiber Backhaul Pro",
        "tier": "Standard",
        "parameters": {},
    })
    tampered = OrderPayload.from_dict(doc)
    token = gateway.mint_token(session.session_id)
    with pytest.raises(IntegrityError) as err:
        gateway.place_order(tampered, token.token_id)
    assert err.value.offending_id == "po-fiber-pro"
    assert len(gateway.inventory) == 0


def test_tampered_total_rejected(gateway):
    session = FakeSession(selected_items=_expert_selection())
    payload = _signed_payload(gateway, session)
    doc = payload.canonical_dict()
    doc["totalCostCents"] = 1
    token = gateway.mint_token(session.session_id)
    with pytest.raises(IntegrityError):
        gateway.place_order(OrderPayload.from_dict(doc), token.token_id)
    assert len(gateway.inventory) == 0


def test_place_order_requires_token_even_directly(gateway):
    session = FakeSession(selected_items=_expert_selection())
    payload = _signed_payload(gateway, session)
    with pytest.raises(PolicyDenied):
        gateway.place_order(payload, None)
    with pytest.raises(PolicyDenied):
        gateway.place_order(payload, "tok-forged")
    assert len(gateway.inventory) == 0


# -- text audit ----------------------------------------------------------------------

def test_audit_flags_fabricated_product_only(gateway):
    text = ('I recommend the On-demand Network Slice Gold together with '
            'the "Fiber Backhaul Pro" for your backhaul needs.')
    findings = gateway.audit_response(text)
    assert findings.hallucinated == ("Fiber Backhaul Pro",)
    assert findings.lower_layer == ()


def test_audit_flags_lower_layer_mention(gateway):
    text = ("Behind the scenes this maps to the Premium Radio Access Service "
            "and a UPF Capacity Share.")
    findings = gateway.audit_response(text)
    assert "Premium Radio Access Service" in findings.lower_layer
    assert "UPF Capacity Share" in findings.lower_layer


def test_audit_empty_text(gateway):
    assert not gateway.audit_response("")


def test_audit_real_products_not_flagged(gateway):
    text = ("I suggest the Edge Media Cache Server Large (GPU) and the "
            "Network Slice Observability Admin Access, plus Service APIs "
            "Exposure.")
    findings = gateway.audit_response(text)
    assert findings.hallucinated == ()


@pytest.mark.parametrize("k", [0, 1, 4, 16])
def test_audit_monotone_in_injected_names(gateway, k):
    base = ("Here is the plan around the On-demand Network Slice Gold and "
            "Edge Media Cache Server Small for the event.")
    fabricated = [f'"Hyper Fabric Unit {chr(65 + i)}"' for i in range(k)]
    text = base + " I also recommend " + ", ".join(fabricated) + "." if k else base
    findings = gateway.audit_response(text)
    assert len(findings.hallucinated) == k


# -- randomized gate property ---------------------------------------------------------

def test_no_order_without_minted_token_randomized(catalog):
    rng = random.Random(20260814)
    gw = ToolGateway(catalog, OrderInventory(),
                     clock=lambda: 0.0, wall_clock=lambda: "t")
    session = FakeSession(selected_items=_expert_selection())
    _grounded(gw, session)
    stages = ["Q1_Ingestion", "Q2_Alternatives", "Q3_Combination",
              "Q4_Temporal", "Q5_Confirmation"]
    minted = []
    placed_with_valid = 0
    for _ in range(3000):
        roll = rng.random()
        if roll < 0.1:
            minted.append(gw.mint_token(session.session_id))
            continue
        if roll < 0.3:
            args = {}
        elif roll < 0.6:
            args = {"confirmationToken": f"tok-{rng.getrandbits(64):x}"}
        elif roll < 0.8 and minted:
            args = {"confirmationToken": rng.choice(minted).token_id}
        else:
            args = {"confirmationToken": None}
        stage = rng.choice(stages)
        call = ToolCall.fresh("order.place", args, session.session_id, stage)
        result = gw.invoke(call, session)
        if result.status == "Ok":
            placed_with_valid += 1
    # every record corresponds to a minted, now-consumed token
    assert len(gw.inventory) == placed_with_valid
    consumed = {t.token_id for t in minted if t.consumed}
    assert {r.token_id for r in gw.inventory.records()} <= consumed
