"""Deterministic actuation boundary between agent backends and the platform.

Backends never touch the catalog or order store directly: every action goes
through the closed five-tool surface, is checked against the skill policy,
and is recorded on the session's tool ledger.  Order placement additionally
requires a single-use, session-bound confirmation token minted only by the
user-confirmation step.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from .catalog import (
    Catalog,
    ConstraintSet,
    ProductOffering,
    decompose_offering,
    quote,
    resolve_offering,
    search_offerings,
)
from .errors import (
    Ambiguous,
    IntegrityError,
    InvalidDuration,
    MissingParameter,
    NotFound,
    PolicyDenied,
)

TOOL_NAMES = (
    "catalog.search",
    "catalog.get",
    "catalog.decompose",
    "cost.quote",
    "order.place",
)

RULE_IDS = ("R1", "R2", "R3", "R4", "R5")

RULE_TEXT = {
    "R1": "Use only catalog tools for product lookup.",
    "R2": "Never map intents to products without a catalog lookup first.",
    "R3": "Recommend only products that exist in the catalog.",
    "R4": "Never place an order without an explicit user confirmation token.",
    "R5": "Never mention service- or resource-layer entities to the user.",
}

ORDER_SCHEMA_VERSION = "1"
INVENTORY_SCHEMA_VERSION = "1"
DEFAULT_TOKEN_TTL_SECONDS = 600.0


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    parameter_schema: tuple

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "parameters": [
                {"name": n, "type": t, "required": r, "description": d}
                for n, t, r, d in self.parameter_schema
            ],
        }


_DESCRIPTORS = (
    ToolDescriptor(
        "catalog.search",
        "Search the product catalog by keywords and constraints; returns "
        "offerings ranked by relevance then daily cost.",
        (
            ("keywords", "array[string]", False, "free-text terms from the intent"),
            ("maxDailyCostCents", "integer", False, "cap on per-day cost in euro cents"),
            ("requiredParameters", "array[string]", False,
             "only offerings configurable by these parameter names"),
        ),
    ),
    ToolDescriptor(
        "catalog.get",
        "Fetch one offering by id, or by exact name plus tier.",
        (
            ("id", "string", False, "offering id"),
            ("name", "string", False, "exact offering name"),
            ("tier", "string", False, "tier qualifier, when the name has several"),
        ),
    ),
    ToolDescriptor(
        "catalog.decompose",
        "Expand an offering into its service and resource specifications "
        "per the catalog policy rules.  For internal grounding only: never "
        "repeat these lower-layer names to the user.",
        (
            ("id", "string", False, "offering id"),
            ("name", "string", False, "exact offering name"),
            ("tier", "string", False, "tier qualifier"),
        ),
    ),
    ToolDescriptor(
        "cost.quote",
        "Price a bundle of offerings over a duration; flags budget fit.",
        (
            ("items", "array[object]", True, "offering references (id or name/tier)"),
            ("durationDays", "integer", True, "whole days, at least 1"),
            ("budgetCents", "integer", False, "budget in euro cents"),
        ),
    ),
    ToolDescriptor(
        "order.place",
        "Place the drafted order.  Requires the confirmation token shown "
        "to the user at the final review step.",
        (
            ("confirmationToken", "string", True, "token minted on user confirmation"),
        ),
    ),
)


@dataclass(frozen=True)
class ToolCall:
    call_id: str
    tool_name: str
    arguments: dict
    session_id: str
    stage_at_call: str

    @staticmethod
    def fresh(tool_name: str, arguments: dict, session_id: str,
              stage: str) -> "ToolCall":
        return ToolCall(
            call_id=f"call-{uuid.uuid4().hex[:12]}",
            tool_name=tool_name,
            arguments=arguments,
            session_id=session_id,
            stage_at_call=stage,
        )


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    status: str  # Ok | Denied | Error
    payload: dict
    rule_id: Optional[str] = None


@dataclass
class ToolLedger:
    """Per-session record of every tool call and its result."""

    entries: list = field(default_factory=list)
    direct_order_attempts: list = field(default_factory=list)

    def append(self, call: ToolCall, result: ToolResult) -> None:
        if call.call_id != result.call_id:
            raise IntegrityError("ledger entry call ids differ")
        self.entries.append((call, result))

    def has_grounded_lookup(self) -> bool:
        for call, result in self.entries:
            if result.status != "Ok":
                continue
            if call.tool_name in ("catalog.search", "catalog.get"):
                if not result.payload.get("error"):
                    return True
        return False

    def calls(self) -> list:
        return [call for call, _ in self.entries]

    def result_for(self, call_id: str) -> Optional[ToolResult]:
        for call, result in self.entries:
            if call.call_id == call_id:
                return result
        return None

    def as_dicts(self) -> list:
        out = []
        for call, result in self.entries:
            out.append({
                "callId": call.call_id,
                "toolName": call.tool_name,
                "arguments": call.arguments,
                "stage": call.stage_at_call,
                "status": result.status,
                "ruleId": result.rule_id,
                "payload": result.payload,
            })
        return out


@dataclass(frozen=True)
class PolicyDecision:
    allow: bool
    rule_id: Optional[str] = None
    reason: str = ""

    @staticmethod
    def allowed() -> "PolicyDecision":
        return PolicyDecision(True)

    @staticmethod
    def denied(rule_id: str, reason: str) -> "PolicyDecision":
        return PolicyDecision(False, rule_id, reason)


@dataclass(frozen=True)
class SkillPolicy:
    """The five mandatory behavior rules; disabling is for ablations only."""

    active: frozenset = frozenset(RULE_IDS)

    def is_active(self, rule_id: str) -> bool:
        return rule_id in self.active

    def without(self, *rule_ids: str) -> "SkillPolicy":
        return SkillPolicy(self.active - set(rule_ids))

    def describe(self) -> str:
        lines = [f"{rid}: {RULE_TEXT[rid]}" for rid in RULE_IDS if rid in self.active]
        return "\n".join(lines)


@dataclass
class ConfirmationToken:
    token_id: str
    session_id: str
    expires_at: float
    consumed: bool = False


@dataclass(frozen=True)
class OrderItem:
    offering_id: str
    offering_name: str
    tier: str
    parameters: tuple  # sorted (name, value) pairs

    def parameters_dict(self) -> dict:
        return dict(self.parameters)

    def as_dict(self) -> dict:
        return {
            "offeringId": self.offering_id,
            "offeringName": self.offering_name,
            "tier": self.tier,
            "parameters": {k: v for k, v in self.parameters},
        }


@dataclass(frozen=True)
class OrderPayload:
    order_id: str
    session_id: str
    start_date: str
    duration_days: int
    total_cost_cents: int
    items: tuple
    currency: str = "EUR"
    schema_version: str = ORDER_SCHEMA_VERSION

    def canonical_dict(self) -> dict:
        # Field order is fixed and documented; do not reorder.
        return {
            "schemaVersion": self.schema_version,
            "orderId": self.order_id,
            "sessionId": self.session_id,
            "startDate": self.start_date,
            "durationDays": self.duration_days,
            "currency": self.currency,
            "totalCostCents": self.total_cost_cents,
            "orderItems": [item.as_dict() for item in self.items],
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.canonical_dict(), separators=(",", ":"),
                          ensure_ascii=False).encode("utf-8")

    @staticmethod
    def from_dict(doc: Mapping) -> "OrderPayload":
        items = tuple(
            OrderItem(
                offering_id=i["offeringId"],
                offering_name=i["offeringName"],
                tier=i["tier"],
                parameters=tuple(sorted(i.get("parameters", {}).items())),
            )
            for i in doc.get("orderItems", ())
        )
        return OrderPayload(
            order_id=doc["orderId"],
            session_id=doc["sessionId"],
            start_date=doc["startDate"],
            duration_days=int(doc["durationDays"]),
            total_cost_cents=int(doc["totalCostCents"]),
            items=items,
            currency=doc.get("currency", "EUR"),
            schema_version=str(doc.get("schemaVersion", ORDER_SCHEMA_VERSION)),
        )


def _content_order_id(doc: dict) -> str:
    basis = dict(doc)
    basis["orderId"] = ""
    raw = json.dumps(basis, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return "ord-" + hashlib.sha256(raw).hexdigest()[:16]


def build_order_payload(catalog: Catalog, session_id: str,
                        items: Sequence, start_date: str,
                        duration_days: int) -> OrderPayload:
    """Assemble the canonical payload from resolved selections.

    ``items`` are (offering, parameters) pairs.  The orderId is a content
    hash, so equal drafts serialize to identical bytes regardless of when
    or where they were built.
    """
    order_items = []
    for offering, parameters in items:
        missing = [p for p in offering.parameter_names if p not in parameters]
        if missing:
            raise MissingParameter(missing)
        order_items.append(OrderItem(
            offering_id=offering.id,
            offering_name=offering.name,
            tier=offering.tier,
            parameters=tuple(sorted(parameters.items())),
        ))
    total = quote(catalog, [o.offering_id for o in order_items],
                  duration_days).total_cents
    payload = OrderPayload(
        order_id="",
        session_id=session_id,
        start_date=start_date,
        duration_days=duration_days,
        total_cost_cents=total,
        items=tuple(order_items),
    )
    order_id = _content_order_id(payload.canonical_dict())
    return OrderPayload(
        order_id=order_id,
        session_id=session_id,
        start_date=start_date,
        duration_days=duration_days,
        total_cost_cents=total,
        items=tuple(order_items),
    )


@dataclass(frozen=True)
class OrderRecord:
    record_id: int
    placed_at: str
    token_id: str
    payload: OrderPayload

    def as_dict(self) -> dict:
        return {
            "schemaVersion": INVENTORY_SCHEMA_VERSION,
            "recordId": self.record_id,
            "placedAt": self.placed_at,
            "tokenId": self.token_id,
            "order": self.payload.canonical_dict(),
        }


class OrderInventory:
    """Append-only order store, one JSON record per line."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._records: list = []
        if self.path is not None and self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        doc = json.loads(line)
                        self._records.append(OrderRecord(
                            record_id=doc["recordId"],
                            placed_at=doc["placedAt"],
                            token_id=doc["tokenId"],
                            payload=OrderPayload.from_dict(doc["order"]),
                        ))

    def append(self, placed_at: str, token_id: str,
               payload: OrderPayload) -> OrderRecord:
        with self._lock:
            record = OrderRecord(
                record_id=len(self._records) + 1,
                placed_at=placed_at,
                token_id=token_id,
                payload=payload,
            )
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.as_dict(), ensure_ascii=False,
                                        sort_keys=True) + "\n")
                    fh.flush()
            self._records.append(record)
        return record

    def records(self) -> tuple:
        with self._lock:
            return tuple(self._records)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


@dataclass(frozen=True)
class PolicyFindings:
    hallucinated: tuple = ()
    lower_layer: tuple = ()

    def __bool__(self) -> bool:
        return bool(self.hallucinated or self.lower_layer)


class ToolGateway:
    """Policy-gated tool surface over one catalog and one order inventory."""

    def __init__(self, catalog: Catalog, inventory: Optional[OrderInventory] = None,
                 policy: Optional[SkillPolicy] = None,
                 clock: Optional[Callable[[], float]] = None,
                 wall_clock: Optional[Callable[[], str]] = None,
                 token_ttl_seconds: float = DEFAULT_TOKEN_TTL_SECONDS):
        self.catalog = catalog
        self.inventory = inventory if inventory is not None else OrderInventory()
        self.policy = policy or SkillPolicy()
        self._clock = clock or time.monotonic
        self._wall_clock = wall_clock or (lambda: _utc_now_iso())
        self.token_ttl_seconds = token_ttl_seconds
        self._tokens: dict = {}
        self._token_lock = threading.Lock()

    # -- surface ---------------------------------------------------------------

    def list_tools(self) -> tuple:
        return _DESCRIPTORS

    # -- policy ------------------------------------------------------------------

    def enforce_policy(self, call: ToolCall, session) -> PolicyDecision:
        """R4 then R2 for order placement; R1/R3 hold structurally.

        R5 is a text-level rule and is evaluated by audit_response.
        """
        if call.tool_name != "order.place":
            return PolicyDecision.allowed()
        if self.policy.is_active("R4"):
            token_id = call.arguments.get("confirmationToken")
            problem = self._token_problem(token_id, call.session_id)
            if problem:
                return PolicyDecision.denied("R4", problem)
        if self.policy.is_active("R2"):
            if not session.tool_ledger.has_grounded_lookup():
                return PolicyDecision.denied(
                    "R2", "no catalog lookup on record for this session")
        return PolicyDecision.allowed()

    def _token_problem(self, token_id, session_id: str) -> str:
        if not token_id or not isinstance(token_id, str):
            return "missing confirmation token"
        with self._token_lock:
            token = self._tokens.get(token_id)
            if token is None:
                return "unknown confirmation token"
            if token.consumed:
                return "confirmation token already used"
            if token.session_id != session_id:
                return "confirmation token belongs to another session"
            if self._clock() > token.expires_at:
                return "confirmation token expired"
        return ""

    def mint_token(self, session_id: str) -> ConfirmationToken:
        token = ConfirmationToken(
            token_id=f"tok-{uuid.uuid4().hex}",
            session_id=session_id,
            expires_at=self._clock() + self.token_ttl_seconds,
        )
        with self._token_lock:
            self._tokens[token.token_id] = token
        return token

    # -- invocation --------------------------------------------------------------

    def invoke(self, call: ToolCall, session) -> ToolResult:
        if call.tool_name == "order.place" and call.stage_at_call != "Q5_Confirmation":
            # ordering before the review stage is a policy finding in itself
            session.tool_ledger.direct_order_attempts.append(call.call_id)
        decision = self.enforce_policy(call, session)
        if not decision.allow:
            result = ToolResult(call.call_id, "Denied",
                                {"reason": decision.reason}, decision.rule_id)
        else:
            result = self._dispatch(call, session)
        session.tool_ledger.append(call, result)
        return result

    def _dispatch(self, call: ToolCall, session) -> ToolResult:
        handlers = {
            "catalog.search": self._tool_search,
            "catalog.get": self._tool_get,
            "catalog.decompose": self._tool_decompose,
            "cost.quote": self._tool_quote,
            "order.place": self._tool_place,
        }
        handler = handlers.get(call.tool_name)
        if handler is None:
            return ToolResult(call.call_id, "Error",
                              {"error": "UnknownTool", "toolName": call.tool_name})
        try:
            return handler(call, session)
        except (TypeError, ValueError, KeyError) as err:
            return ToolResult(call.call_id, "Error",
                              {"error": "BadArguments", "detail": str(err)})

    def _tool_search(self, call: ToolCall, session) -> ToolResult:
        args = call.arguments
        constraints = ConstraintSet(
            keywords=tuple(args.get("keywords") or ()),
            max_daily_cost_cents=args.get("maxDailyCostCents"),
            required_parameters=tuple(args.get("requiredParameters") or ()),
        )
        hits = search_offerings(self.catalog, constraints)
        return ToolResult(call.call_id, "Ok",
                          {"offerings": [_offering_dict(o) for o in hits]})

    def _reference(self, args: Mapping):
        if args.get("id"):
            return args["id"]
        return {"name": args.get("name"), "tier": args.get("tier")}

    def _tool_get(self, call: ToolCall, session) -> ToolResult:
        try:
            offering = resolve_offering(self.catalog, self._reference(call.arguments))
        except NotFound as err:
            return ToolResult(call.call_id, "Ok",
                              {"found": False, "error": "NotFound",
                               "reference": str(err.reference)})
        except Ambiguous as err:
            return ToolResult(call.call_id, "Ok",
                              {"found": False, "error": "Ambiguous",
                               "name": err.name, "tiers": list(err.tiers)})
        return ToolResult(call.call_id, "Ok",
                          {"found": True, "offering": _offering_dict(offering)})

    def _tool_decompose(self, call: ToolCall, session) -> ToolResult:
        try:
            offering = resolve_offering(self.catalog, self._reference(call.arguments))
        except (NotFound, Ambiguous) as err:
            return ToolResult(call.call_id, "Ok",
                              {"error": type(err).__name__, "detail": str(err)})
        tree = decompose_offering(self.catalog, offering.id)
        return ToolResult(call.call_id, "Ok", {"tree": tree.as_dict()})

    def _tool_quote(self, call: ToolCall, session) -> ToolResult:
        args = call.arguments
        items = args.get("items") or []
        try:
            result = quote(self.catalog, items, int(args["durationDays"]),
                           budget_cents=args.get("budgetCents"))
        except (NotFound, Ambiguous) as err:
            return ToolResult(call.call_id, "Ok",
                              {"error": type(err).__name__, "detail": str(err)})
        except InvalidDuration as err:
            return ToolResult(call.call_id, "Error",
                              {"error": "InvalidDuration", "detail": str(err)})
        return ToolResult(call.call_id, "Ok", {"quote": result.as_dict()})

    def _tool_place(self, call: ToolCall, session) -> ToolResult:
        token_id = call.arguments.get("confirmationToken")
        try:
            payload = self.serialize_order(session)
            record = self.place_order(payload, token_id)
        except PolicyDenied as err:
            return ToolResult(call.call_id, "Denied",
                              {"reason": str(err)}, err.rule_id)
        except (IntegrityError, MissingParameter, NotFound) as err:
            return ToolResult(call.call_id, "Error",
                              {"error": type(err).__name__, "detail": str(err)})
        return ToolResult(call.call_id, "Ok",
                          {"orderId": record.payload.order_id,
                           "recordId": record.record_id,
                           "placedAt": record.placed_at})

    # -- orders --------------------------------------------------------------------

    def serialize_order(self, session) -> OrderPayload:
        """Canonical draft from the session's selections and temporal spec.

        Each item carries only the parameters its offering declares; session
        values for other names are dropped.
        """
        items = []
        for sel in session.selected_items:
            offering = resolve_offering(self.catalog, sel.offering_id)
            params = {k: v for k, v in sel.parameters.items()
                      if k in offering.parameter_names}
            items.append((offering, params))
        temporal = session.temporal
        return build_order_payload(
            self.catalog, session.session_id, items,
            temporal.start_date, temporal.duration_days,
        )

    def place_order(self, payload: OrderPayload, token_id) -> OrderRecord:
        if self.policy.is_active("R4"):
            problem = self._token_problem(token_id, payload.session_id)
            if problem:
                raise PolicyDenied("R4", problem)
        self._verify_payload(payload)
        with self._token_lock:
            token = self._tokens.get(token_id) if token_id else None
            if self.policy.is_active("R4"):
                if token is None or token.consumed:
                    raise PolicyDenied("R4", "confirmation token already used")
                token.consumed = True
            record = self.inventory.append(
                placed_at=self._wall_clock(),
                token_id=token_id or "",
                payload=payload,
            )
        return record

    def _verify_payload(self, payload: OrderPayload) -> None:
        if payload.duration_days < 1:
            raise IntegrityError("order duration must be at least one day")
        try:
            date.fromisoformat(payload.start_date)
        except ValueError:
            raise IntegrityError(
                f"startDate is not an ISO date: {payload.start_date!r}") from None
        for item in payload.items:
            try:
                offering = resolve_offering(self.catalog, item.offering_id)
            except NotFound:
                raise IntegrityError(
                    "order item does not resolve in the catalog",
                    offending_id=item.offering_id) from None
            if (offering.name, offering.tier) != (item.offering_name, item.tier):
                raise IntegrityError(
                    "order item name/tier does not match the catalog",
                    offending_id=item.offering_id)
            params = item.parameters_dict()
            missing = [p for p in offering.parameter_names if p not in params]
            if missing:
                raise IntegrityError(
                    f"order item missing parameters: {', '.join(missing)}",
                    offending_id=item.offering_id)
        expected = quote(self.catalog, [i.offering_id for i in payload.items],
                         payload.duration_days).total_cents
        if expected != payload.total_cost_cents:
            raise IntegrityError(
                f"order total {payload.total_cost_cents} does not match "
                f"engine quote {expected}")

    # -- text audit ------------------------------------------------------------------

    def audit_response(self, agent_text: str) -> PolicyFindings:
        """Deterministic text audit for fabricated products and layer leaks.

        Product-shaped mentions are quoted Title-Case spans plus capitalized
        noun phrases near ordering verbs; a mention that fails exact catalog
        resolution is a hallucination finding.  Unquoted fragments of real
        catalog names are skipped: the rule prefers under-extraction because
        structured proposals are the primary scoring channel.

        Fenced code blocks are excluded from the hallucination scan (their
        product references resolve through the structured channel), but the
        layer-leak scan covers them: an internal entity is a leak no matter
        how it is formatted.
        """
        if not agent_text:
            return PolicyFindings()
        prose = _FENCED_BLOCK.sub(" ", agent_text)
        hallucinated = self._find_hallucinations(prose)
        lower = self._find_lower_layer_mentions(agent_text)
        return PolicyFindings(tuple(hallucinated), tuple(lower))

    def _find_hallucinations(self, text: str) -> list:
        candidates = []
        for match in _QUOTED_SPAN.finditer(text):
            candidates.append((match.group(1), True))
        for verb_match in _ORDER_VERBS.finditer(text):
            window = text[verb_match.end():verb_match.end() + 120]
            for phrase in _CAP_PHRASE.finditer(window):
                candidates.append((phrase.group(0), False))
        findings, seen = [], set()
        for raw, quoted in candidates:
            name = _normalize_mention(raw)
            if not name or len(name) < 3:
                continue
            key = name.casefold()
            if key in seen:
                continue
            if not quoted and len(name.split()) < 2:
                continue
            if self._resolves(name):
                seen.add(key)
                continue
            if self._is_lower_layer_name(name):
                # a real catalog entity, wrong layer; the leak scan owns it
                seen.add(key)
                continue
            if not quoted and self._overlaps_catalog_name(name):
                continue
            seen.add(key)
            findings.append(name)
        return findings

    def _resolves(self, name: str) -> bool:
        try:
            resolve_offering(self.catalog, {"name": name})
            return True
        except Ambiguous:
            return True
        except NotFound:
            pass
        for tier in self._known_tiers():
            suffix = " " + tier.casefold()
            if name.casefold().endswith(suffix):
                base = name[: -len(suffix)]
                try:
                    resolve_offering(self.catalog, {"name": base, "tier": tier})
                    return True
                except (NotFound, Ambiguous):
                    continue
        return False

    def _known_tiers(self) -> tuple:
        return tuple({o.tier for o in self.catalog.offerings})

    def _is_lower_layer_name(self, name: str) -> bool:
        folded = name.casefold()
        return any(folded == known.casefold()
                   for known in self.catalog.lower_layer_names())

    def _overlaps_catalog_name(self, name: str) -> bool:
        """Catalog vocabulary: partial offering names and tier labels are
        not treated as fabrications when they appear unquoted."""
        folded = name.casefold()
        for offering in self.catalog.offerings:
            full = offering.name.casefold()
            if folded in full or full in folded:
                return True
        return any(folded == tier.casefold() for tier in self._known_tiers())

    def _find_lower_layer_mentions(self, text: str) -> list:
        folded = text.casefold()
        found = []
        for name in self.catalog.lower_layer_names():
            pattern = r"\b" + re.escape(name.casefold()) + r"\b"
            if re.search(pattern, folded):
                found.append(name)
        return sorted(found)


_FENCED_BLOCK = re.compile(r"```.*?```", re.DOTALL)
_QUOTED_SPAN = re.compile(
    r'["“‘\']([A-Z][^"”’\'\n]{2,70})["”’\']')
_ORDER_VERBS = re.compile(
    r"\b(?:order|orders|ordering|recommend|recommends|recommended|propose|"
    r"proposes|proposed|suggest|suggests|suggested|include|includes|included|"
    r"add|adds|added|provision|provisions|deploy|deploys|purchase|buy|need|"
    r"needs)\b", re.IGNORECASE)
_CAP_PHRASE = re.compile(
    r"\b[A-Z][\w()-]*(?:[ ][A-Z(][\w()-]*|[ ](?:and|of|for|on)[ ][A-Z][\w()-]*){1,6}")


def _normalize_mention(raw: str) -> str:
    cleaned = re.sub(r"\s+", " ", raw).strip(" \t.,;:!?")
    cleaned = cleaned.strip("\"'“”‘’")
    # tier parentheticals are labels, not part of the product name
    cleaned = re.sub(r"\s*\([^)]*\)?\s*$", "", cleaned)
    return cleaned


def _offering_dict(offering: ProductOffering) -> dict:
    return {
        "id": offering.id,
        "name": offering.name,
        "tier": offering.tier,
        "unitCostCents": offering.unit_cost_cents,
        "billing": offering.billing,
        "parameters": list(offering.parameter_names),
    }


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()
