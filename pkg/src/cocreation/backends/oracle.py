"""Reference agent: deterministic, catalog-grounded, policy-clean.

The oracle plays the role of a perfectly behaved assistant.  Every product
it proposes comes from a catalog.search it issued in the same round, every
total it states is read back from a cost.quote result, and it never touches
order.place.  It exists to pin down expected end-to-end behavior, so all of
its choices are deterministic functions of the dialogue history.
"""

from __future__ import annotations

import itertools
import json
import re
from typing import Optional, Sequence

from ..money import extract_duration_days, format_euros
from .base import (
    AgentBackend,
    ChatTurn,
    ToolCallRequest,
    extract_json_blocks,
    latest_phase,
    turns_since_last_user,
)

_ISO_DATE = re.compile(r"\b(\d{4}-\d{2}-\d{2})\b")
_CITY = re.compile(r"\bin\s+([A-Z][a-zA-Z]+(?:\s+[A-Z][a-zA-Z]+)*)")
_LATENCY = re.compile(r"(?:below|under|less than|<)\s*(\d+)\s*ms", re.IGNORECASE)

# intent keywords that pull the media cache family into the plan
_MEDIA_HINTS = ("xr", "video", "stream", "media", "cache", "cdn", "broadcast")
_API_HINTS = ("api", "developer", "exposure")

_SEARCH_CALL = "oracle-search-1"
_QUOTE_PREFIX = "oracle-quote-"


class OracleBackend(AgentBackend):
    """Best-case agent used as the harness baseline and in tests."""

    name = "oracle"

    def complete(self, history: Sequence[ChatTurn], tools: Sequence) -> ChatTurn:
        hint = latest_phase(history) or {}
        phase = hint.get("phase")
        if phase == "ground":
            return self._ground(history)
        if phase == "propose":
            return self._propose(history, hint.get("contract") or {})
        if phase == "temporal":
            return self._temporal(history)
        if phase == "review":
            return self._review(history)
        return ChatTurn("Assistant", "How can I help with your connectivity needs?")

    # -- grounding ----------------------------------------------------------------

    def _ground(self, history: Sequence[ChatTurn]) -> ChatTurn:
        goal = self._last_user_text(history)
        city = self._find_city(goal)
        qos = []
        latency = _LATENCY.search(goal)
        if latency:
            qos.append({"metric": "latency", "comparator": "<",
                        "value": int(latency.group(1)), "unit": "ms"})
        intent = {
            "location": city,
            "budgetCents": None,
            "budgetPeriod": None,
            "durationDaysHint": extract_duration_days(goal),
            "sliceProfile": None,
            "qosConstraints": qos,
            "policyConstraints": [],
        }
        lines = ["Understood. Here is what I captured from your request:"]
        if city:
            lines.append(f"- location: {city}")
        if qos:
            lines.append(f"- latency bound: {qos[0]['value']} {qos[0]['unit']}")
        lines.append("I will ground every product reference in the catalog "
                     "before proposing anything.")
        body = "\n".join(lines)
        return ChatTurn("Assistant",
                        f"{body}\n```json\n{json.dumps({'intent': intent})}\n```")

    # -- proposals -------------------------------------------------------------------

    def _propose(self, history: Sequence[ChatTurn], contract: dict) -> ChatTurn:
        round_turns = turns_since_last_user(history)
        searched = any(t.role == "Tool" and t.tool_result_for == _SEARCH_CALL
                       for t in round_turns)
        if not searched:
            return ChatTurn("Assistant", tool_calls=(
                ToolCallRequest(_SEARCH_CALL, "catalog.search", {}),))
        offerings = self._search_payload(round_turns)
        plans = self._rank_plans(offerings, contract)
        if not plans:
            unbounded = self._rank_plans(offerings, dict(contract, budgetCents=None))
            shortfall = ""
            if unbounded and contract.get("budgetCents") is not None:
                floor = min(total for total, _ in unbounded)
                gap = floor - contract["budgetCents"]
                shortfall = (f" The cheapest suitable combination costs "
                             f"{format_euros(floor)}, which exceeds "
                             f"your budget by {format_euros(gap)}.")
            return ChatTurn("Assistant",
                            "I could not find a catalog combination within the "
                            "stated budget." + shortfall)
        quotes = self._quote_payloads(round_turns)
        if len(quotes) < min(2, len(plans)):
            calls = []
            for i, (_, bundle) in enumerate(plans[:2], start=1):
                calls.append(ToolCallRequest(
                    f"{_QUOTE_PREFIX}{i}", "cost.quote",
                    {"items": [o["id"] for o in bundle],
                     "durationDays": contract.get("durationHintDays") or 1,
                     "budgetCents": contract.get("budgetCents")}))
            return ChatTurn("Assistant", tool_calls=tuple(calls))
        return self._proposal_text(plans[:2], quotes)

    def _proposal_text(self, plans, quotes) -> ChatTurn:
        labels = ("Recommended", "Alternative")
        lines = ["Based on the catalog, I can offer these combinations:"]
        proposals = []
        for i, (_, bundle) in enumerate(plans):
            quote = quotes.get(f"{_QUOTE_PREFIX}{i + 1}")
            total = quote["totalCostCents"] if quote else None
            names = ", ".join(f"{o['name']} ({o['tier']})" for o in bundle)
            stated = format_euros(total) if total is not None else "unpriced"
            lines.append(f"{i + 1}. {labels[i]}: {names}. Total {stated}.")
            proposals.append({
                "items": [{"name": o["name"], "tier": o["tier"]} for o in bundle],
                "rationale": f"{labels[i]} mix within your constraints",
            })
        lines.append("Both are fully covered by the current catalog.")
        body = "\n".join(lines)
        block = json.dumps({"proposals": proposals})
        return ChatTurn("Assistant", f"{body}\n```json\n{block}\n```")

    def _rank_plans(self, offerings: list, contract: dict) -> list:
        """Enumerate one-offering-per-family combinations and rank them.

        Rank within a family follows unit cost; plans are ordered by
        (weakest member tier, tier sum, total cost) descending, keeping
        only plans whose quote-equivalent total fits the budget.
        """
        goal = (contract.get("goalText") or "").casefold()
        duration = contract.get("durationHintDays") or 1
        budget = contract.get("budgetCents")
        families: dict = {}
        for off in offerings:
            families.setdefault(off["name"], []).append(off)
        for members in families.values():
            members.sort(key=lambda o: o["unitCostCents"])
        wanted = []
        for name, members in sorted(families.items()):
            folded = name.casefold()
            if "slice" in folded and "observability" not in folded:
                wanted.append(members)
            elif "setup" in folded:
                wanted.append(members)
            elif "observability" in folded:
                wanted.append(members)
            elif "cache" in folded and any(h in goal for h in _MEDIA_HINTS):
                wanted.append(members)
            elif "api" in folded and any(h in goal for h in _API_HINTS):
                wanted.append(members)
        plans = []
        for combo in itertools.product(*wanted):
            total = 0
            for off in combo:
                per_day = off["billing"] == "PerDay"
                total += off["unitCostCents"] * (duration if per_day else 1)
            if budget is not None and total > budget:
                continue
            ranks = [self._tier_rank(off, families[off["name"]])
                     for off in combo if len(families[off["name"]]) > 1]
            if not ranks:
                ranks = [1]
            plans.append(((min(ranks), sum(ranks), total), (total, list(combo))))
        plans.sort(key=lambda p: p[0], reverse=True)
        return [plan for _, plan in plans]

    @staticmethod
    def _tier_rank(offering: dict, members: list) -> int:
        return members.index(offering) + 1

    # -- temporal ---------------------------------------------------------------------

    def _temporal(self, history: Sequence[ChatTurn]) -> ChatTurn:
        text = self._last_user_text(history)
        found = _ISO_DATE.search(text)
        duration = extract_duration_days(text)
        if not found or not duration:
            return ChatTurn("Assistant",
                            "Please give me the start date (YYYY-MM-DD) and "
                            "how many days the service should run.")
        block = json.dumps({"temporal": {"startDate": found.group(1),
                                         "durationDays": duration}})
        return ChatTurn(
            "Assistant",
            f"Noted: starting {found.group(1)} for {duration} days.\n"
            f"```json\n{block}\n```")

    # -- review -------------------------------------------------------------------------

    def _review(self, history: Sequence[ChatTurn]) -> ChatTurn:
        draft = self._draft_from(history)
        if draft is None:
            return ChatTurn("Assistant", "I have no order draft to review yet.")
        total = format_euros(draft["totalCostCents"])
        names = ", ".join(item["offeringName"] for item in draft["orderItems"])
        return ChatTurn(
            "Assistant",
            f"Your order covers: {names}. It starts {draft['startDate']} and "
            f"runs {draft['durationDays']} days. The total is {total}. "
            "Shall I place the order?")

    # -- shared helpers -------------------------------------------------------------------

    @staticmethod
    def _last_user_text(history: Sequence[ChatTurn]) -> str:
        for turn in reversed(history):
            if turn.role == "User":
                return turn.content
        return ""

    @staticmethod
    def _find_city(text: str) -> Optional[str]:
        for match in _CITY.finditer(text):
            candidate = match.group(1)
            if candidate.isupper():  # acronyms like XR are not places
                continue
            return candidate
        return None

    @staticmethod
    def _tool_payload(turn: ChatTurn) -> dict:
        try:
            doc = json.loads(turn.content)
        except json.JSONDecodeError:
            return {}
        return doc.get("payload") or {}

    def _search_payload(self, round_turns: list) -> list:
        for turn in round_turns:
            if turn.role == "Tool" and turn.tool_result_for == _SEARCH_CALL:
                return self._tool_payload(turn).get("offerings") or []
        return []

    def _quote_payloads(self, round_turns: list) -> dict:
        quotes = {}
        for turn in round_turns:
            if (turn.role == "Tool" and turn.tool_result_for
                    and turn.tool_result_for.startswith(_QUOTE_PREFIX)):
                payload = self._tool_payload(turn)
                if payload.get("quote"):
                    quotes[turn.tool_result_for] = payload["quote"]
        return quotes

    def _draft_from(self, history: Sequence[ChatTurn]) -> Optional[dict]:
        text = self._last_user_text(history)
        for block in reversed(extract_json_blocks(text)):
            if isinstance(block, dict) and "orderItems" in block:
                return block
        return None
