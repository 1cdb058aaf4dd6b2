"""Deterministic replicas of observed agent behaviors.

Each profile freezes how one evaluated model behaved on the live-event
scenario: which bundle it proposed, which products it invented, whether it
could emit structured tool calls, and how it handled dates and totals.
Replaying them through the real engine reproduces the benchmark score
matrix without network access or GPU time.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Optional, Sequence

from ..errors import BackendTimeout
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


@dataclass(frozen=True)
class AgentProfile:
    """One model's frozen behavior on the co-creation flow.

    ``propose`` is one of bundle (grounded proposals), prose (no usable
    proposal), pseudo_tool_text (tool calls written as text), or
    unresponsive.  ``temporal`` is echo, skew_date, or unresponsive.
    ``review`` is accurate or misquote.
    """

    name: str
    display_name: str
    reasoning: bool
    propose: str = "bundle"
    bundles: tuple = ()  # tuples of (name, tier) references, in stated order
    extra_mentions: tuple = ()  # invented names dropped into proposal prose
    pseudo_names: tuple = ()  # invented names inside pseudo tool text
    temporal: str = "echo"
    date_skew_days: int = 0
    review: str = "accurate"
    misquote_cents: int = 0
    latency_hint_minutes: Optional[int] = None
    notes: str = ""


_SLICE = "On-demand Network Slice"
_CACHE = "Edge Media Cache Server"
_OBS = "Network Slice Observability"
_APIS = "Service APIs Exposure"
_SETUP = "Service Setup and VPN"

PROFILES: dict = {}


def _profile(**kwargs) -> AgentProfile:
    profile = AgentProfile(**kwargs)
    PROFILES[profile.name] = profile
    return profile


_profile(
    name="gpt-oss-20b", display_name="Gpt-oss:20b", reasoning=True,
    bundles=(
        ((_SLICE, "Gold"), (_CACHE, "Large (GPU)"), (_OBS, "Admin Access"),
         (_APIS, "Standard")),
        ((_SLICE, "Platinum"), (_CACHE, "Large (GPU)"), (_OBS, "Admin Access"),
         (_APIS, "Standard")),
    ),
    latency_hint_minutes=6,
    notes="swaps the setup product for API exposure; everything else clean",
)

_profile(
    name="qwen3-32b", display_name="Qwen3:32b", reasoning=True,
    bundles=(
        ((_SLICE, "Gold"), (_CACHE, "Large (GPU)"), (_OBS, "Admin Access"),
         (_SETUP, "Standard")),
        ((_SLICE, "Silver"), (_CACHE, "Small"), (_OBS, "Admin Access"),
         (_SETUP, "Standard")),
    ),
    extra_mentions=("Quantum Uplink Booster",),
    temporal="skew_date", date_skew_days=1,
    latency_hint_minutes=14,
    notes="full expected bundle, one invented add-on, start date off by a day",
)

_profile(
    name="qwen3-vl-8b", display_name="Qwen3-vl:8b", reasoning=True,
    bundles=(
        ((_SLICE, "Gold"), (_CACHE, "Large (GPU)"), (_OBS, "Admin Access")),
    ),
    temporal="unresponsive",
    latency_hint_minutes=26,
    notes="sound proposal, then stalls past the idle timeout on scheduling",
)

_profile(
    name="deepseek-r1-32b", display_name="Deepseek-r1:32b", reasoning=True,
    propose="prose",
    notes="deliberates at length but never produces a usable proposal",
)

_profile(
    name="magistral-24b", display_name="Magistral:24b", reasoning=True,
    propose="prose",
    notes="asks clarifying questions instead of proposing",
)

_profile(
    name="llama3.1-8b", display_name="Llama3.1:8b", reasoning=False,
    bundles=(
        ((_SLICE, "Silver"), (_OBS, "Admin Access"), (_APIS, "Standard")),
    ),
    temporal="skew_date", date_skew_days=2,
    review="misquote", misquote_cents=325_000,
    latency_hint_minutes=6,
    notes="undersized bundle and a self-computed total that is wrong",
)

_profile(
    name="llama3.2-3b", display_name="Llama3.2:3b", reasoning=False,
    bundles=(
        ((_SLICE, "Gold"), ("Network Cache Accelerator", "Large"),
         (_OBS, "Admin Access")),
    ),
    temporal="skew_date", date_skew_days=1,
    review="misquote", misquote_cents=500_000,
    latency_hint_minutes=5,
    notes="one invented product inside the bundle itself",
)

_profile(
    name="mistral-small3.2-24b", display_name="Mistral-small3.2:24b",
    reasoning=False,
    bundles=(
        ((_SLICE, "Gold"), (_CACHE, "Large (GPU)"), (_OBS, "Admin Access")),
    ),
    extra_mentions=("Unified Traffic Shaper",),
    temporal="skew_date", date_skew_days=1,
    notes="near-complete bundle plus one invented add-on",
)

_profile(
    name="ministral-3-3b", display_name="Ministral-3:3b", reasoning=False,
    bundles=(
        ((_SLICE, "Gold"), (_CACHE, "Large (GPU)"), (_OBS, "Admin Access")),
    ),
    temporal="skew_date", date_skew_days=1,
    latency_hint_minutes=3,
    notes="clean but incomplete bundle, start date off by a day",
)

_profile(
    name="granite3.1-moe-3b", display_name="Granite3.1-moe:3b", reasoning=False,
    propose="pseudo_tool_text",
    pseudo_names=(
        "Ultra Low Latency Slice", "Premium Edge Booster",
        "Smart Traffic Optimizer", "Holographic Stream Enhancer",
        "Dynamic Bandwidth Reserver", "Edge AI Accelerator Pack",
        "Instant Failover Shield", "Virtual Arena Uplink",
        "Crowd Density Analyzer", "Immersive QoE Monitor",
        "Adaptive Jitter Damper", "Multi-Venue Sync Fabric",
        "Spectral Allocation Boost", "Zero-Touch Onboarder",
        "Latency Insurance Addon", "Peak Hour Turbocharger",
    ),
    notes="floods the chat with invented products inside textual tool calls",
)

_profile(
    name="mistral-7b", display_name="Mistral:7b", reasoning=False,
    propose="pseudo_tool_text",
    pseudo_names=(
        "Network Quality Pack", "Event Streaming Bundle",
        "Priority Access Token", "Coverage Extender Kit",
    ),
    notes="writes tool calls as text around invented products",
)

_profile(
    name="smollm2-1.7b", display_name="Smollm2:1.7b", reasoning=False,
    propose="pseudo_tool_text",
    pseudo_names=(
        "Super Fast Internet Plan", "Video Helper Service",
        "Gamer Boost Package", "Cloud Power Unit",
    ),
    notes="writes tool calls as text around invented products",
)

_profile(
    name="mistral-nemo-12b", display_name="Mistral-nemo:12b", reasoning=False,
    propose="unresponsive",
    notes="never answers the proposal prompt within the idle timeout",
)


def profile_names() -> tuple:
    return tuple(PROFILES)


def get_profile(name: str) -> AgentProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(
            f"unknown agent profile {name!r}; known: {', '.join(PROFILES)}"
        ) from None


def hallucinate_products(count: int) -> AgentProfile:
    """Synthetic fault profile that fabricates exactly ``count`` products.

    The proposal itself stays grounded in the expert bundle; the invented
    names appear only as quoted suggestions, so the hallucination tally is
    the single variable under test.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    mentions = tuple(f"Phantom Capacity Module Mk{i}"
                     for i in range(1, count + 1))
    return AgentProfile(
        name=f"hallucinate-products-{count}",
        display_name=f"HallucinateProducts({count})",
        reasoning=False,
        bundles=(
            ((_SLICE, "Gold"), (_CACHE, "Large (GPU)"),
             (_OBS, "Admin Access"), (_SETUP, "Standard")),
        ),
        extra_mentions=mentions,
        notes="parameterized fabrication dial for monotonicity checks",
    )


class ScriptedBackend(AgentBackend):
    """Plays back one AgentProfile through the engine's phase hints."""

    def __init__(self, profile: AgentProfile):
        self.profile = profile
        self.name = f"scripted:{profile.name}"

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
        return ChatTurn("Assistant", "Tell me about your connectivity needs.")

    # -- grounding --------------------------------------------------------------

    def _ground(self, history: Sequence[ChatTurn]) -> ChatTurn:
        goal = _last_user_text(history)
        city_match = next(
            (m.group(1) for m in _CITY.finditer(goal)
             if not m.group(1).isupper()), None)
        intent = {
            "location": city_match,
            "budgetCents": None,
            "budgetPeriod": None,
            "durationDaysHint": extract_duration_days(goal),
            "sliceProfile": None,
            "qosConstraints": [],
            "policyConstraints": [],
        }
        return ChatTurn(
            "Assistant",
            "Got it. Let me capture the request before touching the catalog."
            f"\n```json\n{json.dumps({'intent': intent})}\n```")

    # -- proposals ------------------------------------------------------------------

    def _propose(self, history: Sequence[ChatTurn], contract: dict) -> ChatTurn:
        behavior = self.profile.propose
        if behavior == "unresponsive":
            raise BackendTimeout(
                f"{self.profile.display_name} produced no output")
        round_turns = turns_since_last_user(history)
        if behavior == "prose":
            return ChatTurn(
                "Assistant",
                "I went over the request several times, but I cannot tie it "
                "to concrete catalog entries with confidence. Could you "
                "clarify exactly which capabilities matter most?")
        if behavior == "pseudo_tool_text":
            return self._pseudo_tool_text(round_turns)
        searched = any(t.role == "Tool" for t in round_turns)
        if not searched:
            return ChatTurn("Assistant", tool_calls=(
                ToolCallRequest(f"sc-{uuid.uuid4().hex[:8]}",
                                "catalog.search", {}),))
        return self._bundle_reply(contract)

    def _pseudo_tool_text(self, round_turns: list) -> ChatTurn:
        retry = any(t.role == "System" for t in round_turns)
        names = self.profile.pseudo_names
        half = (len(names) + 1) // 2
        batch = names[half:] if retry else names[:half]
        if not batch:
            batch = names
        lines = ["Let me check the catalog:"]
        lines += [f'catalog.search("{name}")' for name in batch]
        lines.append("I will use these products for your event.")
        return ChatTurn("Assistant", "\n".join(lines))

    def _bundle_reply(self, contract: dict) -> ChatTurn:
        proposals = []
        lines = ["Here is what I suggest for your event:"]
        for i, bundle in enumerate(self.profile.bundles, start=1):
            names = ", ".join(f"{name} ({tier})" for name, tier in bundle)
            lines.append(f"{i}. {names}.")
            proposals.append({
                "items": [{"name": name, "tier": tier} for name, tier in bundle],
                "rationale": "combination assembled for the stated event",
            })
        for extra in self.profile.extra_mentions:
            lines.append(f'You could also add the "{extra}" for extra headroom.')
        block = json.dumps({"proposals": proposals})
        return ChatTurn("Assistant", "\n".join(lines) + f"\n```json\n{block}\n```")

    # -- temporal --------------------------------------------------------------------

    def _temporal(self, history: Sequence[ChatTurn]) -> ChatTurn:
        if self.profile.temporal == "unresponsive":
            raise BackendTimeout(
                f"{self.profile.display_name} produced no output")
        text = _last_user_text(history)
        found = _ISO_DATE.search(text)
        duration = extract_duration_days(text) or 7
        if not found:
            return ChatTurn("Assistant", "When should the service start?")
        start = date.fromisoformat(found.group(1))
        if self.profile.temporal == "skew_date":
            start = start + timedelta(days=self.profile.date_skew_days)
        block = json.dumps({"temporal": {"startDate": start.isoformat(),
                                         "durationDays": duration}})
        return ChatTurn(
            "Assistant",
            f"Scheduling from {start.isoformat()} for {duration} days."
            f"\n```json\n{block}\n```")

    # -- review ----------------------------------------------------------------------

    def _review(self, history: Sequence[ChatTurn]) -> ChatTurn:
        draft = _draft_from(history)
        if draft is None:
            return ChatTurn("Assistant", "There is no draft to summarize.")
        if self.profile.review == "misquote":
            total = format_euros(self.profile.misquote_cents)
        else:
            total = format_euros(draft["totalCostCents"])
        names = ", ".join(item["offeringName"] for item in draft["orderItems"])
        return ChatTurn(
            "Assistant",
            f"The order covers {names}, starting {draft['startDate']} for "
            f"{draft['durationDays']} days. Total: {total}. "
            "Please confirm and I will proceed.")


def _last_user_text(history: Sequence[ChatTurn]) -> str:
    for turn in reversed(history):
        if turn.role == "User":
            return turn.content
    return ""


def _draft_from(history: Sequence[ChatTurn]) -> Optional[dict]:
    text = _last_user_text(history)
    for block in reversed(extract_json_blocks(text)):
        if isinstance(block, dict) and "orderItems" in block:
            return block
    return None
