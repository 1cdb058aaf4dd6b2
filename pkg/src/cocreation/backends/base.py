"""Chat-completion-with-tools contract shared by all agent backends.

A backend is stateless between calls: everything it may use is in the turn
history.  The engine talks to backends only through ``complete``, so the
deterministic oracle, the scripted fault profiles, and real remote endpoints
are interchangeable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

ROLES = ("System", "User", "Assistant", "Tool")


@dataclass(frozen=True)
class ToolCallRequest:
    call_id: str
    name: str
    arguments: dict


@dataclass
class ChatTurn:
    """One turn of dialogue.

    ``meta`` is engine-internal plumbing (stage hints for deterministic
    emulators); it is never serialized and never crosses the remote wire.
    """

    role: str
    content: str = ""
    tool_calls: tuple = ()
    tool_result_for: Optional[str] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown turn role: {self.role}")
        if self.role == "Assistant" and not self.content and not self.tool_calls:
            raise ValueError("assistant turn needs text or tool calls")
        if self.role == "Tool" and not self.tool_result_for:
            raise ValueError("tool turn must reference a call id")

    def as_dict(self) -> dict:
        doc: dict = {"role": self.role, "content": self.content}
        if self.tool_calls:
            doc["toolCalls"] = [
                {"callId": c.call_id, "name": c.name, "arguments": c.arguments}
                for c in self.tool_calls
            ]
        if self.tool_result_for:
            doc["toolResultFor"] = self.tool_result_for
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "ChatTurn":
        return ChatTurn(
            role=doc["role"],
            content=doc.get("content", ""),
            tool_calls=tuple(
                ToolCallRequest(c["callId"], c["name"], c.get("arguments") or {})
                for c in doc.get("toolCalls", ())
            ),
            tool_result_for=doc.get("toolResultFor"),
        )


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # oracle | scripted | remote | replay
    profile: Optional[str] = None
    endpoint_url: Optional[str] = None
    model_name: Optional[str] = None
    api_key_ref: Optional[str] = None
    per_turn_timeout: float = 60.0
    max_turns: int = 16

    def __post_init__(self) -> None:
        if self.kind == "remote" and not (self.endpoint_url and self.model_name):
            raise ValueError("remote backend needs endpointUrl and modelName")


class AgentBackend:
    """Interface: produce the next turn given history and available tools."""

    name = "backend"

    def complete(self, history: Sequence[ChatTurn], tools: Sequence) -> ChatTurn:
        raise NotImplementedError


_FENCED_JSON = re.compile(r"```json\s*\n(.*?)```", re.DOTALL)


def extract_json_blocks(text: str) -> list:
    """All parseable fenced JSON blocks in an assistant turn, in order."""
    blocks = []
    for match in _FENCED_JSON.finditer(text or ""):
        try:
            blocks.append(json.loads(match.group(1)))
        except json.JSONDecodeError:
            continue
    return blocks


def last_block_with(text: str, key: str) -> Optional[dict]:
    found = None
    for block in extract_json_blocks(text):
        if isinstance(block, dict) and key in block:
            found = block[key]
    return found


def latest_phase(history: Sequence[ChatTurn]) -> Optional[dict]:
    """The engine's most recent phase hint, scanning backwards."""
    for turn in reversed(history):
        if turn.meta.get("phase"):
            return turn.meta
    return None


def turns_since_last_user(history: Sequence[ChatTurn]) -> list:
    """Turns after the last User turn (the current reasoning round)."""
    last_user = -1
    for i, turn in enumerate(history):
        if turn.role == "User":
            last_user = i
    return list(history[last_user + 1:])
