"""Replay of recorded assistant turns through the live engine.

Only assistant turns are replayed; tool calls re-execute against the real
gateway, so a replayed session revalidates policy and re-derives every
quote instead of trusting the recording.
"""

from __future__ import annotations

from typing import Sequence

from ..errors import BackendError
from .base import AgentBackend, ChatTurn


class ReplayBackend(AgentBackend):
    """Feeds back the assistant turns of a recorded transcript, in order."""

    name = "replay"

    def __init__(self, transcript: Sequence[dict]):
        self._turns = [
            ChatTurn.from_dict(doc) for doc in transcript
            if doc.get("role") == "Assistant"
        ]
        self._cursor = 0

    @property
    def remaining(self) -> int:
        return len(self._turns) - self._cursor

    def complete(self, history: Sequence[ChatTurn], tools: Sequence) -> ChatTurn:
        if self._cursor >= len(self._turns):
            raise BackendError("recorded transcript is exhausted",
                               cause="replay-exhausted")
        turn = self._turns[self._cursor]
        self._cursor += 1
        return turn
