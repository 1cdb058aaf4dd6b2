"""Adapter for OpenAI-style chat-completion endpoints.

Local model servers expose this wire shape almost universally, so one
adapter covers them.  Function names must satisfy the wire's identifier
charset, so tool dots become underscores on the way out; the engine maps
them back on the way in.  Responses from small models are parsed
defensively: malformed tool-call fragments degrade to text turns so the
engine's own retry-then-classify logic can deal with them.
"""

from __future__ import annotations

import json
from typing import Optional, Sequence

import httpx

from ..errors import BackendError, BackendTimeout, TransportError
from .base import AgentBackend, BackendConfig, ChatTurn, ToolCallRequest

_ROLE_WIRE = {"System": "system", "User": "user",
              "Assistant": "assistant", "Tool": "tool"}

_TYPE_WIRE = {
    "string": {"type": "string"},
    "integer": {"type": "integer"},
    "number": {"type": "number"},
    "boolean": {"type": "boolean"},
    "object": {"type": "object"},
    "array[string]": {"type": "array", "items": {"type": "string"}},
}


def wire_tool_name(name: str) -> str:
    return name.replace(".", "_")


class RemoteBackend(AgentBackend):
    """One evaluated model behind an OpenAI-compatible endpoint."""

    def __init__(self, config: BackendConfig,
                 transport: Optional[httpx.BaseTransport] = None):
        if config.kind != "remote":
            raise ValueError("RemoteBackend requires a remote BackendConfig")
        self.config = config
        self.name = f"remote:{config.model_name}"
        headers = {}
        if config.api_key_ref:
            headers["Authorization"] = f"Bearer {config.api_key_ref}"
        self._client = httpx.Client(
            base_url=config.endpoint_url,
            timeout=config.per_turn_timeout,
            headers=headers,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "RemoteBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- wire mapping -----------------------------------------------------------

    def _wire_message(self, turn: ChatTurn) -> dict:
        doc: dict = {"role": _ROLE_WIRE[turn.role], "content": turn.content}
        if turn.role == "Assistant" and turn.tool_calls:
            doc["tool_calls"] = [
                {
                    "id": call.call_id,
                    "type": "function",
                    "function": {
                        "name": wire_tool_name(call.name),
                        "arguments": json.dumps(call.arguments),
                    },
                }
                for call in turn.tool_calls
            ]
            if not turn.content:
                doc["content"] = None
        if turn.role == "Tool":
            doc["tool_call_id"] = turn.tool_result_for
        return doc

    @staticmethod
    def _wire_tool(descriptor) -> dict:
        properties = {}
        required = []
        for name, type_name, is_required, description in descriptor.parameter_schema:
            schema = dict(_TYPE_WIRE.get(type_name, {"type": "string"}))
            schema["description"] = description
            properties[name] = schema
            if is_required:
                required.append(name)
        return {
            "type": "function",
            "function": {
                "name": wire_tool_name(descriptor.name),
                "description": descriptor.description,
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                },
            },
        }

    # -- completion ----------------------------------------------------------------

    def complete(self, history: Sequence[ChatTurn], tools: Sequence) -> ChatTurn:
        payload = {
            "model": self.config.model_name,
            "messages": [self._wire_message(t) for t in history],
            "tools": [self._wire_tool(d) for d in tools],
            "temperature": 0,
        }
        try:
            response = self._client.post("/chat/completions", json=payload)
        except httpx.TimeoutException as err:
            raise BackendTimeout(
                f"{self.name} did not answer within "
                f"{self.config.per_turn_timeout:.0f}s") from err
        except httpx.HTTPError as err:
            raise TransportError(f"{self.name}: {err}") from err
        if response.status_code != 200:
            raise TransportError(
                f"{self.name}: endpoint returned HTTP {response.status_code}")
        try:
            message = response.json()["choices"][0]["message"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as err:
            raise BackendError(
                f"{self.name}: malformed completion payload",
                cause="protocol") from err
        return self._parse_message(message)

    def _parse_message(self, message: dict) -> ChatTurn:
        content = message.get("content") or ""
        calls = []
        for fragment in message.get("tool_calls") or ():
            parsed = self._parse_tool_call(fragment)
            if parsed is not None:
                calls.append(parsed)
        if not content and not calls:
            raise BackendError(f"{self.name}: empty completion",
                               cause="protocol")
        return ChatTurn("Assistant", content, tool_calls=tuple(calls))

    @staticmethod
    def _parse_tool_call(fragment) -> Optional[ToolCallRequest]:
        if not isinstance(fragment, dict):
            return None
        function = fragment.get("function") or {}
        name = function.get("name")
        if not name or not isinstance(name, str):
            return None
        raw_args = function.get("arguments")
        arguments: dict = {}
        if isinstance(raw_args, str) and raw_args.strip():
            try:
                parsed = json.loads(raw_args)
                if isinstance(parsed, dict):
                    arguments = parsed
            except json.JSONDecodeError:
                arguments = {}
        elif isinstance(raw_args, dict):
            arguments = raw_args
        return ToolCallRequest(
            call_id=str(fragment.get("id") or ""),
            name=name,
            arguments=arguments,
        )
