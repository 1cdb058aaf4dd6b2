from .base import AgentBackend, BackendConfig, ChatTurn, ToolCallRequest
from .oracle import OracleBackend
from .replay import ReplayBackend
from .remote import RemoteBackend
from .scripted import (
    PROFILES,
    AgentProfile,
    ScriptedBackend,
    get_profile,
    hallucinate_products,
    profile_names,
)

__all__ = [
    "AgentBackend",
    "AgentProfile",
    "BackendConfig",
    "ChatTurn",
    "OracleBackend",
    "PROFILES",
    "RemoteBackend",
    "ReplayBackend",
    "ScriptedBackend",
    "ToolCallRequest",
    "get_profile",
    "hallucinate_products",
    "make_backend",
    "profile_names",
]


def make_backend(config: BackendConfig) -> AgentBackend:
    """Backend from config; the scenario harness and CLI both route here."""
    if config.kind == "oracle":
        return OracleBackend()
    if config.kind == "scripted":
        if not config.profile:
            raise ValueError("scripted backend needs a profile name")
        return ScriptedBackend(get_profile(config.profile))
    if config.kind == "remote":
        return RemoteBackend(config)
    raise ValueError(f"unknown backend kind: {config.kind}")
