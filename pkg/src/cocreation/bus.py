"""Topic-based agent coordination: pub/sub, request-reply, socket bridge.

The bus is in-process.  Delivery is at-least-once within a retention window
(per-topic message count and age caps), so consumers are expected to be
idempotent; a messageId dedup helper is provided.  The optional socket bridge
lets out-of-process agents join over length-prefixed JSON frames.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import struct
import threading
import time
import uuid
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import BusClosed, RequestTimeout

log = logging.getLogger(__name__)

KINDS = ("Task", "Result", "Event")

_SENTINEL = object()
_ANSWERED_CAP = 2048


@dataclass(frozen=True)
class AgentMessage:
    message_id: str
    topic: str
    sender_role: str
    kind: str
    payload: dict
    timestamp: float
    correlation_id: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "messageId": self.message_id,
            "topic": self.topic,
            "correlationId": self.correlation_id,
            "senderRole": self.sender_role,
            "kind": self.kind,
            "payload": self.payload,
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_dict(doc: dict) -> "AgentMessage":
        return AgentMessage(
            message_id=doc["messageId"],
            topic=doc["topic"],
            correlation_id=doc.get("correlationId"),
            sender_role=doc["senderRole"],
            kind=doc["kind"],
            payload=doc.get("payload") or {},
            timestamp=float(doc.get("timestamp") or 0.0),
        )


def new_message(topic: str, sender_role: str, kind: str, payload: dict,
                correlation_id: Optional[str] = None) -> AgentMessage:
    if kind not in KINDS:
        raise ValueError(f"unknown message kind: {kind}")
    return AgentMessage(
        message_id=f"msg-{uuid.uuid4().hex}",
        topic=topic,
        sender_role=sender_role,
        kind=kind,
        payload=payload,
        timestamp=time.time(),
        correlation_id=correlation_id,
    )


@dataclass(frozen=True)
class Receipt:
    message_id: str
    topic: str
    subscriber_count: int


class Subscription:
    """One handler on one topic; its invocations are serialized."""

    def __init__(self, bus: "AgentBus", topic: str,
                 handler: Callable[[AgentMessage], None]):
        self._bus = bus
        self.topic = topic
        self._handler = handler
        self._queue: queue.Queue = queue.Queue()
        self._worker = threading.Thread(target=self._run, daemon=True)
        self.active = True
        self._worker.start()

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is _SENTINEL:
                return
            if isinstance(item, _Probe):
                item.event.set()
                continue
            try:
                self._handler(item)
            except Exception:
                log.exception("subscriber handler failed on %s", self.topic)

    def _enqueue(self, message: AgentMessage) -> None:
        self._queue.put(message)

    def unsubscribe(self) -> None:
        self._bus._detach(self)
        if self.active:
            self.active = False
            self._queue.put(_SENTINEL)

    def drain(self, timeout: float = 2.0) -> None:
        """Block until everything enqueued so far has been handled."""
        done = threading.Event()
        self._queue.put(_Probe(done))
        done.wait(timeout)


class _Probe:
    def __init__(self, event: threading.Event):
        self.event = event


class AgentBus:
    """In-process topic bus with retained delivery and request-reply."""

    def __init__(self, retention_count: int = 1000,
                 retention_seconds: float = 600.0,
                 clock: Optional[Callable[[], float]] = None):
        self.retention_count = retention_count
        self.retention_seconds = retention_seconds
        self._clock = clock or time.monotonic
        self._lock = threading.Lock()
        self._subs: dict = {}
        self._retained: dict = {}
        self._answered: "OrderedDict[str, int]" = OrderedDict()
        self._closed = False

    # -- core ----------------------------------------------------------------

    def publish(self, topic: str, message: AgentMessage) -> Receipt:
        with self._lock:
            if self._closed:
                raise BusClosed("bus is shut down")
            now = self._clock()
            retained = self._retained.setdefault(topic, deque())
            retained.append((now, message))
            self._evict(retained, now)
            if message.kind == "Result" and message.correlation_id in self._answered:
                self._answered[message.correlation_id] += 1
                log.warning("duplicate reply %s for answered request %s",
                            message.message_id, message.correlation_id)
            subs = list(self._subs.get(topic, ()))
            for sub in subs:
                sub._enqueue(message)
        return Receipt(message.message_id, topic, len(subs))

    def subscribe(self, topic: str,
                  handler: Callable[[AgentMessage], None]) -> Subscription:
        sub = Subscription(self, topic, handler)
        with self._lock:
            if self._closed:
                sub.unsubscribe()
                raise BusClosed("bus is shut down")
            retained = self._retained.get(topic)
            if retained:
                now = self._clock()
                self._evict(retained, now)
                for _, message in retained:
                    sub._enqueue(message)
            self._subs.setdefault(topic, []).append(sub)
        return sub

    def request(self, topic: str, message: AgentMessage,
                timeout: float) -> AgentMessage:
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        replies: queue.Queue = queue.Queue()
        corr = message.message_id

        def collect(msg: AgentMessage) -> None:
            if msg.kind == "Result" and msg.correlation_id == corr:
                replies.put(msg)

        sub = self.subscribe(topic, collect)
        try:
            self.publish(topic, message)
            try:
                reply = replies.get(timeout=timeout)
            except queue.Empty:
                raise RequestTimeout(
                    f"no reply on {topic} within {timeout:.1f}s") from None
            # replies already in flight count as duplicates of the answer
            sub.drain(timeout=1.0)
            extra = 0
            while not replies.empty():
                replies.get_nowait()
                extra += 1
        finally:
            sub.unsubscribe()
        with self._lock:
            self._answered[corr] = self._answered.get(corr, 0) + extra
            if extra:
                log.warning("%d duplicate replies for request %s", extra, corr)
            while len(self._answered) > _ANSWERED_CAP:
                self._answered.popitem(last=False)
        return reply

    def duplicate_replies(self, correlation_id: str) -> int:
        with self._lock:
            return self._answered.get(correlation_id, 0)

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            subs = [s for topic_subs in self._subs.values() for s in topic_subs]
            self._subs.clear()
        for sub in subs:
            if sub.active:
                sub.active = False
                sub._queue.put(_SENTINEL)

    def _detach(self, sub: Subscription) -> None:
        with self._lock:
            topic_subs = self._subs.get(sub.topic)
            if topic_subs and sub in topic_subs:
                topic_subs.remove(sub)

    def _evict(self, retained: deque, now: float) -> None:
        while len(retained) > self.retention_count:
            retained.popleft()
        cutoff = now - self.retention_seconds
        while retained and retained[0][0] < cutoff:
            retained.popleft()


class MessageDeduper:
    """Tracks seen messageIds so at-least-once consumers stay idempotent."""

    def __init__(self, capacity: int = 4096):
        self.capacity = capacity
        self._seen: "OrderedDict[str, None]" = OrderedDict()
        self._lock = threading.Lock()

    def seen_before(self, message_id: str) -> bool:
        with self._lock:
            if message_id in self._seen:
                return True
            self._seen[message_id] = None
            while len(self._seen) > self.capacity:
                self._seen.popitem(last=False)
            return False


# -- socket bridge -----------------------------------------------------------
#
# Frame layout: 4-byte big-endian unsigned length, then that many bytes of
# UTF-8 JSON.  Bodies are {"op": "publish"|"subscribe"|"deliver",
# "topic": ..., "message": <AgentMessage dict>}.

def write_frame(sock: socket.socket, body: dict) -> None:
    data = json.dumps(body, sort_keys=True).encode("utf-8")
    sock.sendall(struct.pack(">I", len(data)) + data)


def read_frame(sock: socket.socket) -> Optional[dict]:
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    data = _read_exact(sock, length)
    if data is None:
        return None
    return json.loads(data.decode("utf-8"))


def _read_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = b""
    while len(chunks) < n:
        try:
            part = sock.recv(n - len(chunks))
        except OSError:
            return None
        if not part:
            return None
        chunks += part
    return chunks


class BridgeServer:
    """Exposes an AgentBus to other processes; disabled unless started."""

    def __init__(self, bus: AgentBus, host: str = "127.0.0.1", port: int = 0):
        self.bus = bus
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._conn_subs: list = []
        self._running = True
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while self._running:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn: socket.socket) -> None:
        subs = []
        write_lock = threading.Lock()
        try:
            while True:
                frame = read_frame(conn)
                if frame is None:
                    return
                op = frame.get("op")
                if op == "publish":
                    message = AgentMessage.from_dict(frame["message"])
                    self.bus.publish(message.topic, message)
                elif op == "subscribe":
                    topic = frame["topic"]

                    def forward(msg: AgentMessage) -> None:
                        try:
                            with write_lock:
                                write_frame(conn, {"op": "deliver",
                                                   "message": msg.as_dict()})
                        except OSError:
                            pass

                    subs.append(self.bus.subscribe(topic, forward))
        finally:
            for sub in subs:
                sub.unsubscribe()
            conn.close()

    def close(self) -> None:
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass


class BridgeClient:
    """Connects a remote agent to a bridged bus."""

    def __init__(self, host: str, port: int):
        self._sock = socket.create_connection((host, port), timeout=5)
        self._sock.settimeout(None)
        self._handlers: dict = {}
        self._lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def publish(self, message: AgentMessage) -> None:
        with self._lock:
            write_frame(self._sock, {"op": "publish", "message": message.as_dict()})

    def subscribe(self, topic: str,
                  handler: Callable[[AgentMessage], None]) -> None:
        self._handlers.setdefault(topic, []).append(handler)
        with self._lock:
            write_frame(self._sock, {"op": "subscribe", "topic": topic})

    def _read_loop(self) -> None:
        while True:
            frame = read_frame(self._sock)
            if frame is None:
                return
            if frame.get("op") != "deliver":
                continue
            message = AgentMessage.from_dict(frame["message"])
            for handler in self._handlers.get(message.topic, ()):
                try:
                    handler(message)
                except Exception:
                    log.exception("bridge handler failed on %s", message.topic)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass
