"""Server-push event fan-out.

Every journal record and escalation notice becomes a sequenced frame.
Frames are retained for replay (desk scale), so a subscriber reconnecting
with ``from_seq`` sees exactly the frames it missed. Publishing never
blocks: a subscriber whose queue is full is dropped with a gap marker.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional


@dataclass(frozen=True)
class EventFrame:
    seq: int
    kind: str  # record | escalation | notify | gap
    emitted_at: int
    payload: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "emitted_at": self.emitted_at,
            "payload": self.payload,
        }


class Subscription:
    def __init__(self, bus: "EventBus", replay: List[EventFrame], q: "queue.Queue[EventFrame]"):
        self._bus = bus
        self._replay = replay
        self._queue = q
        self._last_seq = -1
        self.dropped = False

    def next(self, timeout: Optional[float] = None) -> Optional[EventFrame]:
        """Next frame, replay first; None on timeout. A dropped subscriber
        receives one gap frame and then nothing."""
        while self._replay:
            frame = self._replay.pop(0)
            if frame.seq > self._last_seq:
                self._last_seq = frame.seq
                return frame
        if self.dropped:
            self.dropped = False  # deliver the gap exactly once
            return EventFrame(
                seq=-1,
                kind="gap",
                emitted_at=0,
                payload={"dropped_after_seq": self._last_seq},
            )
        try:
            frame = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        if frame.seq <= self._last_seq:
            return self.next(timeout)
        self._last_seq = frame.seq
        return frame

    def close(self) -> None:
        self._bus._unsubscribe(self)


class EventBus:
    def __init__(self, clock, max_queue: int = 1024):
        self._clock = clock
        self._max_queue = max_queue
        self._frames: List[EventFrame] = []
        self._subs: List[Subscription] = []
        self._lock = threading.Lock()

    def publish(self, kind: str, payload: Dict[str, Any]) -> EventFrame:
        with self._lock:
            frame = EventFrame(
                seq=len(self._frames),
                kind=kind,
                emitted_at=self._clock.now_ms(),
                payload=payload,
            )
            self._frames.append(frame)
            subs = list(self._subs)
        for sub in subs:
            try:
                sub._queue.put_nowait(frame)
            except queue.Full:
                sub.dropped = True
        return frame

    def subscribe(self, from_seq: int = 0) -> Subscription:
        q: "queue.Queue[EventFrame]" = queue.Queue(maxsize=self._max_queue)
        with self._lock:
            replay = [f for f in self._frames if f.seq >= from_seq]
            sub = Subscription(self, replay, q)
            self._subs.append(sub)
        return sub

    def _unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def frames(self) -> List[EventFrame]:
        with self._lock:
            return list(self._frames)
