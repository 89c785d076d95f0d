"""Id generation. Sequential ids keep harness journals reproducible."""

from __future__ import annotations

import threading
import uuid
from collections import defaultdict


class SequentialIdFactory:
    """Per-prefix counters: ``agent-000001``, ``cp-000002``, ..."""

    def __init__(self) -> None:
        self._counters: defaultdict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    def new(self, prefix: str) -> str:
        with self._lock:
            self._counters[prefix] += 1
            return f"{prefix}-{self._counters[prefix]:06d}"


class UuidIdFactory:
    def new(self, prefix: str) -> str:
        return f"{prefix}-{uuid.uuid4().hex[:12]}"
