"""Per-caller token-bucket rate limiting."""

from __future__ import annotations

import threading
import time
from typing import Callable


class TokenBucketLimiter:
    def __init__(
        self,
        capacity: int = 10,
        refill_per_second: float = 1.0,
        clock: Callable[[], float] = time.time,
    ):
        if capacity < 1 or refill_per_second <= 0:
            raise ValueError("capacity must be >= 1 and refill_per_second > 0")
        self.capacity = capacity
        self.refill_per_second = refill_per_second
        self._clock = clock
        self._lock = threading.Lock()
        self._buckets: dict[str, tuple[float, float]] = {}  # caller -> (tokens, last_refill)

    def allow(self, caller: str) -> bool:
        now = self._clock()
        with self._lock:
            tokens, last = self._buckets.get(caller, (float(self.capacity), now))
            tokens = min(self.capacity, tokens + (now - last) * self.refill_per_second)
            if tokens >= 1.0:
                self._buckets[caller] = (tokens - 1.0, now)
                return True
            self._buckets[caller] = (tokens, now)
            return False
