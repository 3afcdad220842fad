"""i.i.d. ON/OFF link channels and windowed loss/rate estimators."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ON, OFF = True, False

_BLOCK = 2048


class ChannelProcess:
    """Per-link Bernoulli channel: link ``l`` is OFF in a slot with probability ``p[l]``.

    States are drawn in fixed-size blocks, each from a generator keyed by
    ``(seed, block index)``, so ``state(t)`` is a pure function of the seed
    and the slot no matter in which order slots are queried.
    """

    def __init__(self, p: Sequence[float], seed: int):
        p = [float(x) for x in p]
        bad = [k for k, x in enumerate(p) if not 0.0 <= x <= 1.0]
        if bad:
            raise ValueError(f"loss probabilities outside [0, 1] on links {bad}")
        self.p = np.asarray(p, dtype=float)
        self.seed = int(seed)
        self._cache: dict[int, list[list[bool]]] = {}

    @property
    def n_links(self) -> int:
        return len(self.p)

    def _block(self, b: int) -> list[list[bool]]:
        rows = self._cache.get(b)
        if rows is None:
            rng = np.random.default_rng([self.seed, b])
            draws = rng.random((_BLOCK, len(self.p)))
            rows = (draws >= self.p).tolist()
            if len(self._cache) > 4:
                self._cache.clear()
            self._cache[b] = rows
        return rows

    def state(self, t: int) -> list[bool]:
        if t < 0:
            raise ValueError("slot index must be nonnegative")
        return self._block(t // _BLOCK)[t % _BLOCK]


def sample_channel(channel: ChannelProcess, t: int) -> list[bool]:
    """Channel state vector at slot ``t`` (``True`` = ON)."""
    return channel.state(t)


@dataclass
class LinkStats:
    """Sliding-window transmission statistics per link.

    Attempt records older than ``window_len`` slots are discarded. With no
    attempts in the window the loss estimate is 0 and the rate estimate is
    the nominal link rate.
    """

    nominal_rate: list[float]
    window_len: int = 500
    _records: list[deque] = field(default_factory=list, repr=False)
    attempts: list[int] = field(default_factory=list)
    successes: list[int] = field(default_factory=list)
    _busy: list[int] = field(default_factory=list, repr=False)  # slots with an attempt

    def __post_init__(self):
        n = len(self.nominal_rate)
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        self._records = [deque() for _ in range(n)]
        self.attempts = [0] * n
        self.successes = [0] * n
        self._busy = [0] * n

    def _expire(self, l: int, t: int) -> None:
        rec = self._records[l]
        horizon = t - self.window_len
        while rec and rec[0][0] <= horizon:
            _, a, s = rec.popleft()
            self.attempts[l] -= a
            self.successes[l] -= s
            self._busy[l] -= 1

    def record(self, l: int, attempted: int, succeeded: int, t: int) -> None:
        if not 0 <= succeeded <= attempted:
            raise ValueError(f"need 0 <= succeeded <= attempted, got {succeeded}/{attempted}")
        if attempted == 0:
            return
        self._expire(l, t)
        self._records[l].append((t, attempted, succeeded))
        self.attempts[l] += attempted
        self.successes[l] += succeeded
        self._busy[l] += 1

    def refresh(self, t: int) -> None:
        for l in range(len(self._records)):
            self._expire(l, t)

    def p_bar(self, l: int) -> float:
        a = self.attempts[l]
        return 1.0 - self.successes[l] / a if a else 0.0

    def r_bar(self, l: int) -> float:
        # packets pushed per transmitting slot
        return self.attempts[l] / self._busy[l] if self._busy[l] else float(self.nominal_rate[l])


def update_stats(stats: LinkStats, l: int, attempted: int, succeeded: int, t: int) -> LinkStats:
    stats.record(l, attempted, succeeded, t)
    return stats
