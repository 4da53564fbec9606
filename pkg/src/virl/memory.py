"""Bounded FIFO store of rollout episodes for metric training."""

import logging
import threading
from collections import deque
from typing import Iterable, Iterator

import numpy as np

from .errors import EmptySourcesError
from .sequences import Episode

logger = logging.getLogger(__name__)


class ExperienceMemory:
    """Keeps the newest ``capacity`` episodes; the oldest is evicted first.

    Writers append under a lock, so batch building may read while a rollout
    round inserts. Stored episodes are frozen models and never change.
    """

    def __init__(self, capacity: int = 200) -> None:
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._episodes: deque[Episode] = deque(maxlen=capacity)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._episodes)

    def __iter__(self) -> Iterator[Episode]:
        return iter(self.episodes())

    def episodes(self) -> tuple[Episode, ...]:
        with self._lock:
            return tuple(self._episodes)

    def add(self, episode: Episode) -> None:
        with self._lock:
            self._episodes.append(episode)

    def extend(self, episodes: Iterable[Episode]) -> None:
        for episode in episodes:
            self.add(episode)
        logger.debug("memory updated", extra={"size": len(self), "capacity": self.capacity})

    def eligible(self, min_len: int) -> list[int]:
        """Indices of episodes at least ``min_len`` steps long."""
        return [i for i, ep in enumerate(self.episodes()) if len(ep) >= min_len]

    def sample(self, rng: np.random.Generator, min_len: int = 1) -> Episode:
        snapshot = self.episodes()
        candidates = [i for i, ep in enumerate(snapshot) if len(ep) >= min_len]
        if not candidates:
            raise EmptySourcesError(
                f"no stored episode has at least {min_len} steps",
                {"size": len(snapshot), "min_len": min_len},
            )
        return snapshot[candidates[int(rng.integers(len(candidates)))]]
