"""In-process cache for generated datasets and trained source models.

Both are pure functions of a config digest and a seed, so a multi-seed or
multi-strategy run can share them. Keys are built with ``create_key``.
"""

import copy
import logging
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional

from cachetools import LRUCache

logger = logging.getLogger(__name__)

_MISSING = object()


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    sets: int = 0
    evictions: int = 0


class _CountingLRU(LRUCache):
    """LRUCache that reports every eviction to a callback."""

    def __init__(self, maxsize: int, on_evict: Callable[[Any], None]):
        super().__init__(maxsize=maxsize)
        self._on_evict = on_evict

    def popitem(self):
        key, value = super().popitem()
        self._on_evict(key)
        return key, value


class ArtifactCache:
    """Least-recently-used store of deterministic artifacts, with hit statistics."""

    def __init__(self, max_size: int = 32):
        self.max_size = max_size
        self.enabled = True
        self._stats = CacheStats()
        self._store = _CountingLRU(max_size, self._record_eviction)

    def _record_eviction(self, key: Any) -> None:
        self._stats.evictions += 1
        logger.debug(f"Evicted cached artifact {key}")

    def _lookup(self, key: str) -> Any:
        if not self.enabled:
            return _MISSING
        value = self._store.get(key, _MISSING)
        if value is _MISSING:
            self._stats.misses += 1
        else:
            self._stats.hits += 1
        return value

    def get(self, key: str) -> Optional[Any]:
        """Cached value for key, or None on a miss or while disabled."""
        value = self._lookup(key)
        return None if value is _MISSING else value

    def set(self, key: str, value: Any) -> None:
        """Store value under key; a no-op while disabled."""
        if not self.enabled:
            return
        self._store[key] = value
        self._stats.sets += 1

    def get_or_create(self, key: str, factory: Callable[[], Any], copy_out: bool = False) -> Any:
        """Cached value for key, built by factory on a miss.

        With copy_out the caller gets a deep copy and the cached artifact stays
        untouched by whatever the caller does with it.
        """
        value = self._lookup(key)
        if value is _MISSING:
            logger.debug(f"Building artifact {key}")
            value = factory()
            self.set(key, value)
        return copy.deepcopy(value) if copy_out else value

    def clear(self) -> None:
        """Drop every entry. Statistics are kept and nothing counts as evicted."""
        self._store = _CountingLRU(self.max_size, self._record_eviction)

    def enable(self) -> None:
        """Resume caching."""
        self.enabled = True

    def disable(self) -> None:
        """Stop caching. Lookups miss without counting and sets are ignored."""
        self.enabled = False

    def get_stats(self) -> Dict[str, Any]:
        """Hit, miss, set and eviction counts with the hit rate and current size."""
        lookups = self._stats.hits + self._stats.misses
        return {
            "enabled": self.enabled,
            **asdict(self._stats),
            "hit_rate": round(self._stats.hits / lookups, 3) if lookups else 0.0,
            "size": len(self._store),
            "max_size": self.max_size,
        }

    @staticmethod
    def create_key(*parts: Any) -> str:
        """Join key parts as ``kind:digest:...``."""
        return ":".join(str(part) for part in parts)
