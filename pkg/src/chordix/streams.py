"""Reproducible random substreams and the chunked work runner.

Every estimator splits its sample budget into chunks of a fixed size.  Chunk
``c`` of a stream draws from its own ``numpy`` generator seeded by
``SeedSequence(seed, spawn_key=(stream_id, *path, c))``, so the numbers a
chunk sees never depend on how many workers process the chunks or in which
order they finish.  Results are merged in chunk order.
"""

from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

CHUNK_SIZE = 1 << 16
THREADS_ENV = "CHORDIX_THREADS"


@dataclass(frozen=True)
class RandomStream:
    seed: int = 42
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def derive(self, *tags: int) -> "RandomStream":
        """Independent child stream, e.g. one per identity in a report."""
        return RandomStream(self.seed, self.stream_id, self.path + tuple(int(t) for t in tags))

    def generator(self, chunk: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(
            int(self.seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(int(self.stream_id), *self.path, int(chunk)),
        )
        return np.random.Generator(np.random.PCG64(ss))


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def chunk_sizes(n_total: int, chunk_size: int = CHUNK_SIZE) -> list[int]:
    if n_total < 1:
        raise ValueError("sample count must be >= 1")
    full, rest = divmod(int(n_total), chunk_size)
    sizes = [chunk_size] * full
    if rest:
        sizes.append(rest)
    return sizes


def run_chunks(
    work: Callable[[np.random.Generator, int], T],
    n_total: int,
    rng: RandomStream,
    threads: int | None = None,
    chunk_size: int = CHUNK_SIZE,
    reduce: Callable[[T, T], T] | None = None,
):
    """Run ``work(generator, n)`` over fixed chunks.

    Returns the results in chunk order, or with ``reduce`` their left fold in
    chunk order (partial results are released as soon as they are folded)."""
    sizes = chunk_sizes(n_total, chunk_size)
    threads = default_threads() if threads is None else max(1, int(threads))

    def one(c: int) -> T:
        return work(rng.generator(c), sizes[c])

    def collect(results: Iterator[T]):
        if reduce is None:
            return list(results)
        acc = next(results)
        for r in results:
            acc = reduce(acc, r)
        return acc

    if threads == 1 or len(sizes) == 1:
        return collect(one(c) for c in range(len(sizes)))
    with ThreadPoolExecutor(max_workers=threads) as pool:

        def ordered() -> Iterator[T]:
            # at most 2 * threads chunks in flight keeps memory bounded
            pending: deque = deque()
            for c in range(len(sizes)):
                pending.append(pool.submit(one, c))
                if len(pending) >= 2 * threads:
                    yield pending.popleft().result()
            while pending:
                yield pending.popleft().result()

        return collect(ordered())


def uniform_directions(gen: np.random.Generator, n: int) -> np.ndarray:
    """Isotropic unit vectors, shape (n, 3)."""
    cos_t = gen.uniform(-1.0, 1.0, n)
    phi = gen.uniform(0.0, 2.0 * np.pi, n)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    return np.column_stack((sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t))


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(list(parts)) if parts else np.empty(0)
