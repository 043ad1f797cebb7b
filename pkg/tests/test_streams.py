import math

import numpy as np
import pytest

from chordix import streams
from chordix.streams import RandomStream, chunk_sizes, default_threads, run_chunks, uniform_directions


def test_chunk_sizes():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert chunk_sizes(8, 4) == [4, 4]
    assert chunk_sizes(1) == [1]
    assert sum(chunk_sizes(1_000_003)) == 1_000_003
    with pytest.raises(ValueError):
        chunk_sizes(0)


def test_generator_is_reproducible():
    a = RandomStream(7).generator(3).random(5)
    b = RandomStream(7).generator(3).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, RandomStream(7).generator(4).random(5))
    assert not np.array_equal(a, RandomStream(8).generator(3).random(5))
    assert not np.array_equal(a, RandomStream(7, stream_id=1).generator(3).random(5))


def test_derive_gives_distinct_children():
    root = RandomStream(1)
    assert root.derive(2, 3) == RandomStream(1, 0, (2, 3))
    draws = {tuple(root.derive(k).generator().random(3)) for k in range(5)}
    assert len(draws) == 5
    assert root.derive(2).derive(3) == root.derive(2, 3)


def work(gen, n):
    return gen.normal(size=n)


@pytest.mark.parametrize("threads", [1, 2, 8])
def test_run_chunks_thread_independent(threads):
    ref = run_chunks(work, 10_000, RandomStream(5), threads=1, chunk_size=512)
    got = run_chunks(work, 10_000, RandomStream(5), threads=threads, chunk_size=512)
    assert len(got) == 20
    for a, b in zip(ref, got):
        assert np.array_equal(a, b)
    folded = run_chunks(lambda g, n: g.random(n).sum(), 10_000, RandomStream(5),
                        threads=threads, chunk_size=512, reduce=lambda x, y: x + y)
    expect = 0.0
    for c, n in enumerate(chunk_sizes(10_000, 512)):
        expect += RandomStream(5).generator(c).random(n).sum()
    assert folded == expect


def test_default_threads(monkeypatch):
    monkeypatch.setenv(streams.THREADS_ENV, "3")
    assert default_threads() == 3
    monkeypatch.setenv(streams.THREADS_ENV, "0")
    assert default_threads() == 1
    monkeypatch.setenv(streams.THREADS_ENV, "many")
    assert default_threads() >= 1
    monkeypatch.delenv(streams.THREADS_ENV)
    assert default_threads() >= 1


def test_uniform_directions_isotropic():
    n = 400_000
    d = uniform_directions(np.random.default_rng(0), n)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, rtol=1e-14)
    # each component is uniform on [-1, 1]: mean 0, second moment 1/3
    tol = 4 / math.sqrt(n)
    assert np.all(np.abs(d.mean(axis=0)) < tol)
    np.testing.assert_allclose((d * d).mean(axis=0), 1 / 3, atol=tol)
    np.testing.assert_allclose(d.T @ d / n, np.eye(3) / 3, atol=tol)
