"""
Centrimag – sweep controller

Key ideas
---------
1. **Independence** – No dependency on rich, files or the physics modules; it
   only relies on abstract interfaces:
      • ``SweepWorker`` – turns one parameter point into a result
      • ``ResultSink``  – provides ``start``, ``write`` and ``finalize``

2. **Deterministic aggregation** – Points are computed concurrently, but the
   sink sees results strictly in input order and from a single thread, so the
   files it writes do not depend on scheduling.

3. **Single Responsibility** – The controller coordinates the flow; it does *not*
   compute physics, format rows or render progress itself.
"""
from __future__ import annotations

from collections.abc import Hashable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Protocol, TypeVar

P = TypeVar("P", bound=Hashable)


# ---------------------------------------------------------------------------
# Protocols – minimal contracts expected from collaborators
# ---------------------------------------------------------------------------

class SweepWorker(Protocol):
    """Anything that evaluates one sweep point."""

    def __call__(self, point: Any) -> Any:
        """Return the result for ``point``; exceptions abort the sweep."""
        ...  # pragma: no cover


class ResultSink(Protocol):
    """Receiver of ordered sweep results."""

    def start(self, total: int) -> None: ...

    def write(self, key: Any, result: Any) -> None: ...

    def finalize(self) -> None: ...


# ---------------------------------------------------------------------------
# Controller / Orchestrator
# ---------------------------------------------------------------------------


def run_sweep(
    points: Sequence[P],
    worker: SweepWorker,
    sink: ResultSink,
    *,
    max_workers: int | None = None,
) -> int:
    """Evaluate ``worker`` over ``points`` and stream results into ``sink``.

    1. Tells the sink how many results to expect.
    2. Fans the points out over a thread pool (serially when
       ``max_workers`` is 1 or there is a single point).
    3. Writes results in input order and always finalizes the sink.

    Parameters
    ----------
    points : sequence
        Parameter points, e.g. ``(N, B)`` tuples; used as the result keys.
    worker : SweepWorker
        Callable evaluating one point.
    sink : ResultSink
        Ordered consumer of ``(point, result)`` pairs.
    max_workers : int, optional
        Thread-pool size; ``None`` lets the executor choose.

    Returns
    -------
    int
        Number of results written.
    """

    points = list(points)
    sink.start(len(points))
    written = 0
    try:
        if max_workers == 1 or len(points) <= 1:
            for point in points:
                sink.write(point, worker(point))
                written += 1
        else:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                futures = [pool.submit(worker, point) for point in points]
                try:
                    for point, future in zip(points, futures):
                        sink.write(point, future.result())
                        written += 1
                except BaseException:
                    for future in futures:
                        future.cancel()
                    raise
    finally:
        sink.finalize()
    return written
