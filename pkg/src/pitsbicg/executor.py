"""Deterministic parallel execution of independent slab propagations."""
from __future__ import annotations

import os
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

__all__ = [
    "ExecutorStats",
    "SlabExecutor",
    "SlabTaskError",
    "default_worker_count",
    "timing_report",
]

WORKERS_ENV = "PIT_WORKERS"


class SlabTaskError(RuntimeError):
    def __init__(self, slab: int, cause: BaseException):
        super().__init__(f"propagation on slab {slab} failed: {cause}")
        self.slab = slab
        self.cause = cause


def default_worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            count = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV}={env!r} is not an integer") from None
        if count < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1, got {count}")
        return count
    return os.cpu_count() or 1


@dataclass
class ExecutorStats:
    parallel_maps: int = 0
    tasks_executed: int = 0
    # summed per-task wall time, i.e. the serial cost estimate of the fine phase
    task_seconds: float = 0.0
    parallel_wall_seconds: float = 0.0
    sequential_wall_seconds: float = 0.0

    def reset(self):
        self.__init__()


class SlabExecutor:
    """Fixed-size thread pool mapping independent tasks to ordered results.

    Each task writes only its own result slot, so the output is bitwise the
    same for every worker count.  With one worker the tasks run inline.
    ``PIT_WORKERS`` sets the worker count when none is given explicitly.
    """

    def __init__(self, worker_count: Optional[int] = None, instrument: bool = True):
        if worker_count is None:
            worker_count = default_worker_count()
        if worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {worker_count}")
        self.worker_count = worker_count
        self.instrument = instrument
        self.stats = ExecutorStats()
        self._pool: Optional[ThreadPoolExecutor] = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True, cancel_futures=True)
            self._pool = None

    def _timed(self, task: Callable):
        t0 = time.perf_counter()
        result = task()
        return result, time.perf_counter() - t0

    def parallel_map_slabs(self, tasks: Sequence[Callable],
                           slabs: Optional[Sequence[int]] = None) -> list:
        """Run ``tasks`` and return their results in task order.

        ``slabs`` labels each task for error reporting (defaults to position).
        The first failing task cancels outstanding work and is re-raised as
        :class:`SlabTaskError`.
        """
        tasks = list(tasks)
        slabs = list(range(len(tasks))) if slabs is None else list(slabs)
        if len(slabs) != len(tasks):
            raise ValueError("one slab label per task required")
        if not tasks:
            return []

        t0 = time.perf_counter()
        if self.worker_count == 1 or len(tasks) == 1:
            timed = []
            for slab, task in zip(slabs, tasks):
                try:
                    timed.append(self._timed(task))
                except Exception as exc:
                    raise SlabTaskError(slab, exc) from exc
        else:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=self.worker_count,
                                                thread_name_prefix="slab")
            futures = [self._pool.submit(self._timed, task) for task in tasks]
            done, pending = wait(futures, return_when=FIRST_EXCEPTION)
            for fut in pending:
                fut.cancel()
            for slab, fut in zip(slabs, futures):
                if fut.done() and not fut.cancelled() and fut.exception() is not None:
                    wait(futures)
                    raise SlabTaskError(slab, fut.exception()) from fut.exception()
            timed = [fut.result() for fut in futures]

        if self.instrument:
            self.stats.parallel_maps += 1
            self.stats.tasks_executed += len(tasks)
            self.stats.task_seconds += sum(dt for _, dt in timed)
            self.stats.parallel_wall_seconds += time.perf_counter() - t0
        return [result for result, _ in timed]

    def run_sequential(self, fn: Callable, *args):
        """Run an inherently sequential phase, timing it as such."""
        t0 = time.perf_counter()
        out = fn(*args)
        if self.instrument:
            self.stats.sequential_wall_seconds += time.perf_counter() - t0
        return out


def timing_report(history, stats: ExecutorStats, worker_count: int) -> dict:
    """Wall clock per phase and the derived parallel efficiency of the fine phase."""
    fine_wall = stats.parallel_wall_seconds
    efficiency = (stats.task_seconds / (worker_count * fine_wall)
                  if fine_wall > 0.0 else 0.0)
    report = {
        "worker_count": worker_count,
        "iterations": history.iterations if history is not None else 0,
        "fine_applications": history.total_fine if history is not None else 0,
        "coarse_applications": history.total_coarse if history is not None else 0,
        "fine_wall_s": fine_wall,
        "coarse_wall_s": stats.sequential_wall_seconds,
        "serial_fine_estimate_s": stats.task_seconds,
        "parallel_efficiency": efficiency,
    }
    report.update({f"stats_{k}": v for k, v in asdict(stats).items()
                   if k in ("parallel_maps", "tasks_executed")})
    return report
