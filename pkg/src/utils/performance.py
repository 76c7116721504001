"""
Stage timing for the long-running numerical work.

Each tracked stage records its wall-clock time together with the amount of
numerical work it did (interior DOFs, eigenpairs, samples, Adam iterations,
query grids). The pipeline report divides the two into throughput figures
such as seconds per sample or per iteration.
"""

import functools
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional

from .logger import get_logger

SLOW_OPERATION_SECONDS = 10.0

WorkCounts = Dict[str, int]


@dataclass
class StageTiming:
    """One run of a stage; ``work`` may be filled in while the stage runs."""
    stage: str
    seconds: float = 0.0
    ok: bool = True
    work: WorkCounts = field(default_factory=dict)

    def add(self, **counts: int) -> None:
        for name, value in counts.items():
            self.work[name] = self.work.get(name, 0) + int(value)


@dataclass
class StageTotals:
    calls: int = 0
    failures: int = 0
    seconds: float = 0.0
    max_seconds: float = 0.0
    work: WorkCounts = field(default_factory=lambda: defaultdict(int))

    def absorb(self, timing: StageTiming) -> None:
        self.calls += 1
        self.failures += 0 if timing.ok else 1
        self.seconds += timing.seconds
        self.max_seconds = max(self.max_seconds, timing.seconds)
        for name, value in timing.work.items():
            self.work[name] += value

    def per_unit(self) -> Dict[str, float]:
        """Seconds per unit of each work counter (zero counters skipped)."""
        return {f"seconds_per_{name}": self.seconds / value for name, value in self.work.items() if value > 0}

    def as_dict(self) -> Dict[str, Any]:
        return {
            'calls': self.calls,
            'failures': self.failures,
            'seconds': self.seconds,
            'max_seconds': self.max_seconds,
            'work': dict(self.work),
            **self.per_unit(),
        }


class StageLedger:
    """Thread-safe totals keyed by ``component:operation``."""

    def __init__(self):
        self._totals: Dict[str, StageTotals] = defaultdict(StageTotals)
        self._lock = threading.Lock()
        self.logger = get_logger('performance')

    def record(self, timing: StageTiming) -> None:
        with self._lock:
            self._totals[timing.stage].absorb(timing)
        if timing.seconds > SLOW_OPERATION_SECONDS:
            self.logger.warning(
                f"Slow stage: {timing.stage} took {timing.seconds:.1f}s",
                operation='stage_timing',
                extra_data={'seconds': timing.seconds, **timing.work}
            )

    def totals(self, component: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
        with self._lock:
            return {
                key: totals.as_dict() for key, totals in self._totals.items()
                if component is None or key.startswith(f"{component}:")
            }

    def slowest(self, limit: int = 5) -> List[Dict[str, Any]]:
        ranked = [{'stage': key, **values} for key, values in self.totals().items()]
        return sorted(ranked, key=lambda row: row['seconds'], reverse=True)[:limit]

    def clear(self) -> None:
        with self._lock:
            self._totals.clear()


_ledger = StageLedger()


@contextmanager
def track_performance(operation: str, component: str, **work: int) -> Iterator[StageTiming]:
    """
    Time a stage. Work known up front goes in as keyword counts; the yielded
    ``StageTiming`` accepts more through ``add`` once the stage knows them.
    """
    timing = StageTiming(stage=f"{component}:{operation}")
    timing.add(**work)
    start = time.perf_counter()
    try:
        yield timing
    except Exception:
        timing.ok = False
        raise
    finally:
        timing.seconds = time.perf_counter() - start
        _ledger.record(timing)


def performance_monitor(operation: Optional[str] = None, component: Optional[str] = None,
                        work: Optional[Callable[[Any], Mapping[str, int]]] = None):
    """Decorator form; ``work`` maps the return value to work counts."""
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            op_name = operation or func.__name__
            comp_name = component or func.__module__.split('.')[-1]
            with track_performance(op_name, comp_name) as timing:
                result = func(*args, **kwargs)
                if work is not None:
                    timing.add(**work(result))
                return result

        return wrapper
    return decorator


def get_performance_stats(component: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    return _ledger.totals(component)


def generate_performance_report() -> Dict[str, Any]:
    """Per-stage totals and throughput for pipeline reports."""
    stages = _ledger.totals()
    return {
        'total_seconds': sum(s['seconds'] for s in stages.values()),
        'slowest_stages': _ledger.slowest(),
        'stages': stages,
    }


def reset_performance_stats() -> None:
    _ledger.clear()
