import time
import os
from contextlib import contextmanager
from datetime import datetime
from typing import Dict, Any, List

import psutil

from utils.logger import app_logger

MAX_ENTRIES = 1000


class PerformanceMonitor:
    """Tracks wall time and resident memory of solves and simulations"""

    def __init__(self):
        self.metrics: List[Dict[str, Any]] = []
        self.dropped = 0
        self.start_time = time.time()
        self.process = psutil.Process(os.getpid())

    def _rss_mb(self) -> float:
        return self.process.memory_info().rss / (1024 * 1024)

    @contextmanager
    def track(self, operation: str):
        """
        Record duration and memory growth of an operation

        Usage:
            with performance_monitor.track('design'):
                ...
        """
        rss_before = self._rss_mb()
        start = time.perf_counter()
        try:
            yield
        finally:
            duration = time.perf_counter() - start
            rss_after = self._rss_mb()
            self.metrics.append({
                'operation': operation,
                'duration_s': round(duration, 6),
                'rss_mb': round(rss_after, 2),
                'rss_delta_mb': round(rss_after - rss_before, 2),
                'finished_at': datetime.now().isoformat(),
            })
            app_logger.log_performance_metric(f"{operation}_duration", round(duration, 4), "s")

            # Keep only last 1000 entries
            if len(self.metrics) > MAX_ENTRIES:
                del self.metrics[0]
                self.dropped += 1

    def get_current_metrics(self) -> Dict[str, Any]:
        """Get current process metrics"""
        try:
            return {
                'cpu_percent': psutil.cpu_percent(),
                'rss_mb': round(self._rss_mb(), 2),
                'uptime_seconds': round(time.time() - self.start_time, 3)
            }
        except Exception as e:
            return {'error': str(e)}

    def get_operation_summary(self, since: int = 0) -> Dict[str, Any]:
        """Summarize tracked operations, optionally only those recorded after ``mark()`` returned ``since``"""
        recent = self.metrics[max(since - self.dropped, 0):]
        durations: Dict[str, float] = {}
        counts: Dict[str, int] = {}
        for entry in recent:
            durations[entry['operation']] = durations.get(entry['operation'], 0.0) + entry['duration_s']
            counts[entry['operation']] = counts.get(entry['operation'], 0) + 1
        return {
            'durations_s': {k: round(v, 6) for k, v in durations.items()},
            'counts': counts,
            'peak_rss_mb': max((e['rss_mb'] for e in recent), default=round(self._rss_mb(), 2)),
        }

    def mark(self) -> int:
        """Position in the stream of tracked operations"""
        return self.dropped + len(self.metrics)


# Global performance monitor instance
performance_monitor = PerformanceMonitor()
