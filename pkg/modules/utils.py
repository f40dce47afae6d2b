"""
utils.py

This module contains utility functions that are used across multiple modules
of the event verification toolkit.

Functions:
- seconds_to_ns(seconds): Converts seconds to integer nanoseconds.
- resolve_threads(threads): Resolves a worker count, defaulting to machine parallelism.
- log_resource_usage(stage): Logs CPU and memory usage of the current process.
- stable_key(text): Deterministic 32-bit key for seeding per-name random streams.
- window_iou(a, b): Intersection-over-union of two [start, end] intervals.
- canonical_json(payload): Deterministic JSON text used for bundles and fingerprints.
"""

import json
import logging
import zlib

import psutil

NS_PER_SECOND = 1_000_000_000


def seconds_to_ns(seconds):
    """
    Converts a (possibly fractional) number of seconds into integer nanoseconds.

    Parameters:
    - seconds (int or float): Duration in seconds.

    Returns:
    - int: Duration in nanoseconds.
    """
    if isinstance(seconds, int):
        return seconds * NS_PER_SECOND
    return int(round(seconds * NS_PER_SECOND))


def resolve_threads(threads=None):
    """
    Resolves the number of worker threads.

    Parameters:
    - threads (int or None): Requested worker count; None or values < 1 mean machine parallelism.

    Returns:
    - int: Worker count, at least 1.
    """
    if threads is None or threads < 1:
        return psutil.cpu_count(logical=True) or 1
    return int(threads)


def log_resource_usage(stage):
    """
    Logs the CPU and memory usage of the running process after a pipeline stage.

    Parameters:
    - stage (str): Name of the stage just finished.

    Returns:
    - None
    """
    try:
        process = psutil.Process()
        rss_mb = process.memory_info().rss / (1024 * 1024)
        cpu = psutil.cpu_percent(interval=None)
        logging.info(f"{stage}: RSS {rss_mb:.1f} MB, system CPU {cpu:.0f}%")
    except psutil.Error as e:
        logging.debug(f"Resource usage unavailable after {stage}: {e}")


def stable_key(text):
    """Deterministic non-negative 32-bit integer for a name (unlike hash(), stable across runs)."""
    return zlib.crc32(text.encode("utf-8")) & 0xFFFFFFFF


def window_iou(a, b):
    """
    Intersection-over-union of two closed intervals.

    Parameters:
    - a (tuple): (start, end) with start < end.
    - b (tuple): (start, end) with start < end.

    Returns:
    - float: IoU in [0, 1].
    """
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union if union > 0 else 0.0


def canonical_json(payload, indent=None):
    """JSON text with sorted keys; equal payloads always give equal bytes."""
    return json.dumps(payload, sort_keys=True, indent=indent, separators=(",", ": ") if indent else (",", ":"))
