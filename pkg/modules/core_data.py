"""
core_data.py

This module holds the dataset model of the toolkit and the corpus file format. A corpus
is a directory with one CSV per sensor (`sensors/<sensor_id>.csv`, rows
`timestamp_ns,value`), one CSV per event type (`events/<event_type>.csv`, rows
`timestamp_ns,label`) and a `meta.json` naming the sensors, their modality tags and the
dev/train/test split boundaries.

Functions:
- ingest_corpus(root_path, n_jobs=1): Loads and validates a corpus directory into a Dataset.
- write_corpus(dataset, root_path): Serializes a Dataset back to the corpus layout.
- build_instances(log, segment, sample_every): Builds labelled instances for one split segment.
- slice_window(stream, anchor, t_minus, t_plus): Readings of a stream in [anchor+t-, anchor+t+).
- window_bounds(stream, anchors, t_minus, t_plus): Vectorized index bounds for many anchors.
- stream_coverage(stream, start, end): Whether a stream has readings spanning [start, end).
- segment_moments(stream, segment): Mean and standard deviation of a stream inside a segment.
"""

import csv
import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .errors import CorpusError
from .utils import NS_PER_SECOND, canonical_json, seconds_to_ns

SENSOR_COLUMNS = ('timestamp_ns', 'value')
EVENT_COLUMNS = ('timestamp_ns', 'label')
FLOAT_FORMAT = '%.17g'
SEGMENTS = ('dev', 'train', 'test')
GAP_PERIODS = 2


def _readonly(array, dtype):
    array = np.ascontiguousarray(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SensorStream:
    """One sensor's readings: integer-nanosecond timestamps and float64 values."""

    sensor_id: str
    modality: str
    timestamps: np.ndarray
    values: np.ndarray
    period: int = field(init=False, repr=False, default=0)

    def __post_init__(self):
        object.__setattr__(self, 'timestamps', _readonly(self.timestamps, np.int64))
        object.__setattr__(self, 'values', _readonly(self.values, np.float64))
        if self.timestamps.shape != self.values.shape:
            raise ValueError(f"Stream '{self.sensor_id}': timestamps and values differ in length")
        # median step between readings; 0 for fewer than two
        if len(self.timestamps) > 1:
            object.__setattr__(self, 'period', int(np.median(np.diff(self.timestamps))))

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True, eq=False)
class EventLog:
    """Binary occurrences of one event type."""

    event_type: str
    timestamps: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'timestamps', _readonly(self.timestamps, np.int64))
        object.__setattr__(self, 'labels', _readonly(self.labels, np.int8))

    def event_times(self):
        """Timestamps of the label-1 records."""
        return self.timestamps[self.labels == 1]

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class Instance:
    event_type: str
    anchor: int
    label: int


class InstanceSet(Sequence):
    """
    Time-ordered instances of one event type backed by numpy arrays.

    Behaves as a sequence of Instance objects; `anchors` and `labels` expose the arrays.
    """

    def __init__(self, event_type, anchors, labels):
        anchors = np.asarray(anchors, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int8)
        order = np.argsort(anchors, kind='stable')
        self.event_type = event_type
        self.anchors = _readonly(anchors[order], np.int64)
        self.labels = _readonly(labels[order], np.int8)

    def __len__(self):
        return len(self.anchors)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return InstanceSet(self.event_type, self.anchors[index], self.labels[index])
        return Instance(self.event_type, int(self.anchors[index]), int(self.labels[index]))

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return InstanceSet(self.event_type, self.anchors[indices], self.labels[indices])

    def count(self, label):
        return int(np.count_nonzero(self.labels == label))

    @classmethod
    def from_instances(cls, instances):
        instances = list(instances)
        event_type = instances[0].event_type if instances else ''
        return cls(event_type, [i.anchor for i in instances], [i.label for i in instances])

    def __repr__(self):
        return f"InstanceSet({self.event_type!r}, n={len(self)}, positives={self.count(1)})"


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Immutable corpus: sensor streams, event logs and split boundaries.

    Segments are half-open: dev = [start, dev_end), train = [dev_end, train_end),
    test = [train_end, end).
    """

    streams: dict
    logs: dict
    dev_end: int
    train_end: int
    start: int
    end: int
    source: str = field(default='', compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'streams', MappingProxyType(dict(sorted(self.streams.items()))))
        object.__setattr__(self, 'logs', MappingProxyType(dict(sorted(self.logs.items()))))
        if not self.start < self.dev_end < self.train_end < self.end:
            raise CorpusError(
                f"Split boundaries must satisfy start < dev_end < train_end < end; got "
                f"{self.start}, {self.dev_end}, {self.train_end}, {self.end}")

    @property
    def sensor_ids(self):
        return list(self.streams)

    @property
    def event_types(self):
        return list(self.logs)

    def segment(self, name):
        """
        Returns the (start, end) nanosecond bounds of a split segment.

        Parameters:
        - name (str): 'dev', 'train' or 'test'.

        Returns:
        - tuple: Half-open (start_ns, end_ns).
        """
        if name == 'dev':
            return (self.start, self.dev_end)
        if name == 'train':
            return (self.dev_end, self.train_end)
        if name == 'test':
            return (self.train_end, self.end)
        raise ValueError(f"Unknown segment '{name}'; expected one of {SEGMENTS}")

    def contains(self, timestamp):
        return self.start <= timestamp < self.end

    def instances(self, event_type, segment_name, sample_every):
        """Shortcut for build_instances on one of this dataset's logs and segments."""
        if event_type not in self.logs:
            raise KeyError(f"Unknown event type '{event_type}'")
        return build_instances(self.logs[event_type], self.segment(segment_name), sample_every)


def _first_header(path):
    try:
        with open(path, 'r', encoding='ascii', newline='') as f:
            return f.readline().rstrip('\n').rstrip('\r')
    except UnicodeDecodeError:
        raise CorpusError(f"{path}: file is not ASCII")


def _locate_malformed(path, columns, label_column):
    """Scans a CSV row by row and raises CorpusError naming the first bad line."""
    with open(path, 'r', encoding='ascii', errors='replace', newline='') as f:
        reader = csv.reader(f)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise CorpusError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
            try:
                int(row[0])
                value = float(row[1])
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: malformed row {','.join(row)!r}")
            if not math.isfinite(value):
                raise CorpusError(f"{path}:{lineno}: non-finite value {row[1]!r}")
            if label_column and row[1].strip() not in ('0', '1'):
                raise CorpusError(f"{path}:{lineno}: label must be 0 or 1, got {row[1]!r}")
    raise CorpusError(f"{path}: unreadable CSV")


def _read_table(path, columns, label_column=False):
    """Reads a two-column corpus CSV into (timestamps, values) numpy arrays."""
    header = _first_header(path)
    if header != ','.join(columns):
        raise CorpusError(f"{path}:1: expected header '{','.join(columns)}', got {header!r}")
    value_dtype = np.int64 if label_column else np.float64
    try:
        df = pd.read_csv(path, dtype={columns[0]: np.int64, columns[1]: value_dtype},
                         engine='c', na_filter=not label_column, float_precision='round_trip')
    except (ValueError, pd.errors.ParserError, OverflowError):
        _locate_malformed(path, columns, label_column)
    if list(df.columns) != list(columns):
        raise CorpusError(f"{path}:1: unexpected columns {list(df.columns)}")
    timestamps = df[columns[0]].to_numpy(dtype=np.int64)
    values = df[columns[1]].to_numpy(dtype=value_dtype)
    if label_column:
        bad = np.flatnonzero((values != 0) & (values != 1))
        if bad.size:
            raise CorpusError(f"{path}:{bad[0] + 2}: label must be 0 or 1, got {values[bad[0]]}")
    else:
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise CorpusError(f"{path}:{bad[0] + 2}: non-finite value {values[bad[0]]}")
    return timestamps, values


def _monotone(name, path, timestamps, values):
    """Enforces increasing timestamps; duplicates keep the first reading with a warning."""
    steps = np.diff(timestamps)
    backwards = np.flatnonzero(steps < 0)
    if backwards.size:
        line = backwards[0] + 3
        raise CorpusError(f"Stream '{name}' is not monotone: timestamps decrease at {path}:{line}")
    duplicate = np.flatnonzero(steps == 0)
    if duplicate.size:
        logging.warning(f"Stream '{name}': {duplicate.size} duplicate timestamps, keeping first reading")
        keep = np.ones(len(timestamps), dtype=bool)
        keep[duplicate + 1] = False
        timestamps, values = timestamps[keep], values[keep]
    return timestamps, values


def _load_sensor(path, sensor_id, modality):
    timestamps, values = _read_table(path, SENSOR_COLUMNS)
    timestamps, values = _monotone(sensor_id, path, timestamps, values)
    if len(timestamps) == 0:
        logging.warning(f"Sensor '{sensor_id}' has no readings")
    return SensorStream(sensor_id, modality, timestamps, values)


def _load_events(path, event_type):
    timestamps, labels = _read_table(path, EVENT_COLUMNS, label_column=True)
    timestamps, labels = _monotone(event_type, path, timestamps, labels)
    return EventLog(event_type, timestamps, labels)


def _read_meta(root):
    meta_path = root / 'meta.json'
    try:
        with open(meta_path, 'r', encoding='utf-8') as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise CorpusError(f"{meta_path}: missing meta.json")
    except json.JSONDecodeError as e:
        raise CorpusError(f"{meta_path}: invalid JSON ({e})")
    split = meta.get('split', meta)
    if 'dev_end' not in split or 'train_end' not in split:
        raise CorpusError(f"{meta_path}: split boundaries 'dev_end' and 'train_end' are required")
    return meta, split


def ingest_corpus(root_path, n_jobs=1):
    """
    Loads a corpus directory, validating every file.

    Parameters:
    - root_path (str or Path): Directory holding events/, sensors/ and meta.json.
    - n_jobs (int): Number of files parsed concurrently.

    Returns:
    - Dataset: The validated, immutable dataset.

    Raises:
    - CorpusError: On missing sensors, malformed rows, non-monotone streams or unknown sensors.
    """
    root = Path(root_path)
    meta, split = _read_meta(root)

    sensor_files = sorted((root / 'sensors').glob('*.csv'))
    if not sensor_files:
        raise CorpusError(f"{root}: no sensors")
    event_files = sorted((root / 'events').glob('*.csv'))

    modalities = {}
    for entry in meta.get('sensors', []):
        if isinstance(entry, str):
            modalities[entry] = 'unknown'
        else:
            modalities[entry['id']] = entry.get('modality', 'unknown')
    on_disk = {p.stem for p in sensor_files}
    for sensor_id in modalities:
        if sensor_id not in on_disk:
            raise CorpusError(f"meta.json references unknown sensor '{sensor_id}'")
    for sensor_id in sorted(on_disk - set(modalities)):
        logging.warning(f"Sensor file '{sensor_id}.csv' is not listed in meta.json; modality 'unknown'")

    logging.info(f"Ingesting corpus {root}: {len(sensor_files)} sensors, {len(event_files)} event logs")
    jobs = [delayed(_load_sensor)(p, p.stem, modalities.get(p.stem, 'unknown')) for p in sensor_files]
    jobs += [delayed(_load_events)(p, p.stem) for p in event_files]
    loaded = Parallel(n_jobs=n_jobs, prefer='threads')(jobs)
    streams = {s.sensor_id: s for s in loaded[:len(sensor_files)]}
    logs = {log.event_type: log for log in loaded[len(sensor_files):]}

    start = meta.get('start_ns')
    end = meta.get('end_ns')
    if start is None or end is None:
        firsts = [s.timestamps[0] for s in streams.values() if len(s)]
        firsts += [log.timestamps[0] for log in logs.values() if len(log)]
        lasts = [s.timestamps[-1] for s in streams.values() if len(s)]
        lasts += [log.timestamps[-1] for log in logs.values() if len(log)]
        if not firsts:
            raise CorpusError(f"{root}: corpus holds no readings")
        start = int(min(firsts)) if start is None else start
        end = int(max(lasts)) + 1 if end is None else end

    return Dataset(streams, logs, int(split['dev_end']), int(split['train_end']),
                   int(start), int(end), source=str(root))


def _write_table(path, columns, timestamps, values, float_format=FLOAT_FORMAT):
    frame = pd.DataFrame({columns[0]: timestamps, columns[1]: values})
    frame.to_csv(path, index=False, float_format=float_format, lineterminator='\n')


def write_corpus(dataset, root_path):
    """
    Serializes a dataset into the corpus directory layout.

    Parameters:
    - dataset (Dataset): Dataset to write.
    - root_path (str or Path): Target directory (created if missing).

    Returns:
    - Path: The corpus root.
    """
    root = Path(root_path)
    (root / 'sensors').mkdir(parents=True, exist_ok=True)
    (root / 'events').mkdir(parents=True, exist_ok=True)
    for stream in dataset.streams.values():
        _write_table(root / 'sensors' / f'{stream.sensor_id}.csv', SENSOR_COLUMNS,
                     stream.timestamps, stream.values)
    for log in dataset.logs.values():
        _write_table(root / 'events' / f'{log.event_type}.csv', EVENT_COLUMNS,
                     log.timestamps, log.labels.astype(np.int64))
    meta = {
        'sensors': [{'id': s.sensor_id, 'modality': s.modality} for s in dataset.streams.values()],
        'split': {'dev_end': dataset.dev_end, 'train_end': dataset.train_end},
        'start_ns': dataset.start,
        'end_ns': dataset.end,
    }
    with open(root / 'meta.json', 'w', encoding='utf-8', newline='\n') as f:
        f.write(canonical_json(meta, indent=2))
        f.write('\n')
    logging.info(f"Corpus written to {root}")
    return root


def build_instances(log, segment, sample_every):
    """
    Builds the labelled instances of one event type inside a split segment.

    Every label-1 record of the segment becomes an instance. Label-0 instances sit on the
    second grid at offsets 0, k, 2k, ... from the segment start (k = sample_every), skipping
    any second that holds a 1-event.

    Parameters:
    - log (EventLog): Event log of the event type.
    - segment (tuple): Half-open (start_ns, end_ns).
    - sample_every (int): Grid step k in seconds, >= 1.

    Returns:
    - InstanceSet: Time-ordered instances.
    """
    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")
    start, end = int(segment[0]), int(segment[1])
    if end <= start:
        return InstanceSet(log.event_type, [], [])

    ones = log.event_times()
    ones = ones[(ones >= start) & (ones < end)]

    grid = np.arange(start, end, int(sample_every) * NS_PER_SECOND, dtype=np.int64)
    if ones.size:
        occupied = np.unique((ones - start) // NS_PER_SECOND)
        grid = grid[~np.isin((grid - start) // NS_PER_SECOND, occupied)]

    anchors = np.concatenate([grid, ones])
    labels = np.concatenate([np.zeros(grid.size, dtype=np.int8), np.ones(ones.size, dtype=np.int8)])
    return InstanceSet(log.event_type, anchors, labels)


def window_bounds(stream, anchors, t_minus, t_plus):
    """
    Index bounds of [anchor + t_minus, anchor + t_plus) for many anchors.

    Parameters:
    - stream (SensorStream): Stream to search.
    - anchors (np.ndarray): int64 nanosecond anchors.
    - t_minus (float): Window start in seconds relative to the anchor.
    - t_plus (float): Window end in seconds relative to the anchor.

    Returns:
    - tuple: (lo, hi) int64 arrays; readings lo[i]:hi[i] fall in window i.
    """
    if not t_minus < t_plus:
        raise ValueError(f"Window start {t_minus} must precede window end {t_plus}")
    anchors = np.asarray(anchors, dtype=np.int64)
    lo = np.searchsorted(stream.timestamps, anchors + seconds_to_ns(t_minus), side='left')
    hi = np.searchsorted(stream.timestamps, anchors + seconds_to_ns(t_plus), side='left')
    return lo.astype(np.int64), hi.astype(np.int64)


def slice_window(stream, anchor, t_minus, t_plus):
    """
    Returns the readings with anchor + t_minus <= timestamp < anchor + t_plus.

    Parameters:
    - stream (SensorStream): Source stream.
    - anchor (int): Anchor timestamp in nanoseconds.
    - t_minus (float): Window start in seconds relative to the anchor.
    - t_plus (float): Window end in seconds relative to the anchor.

    Returns:
    - np.ndarray: Read-only view of the values, possibly empty.
    """
    lo, hi = window_bounds(stream, np.array([anchor], dtype=np.int64), t_minus, t_plus)
    return stream.values[lo[0]:hi[0]]


def stream_coverage(stream, start, end):
    """
    Whether the stream holds readings spanning [start, end).

    The stream must start at or before `start` and reach `end` within one sampling period.
    Inside the window, including the readings on either side of it, no two consecutive
    readings may lie more than GAP_PERIODS median sampling periods apart.
    """
    if len(stream) == 0:
        return False
    timestamps = stream.timestamps
    period = stream.period
    if not (timestamps[0] <= start and timestamps[-1] + period >= end):
        return False
    if period <= 0:
        return True
    lo, hi = np.searchsorted(timestamps, [start, end], side='left')
    around = timestamps[max(lo - 1, 0):hi + 1]
    return bool(np.all(np.diff(around) <= GAP_PERIODS * period))


def segment_moments(stream, segment):
    """
    Mean and standard deviation of a stream's readings inside a segment.

    Parameters:
    - stream (SensorStream): Source stream.
    - segment (tuple): Half-open (start_ns, end_ns).

    Returns:
    - tuple: (mean, std); std is 1.0 for constant or empty data, and an empty segment falls
      back to the whole stream's mean (0.0 for an empty stream).
    """
    lo, hi = np.searchsorted(stream.timestamps, [segment[0], segment[1]], side='left')
    values = stream.values[lo:hi]
    if values.size == 0:
        values = stream.values
    if values.size == 0:
        return 0.0, 1.0
    mean = float(np.mean(values))
    std = float(np.std(values))
    if not std > 0.0 or not math.isfinite(std):
        std = 1.0
    return mean, std
