"""
dissim_space.py

Dissimilarity-space embedding. Every training 1-event becomes a prototype; an instance is
mapped to the vector of banded DTW distances between its signature window and each
prototype's window, one block per selected sensor (sensor-major, prototype-minor).

Readings are z-scored per sensor with statistics of the training split. A window without
readings is replaced by a constant two-point series holding the last reading before the
window, or the training mean when the sensor has no earlier reading.

Functions:
- compute_normalization(dataset, sensor_ids, segment_name): Per-sensor training moments.
- window_series(stream, anchors, t_minus, t_plus, mean, std): Normalized, imputed windows.
- build_prototypes(dataset, event_type, selection, stats, ...): PrototypeSet from training 1-events.
- embed(instance, dataset, selection, prototypes, stats, band): One DissimVector.
- embed_all(instances, dataset, selection, prototypes, stats, band, n_jobs, report): Embedding matrix.
- export_embedding_csv(matrix, selection, prototypes, path, ...): CSV dump for offline analysis.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core_data import FLOAT_FORMAT, Instance, InstanceSet, segment_moments, window_bounds
from .distance import BandSpec, dtw_pairs
from .errors import UntrainableEventError
from .utils import seconds_to_ns, stable_key

IMPUTED_LENGTH = 2


@dataclass(frozen=True)
class NormalizationStats:
    """Per-sensor (mean, std) of the training split; std is never 0."""

    moments: dict

    def mean(self, sensor_id):
        return self.moments[sensor_id][0]

    def std(self, sensor_id):
        return self.moments[sensor_id][1]

    def to_dict(self):
        return {s: {'mean': m, 'std': sd} for s, (m, sd) in sorted(self.moments.items())}

    @classmethod
    def from_dict(cls, payload):
        return cls({s: (float(v['mean']), float(v['std'])) for s, v in payload.items()})


def compute_normalization(dataset, sensor_ids, segment_name='train'):
    """
    Computes per-sensor mean and standard deviation over one split segment.

    Parameters:
    - dataset (Dataset): Corpus.
    - sensor_ids (list): Sensors to summarize.
    - segment_name (str): Segment providing the statistics.

    Returns:
    - NormalizationStats: Moments per sensor; degenerate sensors get std = 1.
    """
    segment = dataset.segment(segment_name)
    moments = {}
    for sensor_id in sensor_ids:
        moments[sensor_id] = segment_moments(dataset.streams[sensor_id], segment)
    return NormalizationStats(moments)


def window_series(stream, anchors, t_minus, t_plus, mean, std):
    """
    Normalized window of every anchor, with empty windows imputed.

    Parameters:
    - stream (SensorStream): Source stream.
    - anchors (np.ndarray): int64 nanosecond anchors.
    - t_minus (int): Window start in seconds.
    - t_plus (int): Window end in seconds.
    - mean (float): Normalization mean.
    - std (float): Normalization standard deviation.

    Returns:
    - tuple: (list of float64 arrays, bool array flagging imputed windows)
    """
    lo, hi = window_bounds(stream, anchors, t_minus, t_plus)
    values = stream.values
    series = []
    imputed = hi <= lo
    for start, stop, empty in zip(lo, hi, imputed):
        if not empty:
            series.append((values[start:stop] - mean) / std)
        else:
            # last reading before the window, else the training mean
            fill = (values[start - 1] - mean) / std if start > 0 else 0.0
            series.append(np.full(IMPUTED_LENGTH, fill))
    return series, imputed


def _anchors_of(instances):
    if isinstance(instances, InstanceSet):
        return instances.anchors
    if isinstance(instances, Instance):
        return np.array([instances.anchor], dtype=np.int64)
    items = list(instances)
    if items and isinstance(items[0], Instance):
        return np.array([i.anchor for i in items], dtype=np.int64)
    return np.asarray(items, dtype=np.int64).reshape(-1)


def closes_by(anchors, selection, end):
    """True for each anchor whose selected windows all close at or before `end` (ns)."""
    reach = max(w.t_plus for w in selection.windows)
    return np.asarray(anchors, dtype=np.int64) + seconds_to_ns(reach) <= end


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    """
    Training 1-events used as reference series. `series[sensor_id][i]` is prototype i's
    normalized (and if needed imputed) window on that sensor; the order of `anchors` fixes
    the coordinate layout of every embedding built from this set.
    """

    event_type: str
    anchors: np.ndarray
    series: dict

    def __post_init__(self):
        object.__setattr__(self, 'anchors', np.asarray(self.anchors, dtype=np.int64))
        for sensor_id, items in self.series.items():
            if len(items) != len(self.anchors):
                raise ValueError(f"Prototype series for '{sensor_id}' do not match the prototype count")

    @property
    def k(self):
        return len(self.anchors)

    def __len__(self):
        return self.k

    def total_values(self):
        return sum(len(s) for items in self.series.values() for s in items)

    def to_dict(self, include_series=True):
        payload = {'event_type': self.event_type, 'anchors': [int(a) for a in self.anchors]}
        if include_series:
            payload['series'] = {s: [np.asarray(x).tolist() for x in items]
                                 for s, items in sorted(self.series.items())}
        return payload

    @classmethod
    def from_dict(cls, payload, series=None):
        if series is None:
            series = {s: [np.asarray(x, dtype=np.float64) for x in items]
                      for s, items in payload['series'].items()}
        return cls(payload['event_type'], payload['anchors'], series)


def build_prototypes(dataset, event_type, selection, stats=None, max_prototypes=None, seed=0,
                     segment_name='train'):
    """
    Turns every 1-event of the training split into a prototype, leaving out events whose
    windows would read past the end of the split.

    Parameters:
    - dataset (Dataset): Corpus.
    - event_type (str): Event type.
    - selection (SensorSelection): Selected sensors and their windows.
    - stats (NormalizationStats or None): Normalization; computed from the training split when None.
    - max_prototypes (int or None): Optional cap, applied as a seeded uniform subsample.
    - seed (int): Seed of the subsample.

    Returns:
    - PrototypeSet: Prototypes in time order.

    Raises:
    - UntrainableEventError: The training split holds no 1-event.
    """
    start, end = dataset.segment(segment_name)
    ones = dataset.logs[event_type].event_times()
    ones = ones[(ones >= start) & (ones < end)]
    ones = ones[closes_by(ones, selection, end)]
    if ones.size == 0:
        raise UntrainableEventError(f"untrainable event '{event_type}': no 1-events in the {segment_name} split")
    if max_prototypes is not None and 0 < max_prototypes < ones.size:
        rng = np.random.default_rng([seed, stable_key(event_type)])
        ones = np.sort(rng.choice(ones, size=max_prototypes, replace=False))
        logging.info(f"Prototypes for '{event_type}' subsampled to {max_prototypes}")
    if stats is None:
        stats = compute_normalization(dataset, selection.sensor_ids, segment_name)

    series = {}
    for window in selection.windows:
        sid = window.sensor_id
        series[sid], imputed = window_series(dataset.streams[sid], ones, window.t_minus, window.t_plus,
                                             stats.mean(sid), stats.std(sid))
        if imputed.any():
            logging.warning(f"{event_type}: {int(imputed.sum())} prototype windows imputed on '{sid}'")
    logging.info(f"Built {ones.size} prototypes for '{event_type}' over {len(series)} sensors")
    return PrototypeSet(event_type, ones, series)


@dataclass
class EmbeddingReport:
    """Counters filled by embed_all."""

    dtw_calls: int = 0
    imputed: dict = field(default_factory=dict)

    @property
    def imputed_total(self):
        return sum(self.imputed.values())


def embed_all(instances, dataset, selection, prototypes, stats, band='10%', n_jobs=1, report=None):
    """
    Embeds many instances into the dissimilarity space.

    Parameters:
    - instances (InstanceSet, list of Instance, or anchors): Instances to embed.
    - dataset (Dataset): Corpus providing the readings.
    - selection (SensorSelection): Sensors and windows.
    - prototypes (PrototypeSet): Reference series.
    - stats (NormalizationStats): Normalization shared with the prototypes.
    - band (BandSpec, int, str): Sakoe-Chiba band.
    - n_jobs (int): Threads for the DTW matrix; the result does not depend on it.
    - report (EmbeddingReport or None): Receives DTW call and imputation counts.

    Returns:
    - np.ndarray: (n_instances, n_sensors * k) matrix, row order equal to input order.
    """
    anchors = _anchors_of(instances)
    band = BandSpec.parse(band)
    k = prototypes.k
    blocks = []
    for window in selection.windows:
        sid = window.sensor_id
        queries, imputed = window_series(dataset.streams[sid], anchors, window.t_minus, window.t_plus,
                                         stats.mean(sid), stats.std(sid))
        blocks.append(dtw_pairs(queries, prototypes.series[sid], band, n_jobs=n_jobs))
        if report is not None:
            report.dtw_calls += len(queries) * k
            report.imputed[sid] = report.imputed.get(sid, 0) + int(imputed.sum())
    if not blocks:
        return np.zeros((len(anchors), 0))
    return np.hstack(blocks)


def embed(instance, dataset, selection, prototypes, stats, band='10%'):
    """Embeds a single instance; returns a 1-D vector of length n_sensors * k."""
    return embed_all([instance], dataset, selection, prototypes, stats, band)[0]


def coordinate_labels(selection, prototypes):
    return [f"{sid}/{i}" for sid in selection.sensor_ids for i in range(prototypes.k)]


def export_embedding_csv(matrix, selection, prototypes, path, instances=None):
    """
    Writes an embedding matrix as CSV with `sensor_id/prototype_index` column labels.

    When `instances` is given, `timestamp_ns` and `label` columns lead each row.
    """
    frame = pd.DataFrame(np.asarray(matrix), columns=coordinate_labels(selection, prototypes))
    if instances is not None:
        frame.insert(0, 'label', np.asarray(instances.labels, dtype=np.int64))
        frame.insert(0, 'timestamp_ns', np.asarray(instances.anchors, dtype=np.int64))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logging.info(f"Embedding ({frame.shape[0]} x {len(selection.sensor_ids) * prototypes.k}) written to {path}")
    return path
