# modules/esw.py

"""
esw.py

Event Signature Window (ESW) learning. For one event type and one sensor, every integer
window [t-, t+] inside the search range (by default [-30, +30] s, 1830 candidates) is
scored on the development split, and the best window is kept. Sensors whose best score
reaches a threshold become the features of the event's verifier.

Two scorers are available:
- 'rmi': Relative Mutual Information between the event label and the window's mean
  absolute first difference, discretized into equal-frequency bins.
- 'distance': class separability in DTW space, the ratio of the mean cross-class
  distance to the mean distance between 1-event windows (the end-to-end variant).

Functions:
- candidate_windows(lo, hi): All integer (t-, t+) pairs with lo <= t- < t+ <= hi.
- window_statistic(series): Mean absolute first difference.
- rmi(labels, statistics, n_bins): I(E;S) / H(E) with plug-in entropies.
- search_esw(dataset, event_type, sensor_id, ...): Best window by RMI.
- search_esw_distance_based(dataset, event_type, sensor_id, ...): Best window by DTW separability.
- select_sensors(dataset, event_type, threshold, ...): SensorSelection over all sensors.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from numba import njit

from .core_data import segment_moments
from .distance import BandSpec, _dtw_kernel, _feasible_radius, _resolve_radius
from .errors import NoInformativeSensorsError, UntrainableEventError
from .utils import NS_PER_SECOND, stable_key

WINDOW_RANGE = (-30, 30)
RMI_BINS = 8
SEPARABILITY_EPSILON = 1e-9
DEFAULT_MAX_PAIRS = 200
HELD_OUT_PAIR_FACTOR = 2
MIN_HELD_OUT = 4
_COLUMN_CHUNK = 128


@dataclass(frozen=True)
class EventSignatureWindow:
    sensor_id: str
    t_minus: int
    t_plus: int
    rmi: float

    def __post_init__(self):
        if not self.t_minus < self.t_plus:
            raise ValueError(f"ESW for '{self.sensor_id}' needs t_minus < t_plus, got [{self.t_minus}, {self.t_plus}]")
        if not 0.0 <= self.rmi <= 1.0:
            raise ValueError(f"ESW score for '{self.sensor_id}' must lie in [0, 1], got {self.rmi}")

    @property
    def length(self):
        return self.t_plus - self.t_minus

    def to_dict(self):
        return {'sensor_id': self.sensor_id, 't_minus': self.t_minus, 't_plus': self.t_plus, 'rmi': self.rmi}

    @classmethod
    def from_dict(cls, payload):
        return cls(payload['sensor_id'], int(payload['t_minus']), int(payload['t_plus']), float(payload['rmi']))


@dataclass(frozen=True)
class SensorSelection:
    """Selected sensors of one event type, each with its signature window."""

    event_type: str
    windows: tuple
    threshold: float
    method: str = 'rmi'
    scores: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'windows', tuple(self.windows))
        for window in self.windows:
            if window.rmi < self.threshold:
                raise ValueError(f"Window of '{window.sensor_id}' scores {window.rmi} below threshold {self.threshold}")

    @property
    def sensor_ids(self):
        return [w.sensor_id for w in self.windows]

    @property
    def span(self):
        """Widest relative interval covered by any selected window."""
        return (min(w.t_minus for w in self.windows), max(w.t_plus for w in self.windows))

    def to_dict(self):
        return {
            'event_type': self.event_type,
            'method': self.method,
            'threshold': self.threshold,
            'windows': [w.to_dict() for w in self.windows],
            'candidate_scores': {k: self.scores[k] for k in sorted(self.scores)},
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(payload['event_type'],
                   [EventSignatureWindow.from_dict(w) for w in payload['windows']],
                   float(payload['threshold']),
                   payload.get('method', 'rmi'),
                   dict(payload.get('candidate_scores', {})))

    def to_json(self, path):
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)
            f.write('\n')


def candidate_windows(lo=WINDOW_RANGE[0], hi=WINDOW_RANGE[1]):
    """
    Enumerates the integer window grid.

    Parameters:
    - lo (int): Smallest t-.
    - hi (int): Largest t+.

    Returns:
    - np.ndarray: (C, 2) int64 array of (t-, t+), ordered by t- then t+; C = (n+1 choose 2)
      with n = hi - lo, i.e. 1830 for [-30, +30].
    """
    t_minus, t_plus = np.triu_indices(hi - lo + 1, k=1)
    return np.stack([t_minus + lo, t_plus + lo], axis=1).astype(np.int64)


def window_statistic(series):
    """Mean absolute first difference; 0 for empty or single-value series."""
    series = np.asarray(series, dtype=np.float64)
    if series.size < 2:
        return 0.0
    return float(np.mean(np.abs(np.diff(series))))


def _equal_frequency_bins(statistics, n_bins):
    """
    Rank-based bin index per value. Edges are order statistics of the data, so any strictly
    monotone transformation of the values yields the same bins, and tied values share a bin.
    """
    ordered = np.sort(statistics)
    n = ordered.size
    cut = (np.arange(1, n_bins) * n) // n_bins
    edges = np.unique(ordered[cut])
    return np.searchsorted(edges, statistics, side='left')


def _rmi_from_bins(labels, bins, n_bins):
    n = labels.size
    joint = np.bincount(bins * 2 + labels, minlength=2 * n_bins).reshape(-1, 2) / n
    p_label = joint.sum(axis=0)
    p_bin = joint.sum(axis=1)
    nz_label = p_label > 0
    h_label = -np.sum(p_label[nz_label] * np.log(p_label[nz_label]))
    nz = joint > 0
    outer = np.outer(p_bin, p_label)
    mutual = np.sum(joint[nz] * np.log(joint[nz] / outer[nz]))
    return float(min(1.0, max(0.0, mutual / h_label)))


def rmi(labels, statistics, n_bins=RMI_BINS):
    """
    Relative Mutual Information between binary labels and a real statistic.

    Parameters:
    - labels (array-like): 0/1 labels, both classes present.
    - statistics (array-like): One value per label.
    - n_bins (int): Number of equal-frequency bins.

    Returns:
    - float: I(E;S) / H(E), clamped to [0, 1].
    """
    labels = np.asarray(labels, dtype=np.int64)
    statistics = np.asarray(statistics, dtype=np.float64)
    if labels.shape != statistics.shape or labels.ndim != 1:
        raise ValueError("labels and statistics must be 1-D and of equal length")
    if labels.size < 2:
        raise ValueError("RMI needs at least two observations")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    if labels.min() == labels.max():
        raise ValueError("RMI is undefined for single-class labels (H(E) = 0)")
    return _rmi_from_bins(labels, _equal_frequency_bins(statistics, n_bins), n_bins)


def _offset_index(stream, anchors, lo, hi):
    """searchsorted positions of anchor + s seconds for every integer s in [lo, hi]."""
    offsets = np.arange(lo, hi + 1, dtype=np.int64) * NS_PER_SECOND
    return np.searchsorted(stream.timestamps, anchors[:, None] + offsets[None, :], side='left')


def window_statistics(stream, anchors, windows, window_range=WINDOW_RANGE):
    """
    window_statistic of every (anchor, window) pair, via prefix sums over the stream.

    Returns:
    - np.ndarray: (len(anchors), len(windows)) matrix.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    windows = np.asarray(windows, dtype=np.int64)
    out = np.zeros((anchors.size, len(windows)))
    values = stream.values
    if values.size < 2 or anchors.size == 0:
        return out
    prefix = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(values)))])
    index = _offset_index(stream, anchors, *window_range)
    start = index[:, windows[:, 0] - window_range[0]]
    stop = index[:, windows[:, 1] - window_range[0]]
    count = stop - start
    valid = count >= 2
    total = prefix[np.clip(stop - 1, 0, values.size - 1)] - prefix[np.clip(start, 0, values.size - 1)]
    np.divide(total, np.maximum(count - 1, 1), out=out, where=valid)
    return out


def _best_window(scores, windows):
    """Argmax with ties broken by shorter window, then smaller |t-|."""
    order = np.lexsort((np.abs(windows[:, 0]), windows[:, 1] - windows[:, 0], -scores))
    return int(order[0])


def _dev_instances(dataset, event_type, sample_every, instances):
    if instances is None:
        instances = dataset.instances(event_type, 'dev', sample_every)
    if instances.count(1) == 0:
        raise UntrainableEventError(f"untrainable event '{event_type}': no 1-events in the development split")
    if instances.count(0) == 0:
        raise UntrainableEventError(f"untrainable event '{event_type}': no 0-instances in the development split")
    return instances


def search_esw(dataset, event_type, sensor_id, sample_every=100, window_range=WINDOW_RANGE,
               n_bins=RMI_BINS, instances=None):
    """
    Finds the window of maximum RMI for one sensor on the development split.

    Parameters:
    - dataset (Dataset): Corpus.
    - event_type (str): Event whose signature is searched.
    - sensor_id (str): Sensor to score.
    - sample_every (int): 0-instance grid step in seconds.
    - window_range (tuple): (lo, hi) search range in seconds.
    - n_bins (int): RMI discretization.
    - instances (InstanceSet or None): Precomputed development instances.

    Returns:
    - EventSignatureWindow: Best window and its RMI.
    """
    instances = _dev_instances(dataset, event_type, sample_every, instances)
    stream = dataset.streams[sensor_id]
    windows = candidate_windows(*window_range)
    labels = instances.labels.astype(np.int64)

    scores = np.empty(len(windows))
    for start in range(0, len(windows), _COLUMN_CHUNK):
        chunk = windows[start:start + _COLUMN_CHUNK]
        stats = window_statistics(stream, instances.anchors, chunk, window_range)
        for k in range(len(chunk)):
            scores[start + k] = _rmi_from_bins(labels, _equal_frequency_bins(stats[:, k], n_bins), n_bins)

    best = _best_window(scores, windows)
    t_minus, t_plus = (int(v) for v in windows[best])
    logging.debug(f"ESW {event_type}/{sensor_id}: [{t_minus}, {t_plus}] RMI {scores[best]:.4f}")
    return EventSignatureWindow(sensor_id, t_minus, t_plus, float(scores[best]))


@njit(cache=True, nogil=True)
def _window_pair_distances(values, offsets, index, fill, windows, lo, pair_a, pair_b, radius, fraction, out):
    """
    DTW between the two instances of each pair, for every candidate window.

    values/offsets pack each instance's normalized readings over the whole search range;
    index[i, s] is the packed position of second (lo + s) for instance i; fill[i] is the
    value before the range. Empty windows become a constant pair of the last prior reading.
    """
    left = np.empty(2)
    right = np.empty(2)
    for w in range(windows.shape[0]):
        s0 = windows[w, 0] - lo
        s1 = windows[w, 1] - lo
        for p in range(pair_a.shape[0]):
            ia = pair_a[p]
            ib = pair_b[p]
            a0 = index[ia, s0]
            a1 = index[ia, s1]
            b0 = index[ib, s0]
            b1 = index[ib, s1]
            if a1 > a0:
                a = values[a0:a1]
            else:
                left[:] = values[a0 - 1] if a0 > offsets[ia] else fill[ia]
                a = left
            if b1 > b0:
                b = values[b0:b1]
            else:
                right[:] = values[b0 - 1] if b0 > offsets[ib] else fill[ib]
                b = right
            n = a.shape[0]
            m = b.shape[0]
            r = _feasible_radius(n, m, _resolve_radius(n, m, radius, fraction))
            out[w, p] = _dtw_kernel(a, b, r)


def _pack_search_range(stream, anchors, window_range, mean, std):
    """Normalized readings of each anchor's whole search range, packed, with index and fill."""
    index = _offset_index(stream, anchors, *window_range)
    starts, stops = index[:, 0], index[:, -1]
    lengths = stops - starts
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    normalized = (stream.values - mean) / std
    if lengths.sum():
        values = np.concatenate([normalized[a:b] for a, b in zip(starts, stops)])
    else:
        values = np.zeros(0)
    local = (index - starts[:, None] + offsets[:-1, None]).astype(np.int64)
    fill = np.where(starts > 0, normalized[np.maximum(starts - 1, 0)] if normalized.size else 0.0, 0.0)
    return values, offsets, local, fill.astype(np.float64)


def _sample_pairs(rng, left, right, limit, distinct):
    if distinct:
        a, b = np.triu_indices(len(left), k=1)
        pairs = np.stack([left[a], left[b]], axis=1)
    else:
        a, b = np.meshgrid(np.arange(len(left)), np.arange(len(right)), indexing='ij')
        pairs = np.stack([left[a.ravel()], right[b.ravel()]], axis=1)
    if len(pairs) > limit:
        pairs = pairs[np.sort(rng.choice(len(pairs), size=limit, replace=False))]
    return pairs.astype(np.int64).reshape(-1, 2)


def _rank_separation(cross, reference):
    """
    2*AUC - 1 of cross-class distances exceeding reference distances, less one standard
    error of that quantity (Hanley-McNeil), clipped to [0, 1].
    """
    if cross.size == 0 or reference.size == 0:
        return 0.0
    greater = np.mean(cross[:, None] > reference[None, :])
    ties = np.mean(cross[:, None] == reference[None, :])
    auc = greater + 0.5 * ties
    n1, n2 = cross.size, reference.size
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc * auc / (1.0 + auc)
    variance = (auc * (1.0 - auc) + (n1 - 1) * (q1 - auc * auc) + (n2 - 1) * (q2 - auc * auc)) / (n1 * n2)
    separation = 2.0 * auc - 1.0 - 2.0 * np.sqrt(max(variance, 0.0))
    return float(min(1.0, max(0.0, separation)))


def _halves(rng, indices):
    shuffled = rng.permutation(indices)
    half = (len(shuffled) + 1) // 2
    return np.sort(shuffled[:half]), np.sort(shuffled[half:])


def _pair_sets(rng, ones, zeros, max_pairs):
    """(cross, reference, reference_is_zero): 1-0 pairs and 1-1 pairs, or 0-0 pairs for a single 1-event."""
    within = _sample_pairs(rng, ones, ones, max_pairs // 2, distinct=True)
    reference_is_zero = len(within) == 0
    if reference_is_zero:
        within = _sample_pairs(rng, zeros, zeros, max_pairs // 2, distinct=True)
    budget = max_pairs // 2 if reference_is_zero else max_pairs - len(within)
    cross = _sample_pairs(rng, ones, zeros, budget, distinct=False)
    return cross, within, reference_is_zero


def _pair_distances(stream, anchors, pairs, windows, window_range, mean, std, band):
    """DTW distance of every pair under every window, shape (len(windows), len(pairs))."""
    involved, remap = np.unique(pairs, return_inverse=True)
    remap = remap.reshape(pairs.shape)
    values, offsets, index, fill = _pack_search_range(stream, anchors[involved], window_range, mean, std)
    distances = np.zeros((len(windows), len(pairs)))
    _window_pair_distances(values, offsets, index, fill, np.ascontiguousarray(windows), window_range[0],
                           remap[:, 0].copy(), remap[:, 1].copy(), band.radius, band.fraction, distances)
    return distances


def search_esw_distance_based(dataset, event_type, sensor_id, sample_every=100, window_range=WINDOW_RANGE,
                              max_pairs=DEFAULT_MAX_PAIRS, band='10%', seed=0, instances=None):
    """
    Finds the window whose DTW geometry best separates 1-events from 0-instances.

    The development instances are split into two disjoint halves. On the first, each window
    is scored by mean cross-class DTW / (mean DTW between 1-event pairs + 1e-9) over a fixed
    sample of at most `max_pairs` pairs; with a single 1-event there are no within-class
    pairs and the score is the cross-class mean alone. The stored score is measured on the
    held-out half only: the rank separation 2*AUC - 1 of the chosen window's cross-class
    distances against its within-class distances (0-instance pairs stand in when there is
    one 1-event), less one standard error. With fewer than MIN_HELD_OUT instances of a class
    both halves are the whole set.

    Returns:
    - EventSignatureWindow: Best window with its held-out separation score.
    """
    instances = _dev_instances(dataset, event_type, sample_every, instances)
    stream = dataset.streams[sensor_id]
    band = BandSpec.parse(band)
    windows = candidate_windows(*window_range)
    rng = np.random.default_rng([seed, stable_key(event_type), stable_key(sensor_id)])

    ones = np.flatnonzero(instances.labels == 1)
    zeros = np.flatnonzero(instances.labels == 0)
    if len(ones) >= MIN_HELD_OUT and len(zeros) >= MIN_HELD_OUT:
        ones, held_ones = _halves(rng, ones)
        zeros, held_zeros = _halves(rng, zeros)
    else:
        held_ones, held_zeros = ones, zeros
        logging.debug(f"{event_type}/{sensor_id}: too few instances to hold out; scoring on the search sample")

    cross, within, reference_is_zero = _pair_sets(rng, ones, zeros, max_pairs)
    if reference_is_zero:
        logging.warning(f"{event_type}/{sensor_id}: single 1-event in development split; "
                        f"scoring windows by cross-class distance only")
    mean, std = segment_moments(stream, dataset.segment('dev'))
    distances = _pair_distances(stream, instances.anchors, np.concatenate([cross, within]), windows,
                                window_range, mean, std, band)

    cross_mean = distances[:, :len(cross)].mean(axis=1)
    if reference_is_zero:
        scores = cross_mean
    else:
        scores = cross_mean / (distances[:, len(cross):].mean(axis=1) + SEPARABILITY_EPSILON)

    best = _best_window(scores, windows)
    t_minus, t_plus = (int(v) for v in windows[best])

    held_cross, held_within, _ = _pair_sets(rng, held_ones, held_zeros, HELD_OUT_PAIR_FACTOR * max_pairs)
    held = _pair_distances(stream, instances.anchors, np.concatenate([held_cross, held_within]),
                           windows[best:best + 1], window_range, mean, std, band)[0]
    separation = _rank_separation(held[:len(held_cross)], held[len(held_cross):])
    logging.debug(f"ESW (distance) {event_type}/{sensor_id}: [{t_minus}, {t_plus}] "
                  f"ratio {scores[best]:.4f}, held-out separation {separation:.4f}")
    return EventSignatureWindow(sensor_id, t_minus, t_plus, separation)


def select_sensors(dataset, event_type, threshold, sensor_ids=None, method='rmi', sample_every=100,
                   window_range=WINDOW_RANGE, n_bins=RMI_BINS, max_pairs=DEFAULT_MAX_PAIRS, band='10%',
                   seed=0, n_jobs=1):
    """
    Searches every sensor's ESW and keeps the sensors scoring at least `threshold`.

    Parameters:
    - dataset (Dataset): Corpus.
    - event_type (str): Event type.
    - threshold (float): Minimum score in [0, 1].
    - sensor_ids (list or None): Candidate sensors; all sensors when None.
    - method (str): 'rmi' or 'distance'.
    - n_jobs (int): Sensors searched concurrently; results do not depend on it.

    Returns:
    - SensorSelection: Kept windows ordered by descending score, then sensor id.

    Raises:
    - UntrainableEventError: No 1-events in the development split.
    - NoInformativeSensorsError: No sensor reaches the threshold.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    sensor_ids = list(dataset.sensor_ids if sensor_ids is None else sensor_ids)
    instances = _dev_instances(dataset, event_type, sample_every, None)
    logging.info(f"ESW search for '{event_type}' ({method}): {len(sensor_ids)} sensors, "
                 f"{instances.count(1)} 1-events / {instances.count(0)} 0-instances in development split")

    if method == 'rmi':
        jobs = [delayed(search_esw)(dataset, event_type, s, sample_every, window_range, n_bins, instances)
                for s in sensor_ids]
    elif method == 'distance':
        jobs = [delayed(search_esw_distance_based)(dataset, event_type, s, sample_every, window_range,
                                                   max_pairs, band, seed, instances)
                for s in sensor_ids]
    else:
        raise ValueError(f"Unknown ESW method '{method}'")
    found = Parallel(n_jobs=n_jobs, prefer='threads')(jobs)

    scores = {w.sensor_id: w.rmi for w in found}
    kept = sorted((w for w in found if w.rmi >= threshold), key=lambda w: (-w.rmi, w.sensor_id))
    if not kept:
        raise NoInformativeSensorsError(
            f"no informative sensors for '{event_type}' at threshold {threshold:g} "
            f"(best {max(scores.values()):.3f})")
    for window in kept:
        logging.info(f"  {event_type}: {window.sensor_id} [{window.t_minus:+d}, {window.t_plus:+d}] s, "
                     f"score {window.rmi:.3f}")
    return SensorSelection(event_type, kept, threshold, method, scores)
