"""
baseline_statistical.py

Statistical-feature arm used for comparison with the DTW embedding. Each selected sensor
contributes the mean, standard deviation, minimum, maximum and mean absolute first
difference of its signature window (5 features per sensor). Windows are normalized and
imputed exactly as in the dissimilarity space, so both arms see the same readings.

Functions:
- window_features(series): The five summary statistics of one series.
- embed_statistical(instance, dataset, selection, stats): One StatVector.
- embed_all_statistical(instances, dataset, selection, stats, report): Feature matrix.
"""

import numpy as np

from .dissim_space import _anchors_of, window_series
from .esw import window_statistic

FEATURE_NAMES = ('mean', 'std', 'min', 'max', 'mean_abs_diff')


def window_features(series):
    series = np.asarray(series, dtype=np.float64)
    return np.array([series.mean(), series.std(), series.min(), series.max(), window_statistic(series)])


def embed_all_statistical(instances, dataset, selection, stats, report=None):
    """
    Summary-statistic features of many instances.

    Parameters:
    - instances (InstanceSet, list of Instance, or anchors): Instances to describe.
    - dataset (Dataset): Corpus.
    - selection (SensorSelection): Sensors and windows.
    - stats (NormalizationStats): Training-split normalization.
    - report (EmbeddingReport or None): Receives imputation counts.

    Returns:
    - np.ndarray: (n_instances, 5 * n_sensors), sensor-major.
    """
    anchors = _anchors_of(instances)
    blocks = []
    for window in selection.windows:
        sid = window.sensor_id
        series, imputed = window_series(dataset.streams[sid], anchors, window.t_minus, window.t_plus,
                                        stats.mean(sid), stats.std(sid))
        block = np.zeros((len(anchors), len(FEATURE_NAMES)))
        for row, values in enumerate(series):
            block[row] = window_features(values)
        blocks.append(block)
        if report is not None:
            report.imputed[sid] = report.imputed.get(sid, 0) + int(imputed.sum())
    if not blocks:
        return np.zeros((len(anchors), 0))
    return np.hstack(blocks)


def embed_statistical(instance, dataset, selection, stats):
    """StatVector of a single instance."""
    return embed_all_statistical([instance], dataset, selection, stats)[0]


def feature_labels(selection):
    return [f"{sid}/{name}" for sid in selection.sensor_ids for name in FEATURE_NAMES]
