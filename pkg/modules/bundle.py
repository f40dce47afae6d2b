# modules/bundle.py

"""
bundle.py

Persistence of trained verifiers. A ModelBundle is everything verification needs besides
sensor data: the sensor selection with its windows, the prototypes' stored series, the
normalization statistics, the fitted classifier, the EER threshold, the validation
summary and a fingerprint of the settings that produced it.

A bundle is one JSON document. When the prototype series exceed SIDECAR_BYTES they move to
a raw `.npy` file next to it, and the JSON keeps only their lengths.

Functions:
- save_bundle(bundle, path): Writes the bundle (and sidecar if needed).
- load_bundle(path, settings=None): Reads a bundle, warning on a settings mismatch.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from config import settings_fingerprint
from .baseline_statistical import embed_all_statistical
from .dissim_space import NormalizationStats, PrototypeSet, embed_all
from .errors import BundleError
from .esw import SensorSelection
from .learners import TrainedModel
from .selection_eval import MetricSummary
from .utils import canonical_json

SCHEMA_VERSION = 1
SIDECAR_BYTES = 10 * 1024 * 1024
SIDECAR_SUFFIX = '.series.npy'
# settings copied into the bundle because verification depends on them
RESULT_SETTINGS = ('band', 'sample_every', 'cv_folds', 'seed', 'pipeline', 'rmi_threshold', 'rmi_bins',
                   'window_min', 'window_max', 'max_prototypes', 'grid', 'dev_pairs', 'rank_std_penalty')


@dataclass(frozen=True, eq=False)
class ModelBundle:
    event_type: str
    pipeline: str
    selection: SensorSelection
    stats: NormalizationStats
    model: TrainedModel
    threshold: float
    summary: MetricSummary
    prototypes: PrototypeSet = None
    fingerprint: str = ''
    settings: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def features(self, dataset, anchors, n_jobs=1, report=None):
        """Feature matrix of the anchors under this bundle's pipeline."""
        if self.pipeline == 'statistical':
            return embed_all_statistical(anchors, dataset, self.selection, self.stats, report=report)
        return embed_all(anchors, dataset, self.selection, self.prototypes, self.stats,
                         band=self.settings.get('band', '10%'), n_jobs=n_jobs, report=report)

    def check_compatible(self, dataset):
        """Raises BundleError when the dataset lacks a selected sensor or the event type."""
        missing = [s for s in self.selection.sensor_ids if s not in dataset.streams]
        if missing:
            raise BundleError(f"Bundle for '{self.event_type}' needs sensors missing from the data: "
                              f"{', '.join(missing)}")

    def to_dict(self, include_series=True):
        return {
            'schema_version': self.schema_version,
            'event_type': self.event_type,
            'pipeline': self.pipeline,
            'selection': self.selection.to_dict(),
            'normalization': self.stats.to_dict(),
            'prototypes': self.prototypes.to_dict(include_series) if self.prototypes is not None else None,
            'model': self.model.to_dict(),
            'threshold': self.threshold,
            'summary': self.summary.to_dict(),
            'fingerprint': self.fingerprint,
            'settings': {k: self.settings[k] for k in sorted(self.settings)},
        }


def bundle_settings(settings):
    return {k: settings.get(k) for k in RESULT_SETTINGS if k in settings}


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def save_bundle(bundle, path):
    """
    Writes a bundle as canonical JSON; large prototype series go to a `.npy` sidecar.

    Parameters:
    - bundle (ModelBundle): Bundle to save.
    - path (str or Path): JSON destination.

    Returns:
    - Path: The JSON path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    prototypes = bundle.prototypes
    use_sidecar = prototypes is not None and prototypes.total_values() * 8 > SIDECAR_BYTES
    payload = bundle.to_dict(include_series=not use_sidecar)
    side = sidecar_path(path)
    if use_sidecar:
        lengths = {sid: [len(s) for s in items] for sid, items in sorted(prototypes.series.items())}
        values = np.concatenate([np.asarray(s, dtype=np.float64)
                                 for sid in sorted(prototypes.series) for s in prototypes.series[sid]])
        np.save(side, values, allow_pickle=False)
        payload['prototypes']['sidecar'] = {'file': side.name, 'lengths': lengths}
        logging.info(f"Prototype series ({values.nbytes / 1e6:.1f} MB) written to sidecar {side}")
    elif side.exists():
        side.unlink()
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(canonical_json(payload))
        f.write('\n')
    logging.info(f"Bundle for '{bundle.event_type}' saved to {path}")
    return path


def _read_sidecar(path, spec):
    side = Path(path).with_name(spec['file'])
    try:
        values = np.load(side, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise BundleError(f"Cannot read prototype sidecar {side}: {e}")
    series, pos = {}, 0
    for sid in sorted(spec['lengths']):
        series[sid] = []
        for length in spec['lengths'][sid]:
            series[sid].append(values[pos:pos + length])
            pos += length
    if pos != values.size:
        raise BundleError(f"Prototype sidecar {side} does not match the bundle")
    return series


def load_bundle(path, settings=None):
    """
    Loads a bundle.

    Parameters:
    - path (str or Path): Bundle JSON.
    - settings (dict or None): Current settings; a fingerprint mismatch is logged as a warning.

    Returns:
    - ModelBundle

    Raises:
    - BundleError: Unreadable file, unknown schema version or missing fields.
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise BundleError(f"Cannot read bundle {path}: {e}")
    if not isinstance(payload, dict) or payload.get('schema_version') != SCHEMA_VERSION:
        found = payload.get('schema_version') if isinstance(payload, dict) else None
        raise BundleError(f"Bundle {path} has schema version {found}, expected {SCHEMA_VERSION}")
    try:
        prototypes = None
        if payload['prototypes'] is not None:
            sidecar = payload['prototypes'].get('sidecar')
            series = _read_sidecar(path, sidecar) if sidecar else None
            prototypes = PrototypeSet.from_dict(payload['prototypes'], series)
        bundle = ModelBundle(
            event_type=payload['event_type'],
            pipeline=payload['pipeline'],
            selection=SensorSelection.from_dict(payload['selection']),
            stats=NormalizationStats.from_dict(payload['normalization']),
            model=TrainedModel.from_dict(payload['model']),
            threshold=float(payload['threshold']),
            summary=MetricSummary.from_dict(payload['summary']),
            prototypes=prototypes,
            fingerprint=payload.get('fingerprint', ''),
            settings=dict(payload.get('settings', {})),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise BundleError(f"Bundle {path} is incomplete or corrupt: {e}")
    if settings is not None and bundle.fingerprint and settings_fingerprint(settings) != bundle.fingerprint:
        logging.warning(f"Bundle {path} was trained with different settings (fingerprint mismatch)")
    return bundle
