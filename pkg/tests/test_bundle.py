import json
import logging

import numpy as np
import pytest

import modules.bundle as bundle_module
from helpers import seconds, training_settings
from modules.bundle import load_bundle, save_bundle, sidecar_path
from modules.core_data import Dataset
from modules.errors import BundleError
from modules.selection_eval import verify


def _claims(dataset, truth):
    start, end = dataset.segment('test')
    times = np.concatenate([truth.events['light_on'], truth.spoofed['light_on']])
    return sorted(int(t) for t in times if start <= t < end - seconds(60))


def test_round_trip_keeps_scores_and_verdicts(tmp_path, small_world, light_training):
    dataset, truth = small_world
    bundle, _ = light_training
    path = save_bundle(bundle, tmp_path / 'light_on.json')
    restored = load_bundle(path, training_settings())
    assert not sidecar_path(path).exists()
    assert restored.stats == bundle.stats
    assert restored.selection == bundle.selection
    for claim in _claims(dataset, truth):
        before = verify(bundle, 'light_on', claim, dataset)
        after = verify(restored, 'light_on', claim, dataset)
        assert after == before


def test_saving_twice_gives_identical_bytes(tmp_path, light_training):
    bundle, _ = light_training
    first = save_bundle(bundle, tmp_path / 'a.json').read_bytes()
    second = save_bundle(load_bundle(tmp_path / 'a.json'), tmp_path / 'b.json').read_bytes()
    assert first == second


def test_large_prototype_series_use_a_sidecar(tmp_path, monkeypatch, small_world, light_training):
    dataset, truth = small_world
    bundle, _ = light_training
    monkeypatch.setattr(bundle_module, 'SIDECAR_BYTES', 0)
    path = save_bundle(bundle, tmp_path / 'light_on.json')
    assert sidecar_path(path).exists()
    payload = json.loads(path.read_text())
    assert 'series' not in payload['prototypes']
    restored = load_bundle(path)
    for sid, items in bundle.prototypes.series.items():
        for original, loaded in zip(items, restored.prototypes.series[sid]):
            assert np.array_equal(original, loaded)
    claim = _claims(dataset, truth)[0]
    assert verify(restored, 'light_on', claim, dataset) == verify(bundle, 'light_on', claim, dataset)


def test_load_rejects_broken_bundles(tmp_path, light_training):
    bundle, _ = light_training
    path = save_bundle(bundle, tmp_path / 'light_on.json')
    payload = json.loads(path.read_text())

    payload['schema_version'] = 99
    (tmp_path / 'future.json').write_text(json.dumps(payload))
    with pytest.raises(BundleError, match='schema version'):
        load_bundle(tmp_path / 'future.json')

    payload['schema_version'] = 1
    del payload['model']
    (tmp_path / 'partial.json').write_text(json.dumps(payload))
    with pytest.raises(BundleError, match='incomplete or corrupt'):
        load_bundle(tmp_path / 'partial.json')

    (tmp_path / 'garbage.json').write_text('{not json')
    with pytest.raises(BundleError):
        load_bundle(tmp_path / 'garbage.json')
    with pytest.raises(BundleError):
        load_bundle(tmp_path / 'missing.json')


def test_settings_mismatch_only_warns(tmp_path, caplog, light_training):
    bundle, _ = light_training
    path = save_bundle(bundle, tmp_path / 'light_on.json')
    with caplog.at_level(logging.WARNING):
        load_bundle(path, training_settings(threads=8))
    assert 'fingerprint mismatch' not in caplog.text
    with caplog.at_level(logging.WARNING):
        restored = load_bundle(path, training_settings(band='unbounded'))
    assert 'fingerprint mismatch' in caplog.text
    assert restored.settings['band'] == '10%'


def test_bundle_rejects_data_without_its_sensors(small_world, light_training):
    dataset, _ = small_world
    bundle, _ = light_training
    reduced = Dataset({k: v for k, v in dataset.streams.items() if k not in bundle.selection.sensor_ids},
                      dict(dataset.logs), dataset.dev_end, dataset.train_end, dataset.start, dataset.end)
    with pytest.raises(BundleError, match='missing from the data'):
        bundle.check_compatible(reduced)
