import numpy as np
import pytest

from helpers import small_scenario, training_settings
from main import train_event
from modules.bundle import save_bundle
from modules.core_data import Dataset, SensorStream
from modules.selection_eval import evaluate_model
from modules.synth import generate_dataset


def _with_noisy_test_split(dataset, seed=0):
    """Same corpus with every reading of the test split replaced by fresh noise."""
    rng = np.random.default_rng(seed)
    streams = {}
    for sid, stream in dataset.streams.items():
        values = stream.values.copy()
        in_test = stream.timestamps >= dataset.train_end
        values[in_test] = rng.normal(0.0, 100.0, size=int(in_test.sum()))
        streams[sid] = SensorStream(sid, stream.modality, stream.timestamps, values)
    return Dataset(streams, dict(dataset.logs), dataset.dev_end, dataset.train_end, dataset.start, dataset.end)


def test_statistical_pipeline_end_to_end(small_world):
    dataset, _ = small_world
    bundle, rows = train_event(dataset, 'light_on', training_settings(pipeline='statistical'))
    assert bundle.pipeline == 'statistical'
    assert bundle.prototypes is None
    assert {row['pipeline'] for row in rows} == {'statistical'}
    result = evaluate_model(bundle, dataset, 'test')
    assert result.sweep.eer <= 0.1


def test_distance_based_pipeline_end_to_end(small_world):
    dataset, _ = small_world
    bundle, _ = train_event(dataset, 'light_on', training_settings(pipeline='e2e'))
    assert bundle.pipeline == 'e2e'
    assert 'light' in bundle.selection.sensor_ids
    assert not {'noise_a', 'noise_b'} & set(bundle.selection.sensor_ids)
    result = evaluate_model(bundle, dataset, 'test')
    assert result.sweep.eer <= 0.1


def test_training_never_reads_the_test_split(tmp_path, small_world):
    dataset, _ = small_world
    settings = training_settings()
    original, _ = train_event(dataset, 'light_on', settings)
    tampered, _ = train_event(_with_noisy_test_split(dataset), 'light_on', settings)
    first = save_bundle(original, tmp_path / 'original.json').read_bytes()
    second = save_bundle(tampered, tmp_path / 'tampered.json').read_bytes()
    assert first == second


@pytest.mark.parametrize('pipeline', ['dtw', 'statistical'])
def test_unwarped_signatures_are_detected_by_both_pipelines(pipeline):
    dataset, _ = generate_dataset(small_scenario(seed=4, warp_factor=0.0))
    bundle, _ = train_event(dataset, 'light_on', training_settings(pipeline=pipeline))
    result = evaluate_model(bundle, dataset, 'test')
    assert result.sweep.dr >= 0.95
