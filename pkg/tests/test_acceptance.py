"""Desk-scale checks on the default three-day scenario. Run with `pytest -m slow`."""

import numpy as np
import pytest

from cli import main
from helpers import training_settings
from main import train_event
from modules.bundle import save_bundle
from modules.esw import search_esw
from modules.selection_eval import evaluate_model
from modules.synth import default_scenario, generate_dataset
from modules.utils import window_iou

pytestmark = pytest.mark.slow

EVENTS = ('coffee_used', 'door_open', 'light_on')
SEEDS = 20
THESIS_SEEDS = 10


@pytest.fixture(scope='module')
def default_world():
    return generate_dataset(default_scenario(seed=0), n_jobs=4)


@pytest.fixture(scope='module')
def trained(default_world):
    dataset, _ = default_world
    settings = training_settings(sample_every=100, threads=4)
    return {event: train_event(dataset, event, settings)[0] for event in EVENTS}


def _test_eer(dataset, event, **overrides):
    bundle, _ = train_event(dataset, event, training_settings(threads=4, **overrides))
    return evaluate_model(bundle, dataset, 'test', n_jobs=4).sweep.eer


@pytest.mark.parametrize('event', EVENTS)
def test_dtw_verifier_error_rate(event, default_world, trained):
    dataset, _ = default_world
    result = evaluate_model(trained[event], dataset, 'test', n_jobs=4)
    assert result.sweep.eer <= 0.05


def test_learned_windows_come_from_responding_sensors(default_world, trained):
    responding = {s for e in default_scenario().events for s in e.sensors}
    for event in EVENTS:
        assert set(trained[event].selection.sensor_ids) <= responding


def test_searched_windows_overlap_the_planted_ones():
    hits = []
    for seed in range(SEEDS):
        config = default_scenario(seed=seed)
        dataset, truth = generate_dataset(config, n_jobs=4)
        for event in config.events:
            planted = tuple(np.mean(truth.windows[event.type], axis=0))
            for sensor_id in event.sensors:
                window = search_esw(dataset, event.type, sensor_id, sample_every=100)
                hits.append(window_iou((window.t_minus, window.t_plus), planted) >= 0.5)
    assert len(hits) == SEEDS * 6
    assert np.mean(hits) >= 0.9


def test_shape_beats_summary_statistics_on_small_training_sets():
    wins = 0
    for seed in range(THESIS_SEEDS):
        dataset, _ = generate_dataset(default_scenario(seed=seed), n_jobs=4)
        dtw = np.mean([_test_eer(dataset, event, sample_every=500) for event in EVENTS])
        statistical = np.mean([_test_eer(dataset, event, sample_every=500, pipeline='statistical')
                               for event in EVENTS])
        wins += dtw < statistical
    assert wins >= 7


@pytest.mark.parametrize('event', EVENTS)
def test_sparser_zero_sampling_keeps_the_error_rate(event, default_world):
    dataset, _ = default_world
    dense = _test_eer(dataset, event, sample_every=10)
    sparse = _test_eer(dataset, event, sample_every=100)
    assert abs(dense - sparse) <= 0.02


def test_distance_based_pipeline_error_rate(default_world):
    dataset, _ = default_world
    rates = [_test_eer(dataset, event, sample_every=100, pipeline='e2e') for event in EVENTS]
    assert sum(rate <= 0.10 for rate in rates) >= 2


def test_train_all_writes_one_bundle_per_event(tmp_path):
    assert main(['synth', '--default', '--out', str(tmp_path / 'corpus'), '--threads', '4'], environ={}) == 0
    code = main(['train', '--data', str(tmp_path / 'corpus'), '--event', 'all', '--out', str(tmp_path / 'bundles'),
                 '--sample-every', '100', '--threads', '4'], environ={})
    assert code == 0
    assert sorted(p.name for p in (tmp_path / 'bundles').glob('*.json')) == [f'{e}.json' for e in EVENTS]


def test_bundles_do_not_depend_on_thread_count(tmp_path, default_world):
    dataset, _ = default_world
    single, _ = train_event(dataset, 'door_open', training_settings(sample_every=100, threads=1))
    many, _ = train_event(dataset, 'door_open', training_settings(sample_every=100, threads=4))
    first = save_bundle(single, tmp_path / 'single.json').read_bytes()
    second = save_bundle(many, tmp_path / 'many.json').read_bytes()
    assert first == second
