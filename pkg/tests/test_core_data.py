import json
import logging

import numpy as np
import pytest

from helpers import dataset_of, seconds, stream
from modules.core_data import (EventLog, InstanceSet, build_instances, ingest_corpus, segment_moments,
                               slice_window, stream_coverage, write_corpus)
from modules.errors import CorpusError
from modules.utils import NS_PER_SECOND

THIRTEEN_DAYS_S = 13 * 86_400


def _corpus(root, sensors, events=None, meta=None):
    (root / 'sensors').mkdir(parents=True)
    (root / 'events').mkdir()
    for name, text in sensors.items():
        (root / 'sensors' / f'{name}.csv').write_text(text)
    for name, text in (events or {}).items():
        (root / 'events' / f'{name}.csv').write_text(text)
    if meta is None:
        meta = {'sensors': [{'id': s, 'modality': 'light'} for s in sensors],
                'split': {'dev_end': 10, 'train_end': 20}, 'start_ns': 0, 'end_ns': 30}
    (root / 'meta.json').write_text(json.dumps(meta))
    return root


def test_ingest_reads_rows_in_order(tmp_path):
    root = _corpus(tmp_path / 'c', {'lux': 'timestamp_ns,value\n1,0.5\n2,0.7\n'},
                   {'light_on': 'timestamp_ns,label\n1,0\n2,1\n'})
    dataset = ingest_corpus(root)
    lux = dataset.streams['lux']
    assert len(lux) == 2
    assert lux.timestamps.tolist() == [1, 2]
    assert lux.values.tolist() == [0.5, 0.7]
    assert lux.modality == 'light'
    assert dataset.logs['light_on'].event_times().tolist() == [2]
    assert (dataset.dev_end, dataset.train_end) == (10, 20)


def test_ingest_without_sensors_fails(tmp_path):
    root = _corpus(tmp_path / 'c', {}, meta={'sensors': [], 'split': {'dev_end': 1, 'train_end': 2}})
    with pytest.raises(CorpusError, match='no sensors'):
        ingest_corpus(root)


def test_ingest_rejects_decreasing_timestamps(tmp_path):
    root = _corpus(tmp_path / 'c', {'lux': 'timestamp_ns,value\n2,0.5\n1,0.7\n'})
    with pytest.raises(CorpusError, match="'lux' is not monotone"):
        ingest_corpus(root)


def test_ingest_names_file_and_line_of_malformed_row(tmp_path):
    root = _corpus(tmp_path / 'c', {'lux': 'timestamp_ns,value\n1,0.5\n2,0.7\n3,abc\n'})
    with pytest.raises(CorpusError, match=r'lux\.csv:4'):
        ingest_corpus(root)


def test_ingest_rejects_bad_labels_and_headers(tmp_path):
    root = _corpus(tmp_path / 'a', {'lux': 'timestamp_ns,value\n1,0.5\n'}, {'e': 'timestamp_ns,label\n1,2\n'})
    with pytest.raises(CorpusError, match='label must be 0 or 1'):
        ingest_corpus(root)
    root = _corpus(tmp_path / 'b', {'lux': 'time,value\n1,0.5\n'})
    with pytest.raises(CorpusError, match='expected header'):
        ingest_corpus(root)


def test_ingest_rejects_unknown_sensor_in_meta(tmp_path):
    meta = {'sensors': [{'id': 'lux'}, {'id': 'ghost'}], 'split': {'dev_end': 1, 'train_end': 2}}
    root = _corpus(tmp_path / 'c', {'lux': 'timestamp_ns,value\n1,0.5\n'}, meta=meta)
    with pytest.raises(CorpusError, match="unknown sensor 'ghost'"):
        ingest_corpus(root)


def test_ingest_keeps_first_of_duplicate_timestamps(tmp_path, caplog):
    root = _corpus(tmp_path / 'c', {'lux': 'timestamp_ns,value\n1,0.5\n1,9.0\n2,0.7\n'})
    with caplog.at_level(logging.WARNING):
        dataset = ingest_corpus(root)
    assert dataset.streams['lux'].values.tolist() == [0.5, 0.7]
    assert 'duplicate timestamps' in caplog.text


def test_round_trip_is_byte_identical(tmp_path, small_world):
    dataset, _ = small_world
    first = write_corpus(dataset, tmp_path / 'first')
    second = write_corpus(ingest_corpus(first, n_jobs=2), tmp_path / 'second')
    names = sorted(p.relative_to(first) for p in first.rglob('*') if p.is_file())
    assert names == sorted(p.relative_to(second) for p in second.rglob('*') if p.is_file())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_full_precision_values_survive_the_round_trip(tmp_path):
    precise = [0.12345678901234566, 1013.2500000012, -2.220446049250313e-16, 6.02214076e23, 1e-300]
    rows = ''.join(f'{i + 1},{v!r}\n' for i, v in enumerate(precise))
    root = _corpus(tmp_path / 'c', {'lux': 'timestamp_ns,value\n' + rows})
    ingested = ingest_corpus(root)
    assert ingested.streams['lux'].values.tolist() == precise
    first = write_corpus(ingested, tmp_path / 'first')
    again = ingest_corpus(first)
    assert again.streams['lux'].values.tolist() == precise
    second = write_corpus(again, tmp_path / 'second')
    assert (first / 'sensors' / 'lux.csv').read_bytes() == (second / 'sensors' / 'lux.csv').read_bytes()


@pytest.mark.parametrize('k, expected', [(1, 1_123_200), (100, 11_232), (500, 2_247)])
def test_zero_instance_grid_counts(k, expected):
    log = EventLog('quiet', np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int8))
    instances = build_instances(log, (0, THIRTEEN_DAYS_S * NS_PER_SECOND), k)
    assert len(instances) == expected
    assert len(instances) == (THIRTEEN_DAYS_S - 1) // k + 1
    assert instances.count(1) == 0


def test_instances_keep_events_and_skip_their_second():
    seconds_grid = np.arange(1000, dtype=np.int64) * NS_PER_SECOND
    labels = np.zeros(1000, dtype=np.int8)
    labels[[200, 450]] = 1
    log = EventLog('e', seconds_grid, labels)
    instances = build_instances(log, (0, 1000 * NS_PER_SECOND), 100)
    assert instances.count(1) == 2
    assert instances.count(0) == 9
    assert seconds(200) in instances.anchors
    assert np.all(np.diff(instances.anchors) > 0)
    assert isinstance(instances[0:3], InstanceSet)
    assert instances[0].label == 0


def test_empty_segment_gives_no_instances():
    log = EventLog('e', [0], [1])
    assert len(build_instances(log, (5, 5), 10)) == 0
    with pytest.raises(ValueError):
        build_instances(log, (0, 10), 0)


def test_slice_window_bounds():
    lux = stream('lux', np.arange(0, 100, 0.05), np.arange(2000.0))
    assert slice_window(lux, seconds(-10), 0, 5).size == 0
    assert slice_window(lux, seconds(50), 0, 2).size == 40
    window = slice_window(lux, seconds(10), 0, 1)
    assert window[0] == 200.0
    assert np.all(np.diff(window) == 1.0)
    with pytest.raises(ValueError):
        slice_window(lux, seconds(10), 3, 3)


def test_dataset_segments_and_coverage():
    lux = stream('lux', np.arange(90), np.ones(90))
    dataset = dataset_of([lux], end_s=90)
    assert dataset.segment('dev') == (0, seconds(30))
    assert dataset.segment('test') == (seconds(60), seconds(90))
    with pytest.raises(ValueError):
        dataset.segment('holdout')
    assert stream_coverage(lux, 0, seconds(90))
    assert not stream_coverage(lux, seconds(-1), seconds(10))
    assert segment_moments(lux, dataset.segment('train')) == (1.0, 1.0)


def test_coverage_rejects_gaps_inside_the_stream():
    seconds_with_gap = np.concatenate([np.arange(0, 40), np.arange(60, 100)])
    lux = stream('lux', seconds_with_gap, np.zeros(80))
    assert lux.period == NS_PER_SECOND
    assert stream_coverage(lux, seconds(10), seconds(30))
    assert stream_coverage(lux, seconds(65), seconds(100))
    assert not stream_coverage(lux, seconds(45), seconds(50))
    assert not stream_coverage(lux, seconds(35), seconds(65))


def test_coverage_tolerates_jittered_sampling():
    rng = np.random.default_rng(0)
    jittered = np.arange(200) + rng.uniform(-0.2, 0.2, size=200)
    lux = stream('lux', jittered, np.zeros(200))
    assert all(stream_coverage(lux, seconds(t), seconds(t + 1)) for t in range(1, 198))
    assert stream('one', [5.0], [1.0]).period == 0


def test_dataset_rejects_inverted_split():
    lux = stream('lux', np.arange(10), np.zeros(10))
    with pytest.raises(CorpusError):
        dataset_of([lux], end_s=10, dev_end_s=6, train_end_s=4)
