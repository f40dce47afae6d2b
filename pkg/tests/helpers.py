import numpy as np

from config import load_settings
from modules.core_data import Dataset, SensorStream
from modules.synth import EventConfig, ScenarioConfig, SensorConfig
from modules.utils import NS_PER_SECOND


def small_scenario(seed=0, warp_factor=0.2, lag_jitter_s=1.0, duration_s=6 * 3600, **kwargs):
    """Six hours, one responding sensor per event type and two noise sensors."""
    sensors = (
        SensorConfig('light', 1.0, 'step', 1.0, 10.0, 'light'),
        SensorConfig('knocker', 2.0, 'spike', 0.2, 0.0, 'accelerometer'),
        SensorConfig('noise_a', 1.0, 'noise', 1.0, 0.0, 'temperature'),
        SensorConfig('noise_b', 1.0, 'noise', 1.0, 5.0, 'humidity'),
    )
    events = (
        EventConfig('knock', 300.0, 60.0, ('knocker',), (-2, 4), 6.0),
        EventConfig('light_on', 300.0, 60.0, ('light',), (0, 10), 6.0),
    )
    return ScenarioConfig(duration_s, sensors, events, warp_factor=warp_factor, lag_jitter_s=lag_jitter_s,
                          seed=seed, **kwargs).validate()


def training_settings(**overrides):
    values = {'sample_every': 20, 'threads': 1, 'grid': 'small'}
    values.update(overrides)
    return load_settings(overrides=values, environ={})


def stream(sensor_id, seconds, values):
    timestamps = np.round(np.asarray(seconds, dtype=np.float64) * NS_PER_SECOND).astype(np.int64)
    return SensorStream(sensor_id, 'generic', timestamps, np.asarray(values, dtype=np.float64))


def dataset_of(streams, logs=None, end_s=None, dev_end_s=None, train_end_s=None):
    """Dataset starting at 0 s; boundaries default to thirds of the covered time."""
    streams = {s.sensor_id: s for s in streams}
    if end_s is None:
        end_s = max(int(s.timestamps[-1]) for s in streams.values()) // NS_PER_SECOND + 1
    dev_end_s = end_s // 3 if dev_end_s is None else dev_end_s
    train_end_s = dev_end_s + (end_s - dev_end_s) // 2 if train_end_s is None else train_end_s
    return Dataset(streams, logs or {}, dev_end_s * NS_PER_SECOND, train_end_s * NS_PER_SECOND,
                   0, end_s * NS_PER_SECOND)


def seconds(value):
    return int(value) * NS_PER_SECOND
