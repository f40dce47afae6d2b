# modules/synth.py

"""
synth.py

Seeded generator of synthetic smart-environment corpora in the core_data layout. Sensors
sample at their own rates with Gaussian noise; at every true event the responding sensors
receive the event's signature shape, time-warped, lagged and scaled at random, with a hum of
alternating readings while the device is active. Counter-event decoys (the time-reversed
signature, e.g. a light switched off) keep the summary statistics of a window but not its
shape. Spoofed claims are drawn at times with no true event nearby.

Every random draw comes from a PCG64 stream keyed by (seed, purpose, name), so adding a
sensor or an event type leaves the draws of all others untouched.

Functions:
- default_scenario(): The 3-day, 10-sensor, 3-event scenario.
- generate_dataset(config): In-memory Dataset and GroundTruth.
- generate(config, out_dir): Writes the corpus and ground_truth.json.
- load_scenario(path) / save_scenario(config, path): JSON scenario files.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .core_data import Dataset, EventLog, SensorStream, write_corpus
from .errors import ConfigError
from .utils import NS_PER_SECOND, canonical_json, stable_key

ROLES = ('step', 'spike', 'ramp', 'oscillation', 'noise')
DEFAULT_START_S = 1_700_000_000
EDGE_MARGIN_S = 60
HUM_SHARE = 0.25
WARP_PIECES = 4
GROUND_TRUTH_FILE = 'ground_truth.json'


@dataclass(frozen=True)
class SensorConfig:
    id: str
    rate_hz: float
    role: str
    noise_std: float = 1.0
    baseline: float = 0.0
    modality: str = 'generic'


@dataclass(frozen=True)
class EventConfig:
    """
    One event type. `amplitude` is in units of each responding sensor's noise_std; the
    signature occupies [window[0], window[1]] seconds around the event time.
    """

    type: str
    mean_gap_s: float
    min_separation_s: float
    sensors: tuple
    window: tuple
    amplitude: float = 4.0
    decoy_mean_gap_s: float = None
    n_spoofed: int = 20

    def __post_init__(self):
        object.__setattr__(self, 'sensors', tuple(self.sensors))
        object.__setattr__(self, 'window', tuple(self.window))


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: int
    sensors: tuple
    events: tuple
    warp_factor: float = 0.2
    lag_jitter_s: float = 1.0
    amplitude_jitter: float = 0.1
    timestamp_jitter: float = 0.2
    seed: int = 0
    dev_seconds: int = None
    start_s: int = DEFAULT_START_S

    def __post_init__(self):
        object.__setattr__(self, 'sensors', tuple(self.sensors))
        object.__setattr__(self, 'events', tuple(self.events))

    def validate(self):
        """Raises ConfigError on an inconsistent scenario; returns self."""
        if self.duration_s <= 2 * EDGE_MARGIN_S:
            raise ConfigError(f"Scenario duration must exceed {2 * EDGE_MARGIN_S} s")
        ids = [s.id for s in self.sensors]
        if not ids:
            raise ConfigError("Scenario has no sensors")
        if len(set(ids)) != len(ids):
            raise ConfigError("Scenario sensor ids must be unique")
        for s in self.sensors:
            if not 1.0 <= s.rate_hz <= 20.0:
                raise ConfigError(f"Sensor '{s.id}': rate {s.rate_hz} Hz outside [1, 20]")
            if s.role not in ROLES:
                raise ConfigError(f"Sensor '{s.id}': unknown role '{s.role}'")
            if s.noise_std < 0:
                raise ConfigError(f"Sensor '{s.id}': noise_std must be >= 0")
        if len({e.type for e in self.events}) != len(self.events):
            raise ConfigError("Scenario event types must be unique")
        for e in self.events:
            a, b = e.window
            if not a < b:
                raise ConfigError(f"Event '{e.type}': window start must precede its end")
            if not e.min_separation_s > b - a:
                raise ConfigError(f"Event '{e.type}': min separation must exceed the window length {b - a} s")
            if not e.sensors:
                raise ConfigError(f"Event '{e.type}' responds on no sensor")
            unknown = [s for s in e.sensors if s not in ids]
            if unknown:
                raise ConfigError(f"Event '{e.type}' references unknown sensors {unknown}")
        if not 0.0 <= self.warp_factor < 1.0:
            raise ConfigError("warp_factor must lie in [0, 1)")
        if self.lag_jitter_s < 0 or not 0.0 <= self.amplitude_jitter < 1.0:
            raise ConfigError("lag_jitter_s must be >= 0 and amplitude_jitter in [0, 1)")
        if not 0.0 <= self.timestamp_jitter < 0.5:
            raise ConfigError("timestamp_jitter must lie in [0, 0.5)")
        if self.dev_seconds is not None and not 0 < self.dev_seconds < self.duration_s - 1:
            raise ConfigError("dev_seconds must leave room for train and test")
        return self

    @property
    def sensor_map(self):
        return {s.id: s for s in self.sensors}

    def split_seconds(self):
        """(dev_end, train_end) offsets in whole seconds from the start."""
        dev = self.dev_seconds if self.dev_seconds is not None else min(86_400, self.duration_s // 3)
        train_end = dev + (self.duration_s - dev) // 2
        return dev, train_end

    def to_dict(self):
        payload = asdict(self)
        payload['sensors'] = [asdict(s) for s in self.sensors]
        payload['events'] = [dict(asdict(e), sensors=list(e.sensors), window=list(e.window)) for e in self.events]
        return payload

    @classmethod
    def from_dict(cls, payload):
        try:
            sensors = tuple(SensorConfig(**s) for s in payload['sensors'])
            events = tuple(EventConfig(**e) for e in payload['events'])
            rest = {k: v for k, v in payload.items() if k not in ('sensors', 'events')}
            return cls(sensors=sensors, events=events, **rest).validate()
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Invalid scenario: {e}")


@dataclass
class GroundTruth:
    """True event times, spoofed claims, decoys and injected windows per event type (ns / s)."""

    events: dict = field(default_factory=dict)
    spoofed: dict = field(default_factory=dict)
    decoys: dict = field(default_factory=dict)
    windows: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'events': {k: [int(t) for t in v] for k, v in sorted(self.events.items())},
            'spoofed': {k: [int(t) for t in v] for k, v in sorted(self.spoofed.items())},
            'decoys': {k: [int(t) for t in v] for k, v in sorted(self.decoys.items())},
            'windows': {k: [[float(a), float(b)] for a, b in v] for k, v in sorted(self.windows.items())},
        }

    @classmethod
    def from_dict(cls, payload):
        return cls({k: np.asarray(v, dtype=np.int64) for k, v in payload['events'].items()},
                   {k: np.asarray(v, dtype=np.int64) for k, v in payload['spoofed'].items()},
                   {k: np.asarray(v, dtype=np.int64) for k, v in payload.get('decoys', {}).items()},
                   {k: [tuple(w) for w in v] for k, v in payload['windows'].items()})

    @classmethod
    def load(cls, path):
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def default_scenario(seed=0):
    """
    Three days, six responding sensors (two per event type), four noise sensors and three
    event types with about 200 occurrences each. Every event type also has a reversed decoy
    about once a minute away from its true occurrences, so only the shape of a window tells
    the two apart.
    """
    sensors = (
        SensorConfig('light_lux', 2.0, 'step', 3.0, 120.0, 'light'),
        SensorConfig('acoustic_spl', 2.0, 'oscillation', 1.5, 35.0, 'acoustic'),
        SensorConfig('power_coffee', 1.0, 'ramp', 2.0, 5.0, 'power'),
        SensorConfig('vibration_counter', 3.0, 'oscillation', 0.5, 0.0, 'vibration'),
        SensorConfig('accel_door', 3.0, 'spike', 0.05, 0.0, 'accelerometer'),
        SensorConfig('pressure_hall', 1.0, 'step', 0.2, 1013.0, 'pressure'),
        SensorConfig('temp_room', 1.0, 'noise', 0.1, 21.0, 'temperature'),
        SensorConfig('humidity', 1.0, 'noise', 0.5, 45.0, 'humidity'),
        SensorConfig('co2', 1.0, 'noise', 5.0, 600.0, 'co2'),
        SensorConfig('wifi_rssi', 1.0, 'noise', 2.0, -60.0, 'rf'),
    )
    events = (
        EventConfig('light_on', 1296.0, 60.0, ('light_lux', 'acoustic_spl'), (0, 6), 4.0, 60.0),
        EventConfig('coffee_used', 1296.0, 60.0, ('power_coffee', 'vibration_counter'), (2, 12), 4.0, 60.0),
        EventConfig('door_open', 1296.0, 60.0, ('accel_door', 'pressure_hall'), (-3, 5), 4.0, 60.0),
    )
    return ScenarioConfig(3 * 86_400, sensors, events, warp_factor=0.2, lag_jitter_s=1.0, seed=seed).validate()


def load_scenario(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read scenario {path}: {e}")
    if not isinstance(payload, dict):
        raise ConfigError(f"Scenario {path} must hold a JSON object")
    return ScenarioConfig.from_dict(payload)


def save_scenario(config, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(canonical_json(config.to_dict(), indent=2))
        f.write('\n')


def _rng(seed, purpose, name):
    sequence = np.random.SeedSequence(seed, spawn_key=(stable_key(purpose), stable_key(name)))
    return np.random.Generator(np.random.PCG64(sequence))


# -- signature shapes on normalized time u in [0, 1]; each starts and ends at 0, rises and falls
# over at least a tenth of the window, and none is symmetric under u -> 1 - u

def _shape_step(u):
    return np.interp(u, [0.0, 0.2, 0.85, 1.0], [0.0, 1.0, 0.4, 0.0])


def _shape_spike(u):
    return np.interp(u, [0.0, 0.12, 0.3, 1.0], [0.0, 1.0, 0.25, 0.0])


def _shape_ramp(u):
    return np.interp(u, [0.0, 0.8, 1.0], [0.0, 1.0, 0.0])


def _shape_oscillation(u):
    envelope = np.interp(u, [0.0, 0.15, 0.85, 1.0], [0.0, 1.0, 0.6, 0.0])
    return envelope * np.sin(2.0 * np.pi * (u + 1.5 * u * u))


SHAPES = {'step': _shape_step, 'spike': _shape_spike, 'ramp': _shape_ramp, 'oscillation': _shape_oscillation}


def warp_map(t, length, rng, warp_factor, pieces=WARP_PIECES):
    """
    Random monotone time map of [0, length] onto itself, piecewise linear with local speeds
    drawn from [1 - warp, 1 + warp] (renormalized so the end points stay fixed).
    """
    if warp_factor == 0.0:
        return np.asarray(t, dtype=np.float64)
    speeds = rng.uniform(1.0 - warp_factor, 1.0 + warp_factor, size=pieces)
    knots_out = np.linspace(0.0, length, pieces + 1)
    knots_in = np.concatenate([[0.0], np.cumsum(speeds)])
    knots_in *= length / knots_in[-1]
    return np.interp(t, knots_out, knots_in)


def signature(role, t, length, amplitude, reverse=False, rng=None, warp_factor=0.0):
    """
    Signature values at local times t (seconds since onset) for a window of `length` s.

    Parameters:
    - role (str): Shape family.
    - t (np.ndarray): Local times in [0, length).
    - length (float): Window length in seconds.
    - amplitude (float): Peak scale.
    - reverse (bool): Time-reversed (counter-event) shape.
    - rng (np.random.Generator or None): Source of the warp; no warp when None.
    - warp_factor (float): Local speed variation.

    Returns:
    - np.ndarray: Values to add to the readings.
    """
    tau = warp_map(t, length, rng, warp_factor) if rng is not None else np.asarray(t, dtype=np.float64)
    u = np.clip(tau / length, 0.0, 1.0)
    if reverse:
        u = 1.0 - u
    # the device hums while active: consecutive readings alternate around the shape
    hum = HUM_SHARE * np.where(np.arange(u.size) % 2 == 0, 1.0, -1.0)
    return amplitude * (SHAPES[role](u) + hum)


def _schedule(rng, duration_s, mean_gap_s, min_separation_s, label):
    """Whole-second event offsets with gaps min_separation + Exponential(mean_gap - min_separation)."""
    if mean_gap_s <= min_separation_s:
        raise ConfigError(f"infeasible schedule for '{label}': mean gap {mean_gap_s} s does not exceed "
                          f"the minimum separation {min_separation_s} s")
    times = []
    t = EDGE_MARGIN_S + rng.exponential(mean_gap_s - min_separation_s)
    while t < duration_s - EDGE_MARGIN_S:
        times.append(int(round(t)))
        t += min_separation_s + rng.exponential(mean_gap_s - min_separation_s)
    return np.array(times, dtype=np.int64)


def _far_from(candidates, references, distance):
    if references.size == 0 or candidates.size == 0:
        return candidates
    pos = np.searchsorted(references, candidates)
    before = np.abs(candidates - references[np.clip(pos - 1, 0, references.size - 1)])
    after = np.abs(references[np.clip(pos, 0, references.size - 1)] - candidates)
    return candidates[np.minimum(before, after) >= distance]


def _spoofed_claims(rng, event, true_times, duration_s):
    claims = []
    attempts = 0
    while len(claims) < event.n_spoofed:
        attempts += 1
        if attempts > 100 * max(1, event.n_spoofed):
            raise ConfigError(f"infeasible schedule for '{event.type}': no room for {event.n_spoofed} spoofed claims")
        t = int(rng.integers(EDGE_MARGIN_S, duration_s - EDGE_MARGIN_S))
        if _far_from(np.array([t]), true_times, event.min_separation_s).size and t not in claims:
            claims.append(t)
    return np.sort(np.array(claims, dtype=np.int64))


def _plan_events(config):
    """Event, decoy and spoofed schedules plus per-occurrence lags, in seconds from the start."""
    plan = {}
    for event in config.events:
        schedule_rng = _rng(config.seed, 'schedule', event.type)
        times = _schedule(schedule_rng, config.duration_s, event.mean_gap_s, event.min_separation_s, event.type)
        lags = _rng(config.seed, 'lag', event.type).uniform(-config.lag_jitter_s, config.lag_jitter_s, size=times.size)
        decoys = np.zeros(0, dtype=np.int64)
        if event.decoy_mean_gap_s:
            length = event.window[1] - event.window[0]
            decoys = _schedule(_rng(config.seed, 'decoy', event.type), config.duration_s,
                               event.decoy_mean_gap_s, length + 1, event.type)
            decoys = _far_from(decoys, times, event.min_separation_s)
        spoofed = _spoofed_claims(_rng(config.seed, 'spoof', event.type), event, times, config.duration_s)
        plan[event.type] = (times, lags, decoys, spoofed)
        logging.debug(f"{event.type}: {times.size} events, {decoys.size} decoys, {spoofed.size} spoofed claims")
    return plan


def _sensor_stream(config, sensor, plan):
    start_ns = config.start_s * NS_PER_SECOND
    rng = _rng(config.seed, 'sensor', sensor.id)
    n = int(config.duration_s * sensor.rate_hz)
    period_ns = NS_PER_SECOND / sensor.rate_hz
    offsets = np.arange(n) * period_ns
    if config.timestamp_jitter > 0:
        offsets = offsets + rng.uniform(-config.timestamp_jitter, config.timestamp_jitter, size=n) * period_ns
    timestamps = start_ns + np.maximum(np.round(offsets), 0).astype(np.int64)
    values = sensor.baseline + sensor.noise_std * rng.standard_normal(n)
    if sensor.role == 'noise':
        # slow daily drift, unrelated to events
        phase = rng.uniform(0.0, 2.0 * np.pi)
        values += 2.0 * sensor.noise_std * np.sin(2.0 * np.pi * offsets / (86_400 * NS_PER_SECOND) + phase)
        return SensorStream(sensor.id, sensor.modality, timestamps, values)

    scale = max(sensor.noise_std, 1e-3)
    for event in config.events:
        if sensor.id not in event.sensors:
            continue
        times, lags, decoys, _ = plan[event.type]
        inject_rng = _rng(config.seed, f'inject/{event.type}', sensor.id)
        a, b = event.window
        length = float(b - a)
        occurrences = [(t, lag, False) for t, lag in zip(times, lags)] + [(t, 0.0, True) for t in decoys]
        for t, lag, reverse in occurrences:
            onset_ns = start_ns + int(t) * NS_PER_SECOND + int(round((a + lag) * NS_PER_SECOND))
            lo, hi = np.searchsorted(timestamps, [onset_ns, onset_ns + int(length * NS_PER_SECOND)])
            amplitude = event.amplitude * scale * inject_rng.uniform(1.0 - config.amplitude_jitter,
                                                                     1.0 + config.amplitude_jitter)
            local = (timestamps[lo:hi] - onset_ns) / NS_PER_SECOND
            values[lo:hi] += signature(sensor.role, local, length, amplitude, reverse, inject_rng, config.warp_factor)
    return SensorStream(sensor.id, sensor.modality, timestamps, values)


def generate_dataset(config, n_jobs=1):
    """
    Generates a corpus in memory.

    Parameters:
    - config (ScenarioConfig): Validated scenario.
    - n_jobs (int): Sensors generated concurrently; output does not depend on it.

    Returns:
    - tuple: (Dataset, GroundTruth)

    Raises:
    - ConfigError: Invalid scenario or infeasible schedule.
    """
    config.validate()
    plan = _plan_events(config)
    start_ns = config.start_s * NS_PER_SECOND
    end_ns = start_ns + config.duration_s * NS_PER_SECOND

    streams = Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(_sensor_stream)(config, sensor, plan) for sensor in config.sensors)

    seconds = start_ns + np.arange(config.duration_s, dtype=np.int64) * NS_PER_SECOND
    logs, truth = {}, GroundTruth()
    for event in config.events:
        times, lags, decoys, spoofed = plan[event.type]
        labels = np.zeros(config.duration_s, dtype=np.int8)
        labels[times] = 1
        logs[event.type] = EventLog(event.type, seconds, labels)
        truth.events[event.type] = start_ns + times * NS_PER_SECOND
        truth.spoofed[event.type] = start_ns + spoofed * NS_PER_SECOND
        truth.decoys[event.type] = start_ns + decoys * NS_PER_SECOND
        truth.windows[event.type] = [(event.window[0] + lag, event.window[1] + lag) for lag in lags]

    dev_s, train_s = config.split_seconds()
    dataset = Dataset({s.sensor_id: s for s in streams}, logs,
                      start_ns + dev_s * NS_PER_SECOND, start_ns + train_s * NS_PER_SECOND,
                      start_ns, end_ns, source='synthetic')
    logging.info(f"Generated {len(streams)} sensors and {len(logs)} event types over {config.duration_s} s "
                 f"(seed {config.seed})")
    return dataset, truth


def generate(config, out_dir, n_jobs=1):
    """
    Writes a synthetic corpus plus `ground_truth.json` to out_dir.

    Returns:
    - tuple: (Path of the corpus, GroundTruth)
    """
    dataset, truth = generate_dataset(config, n_jobs=n_jobs)
    root = write_corpus(dataset, out_dir)
    with open(Path(root) / GROUND_TRUTH_FILE, 'w', encoding='utf-8', newline='\n') as f:
        f.write(canonical_json(truth.to_dict(), indent=2))
        f.write('\n')
    return root, truth
