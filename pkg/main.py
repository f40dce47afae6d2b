# main.py

"""
main.py

Backend module for the event verification toolkit. It orchestrates the workflow by
utilizing functions from the modules package to generate corpora, learn signature
windows, train and select verifiers, evaluate them and verify claims. This module is
designed to be imported by the command-line interface and does not execute any actions
on its own.

Functions:
- run_synth(out_dir, scenario_path=None, seed=None, log_callback=None, settings=None): Writes a synthetic corpus.
- learn_selections(data_dir, events, out_dir, settings, log_callback=None): Exports signature windows as JSON.
- train_event(dataset, event_type, settings, log_callback=None, export_dir=None): Trains one verifier.
- train_events(data_dir, events, out_dir, settings, log_callback=None, progress_callback=None, ...): Trains and saves bundles.
- evaluate_bundles(bundle_path, data_dir, settings, split='test', report_path=None, log_callback=None): Test report.
- verify_claims(bundle_path, data_dir, claims_path, settings, log_callback=None): Verdict rows for claims.
"""

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from config import settings_fingerprint
from modules.baseline_statistical import embed_all_statistical
from modules.bundle import ModelBundle, bundle_settings, load_bundle, save_bundle
from modules.core_data import ingest_corpus
from modules.dissim_space import (EmbeddingReport, build_prototypes, closes_by, compute_normalization,
                                  embed_all, export_embedding_csv)
from modules.errors import BundleError, CorpusError, CoverageError, UntrainableEventError
from modules.esw import select_sensors
from modules.learners import classifier_grid
from modules.selection_eval import (evaluate_model, format_summary, ranking_rows, select_best, verify,
                                    write_report)
from modules.synth import default_scenario, generate, load_scenario
from modules.utils import log_resource_usage, resolve_threads

CLAIM_COLUMNS = ('event_type', 'timestamp_ns')
VERDICT_COLUMNS = ('event_type', 'timestamp_ns', 'score', 'threshold', 'verdict')
BUNDLE_SUFFIX = '.json'


def _emit(message, log_callback=None, level=logging.INFO):
    logging.log(level, message)
    if log_callback:
        log_callback(message)


def _requested_events(dataset, events):
    if events in (None, 'all') or events == ['all']:
        return dataset.event_types
    events = [events] if isinstance(events, str) else list(events)
    unknown = [e for e in events if e not in dataset.logs]
    if unknown:
        raise CorpusError(f"Unknown event type(s): {', '.join(unknown)}")
    return events


def run_synth(out_dir, scenario_path=None, seed=None, log_callback=None, settings=None):
    """
    Generates a synthetic corpus.

    Parameters:
    - out_dir (str): Target directory.
    - scenario_path (str or None): Scenario JSON; the default scenario when None.
    - seed (int or None): Overrides the scenario seed.
    - log_callback (function, optional): Function to call for logging messages.
    - settings (dict, optional): Dictionary containing configuration settings.

    Returns:
    - GroundTruth: Planted events and spoofed claims.
    """
    config = load_scenario(scenario_path) if scenario_path else default_scenario()
    if seed is not None:
        config = replace(config, seed=int(seed)).validate()
    n_jobs = resolve_threads((settings or {}).get('threads'))
    _emit(f"Generating corpus in {out_dir} ({config.duration_s} s, seed {config.seed})", log_callback)
    root, truth = generate(config, out_dir, n_jobs=n_jobs)
    _emit(f"Corpus written: {root} ({sum(len(v) for v in truth.events.values())} events)", log_callback)
    log_resource_usage("synth")
    return truth


def _esw_method(settings):
    return 'distance' if settings['pipeline'] == 'e2e' else 'rmi'


def _select(dataset, event_type, settings, n_jobs):
    return select_sensors(
        dataset, event_type, settings['rmi_threshold'], method=_esw_method(settings),
        sample_every=settings['sample_every'], window_range=(settings['window_min'], settings['window_max']),
        n_bins=settings['rmi_bins'], max_pairs=settings['dev_pairs'], band=settings['band'],
        seed=settings['seed'], n_jobs=n_jobs)


def learn_selections(data_dir, events, out_dir, settings, log_callback=None):
    """
    Learns the sensor selection of each event and writes `<event>.esw.json` files.

    Returns:
    - dict: event type -> SensorSelection (untrainable events omitted).
    """
    n_jobs = resolve_threads(settings.get('threads'))
    dataset = ingest_corpus(data_dir, n_jobs=n_jobs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    selections = {}
    for event_type in _requested_events(dataset, events):
        try:
            selection = _select(dataset, event_type, settings, n_jobs)
        except UntrainableEventError as e:
            _emit(f"Skipping '{event_type}': {e.message}", log_callback, logging.WARNING)
            continue
        selection.to_json(out / f"{event_type}.esw.json")
        selections[event_type] = selection
        _emit(f"'{event_type}': {len(selection.windows)} sensors selected", log_callback)
    if not selections:
        raise UntrainableEventError("Every requested event is untrainable")
    return selections


def train_event(dataset, event_type, settings, log_callback=None, export_dir=None):
    """
    Trains the verifier of one event type.

    Stages: signature windows on the development split, normalization and prototypes on
    the training split, embedding, cross-validated model selection.

    Parameters:
    - dataset (Dataset): Corpus.
    - event_type (str): Event to train.
    - settings (dict): Dictionary containing configuration settings.
    - log_callback (function, optional): Function to call for logging messages.
    - export_dir (str or None): Writes the training embedding as CSV when given.

    Returns:
    - tuple: (ModelBundle, list of report rows)
    """
    n_jobs = resolve_threads(settings.get('threads'))
    pipeline = settings['pipeline']
    selection = _select(dataset, event_type, settings, n_jobs)
    _emit(f"'{event_type}': sensors {', '.join(selection.sensor_ids)}", log_callback)

    stats = compute_normalization(dataset, selection.sensor_ids, 'train')
    instances = dataset.instances(event_type, 'train', settings['sample_every'])
    # windows reaching past the training split would read test data
    instances = instances.subset(np.flatnonzero(closes_by(instances.anchors, selection, dataset.train_end)))
    if instances.count(1) == 0:
        raise UntrainableEventError(f"untrainable event '{event_type}': no 1-events in the train split")
    report = EmbeddingReport()
    prototypes = None
    if pipeline == 'statistical':
        X = embed_all_statistical(instances, dataset, selection, stats, report=report)
    else:
        prototypes = build_prototypes(dataset, event_type, selection, stats, settings['max_prototypes'],
                                      settings['seed'])
        X = embed_all(instances, dataset, selection, prototypes, stats, settings['band'], n_jobs, report)
    _emit(f"'{event_type}': embedded {len(instances)} instances into {X.shape[1]} dimensions "
          f"({report.dtw_calls} DTW calls, {report.imputed_total} imputed windows)", log_callback)
    if export_dir and prototypes is not None:
        Path(export_dir).mkdir(parents=True, exist_ok=True)
        export_embedding_csv(X, selection, prototypes, Path(export_dir) / f"{event_type}.embedding.csv", instances)

    result = select_best(event_type, classifier_grid(settings['grid']), X, instances.labels,
                         settings['cv_folds'], settings['seed'], n_jobs, settings['rank_std_penalty'])
    bundle = ModelBundle(event_type, pipeline, selection, stats, result.model, result.threshold, result.summary,
                         prototypes, settings_fingerprint(settings), bundle_settings(settings))
    log_resource_usage(f"training '{event_type}'")
    return bundle, ranking_rows(event_type, result, pipeline, settings['rank_std_penalty'])


def bundle_file(out_dir, event_type):
    return Path(out_dir) / f"{event_type}{BUNDLE_SUFFIX}"


def train_events(data_dir, events, out_dir, settings, log_callback=None, progress_callback=None,
                 report_path=None, export_dir=None):
    """
    Trains every requested event and saves one bundle per event into out_dir.

    Untrainable events are reported and skipped.

    Returns:
    - dict: event type -> bundle path.

    Raises:
    - UntrainableEventError: Every requested event is untrainable.
    """
    n_jobs = resolve_threads(settings.get('threads'))
    dataset = ingest_corpus(data_dir, n_jobs=n_jobs)
    requested = _requested_events(dataset, events)
    saved, rows = {}, []
    for done, event_type in enumerate(requested, start=1):
        try:
            bundle, event_rows = train_event(dataset, event_type, settings, log_callback, export_dir)
        except UntrainableEventError as e:
            _emit(f"Skipping '{event_type}': {e.message}", log_callback, logging.WARNING)
        else:
            saved[event_type] = save_bundle(bundle, bundle_file(out_dir, event_type))
            rows.extend(event_rows)
            _emit(f"'{event_type}': bundle saved ({bundle.model.spec.identifier}, "
                  f"validation EER {bundle.summary.mean_eer:.2%})", log_callback)
        if progress_callback:
            progress_callback(int(done / len(requested) * 100))
    if report_path and rows:
        write_report(rows, report_path)
    if not saved:
        raise UntrainableEventError("Every requested event is untrainable")
    return saved


def bundle_paths(bundle_path):
    """A bundle file, or every `*.json` bundle inside a directory, sorted."""
    path = Path(bundle_path)
    if path.is_dir():
        paths = sorted(p for p in path.glob(f"*{BUNDLE_SUFFIX}") if not p.name.endswith('.esw.json'))
        if not paths:
            raise BundleError(f"No bundles found in {path}")
        return paths
    if not path.exists():
        raise BundleError(f"Bundle {path} does not exist")
    return [path]


def _load_all(bundle_path, settings):
    bundles = {}
    for path in bundle_paths(bundle_path):
        bundle = load_bundle(path, settings)
        bundles[bundle.event_type] = bundle
    return bundles


def evaluate_bundles(bundle_path, data_dir, settings, split='test', report_path=None, log_callback=None):
    """
    Evaluates bundles on a split and writes the report.

    Events whose instances lack sensor coverage are reported with a warning and left out
    of the report.

    Returns:
    - list: EvaluationResult per evaluated event.

    Raises:
    - BundleError: A bundle is unreadable or does not fit the data.
    """
    n_jobs = resolve_threads(settings.get('threads'))
    bundles = _load_all(bundle_path, settings)
    dataset = ingest_corpus(data_dir, n_jobs=n_jobs)
    results = []
    for event_type, bundle in sorted(bundles.items()):
        if event_type not in dataset.logs:
            raise BundleError(f"Bundle event '{event_type}' has no event log in {data_dir}")
        bundle.check_compatible(dataset)
        try:
            results.append(evaluate_model(bundle, dataset, split, n_jobs=n_jobs))
        except CoverageError as e:
            _emit(f"'{event_type}': {e.message}; left out of the report", log_callback, logging.WARNING)
    if report_path:
        write_report([r.report_row(bundles[r.event_type].settings.get('rank_std_penalty', 0.5)) for r in results],
                     report_path)
    for line in format_summary(results):
        _emit(line, log_callback)
    log_resource_usage("evaluation")
    return results


def read_claims(claims_path):
    try:
        frame = pd.read_csv(claims_path, dtype={'event_type': str, 'timestamp_ns': np.int64})
    except (OSError, ValueError) as e:
        raise CorpusError(f"Cannot read claims {claims_path}: {e}")
    if list(frame.columns) != list(CLAIM_COLUMNS):
        raise CorpusError(f"{claims_path}:1: expected header '{','.join(CLAIM_COLUMNS)}'")
    return list(frame.itertuples(index=False, name=None))


def verify_claims(bundle_path, data_dir, claims_path, settings, log_callback=None):
    """
    Verifies every claim of a claims CSV.

    Returns:
    - tuple: (DataFrame with VERDICT_COLUMNS, number of claims lacking coverage)

    Raises:
    - BundleError: No bundle for a claimed event type, or a bundle does not fit the data.
    """
    n_jobs = resolve_threads(settings.get('threads'))
    bundles = _load_all(bundle_path, settings)
    dataset = ingest_corpus(data_dir, n_jobs=n_jobs)
    for bundle in bundles.values():
        bundle.check_compatible(dataset)
    rows, uncovered = [], 0
    for event_type, timestamp in read_claims(claims_path):
        bundle = bundles.get(event_type)
        if bundle is None:
            raise BundleError(f"No bundle for claimed event type '{event_type}'")
        try:
            decision = verify(bundle, event_type, int(timestamp), dataset, n_jobs=n_jobs)
        except CoverageError as e:
            uncovered += 1
            _emit(e.message, log_callback, logging.WARNING)
            rows.append((event_type, int(timestamp), None, bundle.threshold, 'insufficient_evidence'))
            continue
        rows.append((event_type, decision.timestamp, decision.score, decision.threshold, decision.verdict))
    _emit(f"Verified {len(rows)} claims ({uncovered} without coverage)", log_callback)
    return pd.DataFrame(rows, columns=list(VERDICT_COLUMNS)), uncovered
