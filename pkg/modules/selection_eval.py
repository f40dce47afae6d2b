"""
selection_eval.py

Model selection and evaluation: equal-error-rate sweeps, rolling time-series
cross-validation, ranking of classifier variants, retraining of the winner, test-split
evaluation and verification of single claims.

Conventions: DR is the fraction of 0-instances scored below the threshold (correctly
rejected); FAR is the fraction of 1-events scored below it (wrongly rejected). A claim is
genuine when its score is at least the threshold.

Functions:
- eer_sweep(scores_0, scores_1): EER, DR, FAR and threshold.
- time_series_splits(n, K): Rolling (train, validation) index pairs over time-ordered folds.
- cross_validate(spec, X, y, K, seed, event_type): CVResult with a MetricSummary.
- rank(summaries, std_penalty): Ordered ranking rows.
- select_best(event_type, specs, X, y, K, seed, n_jobs, std_penalty): SelectionResult.
- verify(bundle, event_type, claim, dataset): VerificationDecision.
- evaluate_model(bundle, dataset, split, sample_every): EvaluationResult.
- write_report(rows, path): Evaluation report CSV.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .core_data import stream_coverage
from .errors import BundleError, CoverageError, UntrainableEventError
from .learners import score_many, train
from .utils import NS_PER_SECOND

REPORT_COLUMNS = ('event', 'classifier_id', 'mean_EER', 'std_EER', 'mean_DR', 'std_DR', 'mean_FAR', 'std_FAR',
                  'rank_score', 'pipeline', 'split', 'DR_at_threshold', 'FAR_at_threshold')
REPORT_FLOAT_FORMAT = '%.6f'
DEFAULT_STD_PENALTY = 0.5


class EERResult(NamedTuple):
    eer: float
    dr: float
    far: float
    threshold: float


def rates_at(scores_0, scores_1, threshold):
    """(DR, FAR) at a fixed threshold."""
    scores_0 = np.asarray(scores_0, dtype=np.float64)
    scores_1 = np.asarray(scores_1, dtype=np.float64)
    return float(np.mean(scores_0 < threshold)), float(np.mean(scores_1 < threshold))


def eer_sweep(scores_0, scores_1):
    """
    Sweeps the decision threshold to the equal error rate.

    Thresholds run over the distinct scores plus one value above the maximum. The first
    threshold where FAR - (1 - DR) becomes non-negative and its predecessor bracket the
    crossing; the operating point is interpolated linearly between them. An exact crossing
    takes the midpoint of the bracket, where the rates equal those at the upper end.

    Parameters:
    - scores_0 (array-like): Scores of 0-instances, non-empty.
    - scores_1 (array-like): Scores of 1-events, non-empty.

    Returns:
    - EERResult: (eer, dr, far, threshold), rates in [0, 1].
    """
    s0 = np.sort(np.asarray(scores_0, dtype=np.float64))
    s1 = np.sort(np.asarray(scores_1, dtype=np.float64))
    if s0.size == 0 or s1.size == 0:
        raise ValueError("EER needs scores of both classes")
    if not (np.all(np.isfinite(s0)) and np.all(np.isfinite(s1))):
        raise ValueError("Scores must be finite")

    distinct = np.unique(np.concatenate([s0, s1]))
    thresholds = np.append(distinct, distinct[-1] + 1.0)
    dr = np.searchsorted(s0, thresholds, side='left') / s0.size
    far = np.searchsorted(s1, thresholds, side='left') / s1.size
    gap = far - (1.0 - dr)

    # gap[0] = -1 (nothing below the smallest score) and gap[-1] = +1
    j = int(np.argmax(gap >= 0.0))
    if gap[j] == 0.0:
        threshold = (thresholds[j - 1] + thresholds[j]) / 2.0
        dr_star, far_star = dr[j], far[j]
    else:
        alpha = -gap[j - 1] / (gap[j] - gap[j - 1])
        threshold = thresholds[j - 1] + alpha * (thresholds[j] - thresholds[j - 1])
        dr_star = dr[j - 1] + alpha * (dr[j] - dr[j - 1])
        far_star = far[j - 1] + alpha * (far[j] - far[j - 1])
    eer = (far_star + 1.0 - dr_star) / 2.0
    return EERResult(float(min(1.0, max(0.0, eer))), float(dr_star), float(far_star), float(threshold))


@dataclass(frozen=True)
class MetricSummary:
    """Mean and population standard deviation of EER, DR and FAR across evaluation folds."""

    mean_eer: float
    std_eer: float
    mean_dr: float
    std_dr: float
    mean_far: float
    std_far: float
    n_splits: int = 0
    n_skipped: int = 0

    @classmethod
    def from_results(cls, results, n_skipped=0):
        values = np.array([[r.eer, r.dr, r.far] for r in results], dtype=np.float64).reshape(-1, 3)
        means = values.mean(axis=0)
        stds = values.std(axis=0)
        return cls(float(means[0]), float(stds[0]), float(means[1]), float(stds[1]),
                   float(means[2]), float(stds[2]), len(results), n_skipped)

    def rank_score(self, std_penalty=DEFAULT_STD_PENALTY):
        return (self.mean_dr - self.mean_far - self.mean_eer
                - std_penalty * (self.std_eer + self.std_dr + self.std_far))

    def to_dict(self):
        return {
            'mean_EER': self.mean_eer, 'std_EER': self.std_eer,
            'mean_DR': self.mean_dr, 'std_DR': self.std_dr,
            'mean_FAR': self.mean_far, 'std_FAR': self.std_far,
            'n_splits': self.n_splits, 'n_skipped': self.n_skipped,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(payload['mean_EER'], payload['std_EER'], payload['mean_DR'], payload['std_DR'],
                   payload['mean_FAR'], payload['std_FAR'], payload.get('n_splits', 0),
                   payload.get('n_skipped', 0))


def time_series_splits(n, K):
    """
    Rolling-origin splits over K time-ordered folds.

    Parameters:
    - n (int): Number of time-ordered rows.
    - K (int): Number of folds, >= 2.

    Returns:
    - list: (train_indices, validation_indices) for k = 1 .. K-1; split k trains on
      folds 0..k-1 and validates on fold k.
    """
    if K < 2:
        raise ValueError(f"Cross-validation needs K >= 2, got {K}")
    folds = np.array_split(np.arange(n), K)
    return [(np.concatenate(folds[:k]), folds[k]) for k in range(1, K)]


@dataclass
class CVResult:
    spec: object
    summary: MetricSummary
    split_results: list
    scores_0: np.ndarray
    scores_1: np.ndarray

    @property
    def pooled(self):
        """EER sweep over the pooled validation scores."""
        return eer_sweep(self.scores_0, self.scores_1)


def cross_validate(spec, X, y, K=5, seed=0, event_type=''):
    """
    Rolling time-series cross-validation of one classifier spec.

    Splits whose training or validation part lacks a class are skipped with a warning.

    Parameters:
    - spec (ClassifierSpec): Classifier to evaluate.
    - X (np.ndarray): Time-ordered embedding matrix of the training split.
    - y (np.ndarray): Labels in the same order.
    - K (int): Number of folds.
    - seed (int): Training seed.
    - event_type (str): Name used in messages.

    Returns:
    - CVResult: Summary over usable splits plus pooled validation scores.

    Raises:
    - UntrainableEventError: No usable split ("event too rare for CV").
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    results, pooled_0, pooled_1 = [], [], []
    skipped = 0
    for k, (train_idx, val_idx) in enumerate(time_series_splits(len(y), K), start=1):
        y_train, y_val = y[train_idx], y[val_idx]
        if len(np.unique(y_train)) < 2 or len(np.unique(y_val)) < 2:
            skipped += 1
            logging.warning(f"{event_type} {spec.identifier}: split {k} lacks a class, skipped")
            continue
        model = train(spec, X[train_idx], y_train, seed=seed)
        scores = score_many(model, X[val_idx])
        results.append(eer_sweep(scores[y_val == 0], scores[y_val == 1]))
        pooled_0.append(scores[y_val == 0])
        pooled_1.append(scores[y_val == 1])
    if not results:
        raise UntrainableEventError(f"event too rare for CV: '{event_type}' has no split with both classes "
                                    f"(K={K}, {int((y == 1).sum())} 1-events)")
    return CVResult(spec, MetricSummary.from_results(results, skipped), results,
                    np.concatenate(pooled_0), np.concatenate(pooled_1))


class RankedEntry(NamedTuple):
    spec: object
    summary: MetricSummary
    score: float


def rank(summaries, std_penalty=DEFAULT_STD_PENALTY):
    """
    Orders classifier specs by R = mean DR - mean FAR - mean EER - penalty * (sum of stds),
    descending; ties go to the lower mean EER, then to the identifier.

    Parameters:
    - summaries (dict): ClassifierSpec -> MetricSummary, non-empty.
    - std_penalty (float): Weight of the standard deviations.

    Returns:
    - list: RankedEntry rows, best first.
    """
    if not summaries:
        raise ValueError("Nothing to rank")
    entries = [RankedEntry(spec, s, s.rank_score(std_penalty)) for spec, s in summaries.items()]
    return sorted(entries, key=lambda e: (-e.score, e.summary.mean_eer, e.spec.identifier))


class SelectionResult(NamedTuple):
    model: object
    threshold: float
    summary: MetricSummary
    ranking: list
    cv_results: dict


def _safe_cross_validate(spec, X, y, K, seed, event_type):
    try:
        return cross_validate(spec, X, y, K, seed, event_type)
    except ValueError as e:
        logging.warning(f"{event_type} {spec.identifier}: cross-validation failed ({e})")
        return None


def select_best(event_type, specs, X, y, K=5, seed=0, n_jobs=1, std_penalty=DEFAULT_STD_PENALTY):
    """
    Cross-validates every spec, ranks them, retrains the winner on all rows and fixes the
    threshold at the EER of the winner's pooled validation scores.

    Parameters:
    - event_type (str): Event being trained.
    - specs (list): ClassifierSpecs to compare.
    - X (np.ndarray): Time-ordered training-split embedding.
    - y (np.ndarray): Labels.
    - K (int): Folds.
    - seed (int): Training seed.
    - n_jobs (int): Specs cross-validated concurrently.
    - std_penalty (float): Rank penalty on standard deviations.

    Returns:
    - SelectionResult: (model, threshold, summary, ranking, cv_results).
    """
    specs = list(specs)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if not specs:
        raise ValueError("No classifier specs to select from")
    # raises "event too rare for CV" before fanning out
    splits = time_series_splits(len(y), K)
    usable = [1 for tr, va in splits if len(np.unique(y[tr])) == 2 and len(np.unique(y[va])) == 2]
    if not usable:
        raise UntrainableEventError(f"event too rare for CV: '{event_type}' has no split with both classes "
                                    f"(K={K}, {int(np.sum(y == 1))} 1-events)")

    logging.info(f"Cross-validating {len(specs)} classifiers for '{event_type}' ({len(usable)} usable splits)")
    outcomes = Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(_safe_cross_validate)(spec, X, y, K, seed, event_type) for spec in specs)
    cv_results = {spec: r for spec, r in zip(specs, outcomes) if r is not None}
    if not cv_results:
        raise UntrainableEventError(f"No classifier could be cross-validated for '{event_type}'")

    ranking = rank({spec: r.summary for spec, r in cv_results.items()}, std_penalty)
    winner = ranking[0]
    pooled = cv_results[winner.spec].pooled
    model = train(winner.spec, X, y, seed=seed)
    logging.info(f"'{event_type}': selected {winner.spec.identifier} (R = {winner.score:.4f}, "
                 f"validation EER {winner.summary.mean_eer:.2%}), threshold {pooled.threshold:.6g}")
    return SelectionResult(model, pooled.threshold, winner.summary, ranking, cv_results)


@dataclass(frozen=True)
class VerificationDecision:
    event_type: str
    timestamp: int
    score: float
    threshold: float
    verdict: str

    @property
    def genuine(self):
        return self.verdict == 'genuine'


def _check_bundle_event(bundle, event_type):
    if bundle.event_type != event_type:
        raise BundleError(f"Bundle was trained for '{bundle.event_type}', not '{event_type}'")


def has_coverage(bundle, dataset, claim):
    """Whether every selected sensor has readings spanning the claim's signature windows."""
    if not dataset.contains(claim):
        return False
    for window in bundle.selection.windows:
        stream = dataset.streams.get(window.sensor_id)
        if stream is None:
            return False
        start = claim + window.t_minus * NS_PER_SECOND
        end = claim + window.t_plus * NS_PER_SECOND
        if not stream_coverage(stream, start, end):
            return False
    return True


def verify(bundle, event_type, claim, dataset, n_jobs=1):
    """
    Decides whether a claimed event is backed by sensor evidence.

    Parameters:
    - bundle (ModelBundle): Trained verifier of the event type.
    - event_type (str): Claimed event type.
    - claim (int): Claim timestamp in nanoseconds.
    - dataset (Dataset): Sensor data around the claim.

    Returns:
    - VerificationDecision: Genuine when the score reaches the bundle threshold.

    Raises:
    - CoverageError: A selected sensor has no readings spanning the claim's window.
    - BundleError: The bundle belongs to another event type or misses a sensor.
    """
    _check_bundle_event(bundle, event_type)
    claim = int(claim)
    if not has_coverage(bundle, dataset, claim):
        raise CoverageError(f"insufficient evidence window for '{event_type}' claim at {claim}")
    features = bundle.features(dataset, np.array([claim], dtype=np.int64), n_jobs=n_jobs)
    value = float(score_many(bundle.model, features)[0])
    verdict = 'genuine' if value >= bundle.threshold else 'spoofed'
    return VerificationDecision(event_type, claim, value, bundle.threshold, verdict)


@dataclass
class EvaluationResult:
    event_type: str
    split: str
    pipeline: str
    classifier_id: str
    sweep: EERResult
    summary: MetricSummary
    dr_at_threshold: float
    far_at_threshold: float
    n_0: int
    n_1: int
    n_uncovered: int = 0
    scores_0: np.ndarray = field(default=None, repr=False)
    scores_1: np.ndarray = field(default=None, repr=False)

    def report_row(self, std_penalty=DEFAULT_STD_PENALTY):
        s = self.summary
        return {
            'event': self.event_type, 'classifier_id': self.classifier_id,
            'mean_EER': s.mean_eer, 'std_EER': s.std_eer, 'mean_DR': s.mean_dr, 'std_DR': s.std_dr,
            'mean_FAR': s.mean_far, 'std_FAR': s.std_far, 'rank_score': s.rank_score(std_penalty),
            'pipeline': self.pipeline, 'split': self.split,
            'DR_at_threshold': self.dr_at_threshold, 'FAR_at_threshold': self.far_at_threshold,
        }


def _fold_spread(scores, labels, anchors_order, K):
    """Population std of EER, DR and FAR over K time-ordered folds with both classes."""
    results = []
    for fold in np.array_split(anchors_order, K):
        fold_labels = labels[fold]
        if len(np.unique(fold_labels)) == 2:
            results.append(eer_sweep(scores[fold][fold_labels == 0], scores[fold][fold_labels == 1]))
    if len(results) < 2:
        return 0.0, 0.0, 0.0
    summary = MetricSummary.from_results(results)
    return summary.std_eer, summary.std_dr, summary.std_far


def evaluate_model(bundle, dataset, split='test', sample_every=None, n_jobs=1, K=None):
    """
    Scores every instance of a split and measures EER, DR and FAR.

    The mean columns come from one sweep over the whole split; the std columns are the
    spread across K time-ordered folds of the split. DR and FAR are also reported at the
    bundle's own threshold. Instances whose evidence window is not covered are dropped
    with a warning.

    Returns:
    - EvaluationResult

    Raises:
    - CoverageError: After dropping uncovered instances a class is empty.
    """
    sample_every = sample_every or bundle.settings.get('sample_every', 100)
    K = K or bundle.settings.get('cv_folds', 5)
    instances = dataset.instances(bundle.event_type, split, sample_every)
    covered = np.array([has_coverage(bundle, dataset, int(a)) for a in instances.anchors], dtype=bool)
    uncovered = int((~covered).sum())
    if uncovered:
        logging.warning(f"'{bundle.event_type}': {uncovered} {split} instances lack sensor coverage, dropped")
    instances = instances.subset(np.flatnonzero(covered))
    if instances.count(0) == 0 or instances.count(1) == 0:
        raise CoverageError(f"insufficient evidence window: '{bundle.event_type}' has no covered "
                            f"{split} instances of both classes")

    features = bundle.features(dataset, instances.anchors, n_jobs=n_jobs)
    scores = score_many(bundle.model, features)
    labels = instances.labels.astype(np.int64)
    s0, s1 = scores[labels == 0], scores[labels == 1]
    sweep = eer_sweep(s0, s1)
    std_eer, std_dr, std_far = _fold_spread(scores, labels, np.arange(len(labels)), K)
    summary = MetricSummary(sweep.eer, std_eer, sweep.dr, std_dr, sweep.far, std_far, 1, 0)
    dr_t, far_t = rates_at(s0, s1, bundle.threshold)
    logging.info(f"'{bundle.event_type}' on {split}: EER {sweep.eer:.2%}, DR {sweep.dr:.2%}, FAR {sweep.far:.2%}; "
                 f"at threshold DR {dr_t:.2%}, FAR {far_t:.2%}")
    return EvaluationResult(bundle.event_type, split, bundle.pipeline, bundle.model.spec.identifier, sweep,
                            summary, dr_t, far_t, len(s0), len(s1), uncovered, s0, s1)


def ranking_rows(event_type, selection, pipeline, std_penalty=DEFAULT_STD_PENALTY):
    """Report rows of a model selection: one per cross-validated spec, best first."""
    rows = []
    for entry in selection.ranking:
        pooled = selection.cv_results[entry.spec].pooled
        s = entry.summary
        rows.append({
            'event': event_type, 'classifier_id': entry.spec.identifier,
            'mean_EER': s.mean_eer, 'std_EER': s.std_eer, 'mean_DR': s.mean_dr, 'std_DR': s.std_dr,
            'mean_FAR': s.mean_far, 'std_FAR': s.std_far, 'rank_score': entry.score,
            'pipeline': pipeline, 'split': 'validation',
            'DR_at_threshold': pooled.dr, 'FAR_at_threshold': pooled.far,
        })
    return rows


def write_report(rows, path):
    """
    Writes report rows as CSV with the fixed column order.

    Parameters:
    - rows (list): Dicts keyed by REPORT_COLUMNS.
    - path (str or Path): Destination.

    Returns:
    - pd.DataFrame: The written table.
    """
    frame = pd.DataFrame(list(rows), columns=list(REPORT_COLUMNS))
    frame.to_csv(path, index=False, float_format=REPORT_FLOAT_FORMAT, lineterminator='\n')
    return frame


def format_summary(results):
    """Human-readable lines with percentages, one per evaluated event."""
    lines = []
    for r in results:
        lines.append(f"{r.event_type:<20} {r.pipeline:<12} {r.classifier_id:<40} "
                     f"EER {r.sweep.eer * 100:6.2f}%  DR {r.sweep.dr * 100:6.2f}%  FAR {r.sweep.far * 100:6.2f}%  "
                     f"(at threshold: DR {r.dr_at_threshold * 100:6.2f}%, FAR {r.far_at_threshold * 100:6.2f}%)")
    return lines
