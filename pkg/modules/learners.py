# modules/learners.py

"""
learners.py

Classifiers over embedding matrices, written from scratch on numpy (and numba for the SVM
epoch loop): k-nearest neighbours, a linear SVM trained by averaged stochastic subgradient
descent, and a random forest of CART trees. Every model scores an instance with a real
number where higher means "more like a genuine 1-event"; only the order of scores is used
downstream.

Functions:
- knn_spec, svm_spec, forest_spec: ClassifierSpec constructors.
- classifier_grid(name): The 'small' or 'full' list of specs.
- train(spec, X, y, seed): Fits a TrainedModel.
- score(model, x): Score of one vector.
- score_many(model, X): Scores of a matrix.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

FAMILIES = ('knn', 'linear_svm', 'random_forest')
KNN_WEIGHTS = ('uniform', 'distance')
_KNN_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class ClassifierSpec:
    """
    Family plus hyperparameters. `params` is a sorted tuple of (name, value) pairs so that
    specs are hashable and the identifier is deterministic.
    """

    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"Unknown classifier family '{self.family}'")
        object.__setattr__(self, 'params', tuple(sorted(dict(self.params).items())))

    def get(self, name, default=None):
        return dict(self.params).get(name, default)

    @property
    def identifier(self):
        def fmt(value):
            return 'inf' if value is None else f"{value:g}" if isinstance(value, float) else str(value)
        return f"{self.family}(" + ','.join(f"{k}={fmt(v)}" for k, v in self.params) + ")"

    def __str__(self):
        return self.identifier

    def to_dict(self):
        return {'family': self.family, 'params': dict(self.params)}

    @classmethod
    def from_dict(cls, payload):
        return cls(payload['family'], tuple(payload['params'].items()))


def knn_spec(k, weights='uniform'):
    if weights not in KNN_WEIGHTS:
        raise ValueError(f"kNN weights must be one of {KNN_WEIGHTS}")
    return ClassifierSpec('knn', (('k', int(k)), ('weights', weights)))


def svm_spec(C, epochs):
    return ClassifierSpec('linear_svm', (('C', float(C)), ('epochs', int(epochs))))


def forest_spec(n_trees, max_depth=None, min_leaf=1):
    return ClassifierSpec('random_forest', (('n_trees', int(n_trees)), ('max_depth', max_depth),
                                            ('min_leaf', int(min_leaf))))


def classifier_grid(name='small'):
    """
    Hyperparameter grids.

    - 'full': kNN k in {1,3,5,7,9} x {uniform, distance}; SVM C in {0.01,0.1,1,10,100} x
      epochs in {20,100}; RF trees in {50,100,200} x depth in {inf,10,5} x min_leaf in {1,5}
      (38 specs).
    - 'small': two specs per family.
    """
    if name == 'full':
        specs = [knn_spec(k, w) for k in (1, 3, 5, 7, 9) for w in KNN_WEIGHTS]
        specs += [svm_spec(c, e) for c in (0.01, 0.1, 1.0, 10.0, 100.0) for e in (20, 100)]
        specs += [forest_spec(t, d, m) for t in (50, 100, 200) for d in (None, 10, 5) for m in (1, 5)]
        return specs
    if name == 'small':
        return [knn_spec(1), knn_spec(5, 'distance'), svm_spec(1.0, 20), svm_spec(10.0, 100),
                forest_spec(50, None, 1), forest_spec(100, 10, 5)]
    raise ValueError(f"Unknown classifier grid '{name}'")


@dataclass(frozen=True, eq=False)
class TrainedModel:
    spec: ClassifierSpec
    params: dict
    metadata: dict = field(default_factory=dict)

    @property
    def dimension(self):
        return self.metadata['dimension']

    def to_dict(self):
        return {
            'spec': self.spec.to_dict(),
            'params': {k: np.asarray(v).tolist() for k, v in sorted(self.params.items())},
            'metadata': self.metadata,
        }

    @classmethod
    def from_dict(cls, payload):
        spec = ClassifierSpec.from_dict(payload['spec'])
        params = {k: np.asarray(v) for k, v in payload['params'].items()}
        for key in ('feature', 'left', 'right', 'vote', 'roots'):
            if key in params:
                params[key] = params[key].astype(np.int64)
        for key in ('X', 'mean', 'scale', 'w', 'b', 'threshold'):
            if key in params:
                params[key] = params[key].astype(np.float64)
        if 'X' in params and params['X'].ndim == 1:
            params['X'] = params['X'].reshape(0, payload['metadata']['dimension'])
        if 'y' in params:
            params['y'] = params['y'].astype(np.int64)
        return cls(spec, params, dict(payload['metadata']))


def _check_training_data(X, y):
    if isinstance(X, (list, tuple)) and len({len(row) for row in X}) > 1:
        raise ValueError("Training rows have different lengths")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2:
        raise ValueError(f"Training matrix must be 2-D, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise ValueError("Training matrix and labels differ in length")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("Labels must be 0 or 1")
    if y.size == 0 or y.min() == y.max():
        raise ValueError("Training needs at least one instance of each class")
    if not np.all(np.isfinite(X)):
        raise ValueError("Training matrix holds non-finite values")
    return X, y


def class_weights(y):
    """Inverse-frequency instance weights, normalized to mean 1."""
    counts = np.bincount(y, minlength=2).astype(np.float64)
    return (y.size / (2.0 * counts))[y]


# -- k-nearest neighbours

def _train_knn(spec, X, y, seed):
    return {'X': X.copy(), 'y': y.copy()}, {}


def _squared_distances(Q, T):
    rows = max(1, _KNN_CHUNK_CELLS // max(1, T.shape[0] * max(1, T.shape[1])))
    out = np.empty((Q.shape[0], T.shape[0]))
    for start in range(0, Q.shape[0], rows):
        diff = Q[start:start + rows, None, :] - T[None, :, :]
        out[start:start + rows] = np.einsum('ijk,ijk->ij', diff, diff)
    return out


def _score_knn(model, X):
    T, labels = model.params['X'], model.params['y']
    k = min(model.spec.get('k'), T.shape[0])
    distances = np.sqrt(_squared_distances(X, T))
    # stable sort: equal distances resolve to the lower training row
    nearest = np.argsort(distances, axis=1, kind='stable')[:, :k]
    neighbour_labels = labels[nearest].astype(np.float64)
    if model.spec.get('weights') == 'uniform':
        return neighbour_labels.mean(axis=1)
    d = np.take_along_axis(distances, nearest, axis=1)
    exact = d == 0.0
    weights = np.where(exact.any(axis=1, keepdims=True), exact.astype(np.float64), 1.0 / np.where(exact, 1.0, d))
    return (weights * neighbour_labels).sum(axis=1) / weights.sum(axis=1)


# -- linear SVM

@njit(cache=True, nogil=True)
def _svm_epoch(X, y, c, order, w, w_sum, state, lam, scale):
    """
    One pass of averaged stochastic subgradient descent on the weighted hinge loss.
    state = [b, b_sum, t]; w, w_sum and state are updated in place.
    """
    b = state[0]
    b_sum = state[1]
    t = state[2]
    for idx in order:
        t += 1.0
        eta = scale / (lam * t)
        margin = b
        for j in range(w.shape[0]):
            margin += X[idx, j] * w[j]
        margin *= y[idx]
        shrink = 1.0 - scale / t
        for j in range(w.shape[0]):
            w[j] *= shrink
        if margin < 1.0:
            step = eta * c[idx] * y[idx]
            for j in range(w.shape[0]):
                w[j] += step * X[idx, j]
            b += scale / t * c[idx] * y[idx]
        w_sum += w
        b_sum += b
    state[0] = b
    state[1] = b_sum
    state[2] = t


def svm_objective(X, y, c, w, b, lam):
    """(lam / 2) |w|^2 + mean of weighted hinge losses, with y in {-1, +1}."""
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return float(0.5 * lam * np.dot(w, w) + np.mean(c * hinge))


def _train_svm(spec, X, y, seed):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    Z = np.ascontiguousarray((X - mean) / scale)
    signs = np.where(y == 1, 1.0, -1.0)
    c = class_weights(y)
    lam = 1.0 / (spec.get('C') * Z.shape[0])
    rng = np.random.default_rng(seed)

    w = np.zeros(Z.shape[1])
    w_sum = np.zeros(Z.shape[1])
    state = np.zeros(3)
    best_w, best_b = w.copy(), 0.0
    history = [svm_objective(Z, signs, c, best_w, best_b, lam)]
    step_scale = 1.0
    for _ in range(spec.get('epochs')):
        order = rng.permutation(Z.shape[0])
        trial_w, trial_sum, trial_state = w.copy(), w_sum.copy(), state.copy()
        _svm_epoch(Z, signs, c, order, trial_w, trial_sum, trial_state, lam, step_scale)
        avg_w = trial_sum / trial_state[2]
        avg_b = trial_state[1] / trial_state[2]
        value = svm_objective(Z, signs, c, avg_w, avg_b, lam)
        if value <= history[-1]:
            w, w_sum, state = trial_w, trial_sum, trial_state
            best_w, best_b = avg_w, avg_b
            history.append(value)
        else:
            # rejected epoch: keep the previous iterate and take smaller steps
            step_scale *= 0.5
            history.append(history[-1])
    params = {'mean': mean, 'scale': scale, 'w': best_w, 'b': np.array([best_b])}
    return params, {'objective': history, 'step_scale': step_scale}


def _score_svm(model, X):
    p = model.params
    return ((X - p['mean']) / p['scale']) @ p['w'] + float(p['b'][0])


# -- random forest

def _weighted_gini(w0, w1):
    total = w0 + w1
    with np.errstate(invalid='ignore', divide='ignore'):
        p0 = np.where(total > 0, w0 / total, 0.0)
    p1 = 1.0 - p0
    return 1.0 - p0 * p0 - p1 * p1


def _best_split(X, y, weights, rows, features, min_leaf):
    """
    Best (gain, feature, threshold) over the candidate features, or None. Features are scanned
    in ascending index and thresholds in ascending value, so equal gains keep the first found.
    """
    total0 = weights[rows][y[rows] == 0].sum()
    total1 = weights[rows][y[rows] == 1].sum()
    parent = float(_weighted_gini(np.array(total0), np.array(total1)))
    total = total0 + total1
    best = None
    n = rows.size
    for feature in features:
        values = X[rows, feature]
        order = np.argsort(values, kind='stable')
        v = values[order]
        wy = weights[rows][order]
        is1 = y[rows][order] == 1
        left1 = np.cumsum(np.where(is1, wy, 0.0))[:-1]
        left0 = np.cumsum(np.where(is1, 0.0, wy))[:-1]
        counts = np.arange(1, n)
        valid = (v[1:] > v[:-1]) & (counts >= min_leaf) & (n - counts >= min_leaf)
        if not valid.any():
            continue
        right0, right1 = total0 - left0, total1 - left1
        child = ((left0 + left1) * _weighted_gini(left0, left1)
                 + (right0 + right1) * _weighted_gini(right0, right1)) / total
        gain = np.where(valid, parent - child, -np.inf)
        pos = int(np.argmax(gain))
        if gain[pos] <= 1e-12:
            continue
        if best is None or gain[pos] > best[0]:
            cut = (v[pos] + v[pos + 1]) / 2.0
            if not v[pos] <= cut < v[pos + 1]:
                cut = v[pos]
            best = (float(gain[pos]), int(feature), float(cut))
    return best


def _grow_tree(X, y, weights, rows, rng, mtry, max_depth, min_leaf):
    """CART tree over the bootstrap rows, as flat arrays (feature -1 marks a leaf)."""
    feature, threshold, left, right, vote = [], [], [], [], []

    def leaf(node_rows):
        w1 = weights[node_rows][y[node_rows] == 1].sum()
        w0 = weights[node_rows][y[node_rows] == 0].sum()
        return 1 if w1 >= w0 else 0

    def add(node_rows, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        vote.append(leaf(node_rows))
        labels = y[node_rows]
        if labels.min() == labels.max() or node_rows.size < 2 * min_leaf:
            return node
        if max_depth is not None and depth >= max_depth:
            return node
        candidates = np.sort(rng.choice(X.shape[1], size=mtry, replace=False))
        split = _best_split(X, y, weights, node_rows, candidates, min_leaf)
        if split is None:
            return node
        _, f, t = split
        go_left = X[node_rows, f] <= t
        feature[node] = f
        threshold[node] = t
        left[node] = add(node_rows[go_left], depth + 1)
        right[node] = add(node_rows[~go_left], depth + 1)
        return node

    add(rows, 0)
    return (np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64), np.array(vote, dtype=np.int64))


def _tree_predict(arrays, offset, X):
    feature, threshold, left, right, vote = arrays
    node = np.full(X.shape[0], offset, dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        idx = rows[active]
        current = node[idx]
        goes_left = X[idx, feature[current]] <= threshold[current]
        node[idx] = np.where(goes_left, left[current], right[current])
        active = feature[node] >= 0
    return vote[node]


def _train_forest(spec, X, y, seed):
    n, d = X.shape
    mtry = max(1, int(math.sqrt(d)))
    weights = class_weights(y)
    n_trees = spec.get('n_trees')
    streams = np.random.SeedSequence(seed).spawn(n_trees)

    flat = [[], [], [], [], []]
    roots = []
    oob_votes = np.zeros(n)
    oob_counts = np.zeros(n)
    offset = 0
    for tree_seed in streams:
        rng = np.random.default_rng(tree_seed)
        rows = np.sort(rng.integers(0, n, size=n))
        arrays = _grow_tree(X, y, weights, rows, rng, mtry, spec.get('max_depth'), spec.get('min_leaf'))
        feature, threshold, left, right, vote = arrays
        shifted = (feature, threshold, np.where(left >= 0, left + offset, -1),
                   np.where(right >= 0, right + offset, -1), vote)
        out_of_bag = np.setdiff1d(np.arange(n), rows)
        if out_of_bag.size:
            oob_votes[out_of_bag] += _tree_predict(arrays, 0, X[out_of_bag])
            oob_counts[out_of_bag] += 1
        for store, part in zip(flat, shifted):
            store.append(part)
        roots.append(offset)
        offset += feature.size

    params = {
        'feature': np.concatenate(flat[0]), 'threshold': np.concatenate(flat[1]),
        'left': np.concatenate(flat[2]), 'right': np.concatenate(flat[3]),
        'vote': np.concatenate(flat[4]), 'roots': np.array(roots, dtype=np.int64),
    }
    seen = oob_counts > 0
    oob_prediction = (oob_votes[seen] / oob_counts[seen]) >= 0.5
    oob_error = float(np.mean(oob_prediction != (y[seen] == 1))) if seen.any() else None
    return params, {'oob_error': oob_error, 'n_nodes': int(offset)}


def _score_forest(model, X):
    p = model.params
    arrays = (p['feature'], p['threshold'], p['left'], p['right'], p['vote'])
    votes = np.zeros(X.shape[0])
    for root in p['roots']:
        votes += _tree_predict(arrays, int(root), X)
    return votes / len(p['roots'])


_TRAINERS = {'knn': _train_knn, 'linear_svm': _train_svm, 'random_forest': _train_forest}
_SCORERS = {'knn': _score_knn, 'linear_svm': _score_svm, 'random_forest': _score_forest}


def train(spec, X, y, seed=0):
    """
    Fits one classifier.

    Parameters:
    - spec (ClassifierSpec): Family and hyperparameters.
    - X (array-like): (n, d) training matrix.
    - y (array-like): 0/1 labels, both classes present.
    - seed (int): Seed for shuffling (SVM) and bootstrap/feature sampling (RF).

    Returns:
    - TrainedModel: Immutable fitted model.
    """
    X, y = _check_training_data(X, y)
    params, extra = _TRAINERS[spec.family](spec, X, y, seed)
    metadata = {'dimension': int(X.shape[1]), 'n_0': int((y == 0).sum()), 'n_1': int((y == 1).sum()),
                'seed': int(seed)}
    metadata.update(extra)
    logging.debug(f"Trained {spec.identifier} on {X.shape[0]} x {X.shape[1]}")
    return TrainedModel(spec, params, metadata)


def score_many(model, X):
    """Scores of every row of X; higher means more consistent with a genuine 1-event."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.dimension:
        raise ValueError(f"Vector dimension {X.shape[1]} does not match the model's {model.dimension}")
    if X.shape[0] == 0:
        return np.zeros(0)
    return np.asarray(_SCORERS[model.spec.family](model, X), dtype=np.float64)


def score(model, x):
    """Score of a single vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("score expects a single vector; use score_many for matrices")
    return float(score_many(model, x)[0])
