import json

import numpy as np
import pytest

from modules.learners import (ClassifierSpec, TrainedModel, classifier_grid, forest_spec, knn_spec, score,
                              score_many, svm_spec, train)

SEPARABLE_SPECS = [knn_spec(1), knn_spec(5, 'distance'), svm_spec(10.0, 100), forest_spec(50)]


@pytest.mark.parametrize('spec', SEPARABLE_SPECS, ids=lambda s: s.identifier)
def test_separable_blobs_are_learned_exactly(spec, blobs):
    X, y = blobs
    model = train(spec, X, y, seed=3)
    scores = score_many(model, X)
    # SVM scores are margins, the others fractions of votes
    predicted = scores > 0.0 if spec.family == 'linear_svm' else scores >= 0.5
    assert np.array_equal(predicted.astype(int), y)


def test_knn_training_points_score_their_own_label(blobs):
    X, y = blobs
    model = train(knn_spec(1), X, y)
    assert score_many(model, X).tolist() == y.astype(float).tolist()


def test_knn_duplicate_rows_resolve_to_lower_index():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0]])
    assert score(train(knn_spec(1), X, [1, 0, 0]), [0.0, 0.0]) == 1.0
    assert score(train(knn_spec(1), X, [0, 1, 1]), [0.0, 0.0]) == 0.0


def test_knn_unweighted_fraction_of_positive_neighbours():
    X = np.array([[0.0], [1.0], [2.0], [10.0]])
    model = train(knn_spec(3), X, [1, 1, 0, 0])
    assert score(model, [0.5]) == pytest.approx(2.0 / 3.0)


def test_svm_margin_and_monotone_objective(blobs):
    X, y = blobs
    model = train(svm_spec(1.0, 50), X, y, seed=1)
    assert score(model, [6.0, 6.0]) > 0.0
    assert score(model, [-6.0, -6.0]) < 0.0
    objective = np.array(model.metadata['objective'])
    assert objective.size == 51
    assert np.all(np.diff(objective) <= 1e-6)


def test_forest_votes_and_out_of_bag_error(blobs):
    X, y = blobs
    model = train(forest_spec(50), X, y, seed=0)
    assert model.metadata['oob_error'] <= 0.05
    assert score(model, [7.0, 7.0]) == 1.0
    assert score(model, [-7.0, -7.0]) == 0.0


def test_training_is_deterministic(blobs):
    X, y = blobs
    for spec in (svm_spec(1.0, 20), forest_spec(20, 5, 1)):
        first, second = train(spec, X, y, seed=5), train(spec, X, y, seed=5)
        for key in first.params:
            assert np.array_equal(first.params[key], second.params[key])


def test_models_survive_json(blobs):
    X, y = blobs
    queries = X[:7] + 0.3
    for spec in (knn_spec(3, 'distance'), svm_spec(0.1, 20), forest_spec(10, 10, 5)):
        model = train(spec, X, y, seed=2)
        restored = TrainedModel.from_dict(json.loads(json.dumps(model.to_dict())))
        assert restored.spec == spec
        assert np.array_equal(score_many(restored, queries), score_many(model, queries))


def test_training_input_errors(blobs):
    X, y = blobs
    with pytest.raises(ValueError):
        train(knn_spec(1), X, np.zeros(len(y), dtype=int))
    with pytest.raises(ValueError):
        train(knn_spec(1), [[0.0, 1.0], [2.0]], [0, 1])
    model = train(knn_spec(1), X, y)
    with pytest.raises(ValueError):
        score(model, [1.0, 2.0, 3.0])


def test_grids_and_identifiers():
    full = classifier_grid('full')
    assert len(full) == 38
    assert len({s.identifier for s in full}) == 38
    assert len(classifier_grid('small')) == 6
    assert knn_spec(1).identifier == 'knn(k=1,weights=uniform)'
    assert forest_spec(50).identifier == 'random_forest(max_depth=inf,min_leaf=1,n_trees=50)'
    assert svm_spec(0.01, 20).identifier == 'linear_svm(C=0.01,epochs=20)'
    assert ClassifierSpec.from_dict(forest_spec(100, 10, 5).to_dict()) == forest_spec(100, 10, 5)
    with pytest.raises(ValueError):
        classifier_grid('huge')
