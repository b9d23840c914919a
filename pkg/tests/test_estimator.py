"""Tests for the scikit-learn estimator wrapper."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import random_dataset
from exactbn.estimator import ExactStructureLearner
from exactbn.explore import predict_logp
from exactbn.optimizer import learn
from exactbn.scoring import BDE, BIC, ScoreSpec


def fitted(rng, n=4, rows=60, **kw):
    data = random_dataset(rng, n, rows)
    est = ExactStructureLearner(**kw).fit(data.cells)
    return data, est


def test_params_round_trip():
    est = ExactStructureLearner(score_kind=BIC, ess=2.0, jobs=3)
    params = est.get_params()
    assert params == {"score_kind": BIC, "ess": 2.0, "arities": None,
                      "jobs": 3}
    est2 = clone(est)
    assert est2.get_params() == params
    est2.set_params(score_kind=BDE, ess=0.5)
    assert est2.score_kind == BDE
    assert est2.ess == 0.5
    # the original is untouched
    assert est.score_kind == BIC


def test_fit_exposes_learned_state(rng):
    data, est = fitted(rng)
    res = learn(data, ScoreSpec(BDE, 1.0))
    assert est.total_score_ == res.score
    assert est.ordering_ == res.ordering
    assert est.network_ == res.network
    assert est.n_features_in_ == 4
    assert np.array_equal(est.arities_, data.arities)
    assert est.parent_sets_ == [tuple(p) for p in res.network.parent_lists()]
    assert est.fit(data.cells) is est  # fit returns self


def test_fit_honors_score_kind_and_ess(rng):
    data = random_dataset(rng, 4, 80)
    bde = ExactStructureLearner(score_kind=BDE, ess=7.0).fit(data.cells)
    bic = ExactStructureLearner(score_kind=BIC).fit(data.cells)
    assert bde.total_score_ == learn(data, ScoreSpec(BDE, 7.0)).score
    assert bic.total_score_ == learn(data, ScoreSpec(BIC)).score


def test_explicit_arities_parameter(rng):
    cells = np.array([[0, 1], [1, 0]])
    est = ExactStructureLearner(arities=[3, 3]).fit(cells)
    assert tuple(est.arities_) == (3, 3)


def test_unknown_score_kind_rejected():
    with pytest.raises(ValueError, match="score_kind"):
        ExactStructureLearner(score_kind="mdl").fit(np.array([[0], [1]]))


def test_invalid_data_raises_value_error():
    est = ExactStructureLearner()
    with pytest.raises(ValueError):
        est.fit(np.array([[0.5, 1.0]]))
    with pytest.raises(ValueError):
        est.fit(np.array([[-1, 0]]))
    with pytest.raises(ValueError):
        est.fit(np.array([0, 1]))


def test_unfitted_access_raises(rng):
    est = ExactStructureLearner()
    with pytest.raises(NotFittedError):
        est.score_samples(np.array([[0]]))
    with pytest.raises(NotFittedError):
        est.sample()
    with pytest.raises(NotFittedError):
        est.parent_sets_


def test_score_samples_matches_library_call(rng):
    data, est = fitted(rng, rows=80)
    test = np.minimum(random_dataset(rng, 4, 20).cells, data.arities - 1)
    logps = est.score_samples(test)
    expected, mean = predict_logp(est.network_, est.dataset_, test, ess=1.0)
    assert np.array_equal(logps, expected)
    assert est.score(test) == pytest.approx(mean)


def test_smoothing_falls_back_for_likelihood_scores(rng):
    data = random_dataset(rng, 3, 50)
    est = ExactStructureLearner(score_kind=BIC).fit(data.cells)
    # bic has no prior strength of its own; smoothing defaults to 1
    expected, _ = predict_logp(est.network_, est.dataset_,
                               data.cells[:5], ess=1.0)
    assert np.array_equal(est.score_samples(data.cells[:5]), expected)


def test_sample_shape_and_determinism(rng):
    _, est = fitted(rng)
    a = est.sample(n_samples=30, random_state=12)
    b = est.sample(n_samples=30, random_state=12)
    assert isinstance(a, np.ndarray)
    assert a.shape == (30, 4)
    assert np.array_equal(a, b)
    assert (a < est.arities_).all() and (a >= 0).all()
    assert est.sample().shape == (1, 4)
