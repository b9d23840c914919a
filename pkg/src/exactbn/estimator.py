"""Scikit-learn flavored front door for the structure learner.

ExactStructureLearner follows the usual estimator contract: constructor
stores hyperparameters untouched, fit(X) validates and learns, learned
state lives in trailing-underscore attributes, and get_params/set_params
come from BaseEstimator.  After fitting it behaves like a density model:
score_samples gives per-row log probabilities and sample draws new rows.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import Dataset
from .errors import DataError
from .explore import fit_expected, predict_logp, sample
from .optimizer import learn
from .scoring import BDE, SCORE_KINDS, ScoreSpec


class ExactStructureLearner(BaseEstimator):
    """Globally optimal Bayesian network structure for discrete data.

    Parameters
    ----------
    score_kind : {"bde", "bic", "aic"}, default "bde"
        Scoring function maximized over all DAGs.
    ess : float, default 1.0
        Equivalent sample size of the Dirichlet prior.  Drives the bde
        score and is reused for parameter smoothing in score_samples and
        sample; with bic/aic it only smooths.
    arities : sequence of int or None
        Number of states per column; inferred from the data when None.
    jobs : int or None
        Worker processes for the score-table pass; None or 1 means serial.

    Attributes (after fit)
    ----------------------
    network_ : Network        parent bitmask per variable
    ordering_ : tuple         an optimal variable ordering
    total_score_ : float      score of the optimal network
    arities_ : ndarray        per-column state counts actually used
    n_features_in_ : int
    """

    def __init__(self, score_kind=BDE, ess=1.0, arities=None, jobs=None):
        self.score_kind = score_kind
        self.ess = ess
        self.arities = arities
        self.jobs = jobs

    def _spec(self):
        if self.score_kind not in SCORE_KINDS:
            raise ValueError(f"unknown score_kind {self.score_kind!r}")
        if self.score_kind == BDE:
            return ScoreSpec(BDE, self.ess)
        return ScoreSpec(self.score_kind)

    def _validated(self, X):
        X = check_array(X, dtype=None, ensure_2d=True)
        try:
            return Dataset.from_array(X, arities=self.arities)
        except DataError as exc:
            raise ValueError(str(exc)) from None

    def fit(self, X, y=None):
        """Learn the optimal structure for the rows of X."""
        data = self._validated(X)
        result = learn(data, self._spec(), jobs=self.jobs)
        self.dataset_ = data
        self.result_ = result
        self.network_ = result.network
        self.ordering_ = result.ordering
        self.total_score_ = result.score
        self.arities_ = data.arities.copy()
        self.n_features_in_ = data.n
        return self

    @property
    def parent_sets_(self):
        check_is_fitted(self, "network_")
        return [tuple(ms) for ms in self.network_.parent_lists()]

    def _smoothing(self):
        return self.ess if self.ess and self.ess > 0 else 1.0

    def score_samples(self, X):
        """Log joint probability of each row under the fitted network."""
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=None, ensure_2d=True)
        logps, _ = predict_logp(self.network_, self.dataset_, X,
                                ess=self._smoothing())
        return logps

    def score(self, X, y=None):
        """Mean per-row log probability of X."""
        return float(np.mean(self.score_samples(X)))

    def sample(self, n_samples=1, random_state=None):
        """Draw rows from the fitted network (posterior-mean parameters)."""
        check_is_fitted(self, "network_")
        pnet = fit_expected(self.network_, self.dataset_,
                            ess=self._smoothing())
        return sample(pnet, n_samples, seed=random_state).cells
