"""Decomposable local scores for one child variable and its parent set.

All three score families share the shape

    total score of a network  =  sum over variables of local_score(cft),

where the conditional frequency table fully determines the local term.
Scores are natural-log quantities; bigger is better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ._kernels import lgamma
from .dataset import CondFreqTable

BDE = "bde"
BIC = "bic"
AIC = "aic"
SCORE_KINDS = (BDE, BIC, AIC)


@dataclass(frozen=True)
class ScoreSpec:
    """Scoring function selector.

    ``ess`` is the equivalent sample size of the Dirichlet prior and is only
    meaningful for the ``bde`` kind (default 1.0).
    """

    kind: str = BDE
    ess: float = 1.0

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.kind == BDE and not (self.ess > 0 and math.isfinite(self.ess)):
            raise ValueError("equivalent sample size must be positive and finite")


def parent_config_count(cft: CondFreqTable) -> float:
    """Product of the parent arities (the number of parent configurations)."""
    q = 1.0
    for r in cft.parent_arities:
        q *= r
    return q


def local_score(cft: CondFreqTable, spec: ScoreSpec) -> float:
    """Score one (child, parent set) pair from its conditional frequency table.

    Parent configurations that never occur in the data contribute nothing:
    their Dirichlet terms cancel and the 0*log(0) likelihood terms vanish.
    The complexity penalties of bic/aic still charge for every configuration.
    """
    r = cft.child_arity
    q = parent_config_count(cft)
    if spec.kind == BDE:
        alpha = spec.ess / q
        beta = spec.ess / (q * r)
        score = 0.0
        # lgamma is the compiled libm one so that this reference path and
        # the table engine agree to the last bit
        for _, counts in cft.rows:
            row_total = 0
            for c in counts:
                if c:
                    score += lgamma(beta + c) - lgamma(beta)
                    row_total += c
            score += lgamma(alpha) - lgamma(alpha + row_total)
        return score
    # bic / aic: maximized multinomial log-likelihood minus a parameter penalty
    loglik = 0.0
    total = 0
    for _, counts in cft.rows:
        row_total = sum(counts)
        total += row_total
        for c in counts:
            if c:
                loglik += c * math.log(c / row_total)
    free_params = q * (r - 1)
    if spec.kind == BIC:
        penalty = 0.5 * math.log(total) * free_params if total else 0.0
    else:
        penalty = free_params
    return loglik - penalty
