"""Exact Bayesian network structure learning for complete discrete data.

Finds the globally highest-scoring DAG by dynamic programming over
variable subsets instead of searching: local scores for every (variable,
parent set) pair, best parents per candidate set, best sinks per subset,
then an optimal ordering and its network.  Practical to a few dozen
variables; memory and time grow as n * 2^n.
"""

from .dataset import ContingencyTable, Dataset, load, members, varset
from .errors import (CacheFormatError, DataError, ExactBNError,
                     MemoryBudgetError, TooManyVariablesError)
from .estimator import ExactStructureLearner
from .explore import (OrderingScan, ParamNetwork, SweepPoint, ess_sweep,
                      fit_expected, predict_logp, rotations, sample, swaps)
from .local_scores import (LocalScoreStore, compute_all, compute_all_parallel,
                           load_store, merge_shards, plan_shards, save_shard,
                           save_store)
from .optimizer import (BestParentStore, LearnResult, Network, SinkTables,
                        all_best_parents, best_parents, best_sinks, learn,
                        learn_from_store, network_score, ord_to_net,
                        score_for_ordering, sinks_to_ord)
from .scoring import AIC, BDE, BIC, ScoreSpec

__version__ = "0.1.0"

__all__ = [
    "AIC", "BDE", "BIC", "BestParentStore", "CacheFormatError",
    "ContingencyTable", "DataError", "Dataset", "ExactBNError",
    "ExactStructureLearner", "LearnResult", "LocalScoreStore",
    "MemoryBudgetError", "Network", "OrderingScan", "ParamNetwork",
    "ScoreSpec", "SinkTables", "SweepPoint", "TooManyVariablesError",
    "all_best_parents", "best_parents", "best_sinks", "compute_all",
    "compute_all_parallel", "ess_sweep", "fit_expected", "learn",
    "learn_from_store", "load", "load_store", "members", "merge_shards",
    "network_score", "ord_to_net", "plan_shards", "predict_logp",
    "rotations", "sample", "save_shard", "save_store", "score_for_ordering",
    "sinks_to_ord", "swaps", "varset",
]
