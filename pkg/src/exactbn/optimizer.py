"""From local scores to the globally best network.

Three exact dynamic programs stacked on the score family:

  1. for every variable and candidate set, the best-scoring parent subset
     (a max-over-subsets transform on the collapsed index space);
  2. for every variable subset W, the best sink: the member whose best
     parents inside W\\{sink}, plus the best network over the rest, win;
  3. peel sinks off the full set to get an optimal ordering, then read the
     best parents along it to materialize the network.

All arrays inherit the score store's dtype, so results from a float32
cache reproduce exactly on reload.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import members
from .errors import CacheFormatError
from .local_scores import (LocalScoreStore, _alloc, _header_bytes,
                           _read_file, _read_header, collapse,
                           collapse_array, expand)
from .scoring import ScoreSpec

SINKS_MAGIC = b"BNSK"
PARENTS_MAGIC = b"BNBP"


@dataclass(frozen=True)
class BestParentStore:
    """Best parent choice for every (variable, candidate set) pair.

    parent_sets[v][i] is a bitmask in the collapsed space of v (bit j =
    j-th other variable) and always a subset of expand-index i; scores[v][i]
    is its local score.
    """

    parent_sets: np.ndarray
    scores: np.ndarray

    @property
    def n(self):
        return self.parent_sets.shape[0]

    def best_for(self, v, candidate_mask):
        """(parent bitmask in ordinary variable space, its score)."""
        idx = collapse(v, candidate_mask)
        return (expand(v, int(self.parent_sets[v, idx])),
                float(self.scores[v, idx]))


@dataclass(frozen=True)
class SinkTables:
    """Per subset W: best attainable score over W and the sink achieving it.

    sinks[W] is the lowest-numbered optimal sink; -1 for the empty set.
    scores is None when the tables were loaded from a sinks-only cache.
    """

    sinks: np.ndarray
    scores: np.ndarray | None

    @property
    def n(self):
        return (len(self.sinks) - 1).bit_length()


@dataclass(frozen=True)
class Network:
    """A DAG as a tuple of parent bitmasks, index = child variable."""

    parents: tuple

    @property
    def n(self):
        return len(self.parents)

    @property
    def arc_count(self):
        return sum(bin(p).count("1") for p in self.parents)

    @property
    def max_in_degree(self):
        return max(bin(p).count("1") for p in self.parents)

    def parent_lists(self):
        return [list(members(p)) for p in self.parents]

    def edges(self):
        return [(u, v) for v, p in enumerate(self.parents) for u in members(p)]

    def topological_order(self):
        """Some topological order, lowest-numbered first among ready nodes.

        Raises ValueError if the graph has a cycle.
        """
        remaining = set(range(self.n))
        placed = 0
        order = []
        while remaining:
            ready = sorted(v for v in remaining
                           if self.parents[v] & ~placed == 0)
            if not ready:
                raise ValueError("parent sets contain a cycle")
            for v in ready:
                order.append(v)
                placed |= 1 << v
                remaining.discard(v)
        return order

    def is_acyclic(self):
        try:
            self.topological_order()
        except ValueError:
            return False
        return True

    def consistent_with(self, ordering):
        """True if every arc points from an earlier to a later variable."""
        seen = 0
        for v in ordering:
            if self.parents[v] & ~seen:
                return False
            seen |= 1 << v
        return True


def _check_ordering(ordering, n):
    if sorted(ordering) != list(range(n)):
        raise ValueError(f"not a permutation of 0..{n - 1}: {ordering!r}")


def best_parents(v, store: LocalScoreStore, stats=None):
    """Best parent subset of every candidate set for one variable.

    Returns (parent_sets, scores) over the collapsed index space.  Works
    bit by bit: after pass j, entry i holds the best subset of i that may
    differ from i only in bits 0..j.  Strict comparison keeps the candidate
    set itself on ties.
    """
    scores = store.scores[v].copy()
    psets = np.arange(scores.shape[0], dtype=np.uint32)
    comparisons = 0
    for j in range(store.n - 1):
        s3 = scores.reshape(-1, 2, 1 << j)
        p3 = psets.reshape(-1, 2, 1 << j)
        without, with_ = s3[:, 0, :], s3[:, 1, :]
        better = without > with_
        with_[better] = without[better]
        p3[:, 1, :][better] = p3[:, 0, :][better]
        comparisons += better.size
    if stats is not None:
        stats["comparisons"] = stats.get("comparisons", 0) + comparisons
    return psets, scores


def all_best_parents(store: LocalScoreStore, stats=None):
    n = store.n
    parent_sets = _alloc((n, 1 << (n - 1)), np.uint32)
    scores = _alloc((n, 1 << (n - 1)), store.scores.dtype)
    for v in range(n):
        parent_sets[v], scores[v] = best_parents(v, store, stats=stats)
    return BestParentStore(parent_sets=parent_sets, scores=scores)


def _popcounts(n):
    masks = np.arange(1 << n, dtype=np.int64)
    pc = np.zeros(1 << n, dtype=np.int8)
    for b in range(n):
        pc += ((masks >> b) & 1).astype(np.int8)
    return pc


def best_sinks(store: LocalScoreStore, bp: BestParentStore, stats=None):
    """Score and best sink of every variable subset, smallest sets first.

    Within a subset, candidate sinks are tried in ascending variable order
    with strict improvement, so ties go to the lowest-numbered sink.
    """
    if bp.n != store.n:
        raise ValueError("best-parent tables do not match the score store")
    n = bp.n
    size = 1 << n
    dtype = bp.scores.dtype
    scores = _alloc(size, dtype)
    sinks = np.full(size, -1, dtype=np.int8)
    scores[0] = 0.0
    pc = _popcounts(n)
    order = np.argsort(pc, kind="stable")
    starts = np.searchsorted(pc[order], np.arange(n + 2))
    for k in range(1, n + 1):
        W = order[starts[k]:starts[k + 1]]
        best = np.full(len(W), -np.inf, dtype=dtype)
        sink = np.full(len(W), -1, dtype=np.int8)
        for s in range(n):
            has = ((W >> s) & 1) == 1
            Ws = W[has]
            if not len(Ws):
                continue
            rest = Ws ^ (1 << s)
            cand = scores[rest] + bp.scores[s, collapse_array(s, rest)]
            cur = best[has]
            upd = cand > cur
            cur[upd] = cand[upd]
            best[has] = cur
            sk = sink[has]
            sk[upd] = s
            sink[has] = sk
        scores[W] = best
        sinks[W] = sink
    if stats is not None:
        stats["subsets"] = size
    return SinkTables(sinks=sinks, scores=scores)


def sinks_to_ord(tables: SinkTables):
    """Optimal variable ordering, recovered by peeling best sinks."""
    n = tables.n
    mask = (1 << n) - 1
    ordering = [0] * n
    for pos in range(n - 1, -1, -1):
        s = int(tables.sinks[mask])
        if s < 0 or not (mask >> s) & 1:
            raise ValueError(f"sink table is inconsistent at subset {mask:#x}")
        ordering[pos] = s
        mask ^= 1 << s
    return tuple(ordering)


def ord_to_net(ordering, bp: BestParentStore):
    """Best network consistent with the ordering: per variable, the best
    parents among its predecessors."""
    n = bp.n
    _check_ordering(ordering, n)
    parents = [0] * n
    preds = 0
    for v in ordering:
        parents[v], _ = bp.best_for(v, preds)
        preds |= 1 << v
    return Network(parents=tuple(parents))


def network_score(net: Network, store: LocalScoreStore):
    """Sum of the chosen local scores (float64 accumulate)."""
    return float(sum(store.score_of(v, p) for v, p in enumerate(net.parents)))


def score_for_ordering(ordering, bp: BestParentStore):
    """Best attainable score of any network consistent with the ordering."""
    _check_ordering(ordering, bp.n)
    total = 0.0
    preds = 0
    for v in ordering:
        total += float(bp.scores[v, collapse(v, preds)])
        preds |= 1 << v
    return total


@dataclass(frozen=True)
class LearnResult:
    """Unpacks as (network, ordering, score); the intermediate tables ride
    along for reuse."""

    network: Network
    ordering: tuple
    score: float
    store: LocalScoreStore
    best_parents: BestParentStore
    sink_tables: SinkTables

    def __iter__(self):
        return iter((self.network, self.ordering, self.score))


def learn_from_store(store: LocalScoreStore, stats=None):
    bp = all_best_parents(store, stats=stats)
    tables = best_sinks(store, bp, stats=stats)
    ordering = sinks_to_ord(tables)
    net = ord_to_net(ordering, bp)
    return LearnResult(network=net, ordering=ordering,
                       score=network_score(net, store), store=store,
                       best_parents=bp, sink_tables=tables)


def learn(data, spec: ScoreSpec = ScoreSpec(), jobs=None, stats=None):
    """Globally optimal network for a dataset: scores, then the three DPs."""
    from .local_scores import compute_all, compute_all_parallel

    if jobs is not None and jobs > 1:
        store = compute_all_parallel(data, spec, jobs, stats=stats)
    else:
        store = compute_all(data, spec, stats=stats)
    return learn_from_store(store, stats=stats)


# ---------------------------------------------------------------------------
# optional caches for the DP outputs

def save_sinks(tables: SinkTables, spec: ScoreSpec, arities, path):
    with open(path, "wb") as fh:
        fh.write(_header_bytes(SINKS_MAGIC, spec, tables.n, arities, 1))
        fh.write(tables.sinks.astype(np.uint8).tobytes())


def load_sinks(path):
    """(spec, arities, SinkTables with scores=None)."""
    buf = _read_file(path)
    spec, n, arities, _, off = _read_header(buf, path, SINKS_MAGIC,
                                            precisions=(1,))
    if len(buf) - off != 1 << n:
        raise CacheFormatError(f"{path}: sink payload should be {1 << n} bytes")
    sinks = np.frombuffer(buf[off:], dtype=np.uint8).astype(np.int8)
    if (sinks >= n).any() or sinks[0] != -1:
        raise CacheFormatError(f"{path}: sink values out of range")
    return spec, arities, SinkTables(sinks=sinks, scores=None)


def save_best_parents(bp: BestParentStore, spec: ScoreSpec, arities, path):
    with open(path, "wb") as fh:
        fh.write(_header_bytes(PARENTS_MAGIC, spec, bp.n, arities, 4))
        fh.write(np.ascontiguousarray(bp.parent_sets, dtype="<u4").tobytes())


def load_best_parents(path, store: LocalScoreStore):
    """Rebuild a BestParentStore from the saved choice masks plus a score
    store; the stores must describe the same problem."""
    buf = _read_file(path)
    spec, n, arities, _, off = _read_header(buf, path, PARENTS_MAGIC,
                                            precisions=(4,))
    if (n != store.n or spec != store.spec
            or not np.array_equal(arities, store.arities)):
        raise CacheFormatError(f"{path}: header does not match the score store")
    expect = n * (1 << (n - 1)) * 4
    if len(buf) - off != expect:
        raise CacheFormatError(f"{path}: payload should be {expect} bytes")
    psets = np.frombuffer(buf[off:], dtype="<u4").reshape(n, 1 << (n - 1))
    psets = psets.astype(np.uint32)
    if (psets & ~np.arange(1 << (n - 1), dtype=np.uint32)).any():
        raise CacheFormatError(
            f"{path}: a stored choice is not a subset of its candidate set")
    scores = np.take_along_axis(store.scores, psets.astype(np.int64), axis=1)
    return BestParentStore(parent_sets=psets, scores=scores)
