"""Neighborhood scans, sensitivity sweeps, and working with a fitted net.

The structure search returns one optimum; these helpers answer the
follow-up questions.  How flat is the optimum around the best ordering
(rotations, transpositions)?  How much does the prior strength move the
learned structure (ESS sweep)?  And given a structure: fit parameters,
draw samples, score held-out rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, members
from .optimizer import BestParentStore, Network, learn, score_for_ordering
from .scoring import BDE, ScoreSpec


@dataclass(frozen=True)
class OrderingScan:
    """Scores of a family of orderings derived from one base ordering."""

    kind: str
    base_ordering: tuple
    base_score: float
    rows: tuple


def rotations(ordering, bp: BestParentStore, max_shift=None):
    """Best score under every cyclic shift of the ordering.

    Shift k > 0 rotates right (the last k variables wrap to the front),
    k < 0 rotates left.  Default range is -n//2 .. n//2.
    """
    n = bp.n
    if max_shift is None:
        max_shift = n // 2
    if not 0 <= max_shift <= n:
        raise ValueError(f"max_shift must be in 0..{n}, got {max_shift}")
    ordering = tuple(ordering)
    base = score_for_ordering(ordering, bp)
    rows = []
    for k in range(-max_shift, max_shift + 1):
        cut = (-k) % n
        shifted = ordering[cut:] + ordering[:cut]
        rows.append((k, base if k == 0 else score_for_ordering(shifted, bp)))
    return OrderingScan(kind="rotations", base_ordering=ordering,
                        base_score=base, rows=tuple(rows))


def swaps(ordering, bp: BestParentStore):
    """Best score after transposing each pair of positions in the ordering."""
    n = bp.n
    ordering = tuple(ordering)
    base = score_for_ordering(ordering, bp)
    rows = []
    for i in range(n):
        for j in range(i + 1, n):
            swapped = list(ordering)
            swapped[i], swapped[j] = swapped[j], swapped[i]
            rows.append((i, j, score_for_ordering(tuple(swapped), bp)))
    return OrderingScan(kind="swaps", base_ordering=ordering,
                        base_score=base, rows=tuple(rows))


def swap_matrix(scan: OrderingScan):
    """Symmetric n x n matrix of transposition scores, base on the diagonal."""
    n = len(scan.base_ordering)
    mat = np.full((n, n), scan.base_score)
    for i, j, s in scan.rows:
        mat[i, j] = mat[j, i] = s
    return mat


def write_rotations_csv(scan: OrderingScan, fh):
    w = csv.writer(fh)
    w.writerow(["k", "score"])
    for k, s in scan.rows:
        w.writerow([k, repr(s)])


def write_swaps_csv(scan: OrderingScan, fh):
    """All n^2 (i, j) cells, diagonal = unswapped ordering."""
    mat = swap_matrix(scan)
    w = csv.writer(fh)
    w.writerow(["i", "j", "score"])
    for i in range(mat.shape[0]):
        for j in range(mat.shape[1]):
            w.writerow([i, j, repr(float(mat[i, j]))])


# ---------------------------------------------------------------------------
# prior-strength sensitivity

DEFAULT_ESS_GRID = tuple(np.geomspace(2e-20, 34000.0, 25))


@dataclass(frozen=True)
class SweepPoint:
    ess: float
    arcs: int
    score: float
    network: Network


def ess_sweep(data: Dataset, grid=None, jobs=None):
    """Relearn the optimal network across a grid of prior strengths.

    The default grid spans the extreme range where structure is known to
    go from empty to saturated.
    """
    if grid is None:
        grid = DEFAULT_ESS_GRID
    points = []
    for ess in grid:
        res = learn(data, ScoreSpec(BDE, float(ess)), jobs=jobs)
        points.append(SweepPoint(ess=float(ess), arcs=res.network.arc_count,
                                 score=res.score, network=res.network))
    return points


def write_sweep_csv(points, fh):
    w = csv.writer(fh)
    w.writerow(["ess", "arcs", "score"])
    for p in points:
        w.writerow([repr(p.ess), p.arcs, repr(p.score)])


# ---------------------------------------------------------------------------
# parameters, sampling, prediction

def _parent_codes(cells, cols, arities):
    """Mixed-radix codes of the listed columns, first column most
    significant (same digit layout as everywhere else)."""
    if not cols:
        return np.zeros(len(cells), dtype=np.int64)
    strides = np.ones(len(cols), dtype=np.int64)
    for i in range(len(cols) - 2, -1, -1):
        strides[i] = strides[i + 1] * arities[cols[i + 1]]
    return cells[:, cols] @ strides


@dataclass(frozen=True)
class ParamNetwork:
    """A structure plus one conditional probability table per variable.

    cpts[v] has shape (parent configurations, arity of v); row order is the
    mixed-radix order of the parent columns.
    """

    network: Network
    arities: np.ndarray
    ess: float
    cpts: tuple

    @property
    def n(self):
        return self.network.n


def fit_expected(network: Network, data: Dataset, ess=1.0):
    """Posterior-expected parameters under the BDe prior:
    (count + ess/(q*r)) / (config total + ess/q)."""
    if ess <= 0:
        raise ValueError("equivalent sample size must be positive")
    cpts = []
    for v in range(network.n):
        cols = list(members(network.parents[v]))
        r = int(data.arities[v])
        q = 1
        for c in cols:
            q *= int(data.arities[c])
        codes = _parent_codes(data.cells, cols, data.arities)
        joint = np.bincount(codes * r + data.cells[:, v],
                            minlength=q * r).reshape(q, r)
        totals = joint.sum(axis=1, keepdims=True)
        cpts.append((joint + ess / (q * r)) / (totals + ess / q))
    return ParamNetwork(network=network, arities=data.arities.copy(),
                        ess=float(ess), cpts=tuple(cpts))


def sample(pnet: ParamNetwork, count, seed=None):
    """Dataset of ``count`` ancestral draws from the network.

    The seed feeds numpy's default PCG64 generator; a Generator instance
    is used as-is.
    """
    if count < 1:
        raise ValueError("sample count must be positive")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    n = pnet.n
    cells = np.zeros((count, n), dtype=np.int64)
    for v in pnet.network.topological_order():
        cols = list(members(pnet.network.parents[v]))
        codes = _parent_codes(cells, cols, pnet.arities)
        cum = np.cumsum(pnet.cpts[v][codes], axis=1)
        u = rng.random(count)
        cells[:, v] = np.minimum((u[:, None] > cum).sum(axis=1),
                                 int(pnet.arities[v]) - 1)
    return Dataset.from_array(cells, arities=pnet.arities)


def sample_metadata(pnet: ParamNetwork, count, seed, spec=None):
    """Header lines recording how a sample file was produced."""
    lines = [
        "# sampled from a learned network",
        f"# rows: {count}  variables: {pnet.n}  arcs: {pnet.network.arc_count}",
        f"# generator: numpy default_rng (PCG64)  seed: {seed}",
        f"# parameter fit: posterior expectation, ess={pnet.ess!r}",
    ]
    if spec is not None:
        detail = f" ess={spec.ess!r}" if spec.kind == BDE else ""
        lines.insert(1, f"# structure score: {spec.kind}{detail}")
    return lines


def write_sample(fh, pnet: ParamNetwork, data, seed, spec=None):
    cells = data.cells if isinstance(data, Dataset) else np.asarray(data)
    for line in sample_metadata(pnet, len(cells), seed, spec=spec):
        fh.write(line + "\n")
    for row in cells:
        fh.write(" ".join(str(int(x)) for x in row) + "\n")


def predict_logp(network: Network, train: Dataset, test, ess=1.0):
    """(per-row log joint probability, their mean) for held-out rows.

    Parameters come from fit_expected on the training data; test may be a
    Dataset or a plain matrix and must use the training arities.
    """
    cells = np.asarray(test.cells if isinstance(test, Dataset) else test)
    if cells.ndim != 2 or cells.shape[1] != train.n:
        raise ValueError(
            f"test rows must have {train.n} columns, got {cells.shape}")
    for v in range(train.n):
        col = cells[:, v]
        if col.min(initial=0) < 0 or col.max(initial=0) >= train.arities[v]:
            raise ValueError(
                f"test column {v} outside training arity {train.arities[v]}")
    pnet = fit_expected(network, train, ess)
    out = np.zeros(len(cells))
    for v in range(train.n):
        cols = list(members(network.parents[v]))
        codes = _parent_codes(cells, cols, train.arities)
        out += np.log(pnet.cpts[v][codes, cells[:, v]])
    return out, float(np.mean(out)) if len(out) else float("nan")
