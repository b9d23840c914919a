"""Families of local scores, their computation, caching and sharding.

For n variables the full family holds one score per (variable, parent set)
pair, parents drawn from the other n-1 variables: n * 2^(n-1) doubles.  The
parent-set axis uses the collapsed index: drop variable v's bit from the
mask and close the gap, so each row is indexed 0..2^(n-1)-1.

Computation walks the subset lattice once.  Dropping variable v from the
table over S scores (v given S\\{v}) as a byproduct, and the reduced table
is reused for the subtree where only variables below v are dropped next.
That discipline visits every nonempty subset exactly once, needs at most
n+1 tables alive, and is what run_job() executes.

A plan may cut the walk at a fixed depth and deal the resulting jobs round
robin across shards, which then run in separate processes (or on separate
machines, via the shard file format) and merge bit-identically.
"""

from __future__ import annotations

import itertools
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .dataset import Dataset, members
from .errors import CacheFormatError, DataError, MemoryBudgetError
from .scoring import AIC, BDE, BIC, ScoreSpec

SCORE_MAGIC = b"BNLS"
SHARD_MAGIC = b"BNLP"
FORMAT_VERSION = 1

_KIND_CODES = {BDE: 0, BIC: 1, AIC: 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}

# int64 row codes must not overflow; beyond this the dense walk is
# hopeless anyway
_MAX_JOINT_CELLS = 1 << 62


def collapse(v, mask):
    """Map a parent set of v (bitmask without v) to its dense row index."""
    if (mask >> v) & 1:
        raise ValueError(f"variable {v} contained in its own parent set")
    return (mask & ((1 << v) - 1)) | ((mask >> (v + 1)) << v)


def expand(v, idx):
    """Inverse of collapse: dense row index back to a variable bitmask."""
    return (idx & ((1 << v) - 1)) | ((idx >> v) << (v + 1))


def collapse_array(v, masks):
    return (masks & ((1 << v) - 1)) | ((masks >> (v + 1)) << v)


@dataclass(frozen=True)
class LocalScoreStore:
    """All local scores for one dataset/score combination.

    scores[v][i] is the score of variable v with parent set expand(v, i).
    """

    spec: ScoreSpec
    arities: np.ndarray
    scores: np.ndarray

    @property
    def n(self):
        return len(self.arities)

    def score_of(self, v, parent_mask):
        return float(self.scores[v, collapse(v, parent_mask)])


def encode_rows(data: Dataset, mask):
    """Sorted distinct mixed-radix codes (+counts) of the columns in mask.

    Lower variable indexes take the more significant digits, so ascending
    code order is lexicographic row order.
    """
    cols = members(mask)
    sub = data.cells[:, cols]
    strides = np.ones(len(cols), dtype=np.int64)
    for i in range(len(cols) - 2, -1, -1):
        strides[i] = strides[i + 1] * data.arities[cols[i + 1]]
    codes = sub @ strides
    return np.unique(codes, return_counts=True)


def _check_joint_size(data: Dataset):
    cells = 1
    for r in map(int, data.arities):
        cells *= r
    if cells > _MAX_JOINT_CELLS:
        raise DataError(
            f"joint outcome space has {cells} cells; row codes would overflow"
        )


def _alloc(shape, dtype):
    try:
        return np.zeros(shape, dtype=dtype)
    except MemoryError as exc:
        raise MemoryBudgetError(
            f"cannot allocate {shape} array of {np.dtype(dtype).name}"
        ) from exc


def compute_all(data: Dataset, spec: ScoreSpec, stats=None):
    """Score table for every (variable, parent set) pair, in float64."""
    _check_joint_size(data)
    n = data.n
    full = (1 << n) - 1
    table = _alloc((n, 1 << (n - 1)), np.float64)
    codes, counts = encode_rows(data, full)
    emitted, peak = _kernels.run_job(
        codes, counts, full, full, data.arities, _KIND_CODES[spec.kind],
        spec.ess, table, np.empty(1, np.float64), False,
    )
    assert emitted == n * (1 << (n - 1))
    if stats is not None:
        stats["emitted"] = int(emitted)
        stats["peak_live_tables"] = int(peak)
    return LocalScoreStore(spec=spec, arities=data.arities.copy(), scores=table)


# ---------------------------------------------------------------------------
# plans and shards

@dataclass(frozen=True)
class ShardJob:
    """One self-contained piece of the walk.

    root is the variable subset whose table the job starts from; removable
    are the variables it may drop recursively (empty means: score the
    root's pairs only, recurse nowhere).
    """

    root: int
    removable: int

    def emission_order(self, n):
        """(v, collapsed index) pairs in the exact order run_job emits them."""
        out = []
        # preorder matching run_job: variables ascending, child subtree
        # immediately after its (v, rest) emission
        def walk(mask, removable):
            many = mask & (mask - 1)
            for v in members(mask):
                rest = mask & ~(1 << v)
                out.append((v, collapse(v, rest)))
                if (removable >> v) & 1 and many:
                    walk(rest, (1 << v) - 1)

        walk(self.root, self.removable)
        return out


@dataclass(frozen=True)
class ShardPlan:
    n: int
    depth: int
    jobs: tuple

    def job_emissions(self, job: ShardJob):
        return _emission_count(self.n, job)

    def shard_jobs(self, index, count):
        """Jobs owned by one shard under round-robin assignment."""
        if not 0 <= index < count:
            raise ValueError(f"shard index {index} not in 0..{count - 1}")
        return [j for i, j in enumerate(self.jobs) if i % count == index]


@lru_cache(maxsize=None)
def _emissions(k, t):
    # scores emitted by a walk over a k-variable table whose t smallest
    # members are removable; dropping the j-th smallest member leaves a
    # (k-1)-variable table whose j smallest members are removable
    total = k
    if k > 1:
        for j in range(t):
            total += _emissions(k - 1, j)
    return total


def _emission_count(n, job: ShardJob):
    # dropping the member at position pos of the root leaves the child with
    # its pos smallest members removable, whatever the job's removable set
    k = bin(job.root).count("1")
    total = k
    if k > 1:
        for pos, v in enumerate(members(job.root)):
            if (job.removable >> v) & 1:
                total += _emissions(k - 1, pos)
    return total


def plan_shards(n, depth=None, min_jobs=None):
    """Cut the walk at a subset-lattice depth into independent jobs.

    Depth d yields one singleton job per subset missing fewer than d
    variables (those score only their own pairs) plus one full-subtree job
    per subset missing exactly d.  Either give the depth or a minimum job
    count to size it automatically.
    """
    if depth is None:
        if min_jobs is None:
            raise ValueError("need depth or min_jobs")
        if min_jobs < 1:
            raise ValueError("min_jobs must be positive")
        depth = 0
        while depth < n - 1 and _plan_size(n, depth) < min_jobs:
            depth += 1
    if not 0 <= depth <= n - 1:
        raise ValueError(f"depth must be in 0..{n - 1}, got {depth}")
    full = (1 << n) - 1
    jobs = []
    for e in range(depth):
        for removed in itertools.combinations(range(n), e):
            jobs.append(ShardJob(full & ~sum(1 << v for v in removed), 0))
    for removed in itertools.combinations(range(n), depth):
        root = full & ~sum(1 << v for v in removed)
        removable = (1 << min(removed)) - 1 if removed else full
        jobs.append(ShardJob(root, removable))
    return ShardPlan(n=n, depth=depth, jobs=tuple(jobs))


def _plan_size(n, depth):
    return sum(math.comb(n, e) for e in range(depth)) + math.comb(n, depth)


def _run_one_job(data, spec, job, n_emit):
    codes, counts = encode_rows(data, job.root)
    flat = np.empty(n_emit, np.float64)
    emitted, _ = _kernels.run_job(
        codes, counts, job.root, job.removable, data.arities,
        _KIND_CODES[spec.kind], spec.ess, np.empty((1, 1), np.float64),
        flat, True,
    )
    assert emitted == n_emit
    return flat


def compute_shard(data: Dataset, spec: ScoreSpec, plan: ShardPlan,
                  index, count):
    """Flat payloads (job -> float64 scores in emission order) for one shard."""
    if plan.n != data.n:
        raise ValueError("plan was made for a different variable count")
    out = []
    for job in plan.shard_jobs(index, count):
        out.append(_run_one_job(data, spec, job, plan.job_emissions(job)))
    return out


_POOL_STATE = None


def _pool_init(data, spec):
    global _POOL_STATE
    _POOL_STATE = (data, spec)


def _pool_job(args):
    job, n_emit = args
    data, spec = _POOL_STATE
    return _run_one_job(data, spec, job, n_emit)


def _scatter(table, job, n, flat):
    order = job.emission_order(n)
    vs = np.fromiter((v for v, _ in order), np.int64, len(order))
    idxs = np.fromiter((i for _, i in order), np.int64, len(order))
    table[vs, idxs] = flat


def compute_all_parallel(data: Dataset, spec: ScoreSpec, jobs, stats=None):
    """Same table as compute_all, built by a process pool over plan jobs.

    Results are scattered by index, so the table is bit-identical to the
    serial one.
    """
    _check_joint_size(data)
    if jobs <= 1:
        return compute_all(data, spec, stats=stats)
    n = data.n
    plan = plan_shards(n, min_jobs=4 * jobs)
    table = _alloc((n, 1 << (n - 1)), np.float64)
    work = [(job, plan.job_emissions(job)) for job in plan.jobs]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_pool_init,
                             initargs=(data, spec)) as pool:
        for job, flat in zip(plan.jobs, pool.map(_pool_job, work, chunksize=1)):
            _scatter(table, job, n, flat)
    if stats is not None:
        stats["emitted"] = n * (1 << (n - 1))
        stats["plan_depth"] = plan.depth
        stats["plan_jobs"] = len(plan.jobs)
    return LocalScoreStore(spec=spec, arities=data.arities.copy(), scores=table)


# ---------------------------------------------------------------------------
# file formats

def _precision_dtype(precision):
    if precision == 4:
        return np.dtype("<f4")
    if precision == 8:
        return np.dtype("<f8")
    raise ValueError(f"precision must be 4 or 8 bytes, got {precision}")


def _header_bytes(magic, spec: ScoreSpec, n, arities, precision):
    ess = spec.ess if spec.kind == BDE else 0.0
    head = struct.pack("<4sII B B d", magic, FORMAT_VERSION, n,
                       _KIND_CODES[spec.kind], precision, ess)
    return head + np.asarray(arities, dtype="<u4").tobytes()


def _read_header(buf, path, magic, precisions=(4, 8)):
    fixed = struct.calcsize("<4sII B B d")
    if len(buf) < fixed:
        raise CacheFormatError(f"{path}: truncated header")
    got, version, n, kind_code, precision, ess = struct.unpack_from(
        "<4sII B B d", buf)
    if got != magic:
        raise CacheFormatError(
            f"{path}: bad magic {got!r} (expected {magic.decode()})")
    if version != FORMAT_VERSION:
        raise CacheFormatError(f"{path}: unsupported version {version}")
    if kind_code not in _KIND_NAMES:
        raise CacheFormatError(f"{path}: unknown score kind {kind_code}")
    if precision not in precisions:
        raise CacheFormatError(f"{path}: unsupported precision {precision}")
    if n == 0 or n > 32:
        raise CacheFormatError(f"{path}: implausible variable count {n}")
    end = fixed + 4 * n
    if len(buf) < end:
        raise CacheFormatError(f"{path}: truncated arity block")
    arities = np.frombuffer(buf[fixed:end], dtype="<u4").astype(np.int64)
    if (arities < 1).any():
        raise CacheFormatError(f"{path}: arity below 1 in header")
    kind = _KIND_NAMES[kind_code]
    spec = ScoreSpec(kind=kind, ess=ess) if kind == BDE else ScoreSpec(kind=kind)
    return spec, n, arities, precision, end


def save_store(store: LocalScoreStore, path, precision=4):
    """Write a score cache: header, then per variable its 2^(n-1) scores.

    Values are rounded to the storage precision exactly once, here.
    """
    dtype = _precision_dtype(precision)
    payload = np.ascontiguousarray(store.scores, dtype=dtype)
    with open(path, "wb") as fh:
        fh.write(_header_bytes(SCORE_MAGIC, store.spec, store.n,
                               store.arities, precision))
        fh.write(payload.tobytes())


def _read_file(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise CacheFormatError(f"{path}: {exc.strerror or exc}") from None


def load_store(path):
    buf = _read_file(path)
    spec, n, arities, precision, off = _read_header(buf, path, SCORE_MAGIC)
    dtype = _precision_dtype(precision)
    expect = n * (1 << (n - 1)) * dtype.itemsize
    if len(buf) - off != expect:
        raise CacheFormatError(
            f"{path}: payload is {len(buf) - off} bytes, expected {expect}")
    scores = np.frombuffer(buf[off:], dtype=dtype).reshape(n, 1 << (n - 1))
    return LocalScoreStore(spec=spec, arities=arities,
                           scores=scores.astype(dtype.newbyteorder("=")))


def save_shard(data: Dataset, spec: ScoreSpec, plan: ShardPlan, index, count,
               path, precision=4):
    """Compute one shard and write it; values rounded once, as in save_store."""
    payloads = compute_shard(data, spec, plan, index, count)
    flat = (np.concatenate(payloads) if payloads
            else np.empty(0, np.float64))
    dtype = _precision_dtype(precision)
    with open(path, "wb") as fh:
        fh.write(_header_bytes(SHARD_MAGIC, spec, data.n, data.arities,
                               precision))
        fh.write(struct.pack("<IIIQ", plan.depth, index, count, len(flat)))
        fh.write(np.ascontiguousarray(flat, dtype=dtype).tobytes())


def _read_shard(path):
    buf = _read_file(path)
    spec, n, arities, precision, off = _read_header(buf, path, SHARD_MAGIC)
    tail = struct.calcsize("<IIIQ")
    if len(buf) < off + tail:
        raise CacheFormatError(f"{path}: truncated shard block")
    depth, index, count, entries = struct.unpack_from("<IIIQ", buf, off)
    dtype = _precision_dtype(precision)
    off += tail
    if len(buf) - off != entries * dtype.itemsize:
        raise CacheFormatError(
            f"{path}: payload is {len(buf) - off} bytes, "
            f"expected {entries * dtype.itemsize}")
    flat = np.frombuffer(buf[off:], dtype=dtype)
    return spec, n, arities, precision, depth, index, count, flat


def merge_shards(paths, out_path):
    """Combine a complete shard set into one score cache file.

    Headers must agree; the shard indexes must cover 0..count-1 exactly.
    The merged file is byte-identical to a single-process save at the same
    precision.
    """
    if not paths:
        raise CacheFormatError("no shard files given")
    seen = {}
    meta = None
    for path in paths:
        spec, n, arities, precision, depth, index, count, flat = \
            _read_shard(path)
        key = (spec, n, tuple(arities.tolist()), precision, depth, count)
        if meta is None:
            meta = key
        elif meta != key:
            raise CacheFormatError(
                f"{path}: shard header disagrees with {paths[0]}")
        if index in seen:
            raise CacheFormatError(f"duplicate shard index {index}")
        if index >= count:
            raise CacheFormatError(
                f"{path}: shard index {index} out of range for count {count}")
        seen[index] = flat
    spec, n, arities_t, precision, depth, count = meta
    if len(seen) != count:
        missing = sorted(set(range(count)) - set(seen))
        raise CacheFormatError(f"incomplete shard set: missing {missing}")

    arities = np.asarray(arities_t, dtype=np.int64)
    dtype = _precision_dtype(precision)
    plan = plan_shards(n, depth=depth)
    table = _alloc((n, 1 << (n - 1)), dtype)
    written = np.zeros((n, 1 << (n - 1)), bool)
    for index in range(count):
        flat = seen[index]
        pos = 0
        for job in plan.shard_jobs(index, count):
            order = job.emission_order(n)
            if pos + len(order) > len(flat):
                raise CacheFormatError(
                    f"shard {index}: payload shorter than its plan")
            vs = np.fromiter((v for v, _ in order), np.int64, len(order))
            idxs = np.fromiter((i for _, i in order), np.int64, len(order))
            if written[vs, idxs].any():
                raise CacheFormatError(
                    f"shard {index}: entries already covered by another shard")
            table[vs, idxs] = flat[pos:pos + len(order)]
            written[vs, idxs] = True
            pos += len(order)
        if pos != len(flat):
            raise CacheFormatError(
                f"shard {index}: payload longer than its plan")
    if not written.all():
        raise CacheFormatError("merged shards do not cover the full table")

    store = LocalScoreStore(spec=spec, arities=arities, scores=table)
    save_store(store, out_path, precision=precision)
